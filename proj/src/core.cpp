#include "spintwist/core.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace spintwist {

std::string index_text(const Index& ix) {
  std::string s = ix.name;
  if (ix.kind == IndexKind::Primed) s += "'";
  return s;
}

std::pair<std::string, IndexKind> parse_display_name(const std::string& n) {
  std::string stem = n;
  if (!stem.empty() && stem.back() == '\'') {
    stem.pop_back();
    return {stem, IndexKind::Primed};
  }
  if (!stem.empty() && std::islower(static_cast<unsigned char>(stem[0])))
    return {stem, IndexKind::World};
  return {stem, IndexKind::Unprimed};
}

std::string display_name(const std::string& stem, IndexKind kind) {
  if (kind == IndexKind::Primed) return stem + "'";
  return stem;
}

// ---------------------------------------------------------------------------
// Rational

Rational::Rational(long long n, long long d) : num(n), den(d) { normalize(); }

void Rational::normalize() {
  if (den == 0) throw SpinError("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  if (num == 0) {
    den = 1;
    return;
  }
  long long g = std::gcd(num < 0 ? -num : num, den);
  num /= g;
  den /= g;
}

Rational operator+(Rational a, Rational b) {
  return Rational(a.num * b.den + b.num * a.den, a.den * b.den);
}
Rational operator-(Rational a, Rational b) {
  return Rational(a.num * b.den - b.num * a.den, a.den * b.den);
}
Rational operator*(Rational a, Rational b) {
  return Rational(a.num * b.num, a.den * b.den);
}
Rational operator/(Rational a, Rational b) {
  if (b.num == 0) throw SpinError("rational division by zero");
  return Rational(a.num * b.den, a.den * b.num);
}

std::string Rational::str() const {
  std::ostringstream os;
  os << num;
  if (den != 1) os << "/" << den;
  return os.str();
}

// ---------------------------------------------------------------------------
// Coefficient

void Coefficient::mul_ipow(int p) {
  p = ((p % 4) + 4) % 4;
  ipow += p;
  while (ipow >= 2) {
    ipow -= 2;
    rat = -rat;
  }
}

Coefficient Coefficient::operator*(const Coefficient& o) const {
  Coefficient r;
  r.rat = rat * o.rat;
  r.ipow = ipow;
  r.scalars = scalars;
  r.mul_ipow(o.ipow);
  for (const auto& [k, v] : o.scalars) {
    r.scalars[k] += v;
    if (r.scalars[k] == 0) r.scalars.erase(k);
  }
  return r;
}

std::string Coefficient::abs_str() const {
  Rational r = rat;
  if (r.num < 0) r = -r;
  std::ostringstream os;
  bool have_head = false;
  if (r.num != 1 || (ipow == 0 && scalars.empty())) {
    os << r.num;
    have_head = true;
  }
  if (ipow == 1) {
    os << "i";
    have_head = true;
  }
  for (const auto& [k, v] : scalars) {
    if (have_head) os << " ";
    os << k;
    if (v != 1) os << "^" << v;
    have_head = true;
  }
  if (r.den != 1) os << "/" << r.den;
  return os.str();
}

std::string Coefficient::str() const {
  std::string body = abs_str();
  if (rat.num < 0) return "- " + body;
  return body;
}

// ---------------------------------------------------------------------------
// Expression helpers

Expression operator+(const Expression& a, const Expression& b) {
  Expression r = a;
  r.terms.insert(r.terms.end(), b.terms.begin(), b.terms.end());
  return r;
}

Expression operator-(const Expression& a, const Expression& b) {
  Expression r = a;
  for (Term t : b.terms) {
    t.coeff.negate();
    r.terms.push_back(std::move(t));
  }
  return r;
}

Expression scale(const Expression& e, const Coefficient& c) {
  Expression r = e;
  for (auto& t : r.terms) t.coeff = t.coeff * c;
  return r;
}

// ---------------------------------------------------------------------------
// SymbolTable

SymbolTable::SymbolId SymbolTable::declare(const SymbolDecl& decl) {
  if (frozen_) throw SpinError("symbol table is frozen");
  if (by_name_.count(decl.kernel))
    throw SpinError("duplicate kernel declaration: " + decl.kernel);
  for (const auto& g : decl.groups) {
    if (g.slots.size() < 2)
      throw SpinError("malformed symmetry group on " + decl.kernel);
    for (int s : g.slots) {
      if (s < 0 || s >= static_cast<int>(decl.slots.size()))
        throw SpinError("symmetry group slot out of range on " + decl.kernel);
      if (decl.slots[s].kind != decl.slots[g.slots[0]].kind ||
          decl.slots[s].declared_var != decl.slots[g.slots[0]].declared_var)
        throw SpinError("symmetry group mixes slot kinds on " + decl.kernel);
    }
  }
  if (decl.hermitian) {
    if (decl.conj_kernel != decl.kernel)
      throw SpinError("hermitian symbol must be its own conjugate: " +
                      decl.kernel);
    int u = 0, p = 0;
    for (const auto& s : decl.slots) {
      if (s.kind == IndexKind::Unprimed) ++u;
      if (s.kind == IndexKind::Primed) ++p;
    }
    if (u != p)
      throw SpinError("hermitian symbol needs paired unprimed/primed slots: " +
                      decl.kernel);
  }
  by_name_[decl.kernel] = decls_.size();
  decls_.push_back(decl);
  return decls_.size() - 1;
}

const SymbolDecl* SymbolTable::find(const std::string& kernel) const {
  auto it = by_name_.find(kernel);
  if (it == by_name_.end()) return nullptr;
  return &decls_[it->second];
}

const SymbolDecl& SymbolTable::at(const std::string& kernel) const {
  const SymbolDecl* d = find(kernel);
  if (!d) throw SpinError("unknown kernel: " + kernel);
  return *d;
}

// ---------------------------------------------------------------------------
// Slot walking: maps a factor's flat index list onto its declaration,
// allowing a world slot to be filled by an (unprimed, primed) pair.

namespace {

struct SlotWalkEntry {
  int decl_slot;
  int first;  // position in factor.indices
  int count;  // 1, or 2 for a split world slot
};

std::vector<SlotWalkEntry> walk_slots(const Factor& f, const SymbolDecl& d) {
  std::vector<SlotWalkEntry> out;
  std::size_t pos = 0;
  for (std::size_t s = 0; s < d.slots.size(); ++s) {
    if (pos >= f.indices.size())
      throw SpinError("factor " + f.kernel + " has too few indices");
    const Index& ix = f.indices[pos];
    if (d.slots[s].kind == IndexKind::World) {
      if (ix.kind == IndexKind::World) {
        out.push_back({static_cast<int>(s), static_cast<int>(pos), 1});
        pos += 1;
      } else {
        if (pos + 1 >= f.indices.size())
          throw SpinError("split world slot needs an index pair on " +
                          f.kernel);
        const Index& ix2 = f.indices[pos + 1];
        if (ix.kind != IndexKind::Unprimed || ix2.kind != IndexKind::Primed)
          throw SpinError("split world slot must be unprimed then primed on " +
                          f.kernel);
        out.push_back({static_cast<int>(s), static_cast<int>(pos), 2});
        pos += 2;
      }
    } else {
      if (ix.kind != d.slots[s].kind)
        throw SpinError("index kind mismatch on " + f.kernel);
      out.push_back({static_cast<int>(s), static_cast<int>(pos), 1});
      pos += 1;
    }
  }
  if (pos != f.indices.size())
    throw SpinError("factor " + f.kernel + " has too many indices");
  return out;
}

void validate_deriv(const DerivOp& op) {
  switch (op.kind) {
    case DerivKind::NablaWorld:
      if (op.idx.size() != 1 || op.idx[0].kind != IndexKind::World)
        throw SpinError("nabla world operator needs one world index");
      break;
    case DerivKind::NablaPair:
      if (op.idx.size() != 2 || op.idx[0].kind != IndexKind::Unprimed ||
          op.idx[1].kind != IndexKind::Primed)
        throw SpinError("nabla pair operator needs (unprimed, primed)");
      break;
    case DerivKind::Box:
      if (!op.idx.empty()) throw SpinError("box carries no indices");
      break;
    case DerivKind::Delta:
      if (op.idx.size() != 2 || op.idx[0].kind != op.idx[1].kind ||
          op.idx[0].kind == IndexKind::World)
        throw SpinError("delta operator needs two spinor indices of one kind");
      break;
  }
}

}  // namespace

void collect_names(const Term& t,
                   std::vector<std::pair<std::string, IndexKind>>& out) {
  for (const auto& f : t.factors) {
    for (const auto& op : f.derivs)
      for (const auto& ix : op.idx) out.push_back({ix.name, ix.kind});
    for (const auto& ix : f.indices) out.push_back({ix.name, ix.kind});
  }
}

bool name_used_in_term(const Term& t, const std::string& name,
                       IndexKind kind) {
  std::vector<std::pair<std::string, IndexKind>> names;
  collect_names(t, names);
  for (auto& [n, k] : names)
    if (n == name && k == kind) return true;
  return false;
}

std::string fresh_name(const Term& t, IndexKind kind, int& counter) {
  for (;;) {
    std::string base = (kind == IndexKind::World) ? "d" : "D";
    std::string cand = base + std::to_string(++counter);
    if (!name_used_in_term(t, cand, kind)) return cand;
  }
}

// ---------------------------------------------------------------------------
// Validation and free indices

namespace {

struct Occurrence {
  IndexKind kind;
  Variance var;
};

std::map<std::string, std::vector<Occurrence>> occurrences(const Term& t) {
  std::map<std::string, std::vector<Occurrence>> occ;
  auto add = [&](const Index& ix) {
    // primed and unprimed stems live in separate namespaces
    std::string key = index_text(ix);
    occ[key].push_back({ix.kind, ix.var});
  };
  for (const auto& f : t.factors) {
    for (const auto& op : f.derivs)
      for (const auto& ix : op.idx) add(ix);
    for (const auto& ix : f.indices) add(ix);
  }
  return occ;
}

}  // namespace

void validate_term(const Term& t, const SymbolTable& tab) {
  for (const auto& f : t.factors) {
    const SymbolDecl& d = tab.at(f.kernel);
    for (const auto& op : f.derivs) validate_deriv(op);
    walk_slots(f, d);
  }
  auto occ = occurrences(t);
  for (const auto& [name, v] : occ) {
    if (v.size() > 2)
      throw SpinError("index " + name + " appears more than twice in a term");
    if (v.size() == 2) {
      if (v[0].kind != v[1].kind)
        throw SpinError("index " + name + " contracts across kinds");
      if (v[0].var == v[1].var)
        throw SpinError("index " + name +
                        " repeated with equal variance (unbalanced)");
    }
  }
  // directive names must be free and present once
  for (const auto& sd : t.syms) {
    std::size_t width = sd.tuples.empty() ? 0 : sd.tuples[0].size();
    if (sd.tuples.size() < 2)
      throw SpinError("symmetrizer needs at least two tuples");
    for (const auto& tup : sd.tuples) {
      if (tup.size() != width)
        throw SpinError("symmetrizer tuples differ in length");
      for (const auto& n : tup) {
        auto it = occ.find(n);
        if (it == occ.end() || it->second.size() != 1)
          throw SpinError("symmetrized index " + n +
                          " must occur exactly once in the term");
      }
    }
  }
}

std::vector<FreeIndex> term_free_indices(const Term& t,
                                         const SymbolTable& tab) {
  validate_term(t, tab);
  auto occ = occurrences(t);
  std::vector<FreeIndex> out;
  for (const auto& f : t.factors) {
    auto consider = [&](const Index& ix) {
      if (occ[index_text(ix)].size() == 1)
        out.push_back({ix.name, ix.kind, ix.var});
    };
    for (const auto& op : f.derivs)
      for (const auto& ix : op.idx) consider(ix);
    for (const auto& ix : f.indices) consider(ix);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void validate_expression(const Expression& e, const SymbolTable& tab) {
  free_indices(e, tab);
}

std::vector<FreeIndex> free_indices(const Expression& e,
                                    const SymbolTable& tab) {
  std::vector<FreeIndex> common;
  bool first = true;
  for (const auto& t : e.terms) {
    auto fi = term_free_indices(t, tab);
    if (t.coeff.is_zero() && t.factors.empty()) continue;
    if (first) {
      common = fi;
      first = false;
    } else if (fi != common) {
      throw SpinError("inconsistent free indices between terms");
    }
  }
  return common;
}

// ---------------------------------------------------------------------------
// Conjugation

namespace {

Index conj_index(const Index& ix) {
  Index r = ix;
  if (ix.kind == IndexKind::Unprimed)
    r.kind = IndexKind::Primed;
  else if (ix.kind == IndexKind::Primed)
    r.kind = IndexKind::Unprimed;
  return r;
}

}  // namespace

Expression conjugate(const Expression& e, const SymbolTable& tab) {
  Expression out;
  for (const auto& t : e.terms) {
    Term r;
    r.coeff.rat = t.coeff.rat;
    r.coeff.ipow = 0;
    r.coeff.mul_ipow(t.coeff.ipow);
    if (t.coeff.ipow == 1) r.coeff.rat = -r.coeff.rat;
    for (const auto& [atom, p] : t.coeff.scalars) {
      const SymbolDecl& d = tab.at(atom);
      if (d.conj_kernel.empty())
        throw SpinError("scalar atom without conjugate: " + atom);
      r.coeff.scalars[d.conj_kernel] += p;
    }
    for (const auto& f : t.factors) {
      const SymbolDecl& d = tab.at(f.kernel);
      if (d.conj_kernel.empty())
        throw SpinError("kernel without conjugate mapping: " + f.kernel);
      Factor g;
      g.kernel = d.conj_kernel;
      for (const auto& op : f.derivs) {
        DerivOp q;
        q.kind = op.kind;
        for (const auto& ix : op.idx) q.idx.push_back(conj_index(ix));
        if (op.kind == DerivKind::NablaPair) {
          // flipped pair is (primed, unprimed); restore storage order
          std::swap(q.idx[0], q.idx[1]);
        }
        g.derivs.push_back(std::move(q));
      }
      // conjugate slot contents, then permute slots into the conjugate
      // kernel's declared order
      auto entries = walk_slots(f, d);
      std::vector<std::vector<Index>> slot_fill(entries.size());
      for (std::size_t s = 0; s < entries.size(); ++s) {
        for (int k = 0; k < entries[s].count; ++k)
          slot_fill[s].push_back(conj_index(f.indices[entries[s].first + k]));
        if (entries[s].count == 2) std::swap(slot_fill[s][0], slot_fill[s][1]);
      }
      std::vector<int> perm = d.conj_perm;
      if (perm.empty()) {
        perm.resize(entries.size());
        for (std::size_t s = 0; s < perm.size(); ++s) perm[s] = (int)s;
      }
      for (std::size_t s = 0; s < perm.size(); ++s)
        for (const auto& ix : slot_fill[perm[s]]) g.indices.push_back(ix);
      r.factors.push_back(std::move(g));
    }
    for (const auto& sd : t.syms) r.syms.push_back(sd);
    out.terms.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Kernel substitution

namespace {

void rename_indices(Term& t,
                    const std::map<std::pair<std::string, IndexKind>,
                                   std::string>& rename) {
  auto apply = [&](Index& ix) {
    auto it = rename.find({ix.name, ix.kind});
    if (it != rename.end()) ix.name = it->second;
  };
  for (auto& f : t.factors) {
    for (auto& op : f.derivs)
      for (auto& ix : op.idx) apply(ix);
    for (auto& ix : f.indices) apply(ix);
  }
  for (auto& sd : t.syms)
    for (auto& tup : sd.tuples)
      for (auto& n : tup) {
        auto [stem, kind] = parse_display_name(n);
        auto it = rename.find({stem, kind});
        if (it != rename.end()) n = display_name(it->second, kind);
      }
}

}  // namespace

Expression substitute_kernel(const Expression& e, const std::string& kernel,
                             const Expression& replacement,
                             const SymbolTable& tab) {
  const SymbolDecl& kd = tab.at(kernel);
  auto repl_free = free_indices(replacement, tab);
  if (repl_free.size() != kd.slots.size())
    throw SpinError("replacement arity mismatch for " + kernel);

  Expression out;
  for (const auto& t : e.terms) {
    bool hit = false;
    for (const auto& f : t.factors)
      if (f.kernel == kernel) hit = true;
    if (!hit) {
      out.terms.push_back(t);
      continue;
    }
    // names already in use across the host term
    std::vector<std::pair<std::string, IndexKind>> used_list;
    collect_names(t, used_list);
    std::set<std::pair<std::string, IndexKind>> used(used_list.begin(),
                                                     used_list.end());
    int fresh_counter = 0;
    auto make_fresh = [&](IndexKind kind) {
      for (;;) {
        std::string base = (kind == IndexKind::World) ? "d" : "D";
        std::string cand = base + std::to_string(++fresh_counter);
        if (!used.count({cand, kind})) {
          used.insert({cand, kind});
          return cand;
        }
      }
    };

    std::vector<Expression> pieces;  // per factor
    for (const auto& f : t.factors) {
      if (f.kernel != kernel) {
        Term unit;
        unit.coeff = Coefficient::one();
        unit.factors.push_back(f);
        pieces.push_back(Expression::from_term(unit));
        continue;
      }
      if (!f.derivs.empty())
        throw SpinError(
            "substitute_kernel does not rewrite derived occurrences of " +
            kernel);
      if (f.indices.size() != kd.slots.size())
        throw SpinError("substitute_kernel: split slots unsupported for " +
                        kernel);
      Expression inst;
      for (Term rt : replacement.terms) {
        // freshen replacement dummies
        std::vector<std::pair<std::string, IndexKind>> names;
        collect_names(rt, names);
        std::map<std::pair<std::string, IndexKind>, int> count;
        for (auto& nk : names) count[nk]++;
        std::map<std::pair<std::string, IndexKind>, std::string> rename;
        for (auto& [nk, c] : count)
          if (c == 2) rename[nk] = make_fresh(nk.second);
        rename_indices(rt, rename);
        // bind replacement frees to the occurrence's slots, kind-matched
        // in declaration order
        auto rf_free = term_free_indices(rt, tab);
        std::vector<bool> taken(rf_free.size(), false);
        std::map<std::pair<std::string, IndexKind>, Index> bind;
        for (std::size_t s = 0; s < kd.slots.size(); ++s) {
          IndexKind want = kd.slots[s].kind;
          bool found = false;
          for (std::size_t r = 0; r < rf_free.size(); ++r) {
            if (taken[r]) continue;
            if (rf_free[r].kind == want ||
                (want == IndexKind::World &&
                 rf_free[r].kind == IndexKind::World)) {
              taken[r] = true;
              bind[{rf_free[r].name, rf_free[r].kind}] = f.indices[s];
              found = true;
              break;
            }
          }
          if (!found)
            throw SpinError(
                "replacement free indices do not match slot kinds of " +
                kernel);
        }
        for (auto& rf2 : rt.factors) {
          auto bind_ix = [&](Index& ix) {
            auto it = bind.find({ix.name, ix.kind});
            if (it != bind.end()) ix = it->second;
          };
          for (auto& op : rf2.derivs)
            for (auto& ix : op.idx) bind_ix(ix);
          for (auto& ix : rf2.indices) bind_ix(ix);
        }
        inst.terms.push_back(std::move(rt));
      }
      pieces.push_back(std::move(inst));
    }
    // multiply out
    std::vector<Term> acc;
    Term seed;
    seed.coeff = t.coeff;
    seed.syms = t.syms;
    acc.push_back(seed);
    for (const auto& piece : pieces) {
      std::vector<Term> next;
      for (const auto& a : acc)
        for (const auto& p : piece.terms) {
          Term m = a;
          m.coeff = a.coeff * p.coeff;
          for (const auto& pf : p.factors) m.factors.push_back(pf);
          next.push_back(std::move(m));
        }
      acc = std::move(next);
    }
    for (auto& a : acc) out.terms.push_back(std::move(a));
  }
  validate_expression(out, tab);
  return out;
}

}  // namespace spintwist
