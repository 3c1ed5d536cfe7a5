#include "spintwist/calculus.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace spintwist {

namespace {

std::set<std::pair<std::string, IndexKind>> used_names(const Term& t) {
  std::vector<std::pair<std::string, IndexKind>> v;
  collect_names(t, v);
  return {v.begin(), v.end()};
}

std::string fresh_from(std::set<std::pair<std::string, IndexKind>>& used,
                       IndexKind kind, int& counter) {
  for (;;) {
    std::string base = (kind == IndexKind::World) ? "d" : "D";
    std::string cand = base + std::to_string(++counter);
    if (!used.count({cand, kind})) {
      used.insert({cand, kind});
      return cand;
    }
  }
}

Term factor_term(const Factor& f) {
  Term t;
  t.coeff = Coefficient::one();
  t.factors.push_back(f);
  return t;
}

}  // namespace

Expression leibniz_expand(const DerivOp& op, const Term& product,
                          const SymbolTable& tab) {
  // scalar atoms in the coefficient are differentiated as opaque factors
  Term body = product;
  std::vector<Factor> atom_factors;
  for (const auto& [atom, p] : body.coeff.scalars) {
    const SymbolDecl* d = tab.find(atom);
    if (d && d->scalar_atom) {
      for (int k = 0; k < p; ++k) {
        Factor f;
        f.kernel = atom;
        atom_factors.push_back(f);
      }
    }
  }
  if (!atom_factors.empty()) {
    for (const auto& [atom, p] : std::map<std::string, int>(body.coeff.scalars))
      if (tab.find(atom) && tab.find(atom)->scalar_atom)
        body.coeff.scalars.erase(atom);
    for (auto& f : atom_factors) body.factors.push_back(f);
  }

  Expression out;
  auto used = used_names(body);
  int counter = 0;

  auto with_op_at = [&](std::size_t k, const DerivOp& o) {
    Term t = body;
    t.factors[k].derivs.insert(t.factors[k].derivs.begin(), o);
    return t;
  };

  if (body.factors.empty()) {
    // derivative of a pure number is zero; of a scalar-atom-free constant
    return Expression::zero();
  }

  switch (op.kind) {
    case DerivKind::NablaWorld:
    case DerivKind::NablaPair:
    case DerivKind::Delta: {
      for (std::size_t k = 0; k < body.factors.size(); ++k)
        out.terms.push_back(with_op_at(k, op));
      break;
    }
    case DerivKind::Box: {
      for (std::size_t k = 0; k < body.factors.size(); ++k)
        out.terms.push_back(with_op_at(k, op));
      // cross terms: 2 (D^d f_j)(D_d f_k), earlier factor carries the
      // raised world index
      for (std::size_t j = 0; j + 1 < body.factors.size(); ++j)
        for (std::size_t k = j + 1; k < body.factors.size(); ++k) {
          Term t = body;
          std::string d = fresh_from(used, IndexKind::World, counter);
          DerivOp up{DerivKind::NablaWorld,
                     {Index{d, IndexKind::World, Variance::Upper}}};
          DerivOp dn{DerivKind::NablaWorld,
                     {Index{d, IndexKind::World, Variance::Lower}}};
          t.factors[j].derivs.insert(t.factors[j].derivs.begin(), up);
          t.factors[k].derivs.insert(t.factors[k].derivs.begin(), dn);
          t.coeff = t.coeff * Coefficient::of(Rational(2));
          out.terms.push_back(std::move(t));
          used = used_names(body);
        }
      break;
    }
  }
  return out;
}

Expression apply_deriv_prefix(const std::vector<DerivOp>& prefix,
                              const Expression& e, const SymbolTable& tab) {
  Expression cur = e;
  // innermost operator applies first
  for (auto it = prefix.rbegin(); it != prefix.rend(); ++it) {
    Expression next;
    for (const auto& t : cur.terms) {
      Expression piece = leibniz_expand(*it, t, tab);
      for (auto& pt : piece.terms) next.terms.push_back(std::move(pt));
    }
    cur = std::move(next);
  }
  return cur;
}

// ---------------------------------------------------------------------------
// split_world_index

namespace {

struct SlotSite {
  // identifies a slot location in a term
  int fi = -1;
  int di = -1;   // deriv op position, -1 for kernel slots
  int pos = -1;  // index position within the op / kernel index list
};

}  // namespace

Expression split_world_index(const Expression& e, const SymbolTable& tab) {
  Expression out;
  for (Term t : e.terms) {
    auto used = used_names(t);
    int counter = 0;
    // 1. Box -> contracted nabla pair, outer raised
    bool changed = true;
    while (changed) {
      changed = false;
      for (auto& f : t.factors) {
        for (std::size_t d = 0; d < f.derivs.size(); ++d) {
          if (f.derivs[d].kind != DerivKind::Box) continue;
          std::string u = fresh_from(used, IndexKind::Unprimed, counter);
          std::string p = fresh_from(used, IndexKind::Primed, counter);
          DerivOp outer{DerivKind::NablaPair,
                        {Index{u, IndexKind::Unprimed, Variance::Upper},
                         Index{p, IndexKind::Primed, Variance::Upper}}};
          DerivOp inner{DerivKind::NablaPair,
                        {Index{u, IndexKind::Unprimed, Variance::Lower},
                         Index{p, IndexKind::Primed, Variance::Lower}}};
          f.derivs[d] = outer;
          f.derivs.insert(f.derivs.begin() + d + 1, inner);
          changed = true;
          break;
        }
        if (changed) break;
      }
    }
    // 2. contracted world dummies -> spinor pairs (variance carried)
    std::map<std::string, std::vector<std::pair<Index*, bool>>> world_occ;
    // bool flags operator slot
    for (auto& f : t.factors) {
      for (auto& op : f.derivs)
        for (auto& ix : op.idx)
          if (ix.kind == IndexKind::World)
            world_occ[ix.name].push_back({&ix, true});
      for (auto& ix : f.indices)
        if (ix.kind == IndexKind::World)
          world_occ[ix.name].push_back({&ix, false});
    }
    // collect dummy names first; pointer-based edit would invalidate, so
    // rebuild instead
    std::vector<std::string> dummies;
    for (auto& [n, occ] : world_occ)
      if (occ.size() == 2) dummies.push_back(n);
    for (const auto& dn : dummies) {
      std::string u = fresh_from(used, IndexKind::Unprimed, counter);
      std::string p = fresh_from(used, IndexKind::Primed, counter);
      for (auto& f : t.factors) {
        auto expand_list = [&](std::vector<Index>& list) {
          std::vector<Index> next;
          for (const auto& ix : list) {
            if (ix.kind == IndexKind::World && ix.name == dn) {
              next.push_back(Index{u, IndexKind::Unprimed, ix.var});
              next.push_back(Index{p, IndexKind::Primed, ix.var});
            } else {
              next.push_back(ix);
            }
          }
          list = std::move(next);
        };
        for (auto& op : f.derivs) {
          bool had = false;
          for (auto& ix : op.idx)
            if (ix.kind == IndexKind::World && ix.name == dn) had = true;
          if (had) {
            Variance v = op.idx[0].var;
            op.kind = DerivKind::NablaPair;
            op.idx = {Index{u, IndexKind::Unprimed, v},
                      Index{p, IndexKind::Primed, v}};
          }
        }
        expand_list(f.indices);
      }
    }
    orient_contracted_pairs(t);
    out.terms.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Orientation of reassembled world pairs: an (unprimed, primed) dummy couple
// spanning the same two sites with uniform variance per site is a world
// contraction in disguise; flipping both pairs costs no sign. Operator
// slots are oriented up against kernel slots; operator-operator couples on
// distinct factors raise the op on the lexicographically smaller kernel.

namespace {

struct SiteRef {
  int fi;
  int di;  // -1 for kernel slots
  bool operator==(const SiteRef&) const = default;
};

}  // namespace

void orient_contracted_pairs(Term& t) {
  auto pass = [&](Term& tt) {
    std::map<std::string, std::vector<std::pair<SiteRef, Variance>>> occ_u,
        occ_p;
    for (int fi = 0; fi < (int)tt.factors.size(); ++fi) {
      auto& f = tt.factors[fi];
      for (int di = 0; di < (int)f.derivs.size(); ++di)
        for (auto& ix : f.derivs[di].idx) {
          if (ix.kind == IndexKind::Unprimed)
            occ_u[ix.name].push_back({{fi, di}, ix.var});
          else if (ix.kind == IndexKind::Primed)
            occ_p[ix.name].push_back({{fi, di}, ix.var});
        }
      for (auto& ix : f.indices) {
        if (ix.kind == IndexKind::Unprimed)
          occ_u[ix.name].push_back({{fi, -1}, ix.var});
        else if (ix.kind == IndexKind::Primed)
          occ_p[ix.name].push_back({{fi, -1}, ix.var});
      }
    }
    for (auto& [un, uocc] : occ_u) {
      if (uocc.size() != 2) continue;
      if (uocc[0].second == uocc[1].second) continue;
      for (auto& [pn, pocc] : occ_p) {
        if (pocc.size() != 2) continue;
        for (int flip = 0; flip < 2; ++flip) {
          auto& p0 = pocc[flip ? 1 : 0];
          auto& p1 = pocc[flip ? 0 : 1];
          if (!(uocc[0].first == p0.first && uocc[1].first == p1.first &&
                uocc[0].second == p0.second && uocc[1].second == p1.second))
            continue;
          bool s0_op = uocc[0].first.di >= 0;
          bool s1_op = uocc[1].first.di >= 0;
          int raise_site = -1;  // which of the two sites should be upper
          if (s0_op != s1_op) {
            raise_site = s0_op ? 0 : 1;
          } else if (s0_op && uocc[0].first.fi != uocc[1].first.fi) {
            const std::string& k0 = tt.factors[uocc[0].first.fi].kernel;
            const std::string& k1 = tt.factors[uocc[1].first.fi].kernel;
            if (k0 == k1) continue;
            raise_site = k0 < k1 ? 0 : 1;
          } else {
            continue;
          }
          if (uocc[raise_site].second == Variance::Upper) continue;
          auto flip_name = [&](const std::string& nm, IndexKind kk) {
            for (auto& f : tt.factors) {
              for (auto& op : f.derivs)
                for (auto& ix : op.idx)
                  if (ix.name == nm && ix.kind == kk)
                    ix.var = ix.var == Variance::Upper ? Variance::Lower
                                                       : Variance::Upper;
              for (auto& ix : f.indices)
                if (ix.name == nm && ix.kind == kk)
                  ix.var = ix.var == Variance::Upper ? Variance::Lower
                                                     : Variance::Upper;
            }
          };
          flip_name(un, IndexKind::Unprimed);
          flip_name(pn, IndexKind::Primed);
          return true;
        }
      }
    }
    return false;
  };
  while (pass(t)) {
  }
}

// ---------------------------------------------------------------------------
// apply_splitting

Expression apply_splitting(const Expression& e, const std::string& metric,
                           const SymbolTable& tab) {
  Expression out;
  for (const auto& t : e.terms) {
    // collect per-factor replacements (cross product when several match)
    std::vector<Expression> pieces;
    bool any = false;
    for (const auto& f : t.factors) {
      bool matched = false;
      if (f.derivs.size() >= 2 && f.derivs[0].kind == DerivKind::NablaPair &&
          f.derivs[1].kind == DerivKind::NablaPair) {
        const Index& u1 = f.derivs[0].idx[0];
        const Index& p1 = f.derivs[0].idx[1];
        const Index& u2 = f.derivs[1].idx[0];
        const Index& p2 = f.derivs[1].idx[1];
        bool contracted = p1.name == p2.name && p1.var != p2.var;
        if (contracted) {
          bool lower_form = u1.var == Variance::Lower &&
                            p1.var == Variance::Upper &&
                            u2.var == Variance::Lower;
          bool upper_form = u1.var == Variance::Upper &&
                            p1.var == Variance::Lower &&
                            u2.var == Variance::Upper;
          if (lower_form || upper_form) {
            matched = true;
            any = true;
            Factor rest = f;
            rest.derivs.erase(rest.derivs.begin(), rest.derivs.begin() + 2);
            Variance mv = lower_form ? Variance::Lower : Variance::Upper;
            // metric term: +-1/2 M(U2, U1) Box X
            Term mt;
            mt.coeff = Coefficient::of(Rational(lower_form ? 1 : -1, 2));
            Factor mf;
            mf.kernel = metric;
            mf.indices = {Index{u2.name, u2.kind, mv},
                          Index{u1.name, u1.kind, mv}};
            Factor boxed = rest;
            boxed.derivs.insert(boxed.derivs.begin(),
                                DerivOp{DerivKind::Box, {}});
            mt.factors = {mf, boxed};
            // curvature term: -+ Delta(U2, U1) X
            Term dt;
            dt.coeff = Coefficient::of(Rational(lower_form ? -1 : 1));
            Factor df = rest;
            df.derivs.insert(
                df.derivs.begin(),
                DerivOp{DerivKind::Delta,
                        {Index{u2.name, u2.kind, mv},
                         Index{u1.name, u1.kind, mv}}});
            dt.factors = {df};
            Expression repl;
            repl.terms = {mt, dt};
            pieces.push_back(repl);
          }
        }
      }
      if (!matched) pieces.push_back(Expression::from_term(factor_term(f)));
    }
    if (!any) {
      out.terms.push_back(t);
      continue;
    }
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
  (void)tab;
  return out;
}

// ---------------------------------------------------------------------------
// apply_rule

namespace {

struct Binding {
  // pattern (name, kind) -> target index (name; kind/variance fixed by
  // pattern)
  std::map<std::pair<std::string, IndexKind>, std::string> names;
  // wildcard operator slot ($a): the matched operator's index list
  std::map<std::string, DerivOp> ops;
};

bool bind_index(Binding& b, const Index& pat, const Index& tgt) {
  if (pat.kind != tgt.kind || pat.var != tgt.var) return false;
  auto key = std::make_pair(pat.name, pat.kind);
  auto it = b.names.find(key);
  if (it != b.names.end()) return it->second == tgt.name;
  b.names[key] = tgt.name;
  return true;
}

bool wildcard_op(const DerivOp& op) {
  return (op.kind == DerivKind::NablaWorld && op.idx.size() == 1 &&
          !op.idx[0].name.empty() && op.idx[0].name[0] == '$');
}

// matches pattern factor as the innermost segment of target's chain
bool match_factor(const Factor& pat, const Factor& tgt, Binding& b) {
  if (pat.kernel != tgt.kernel) return false;
  if (pat.derivs.size() > tgt.derivs.size()) return false;
  if (pat.indices.size() != tgt.indices.size()) return false;
  std::size_t off = tgt.derivs.size() - pat.derivs.size();
  for (std::size_t k = 0; k < pat.derivs.size(); ++k) {
    const DerivOp& po = pat.derivs[k];
    const DerivOp& to = tgt.derivs[off + k];
    if (wildcard_op(po)) {
      if (to.kind != DerivKind::NablaWorld && to.kind != DerivKind::NablaPair)
        return false;
      std::string key = po.idx[0].name;
      auto it = b.ops.find(key);
      if (it != b.ops.end()) {
        if (!(it->second == to)) return false;
      } else {
        b.ops[key] = to;
      }
      continue;
    }
    if (po.kind != to.kind) return false;
    if (po.idx.size() != to.idx.size()) return false;
    for (std::size_t j = 0; j < po.idx.size(); ++j)
      if (!bind_index(b, po.idx[j], to.idx[j])) return false;
  }
  for (std::size_t j = 0; j < pat.indices.size(); ++j)
    if (!bind_index(b, pat.indices[j], tgt.indices[j])) return false;
  return true;
}

Expression instantiate(const Expression& repl, const Binding& b,
                       std::set<std::pair<std::string, IndexKind>>& used,
                       int& counter) {
  Expression out;
  for (Term rt : repl.terms) {
    // first pass: find names needing freshening (not bound by pattern)
    std::vector<std::pair<std::string, IndexKind>> names;
    collect_names(rt, names);
    std::map<std::pair<std::string, IndexKind>, std::string> fresh_map;
    for (auto& nk : names) {
      if (nk.first[0] == '$') continue;
      if (b.names.count(nk)) continue;
      if (fresh_map.count(nk)) continue;
      fresh_map[nk] = fresh_from(used, nk.second, counter);
    }
    for (auto& f : rt.factors) {
      // wildcard operator transplant
      std::vector<DerivOp> new_derivs;
      for (auto& op : f.derivs) {
        if (wildcard_op(op)) {
          auto it = b.ops.find(op.idx[0].name);
          if (it == b.ops.end())
            throw SpinError("unbound operator wildcard in replacement");
          new_derivs.push_back(it->second);
        } else {
          new_derivs.push_back(op);
        }
      }
      f.derivs = std::move(new_derivs);
      auto subst = [&](Index& ix) {
        if (!ix.name.empty() && ix.name[0] == '$') {
          // wildcard index transplanted as a kernel slot fill
          auto it = b.ops.find(ix.name);
          if (it == b.ops.end())
            throw SpinError("unbound index wildcard in replacement");
          return;  // handled by caller expansion below
        }
        auto key = std::make_pair(ix.name, ix.kind);
        auto bit = b.names.find(key);
        if (bit != b.names.end()) {
          ix.name = bit->second;
          return;
        }
        auto fit = fresh_map.find(key);
        if (fit != fresh_map.end()) ix.name = fit->second;
      };
      for (auto& op : f.derivs)
        for (auto& ix : op.idx) subst(ix);
      // kernel slots: expand wildcard fills (the matched operator's index
      // list copied verbatim into a world slot)
      std::vector<Index> new_idx;
      for (auto& ix : f.indices) {
        if (!ix.name.empty() && ix.name[0] == '$') {
          auto it = b.ops.find(ix.name);
          if (it == b.ops.end())
            throw SpinError("unbound index wildcard in replacement");
          for (const auto& copy : it->second.idx) new_idx.push_back(copy);
          continue;
        }
        Index c = ix;
        subst(c);
        new_idx.push_back(c);
      }
      f.indices = std::move(new_idx);
    }
    out.terms.push_back(std::move(rt));
  }
  return out;
}

}  // namespace

Expression apply_rule(const AxiomRule& rule, const Expression& e,
                      const SymbolTable& tab) {
  if (rule.atom_rule) {
    Expression out;
    for (Term t : e.terms) {
      auto it = t.coeff.scalars.find(rule.atom);
      if (it == t.coeff.scalars.end() || it->second <= 0) {
        out.terms.push_back(std::move(t));
        continue;
      }
      t.coeff.scalars[rule.atom] -= 1;
      if (t.coeff.scalars[rule.atom] == 0) t.coeff.scalars.erase(rule.atom);
      // multiply by replacement (fresh dummies against t)
      auto used = used_names(t);
      int counter = 0;
      for (Term rt : rule.replacement.terms) {
        std::vector<std::pair<std::string, IndexKind>> names;
        collect_names(rt, names);
        std::map<std::pair<std::string, IndexKind>, int> count;
        for (auto& nk : names) count[nk]++;
        std::map<std::pair<std::string, IndexKind>, std::string> ren;
        for (auto& [nk, c] : count)
          if (c == 2 && used.count(nk))
            ren[nk] = fresh_from(used, nk.second, counter);
        Term m = t;
        Term rr = rt;
        auto apply_ren = [&](Index& ix) {
          auto rit = ren.find({ix.name, ix.kind});
          if (rit != ren.end()) ix.name = rit->second;
        };
        for (auto& f : rr.factors) {
          for (auto& op : f.derivs)
            for (auto& ix : op.idx) apply_ren(ix);
          for (auto& ix : f.indices) apply_ren(ix);
        }
        m.coeff = m.coeff * rr.coeff;
        for (auto& f : rr.factors) m.factors.push_back(f);
        out.terms.push_back(std::move(m));
      }
    }
    return out;
  }

  const Term& pat = rule.pattern;
  bool directive_pattern = !pat.syms.empty();

  Expression out;
  for (const auto& t : e.terms) {
    if (directive_pattern) {
      // match innermost directives and the full factor list
      bool ok = pat.syms.size() <= t.syms.size() &&
                pat.factors.size() == t.factors.size();
      Binding b;
      if (ok) {
        std::size_t off = t.syms.size() - pat.syms.size();
        // directive names are pattern variables too: bind via tuples
        for (std::size_t s = 0; ok && s < pat.syms.size(); ++s) {
          const auto& ps = pat.syms[s];
          const auto& ts = t.syms[off + s];
          if (ps.antisym != ts.antisym || ps.tuples.size() != ts.tuples.size())
            ok = false;
          for (std::size_t i = 0; ok && i < ps.tuples.size(); ++i) {
            if (ps.tuples[i].size() != ts.tuples[i].size()) ok = false;
            // names bound during factor matching; tuples checked after
          }
        }
        for (std::size_t k = 0; ok && k < pat.factors.size(); ++k) {
          if (pat.factors[k].derivs.size() != t.factors[k].derivs.size() ||
              !match_factor(pat.factors[k], t.factors[k], b))
            ok = false;
        }
        // verify directive tuple names map consistently
        if (ok) {
          std::size_t off2 = t.syms.size() - pat.syms.size();
          for (std::size_t s = 0; ok && s < pat.syms.size(); ++s) {
            const auto& ps = pat.syms[s];
            const auto& ts = t.syms[off2 + s];
            for (std::size_t i = 0; ok && i < ps.tuples.size(); ++i)
              for (std::size_t j = 0; ok && j < ps.tuples[i].size(); ++j) {
                const std::string& pn = ps.tuples[i][j];
                const std::string& tn = ts.tuples[i][j];
                auto itu = b.names.find({pn, IndexKind::Unprimed});
                auto itp = b.names.find({pn, IndexKind::Primed});
                bool any = false;
                if (itu != b.names.end() && itu->second == tn) any = true;
                if (itp != b.names.end() && itp->second == tn) any = true;
                if (!any) ok = false;
              }
          }
        }
      }
      if (!ok) {
        out.terms.push_back(t);
        continue;
      }
      auto used = used_names(t);
      int counter = 0;
      Expression inst = instantiate(rule.replacement, b, used, counter);
      Coefficient scalec = t.coeff;
      // divide by the pattern coefficient
      Coefficient inv;
      inv.rat = Rational(1) / rule.pattern_coeff.rat;
      inv.ipow = 0;
      inv.mul_ipow((4 - rule.pattern_coeff.ipow) % 4);
      if (rule.pattern_coeff.ipow == 1) inv.rat = -inv.rat;
      scalec = scalec * inv;
      std::vector<SymDirective> outer(t.syms.begin(),
                                      t.syms.end() - pat.syms.size());
      for (Term rt : inst.terms) {
        rt.coeff = rt.coeff * scalec;
        std::vector<SymDirective> syms = outer;
        for (auto& sd : rt.syms) syms.push_back(sd);
        rt.syms = std::move(syms);
        out.terms.push_back(std::move(rt));
      }
      continue;
    }

    // factor pattern: collect matches across factors
    std::vector<std::pair<std::size_t, Binding>> matches;
    for (std::size_t k = 0; k < t.factors.size(); ++k) {
      Binding b;
      if (match_factor(pat.factors[0], t.factors[k], b))
        matches.push_back({k, b});
    }
    if (matches.empty()) {
      out.terms.push_back(t);
      continue;
    }
    auto used = used_names(t);
    int counter = 0;
    Coefficient inv;
    inv.rat = Rational(1) / rule.pattern_coeff.rat;
    inv.ipow = 0;
    inv.mul_ipow((4 - rule.pattern_coeff.ipow) % 4);
    if (rule.pattern_coeff.ipow == 1) inv.rat = -inv.rat;

    std::vector<Expression> pieces;
    std::size_t mi = 0;
    for (std::size_t k = 0; k < t.factors.size(); ++k) {
      if (mi < matches.size() && matches[mi].first == k) {
        const Binding& b = matches[mi].second;
        ++mi;
        Expression inst = instantiate(rule.replacement, b, used, counter);
        inst = scale(inst, inv);
        // re-apply the unmatched outer prefix
        const Factor& f = t.factors[k];
        std::size_t keep =
            f.derivs.size() - rule.pattern.factors[0].derivs.size();
        if (keep > 0) {
          std::vector<DerivOp> outer(f.derivs.begin(),
                                     f.derivs.begin() + keep);
          inst = apply_deriv_prefix(outer, inst, tab);
        }
        pieces.push_back(inst);
      } else {
        pieces.push_back(Expression::from_term(factor_term(t.factors[k])));
      }
    }
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
  return out;
}

}  // namespace spintwist
