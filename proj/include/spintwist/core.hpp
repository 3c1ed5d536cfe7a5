#pragma once

#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace spintwist {

// ---------------------------------------------------------------------------
// Errors

struct SpinError : std::runtime_error {
  explicit SpinError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SourceSpan {
  int line = 1;
  int col_start = 1;
  int col_end = 1;
};

enum class ParseCategory { Lexical, Grammar, IndexBalance, UnknownKernel };

struct ParseError : SpinError {
  SourceSpan span;
  ParseCategory category;
  ParseError(SourceSpan s, ParseCategory c, const std::string& msg)
      : SpinError(msg), span(s), category(c) {}
};

struct UnknownAxiomError : SpinError {
  using SpinError::SpinError;
};

struct BudgetExceededError : SpinError {
  using SpinError::SpinError;
};

struct FormalismMismatchError : SpinError {
  using SpinError::SpinError;
};

struct EvalError : SpinError {
  using SpinError::SpinError;
};

// ---------------------------------------------------------------------------
// Indices

enum class IndexKind { Unprimed, Primed, World };
enum class Variance { Upper, Lower };

// Primed indices display a trailing apostrophe; the stored name is the bare
// stem, so conjugation is a kind flip that keeps the name.
struct Index {
  std::string name;
  IndexKind kind = IndexKind::Unprimed;
  Variance var = Variance::Lower;
  bool operator==(const Index&) const = default;
};

std::string index_text(const Index& ix);

// ---------------------------------------------------------------------------
// Exact coefficients: rational * i^p * monomial in scalar atoms

struct Rational {
  long long num = 0;
  long long den = 1;

  Rational() = default;
  Rational(long long n) : num(n), den(1) {}
  Rational(long long n, long long d);

  void normalize();
  bool is_zero() const { return num == 0; }
  std::string str() const;

  friend Rational operator+(Rational a, Rational b);
  friend Rational operator-(Rational a, Rational b);
  friend Rational operator*(Rational a, Rational b);
  friend Rational operator/(Rational a, Rational b);
  Rational operator-() const { return Rational(-num, den); }
  bool operator==(const Rational&) const = default;
};

struct Coefficient {
  Rational rat{0, 1};
  int ipow = 0;  // 0 or 1 after normalization; i^2 folds into rat
  std::map<std::string, int> scalars;

  static Coefficient one() {
    Coefficient c;
    c.rat = Rational(1);
    return c;
  }
  static Coefficient of(Rational r, int ip = 0) {
    Coefficient c;
    c.rat = r;
    c.ipow = 0;
    c.mul_ipow(ip);
    return c;
  }

  bool is_zero() const { return rat.is_zero(); }
  void mul_ipow(int p);  // multiply by i^p
  Coefficient operator*(const Coefficient& o) const;
  void negate() { rat = -rat; }
  // conjugate: i -> -i, atoms mapped by caller
  std::string str() const;  // sign included
  std::string abs_str() const;
  bool negative_leading() const { return rat.num < 0; }
  bool operator==(const Coefficient&) const = default;
};

// ---------------------------------------------------------------------------
// Derivative operators

enum class DerivKind { NablaWorld, NablaPair, Box, Delta };

// NablaWorld: idx = {world};  NablaPair: idx = {unprimed, primed};
// Box: idx empty;  Delta: idx = two spinor indices of equal kind.
struct DerivOp {
  DerivKind kind = DerivKind::Box;
  std::vector<Index> idx;
  bool operator==(const DerivOp&) const = default;
};

// ---------------------------------------------------------------------------
// Factors, symmetrizer directives, terms, expressions

struct Factor {
  std::vector<DerivOp> derivs;  // outermost first
  std::string kernel;
  std::vector<Index> indices;  // kernel slots; a world slot may hold a
                               // split (unprimed, primed) pair
  bool operator==(const Factor&) const = default;
};

// Symmetrization over index-name tuples: each permutation of the tuple list
// renames tuple contents positionally; coefficient 1/k!, alternating signs
// when antisym.
struct SymDirective {
  std::vector<std::vector<std::string>> tuples;
  bool antisym = false;
  bool operator==(const SymDirective&) const = default;
};

struct Term {
  Coefficient coeff;
  std::vector<Factor> factors;
  std::vector<SymDirective> syms;  // outermost first
  bool operator==(const Term&) const = default;
};

struct Expression {
  std::vector<Term> terms;
  bool operator==(const Expression&) const = default;

  static Expression zero() { return Expression{}; }
  static Expression from_term(Term t) { return Expression{{std::move(t)}}; }
};

Expression operator+(const Expression& a, const Expression& b);
Expression operator-(const Expression& a, const Expression& b);
Expression scale(const Expression& e, const Coefficient& c);

// ---------------------------------------------------------------------------
// Symbol declarations

struct SlotSig {
  IndexKind kind = IndexKind::Unprimed;
  Variance declared_var = Variance::Lower;
};

struct SymGroup {
  std::vector<int> slots;
  bool antisym = false;
};

constexpr unsigned kFormGamma = 1u;
constexpr unsigned kFormEpsilon = 2u;
constexpr unsigned kFormBoth = kFormGamma | kFormEpsilon;

struct SymbolDecl {
  std::string kernel;
  std::vector<SlotSig> slots;
  std::vector<SymGroup> groups;
  bool hermitian = false;
  std::string conj_kernel;        // empty: no conjugate declared
  std::vector<int> conj_perm;     // slot permutation applied after kind flip
  unsigned formalism = kFormBoth;
  Rational weight{0, 1};
  Rational antiweight{0, 1};
  bool scalar_atom = false;  // lives in coefficients when underived
  bool metric = false;       // metric spinor (raising/lowering, absorption)
  bool real_valued = false;  // fixed by conjugation
};

class SymbolTable {
 public:
  using SymbolId = std::size_t;

  SymbolId declare(const SymbolDecl& decl);
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }
  const SymbolDecl* find(const std::string& kernel) const;
  const SymbolDecl& at(const std::string& kernel) const;
  const std::vector<SymbolDecl>& all() const { return decls_; }

 private:
  std::vector<SymbolDecl> decls_;
  std::map<std::string, std::size_t> by_name_;
  bool frozen_ = false;
};

// ---------------------------------------------------------------------------
// Rules (oriented rewrites keyed by formalism)

struct AxiomRule {
  std::string name;
  unsigned formalism = kFormBoth;
  // Factor-pattern rule: pattern is a single term whose index names are
  // variables. Directive-bearing patterns must match a term in full.
  Term pattern;
  Coefficient pattern_coeff;  // lhs coefficient folded out of the match
  Expression replacement;     // divided by pattern_coeff when applied
  // Coefficient-atom rule: replaces a scalar atom by `replacement`.
  bool atom_rule = false;
  std::string atom;
  std::string anchor;  // display line for the rules table
  std::string display;
};

// ---------------------------------------------------------------------------
// Structural operations (pure; all values immutable once built)

// Validates index balance and slot signatures; throws SpinError.
void validate_term(const Term& t, const SymbolTable& tab);
void validate_expression(const Expression& e, const SymbolTable& tab);

struct FreeIndex {
  std::string name;
  IndexKind kind;
  Variance var;
  auto operator<=>(const FreeIndex&) const = default;
};

// Free (uncontracted) indices; identical across terms (else SpinError).
std::vector<FreeIndex> free_indices(const Expression& e,
                                    const SymbolTable& tab);
std::vector<FreeIndex> term_free_indices(const Term& t,
                                         const SymbolTable& tab);

Expression conjugate(const Expression& e, const SymbolTable& tab);

// Replaces every occurrence of `kernel` (matching slot count) by
// `replacement` whose free indices are bound positionally to the slots.
Expression substitute_kernel(const Expression& e, const std::string& kernel,
                             const Expression& replacement,
                             const SymbolTable& tab);

// Names helpers
bool name_used_in_term(const Term& t, const std::string& name, IndexKind kind);
std::string fresh_name(const Term& t, IndexKind kind, int& counter);
void collect_names(const Term& t, std::vector<std::pair<std::string, IndexKind>>& out);

// Display name ("A", "A'", "h") -> (stem, kind); primes mark the primed
// kind, lowercase stems are world indices.
std::pair<std::string, IndexKind> parse_display_name(const std::string& n);
std::string display_name(const std::string& stem, IndexKind kind);

}  // namespace spintwist
