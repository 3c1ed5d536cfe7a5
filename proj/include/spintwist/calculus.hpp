#pragma once

#include "spintwist/core.hpp"

namespace spintwist {

// Applies `op` to a product of factors (one term) as a derivation.
// Box distributes with the second-order cross term
//   Box(f g) = (Box f) g + f (Box g) + 2 (D^h f)(D_h g).
Expression leibniz_expand(const DerivOp& op, const Term& product,
                          const SymbolTable& tab);

// Applies a derivative prefix (outermost first) to every term, expanding
// products along the way.
Expression apply_deriv_prefix(const std::vector<DerivOp>& prefix,
                              const Expression& e, const SymbolTable& tab);

// Rewrites Box into a contracted pair of nabla operators and splits every
// contracted world dummy into an (unprimed, primed) pair. Free world
// indices are left alone. Reassembled pairs connecting an operator slot
// with a kernel slot are oriented operator-up.
Expression split_world_index(const Expression& e, const SymbolTable& tab);

// Head-of-chain second derivative splitting with a contracted primed pair:
//   D_C^{P'} D_{A P'} X  ->  1/2 M_{AC} Box X - Delta_{AC} X
//   D^C_{P'} D^{A P'} X  -> -1/2 M^{AC} Box X + Delta^{AC} X
// where M is the ambient metric kernel. Other variance combinations are
// left unchanged.
Expression apply_splitting(const Expression& e, const std::string& metric,
                           const SymbolTable& tab);

// One simultaneous pass of an oriented rewrite rule. Factor patterns match
// a suffix of a factor's derivative chain; the remaining outer prefix is
// re-applied to the replacement by Leibniz. Directive-bearing patterns
// match whole terms (innermost directives). Returns the rewritten
// expression; no match leaves the input unchanged.
Expression apply_rule(const AxiomRule& rule, const Expression& e,
                      const SymbolTable& tab);

// Reorients implicit world contractions (matched unprimed/primed dummy
// couples) to a fixed gauge; sign free since each couple flips twice.
void orient_contracted_pairs(Term& t);

}  // namespace spintwist
