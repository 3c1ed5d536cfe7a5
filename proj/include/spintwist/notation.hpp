#pragma once

#include "spintwist/core.hpp"

#include <optional>

namespace spintwist {

// Plain-text abstract-index grammar. Uppercase index names are spinor
// indices (trailing apostrophe marks the primed kind), lowercase names are
// world indices. `D` is the covariant derivative, `Box` the wave operator,
// `Delta` the curvature operator. Parenthesized subexpressions distribute;
// a derivative applied to a parenthesized product expands by the Leibniz
// rule at parse time. Sym{(A)(B)}[...], AntiSym{...}[...] and
// SymPairs{(A A')(B B')}[...] attach symmetrization directives; round and
// square brackets inside index blocks do the same inline.
Expression parse_expression(const std::string& text, const SymbolTable& tab);

// Deterministic rendering; parse(format(e)) is structurally equal to e.
std::string format_expression(const Expression& e);
std::string format_term(const Term& t, bool leading);

// Splits `text` into (multiplicative wrapper, inner subexpression) when the
// source is a single term ending in one parenthesized group. Used by the
// derivation checker to recognize an operator applied to an established
// equation.
std::optional<std::pair<std::string, std::string>> split_wrapper(
    const std::string& text);

}  // namespace spintwist
