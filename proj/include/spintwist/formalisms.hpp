#pragma once

#include "spintwist/core.hpp"

#include <memory>

namespace spintwist {

enum class FormalismTag { Gamma, Epsilon };

std::string formalism_name(FormalismTag t);
FormalismTag formalism_from_name(const std::string& s);

// Frozen per-formalism table: the standard symbols plus the oriented
// rewrite rules keyed by kernel and variance.
class Registry {
 public:
  static Registry build(FormalismTag tag);

  FormalismTag tag() const { return tag_; }
  const SymbolTable& symbols() const { return symbols_; }
  const std::string& metric_kernel() const { return metric_; }
  const std::string& metric_bar_kernel() const { return metric_bar_; }

  const std::vector<AxiomRule>& rules() const { return rules_; }
  const AxiomRule* find_rule(const std::string& name) const;

  // The four attested curvature contraction rules; anything else raises
  // UnknownAxiomError naming the missing case.
  const AxiomRule& lookup_delta_rule(const std::string& kernel,
                                     Variance variance) const;

  // The metric-spinor curvature derivative pair; gamma formalism only.
  std::pair<const AxiomRule*, const AxiomRule*> gamma_delta_rules() const;

 private:
  FormalismTag tag_ = FormalismTag::Gamma;
  SymbolTable symbols_;
  std::vector<AxiomRule> rules_;
  std::string metric_;
  std::string metric_bar_;
};

// Shared registries (built once, immutable afterwards).
const Registry& registry(FormalismTag tag);

}  // namespace spintwist
