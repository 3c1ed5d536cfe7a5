#include "spintwist/formalisms.hpp"

#include "spintwist/notation.hpp"

namespace spintwist {

std::string formalism_name(FormalismTag t) {
  return t == FormalismTag::Gamma ? "gamma" : "epsilon";
}

FormalismTag formalism_from_name(const std::string& s) {
  if (s == "gamma") return FormalismTag::Gamma;
  if (s == "epsilon") return FormalismTag::Epsilon;
  throw SpinError("unknown formalism: " + s);
}

namespace {

SymbolDecl spinor1(const std::string& kernel, const std::string& conj,
                   unsigned form) {
  SymbolDecl d;
  d.kernel = kernel;
  d.slots = {{kernel.ends_with("bar") ? IndexKind::Primed
                                      : IndexKind::Unprimed,
              Variance::Lower}};
  d.conj_kernel = conj;
  d.formalism = form;
  return d;
}

SymbolDecl spinor2(const std::string& kernel, IndexKind kind, bool antisym,
                   const std::string& conj, unsigned form) {
  SymbolDecl d;
  d.kernel = kernel;
  d.slots = {{kind, Variance::Lower}, {kind, Variance::Lower}};
  d.groups = {{{0, 1}, antisym}};
  d.conj_kernel = conj;
  d.formalism = form;
  return d;
}

SymbolDecl scalar(const std::string& kernel, const std::string& conj,
                  unsigned form, bool real) {
  SymbolDecl d;
  d.kernel = kernel;
  d.slots = {};
  d.conj_kernel = conj;
  d.formalism = form;
  d.scalar_atom = true;
  d.real_valued = real;
  return d;
}

}  // namespace

Registry Registry::build(FormalismTag tag) {
  Registry r;
  r.tag_ = tag;
  bool g = tag == FormalismTag::Gamma;
  unsigned form = g ? kFormGamma : kFormEpsilon;
  r.metric_ = g ? "gamma" : "eps";
  r.metric_bar_ = g ? "gammabar" : "epsbar";

  SymbolTable& tab = r.symbols_;
  {
    SymbolDecl xi = spinor1("xi", "xibar", form);
    if (!g) {
      xi.weight = Rational(-1, 2);
      xi.antiweight = Rational(-1, 2);
    }
    tab.declare(xi);
    SymbolDecl xb = spinor1("xibar", "xi", form);
    if (!g) {
      xb.weight = Rational(-1, 2);
      xb.antiweight = Rational(-1, 2);
    }
    tab.declare(xb);
  }
  {
    SymbolDecl k;
    k.kernel = "K";
    k.slots = {{IndexKind::Unprimed, Variance::Upper},
               {IndexKind::Primed, Variance::Upper}};
    k.hermitian = true;
    k.conj_kernel = "K";
    k.conj_perm = {1, 0};
    k.formalism = form;
    tab.declare(k);
  }
  {
    SymbolDecl m =
        spinor2(r.metric_, IndexKind::Unprimed, true, r.metric_bar_, form);
    m.metric = true;
    tab.declare(m);
    SymbolDecl mb =
        spinor2(r.metric_bar_, IndexKind::Primed, true, r.metric_, form);
    mb.metric = true;
    tab.declare(mb);
  }
  {
    // contraction of the metric with itself; one slot up, one down
    SymbolDecl d;
    d.kernel = "delta";
    d.slots = {{IndexKind::Unprimed, Variance::Upper},
               {IndexKind::Unprimed, Variance::Lower}};
    d.conj_kernel = "deltabar";
    d.formalism = form;
    tab.declare(d);
    SymbolDecl db;
    db.kernel = "deltabar";
    db.slots = {{IndexKind::Primed, Variance::Upper},
                {IndexKind::Primed, Variance::Lower}};
    db.conj_kernel = "delta";
    db.formalism = form;
    tab.declare(db);
  }
  tab.declare(scalar("R", "R", form, true));
  if (g) {
    tab.declare(spinor2("phi", IndexKind::Unprimed, false, "phibar", form));
    tab.declare(spinor2("phibar", IndexKind::Primed, false, "phi", form));
    {
      SymbolDecl b;
      b.kernel = "beta";
      b.slots = {{IndexKind::World, Variance::Lower}};
      b.conj_kernel = "beta";
      b.real_valued = true;
      b.formalism = form;
      tab.declare(b);
    }
    tab.declare(scalar("Theta", "Thetabar", form, false));
    tab.declare(scalar("Thetabar", "Theta", form, false));
  }
  tab.freeze();

  auto add = [&](const std::string& name, const std::string& lhs,
                 const std::string& rhs, const std::string& anchor) {
    Expression pe = parse_expression(lhs, tab);
    if (pe.terms.size() != 1)
      throw SpinError("rule pattern must be a single term: " + name);
    AxiomRule rule;
    rule.name = name;
    rule.formalism = form;
    rule.pattern = pe.terms[0];
    rule.pattern_coeff = rule.pattern.coeff;
    rule.pattern.coeff = Coefficient::one();
    rule.replacement = parse_expression(rhs, tab);
    rule.anchor = anchor;
    rule.display = lhs + "  ->  " + rhs;
    r.rules_.push_back(std::move(rule));
  };
  auto add_atom = [&](const std::string& name, const std::string& atom,
                      const std::string& rhs, const std::string& anchor) {
    AxiomRule rule;
    rule.name = name;
    rule.formalism = form;
    rule.atom_rule = true;
    rule.atom = atom;
    rule.replacement = parse_expression(rhs, tab);
    rule.anchor = anchor;
    rule.display = atom + "  ->  " + rhs;
    r.rules_.push_back(std::move(rule));
  };

  if (g) {
    add("ev-gamma-lower", "D_{$a} gamma_{AB}", "i beta_{$a} gamma_{AB}",
        "eigenvalue derivative of the covariant metric spinor");
    add("ev-gamma-upper", "D_{$a} gamma^{AB}", "- i beta_{$a} gamma^{AB}",
        "eigenvalue derivative of the contravariant metric spinor");
    add("ev-gammabar-lower", "D_{$a} gammabar_{A'B'}",
        "- i beta_{$a} gammabar_{A'B'}",
        "eigenvalue derivative, conjugate covariant metric spinor");
    add("ev-gammabar-upper", "D_{$a} gammabar^{A'B'}",
        "i beta_{$a} gammabar^{A'B'}",
        "eigenvalue derivative, conjugate contravariant metric spinor");
    add("box-gamma-upper", "Box gamma^{AB}", "- Theta gamma^{AB}",
        "wave operator on the contravariant metric spinor");
    add("box-gamma-lower", "Box gamma_{AB}", "- Thetabar gamma_{AB}",
        "wave operator on the covariant metric spinor");
    add("delta-gamma-lower", "Delta_{AB} gamma_{CD}",
        "2i phi_{AB} gamma_{CD}",
        "curvature operator on the covariant metric spinor");
    add("delta-gamma-upper", "Delta_{AB} gamma^{CD}",
        "- 2i phi_{AB} gamma^{CD}",
        "curvature operator on the contravariant metric spinor");
    add("delta-rule-gamma-lower", "Delta_{A}^{B} xi_{B}",
        "R/8 xi_{A} + i phi_{A}^{B} xi_{B}",
        "contracted curvature derivative, covariant one-index field");
    add("delta-rule-gamma-upper", "Delta^{A}_{B} xi^{B}",
        "- R/8 xi^{A} - i phi^{A}_{B} xi^{B}",
        "contracted curvature derivative, contravariant one-index field");
    add("def-raise-xi", "xi^{X}", "gamma^{XC} xi_{C}",
        "raising convention for the one-index field");
    add("def-lower-xi", "xi_{X}", "gamma_{CX} xi^{C}",
        "lowering convention for the one-index field");
    add_atom("theta-def", "Theta", "beta^{h} beta_{h} + i D_{h} beta^{h}",
             "gauge scalar built from the electromagnetic potential vector");
    add_atom("thetabar-def", "Thetabar",
             "beta^{h} beta_{h} - i D_{h} beta^{h}",
             "conjugate gauge scalar");
  } else {
    add("eps-const-lower", "D_{$a} eps_{AB}", "0",
        "covariant constancy of the metric spinor");
    add("eps-const-upper", "D_{$a} eps^{AB}", "0",
        "covariant constancy of the contravariant metric spinor");
    add("eps-constbar-lower", "D_{$a} epsbar_{A'B'}", "0",
        "covariant constancy, conjugate metric spinor");
    add("eps-constbar-upper", "D_{$a} epsbar^{A'B'}", "0",
        "covariant constancy, conjugate contravariant metric spinor");
    add("box-eps-lower", "Box eps_{AB}", "0",
        "wave operator on the constant metric spinor");
    add("box-eps-upper", "Box eps^{AB}", "0",
        "wave operator on the constant contravariant metric spinor");
    add("delta-eps-lower", "Delta_{AB} eps_{CD}", "0",
        "curvature operator on the constant metric spinor");
    add("delta-eps-upper", "Delta_{AB} eps^{CD}", "0",
        "curvature operator on the constant contravariant metric spinor");
    add("delta-rule-eps-lower", "Delta_{A}^{B} xi_{B}", "R/8 xi_{A}",
        "contracted curvature derivative, weight -1/2 covariant field");
    add("delta-rule-eps-upper", "Delta^{A}_{B} xi^{B}", "- R/8 xi^{A}",
        "contracted curvature derivative, weight +1/2 contravariant field");
    add("def-raise-xi", "xi^{X}", "eps^{XC} xi_{C}",
        "raising convention for the one-index field");
    add("def-lower-xi", "xi_{X}", "eps_{CX} xi^{C}",
        "lowering convention for the one-index field");
  }
  return r;
}

const AxiomRule* Registry::find_rule(const std::string& name) const {
  for (const auto& rule : rules_)
    if (rule.name == name) return &rule;
  return nullptr;
}

const AxiomRule& Registry::lookup_delta_rule(const std::string& kernel,
                                             Variance variance) const {
  std::string var_name = variance == Variance::Upper ? "upper" : "lower";
  std::string case_name = formalism_name(tag_) + "/" + kernel + "/" + var_name;
  if (kernel != "xi")
    throw UnknownAxiomError(
        "no curvature contraction rule for case " + case_name);
  if (tag_ == FormalismTag::Epsilon) {
    // weight keying: the declared (lower) weight, negated when raised
    const SymbolDecl& d = symbols_.at(kernel);
    Rational w = variance == Variance::Lower ? d.weight : -d.weight;
    Rational expect =
        variance == Variance::Lower ? Rational(-1, 2) : Rational(1, 2);
    if (!(w == expect))
      throw UnknownAxiomError("no curvature contraction rule for case " +
                              case_name + " at weight " + w.str());
    return *find_rule(variance == Variance::Lower ? "delta-rule-eps-lower"
                                                  : "delta-rule-eps-upper");
  }
  return *find_rule(variance == Variance::Lower ? "delta-rule-gamma-lower"
                                                : "delta-rule-gamma-upper");
}

std::pair<const AxiomRule*, const AxiomRule*> Registry::gamma_delta_rules()
    const {
  if (tag_ != FormalismTag::Gamma)
    throw FormalismMismatchError(
        "metric-spinor curvature derivatives exist in the gamma formalism "
        "only");
  return {find_rule("delta-gamma-lower"), find_rule("delta-gamma-upper")};
}

const Registry& registry(FormalismTag tag) {
  static const Registry g = Registry::build(FormalismTag::Gamma);
  static const Registry e = Registry::build(FormalismTag::Epsilon);
  return tag == FormalismTag::Gamma ? g : e;
}

}  // namespace spintwist
