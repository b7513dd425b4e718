#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace nmdr {

enum class Activation { ReLU, Tanh, Identity };

struct InterceptTerm {};

struct LinearTerm {
  std::vector<int> features;
  // Optional ridge penalty (P = I) with fixed smoothing parameter.
  std::optional<double> lambda;
};

struct SplineTerm {
  int feature = 0;
  int num_basis = 10;
  int degree = 3;
  int penalty_order = 2;
  bool sum_to_zero = true;
  // At most one of these; df is calibrated to a lambda once, on the
  // training design, before optimization.
  std::optional<double> lambda;
  std::optional<double> df;
};

struct DenseTerm {
  std::vector<int> features;
  std::vector<int> widths;  // layer output widths; last must be 1
  Activation activation = Activation::ReLU;
};

// One additive-predictor term. `l1` marks membership in the L1-penalized set
// (shared complexity rho lives in PenaltyConfig); quadratic penalties are
// configured on the term itself. A term may not carry both.
struct TermSpec {
  std::variant<InterceptTerm, LinearTerm, SplineTerm, DenseTerm> kind;
  bool l1 = false;
  bool trainable = true;
  std::string label;  // auto-generated at compile time when empty
};

struct PredictorSpec {
  std::vector<TermSpec> terms;
};

// Model-wide penalty settings; per-term smoothing parameters live on the
// terms, the L1 set shares one complexity parameter.
struct PenaltyConfig {
  double rho = 0.0;
};

inline TermSpec intercept() { return TermSpec{InterceptTerm{}, false, true, ""}; }
inline TermSpec linear(std::vector<int> features) {
  return TermSpec{LinearTerm{std::move(features), std::nullopt}, false, true, ""};
}
inline PredictorSpec intercept_only() { return PredictorSpec{{intercept()}}; }

Activation activation_from_name(const std::string& name);

}  // namespace nmdr
