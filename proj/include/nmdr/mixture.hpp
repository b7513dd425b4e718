#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "nmdr/distributions.hpp"
#include "nmdr/predictors.hpp"
#include "nmdr/transforms.hpp"

namespace nmdr {

// One mixture component: a density family plus a predictor and transform per
// distribution parameter. Missing predictors default to intercept-only,
// missing transforms to the domain default.
struct ComponentSpec {
  Family family;
  std::vector<PredictorSpec> param_predictors;
  std::vector<Transform> param_transforms;

  explicit ComponentSpec(Family f) : family(f) {}
};

enum class GatingKind { Softmax, OrderedSimplex };

struct ModelSpec {
  std::vector<ComponentSpec> components;
  // One predictor per raw gating score; defaults to intercept-only each.
  std::vector<PredictorSpec> gating;
  GatingKind gating_kind = GatingKind::Softmax;
  PenaltyConfig penalties;
  double entropy_xi = 0.0;
};

// Constrained parameter values over a dataset.
struct ParamField {
  Matrix pi;                 // n x M, rows on the simplex
  std::vector<Matrix> theta; // per component, n x k_m
  Matrix gating_raw;         // n x M
  std::vector<Matrix> raw;   // per component, n x k_m
};

// A dataset bound to a compiled model: the inputs plus cached structured
// design matrices for every predictor.
struct BoundData {
  Matrix x;
  Vector y;
  std::vector<Matrix> gating_designs;               // per gating score
  std::vector<std::vector<Matrix>> param_designs;   // [component][param]
  IndexVec all_rows;
};

struct EvalScales {
  double data = 1.0;     // multiplies the summed nll
  double penalty = 0.0;  // multiplies penalty_value
  double entropy = 0.0;  // multiplies H(mean pi) over the evaluated rows
};

// The full trainable mixture model, compiled against a training sample.
// Evaluation is pure given the weight vector; the weight vector is mutated
// only by the training loop.
class CompiledModel {
public:
  static CompiledModel compile(const ModelSpec& spec, const Matrix& x_train, const Vector& y_train);

  // Data-informed, seeded initialization: structured weights N(0, 0.01^2),
  // parameter intercepts at transform-preimages of robust statistics of y,
  // gating intercepts at 0, dense layers Glorot-uniform.
  void init_weights(std::uint64_t seed);

  BoundData bind(const Matrix& x, const Vector& y) const;

  ParamField forward(const BoundData& data) const;
  double nll(const BoundData& data) const;
  Matrix responsibilities(const BoundData& data) const;
  Vector grad_nll(const BoundData& data) const;

  // Summed nll + penalties + xi * H(mean pi over the data).
  double penalized_risk(const BoundData& data) const;

  // objective = scales.data * sum_i nll_i + scales.penalty * penalty_value
  //           + scales.entropy * H(mean pi over rows).
  // Fixed-order summation; deterministic for a given weight vector.
  double objective(const BoundData& data, const IndexVec& rows, const EvalScales& scales,
                   Vector* grad) const;

  double penalty() const;

  int num_components() const { return static_cast<int>(spec_.components.size()); }
  int num_weights() const { return static_cast<int>(weights_.size()); }
  Vector& weights() { return weights_; }
  const Vector& weights() const { return weights_; }
  const ModelSpec& spec() const { return spec_; }
  const std::vector<CompiledPredictor>& gating_predictors() const { return gating_; }
  const std::vector<std::vector<CompiledPredictor>>& param_predictors() const { return params_; }

  // Resolved smoothing parameters keyed by term label.
  std::vector<std::pair<std::string, double>> resolved_lambdas() const;

private:
  std::vector<const CompiledPredictor*> all_predictors() const;

  ModelSpec spec_;
  std::vector<CompiledPredictor> gating_;
  std::vector<std::vector<CompiledPredictor>> params_;
  Vector weights_;
  Vector y_train_stats_;  // copy of training outcomes for init
};

// Mixture nll for explicitly given parameter fields (the oracle path):
// -sum_i LSE_m [ log pi_im + log f_m(y_i | theta_im) ].
double nll_from_params(const std::vector<Family>& families, const Matrix& pi,
                       const std::vector<Matrix>& theta, const Vector& y);

Matrix responsibilities_from_params(const std::vector<Family>& families, const Matrix& pi,
                                    const std::vector<Matrix>& theta, const Vector& y);

}  // namespace nmdr
