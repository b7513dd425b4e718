#pragma once

#include <string>
#include <vector>

#include "nmdr/splines.hpp"
#include "nmdr/terms.hpp"

namespace nmdr {

// A term bound to training data: weight slice in the model-wide flat vector,
// column slice in the predictor design matrix, and any data-dependent state
// (spline knots, sum-to-zero map, resolved smoothing parameter).
struct CompiledTerm {
  TermSpec spec;
  std::string label;
  int weight_offset = 0;
  int weight_count = 0;
  int col_offset = 0;   // structured terms: first column in the design
  int col_count = 0;    // structured terms only; dense terms use weights directly

  // Spline state
  BsplineBasis basis;
  Matrix constraint;     // sum-to-zero back-map (num_basis x cols), empty if unconstrained
  Matrix quad_penalty;   // constrained-space penalty, empty when unpenalized
  double lambda = 0.0;
  bool has_quad = false;

  // Dense state: per-layer (in, out) sizes; weights stored row-major W then b.
  std::vector<std::pair<int, int>> layers;
};

// An additive predictor eta(x) bound to a training sample. Structured terms
// share one cached design matrix; dense terms evaluate their layered map per
// row. All evaluation is pure given the weight vector.
class CompiledPredictor {
public:
  static CompiledPredictor compile(const PredictorSpec& spec, const Matrix& x_train,
                                   int& weight_cursor, const std::string& label_prefix);

  // Structured design matrix for arbitrary inputs (splines use stored knots).
  Matrix design(const Matrix& x) const;

  // eta for the given rows. `design_cache` must be this predictor's design for
  // the same X the row indices refer to.
  Vector eval_rows(const Vector& weights, const Matrix& design_cache, const Matrix& x,
                   const IndexVec& rows) const;

  // Accumulate d(objective)/d(weights) given d(objective)/d(eta) per row.
  void accumulate_grad(const Vector& weights, const Matrix& design_cache, const Matrix& x,
                       const IndexVec& rows, const Vector& d_eta, Vector& grad) const;

  // Single-row evaluation (builds a one-row design; spline terms require that
  // the predictor was compiled on a sample).
  double eval_row(const Vector& weights, const Vector& x_row) const;

  double dense_value(const Vector& weights, const CompiledTerm& term, const Vector& x_row) const;

  const std::vector<CompiledTerm>& terms() const { return terms_; }
  std::vector<CompiledTerm>& terms() { return terms_; }
  int struct_cols() const { return struct_cols_; }
  bool has_dense() const { return has_dense_; }

private:
  void dense_backprop(const Vector& weights, const CompiledTerm& term, const Vector& x_row,
                      double d_out, Vector& grad) const;

  std::vector<CompiledTerm> terms_;
  int struct_cols_ = 0;
  bool has_dense_ = false;
  int max_feature_ = -1;
};

// rho * sum|w| over the L1 set plus sum lambda_l w'P_l w over quadratic terms.
double penalty_value(const std::vector<const CompiledPredictor*>& predictors,
                     const Vector& weights, const PenaltyConfig& config);

// Adds the penalty gradient (L1 via subgradient sign(w)) scaled by `scale`.
void accumulate_penalty_grad(const std::vector<const CompiledPredictor*>& predictors,
                             const Vector& weights, const PenaltyConfig& config, double scale,
                             Vector& grad);

}  // namespace nmdr
