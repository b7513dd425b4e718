#pragma once

#include <vector>

#include "nmdr/numerics.hpp"

namespace nmdr {

// Clamped B-spline basis definition. Knots are placed at empirical quantiles
// of the construction sample with repeated boundary knots; a constant sample
// gets a symmetric padded range of width 1. Evaluation clamps inputs into the
// knot range so prediction on new data stays a partition of unity.
struct BsplineBasis {
  int num_basis = 0;
  int degree = 0;
  std::vector<double> knots;  // size num_basis + degree + 1

  // Evaluate all basis functions at x (row of the design matrix).
  Vector eval(double x) const;
  Matrix eval(const Vector& x) const;
};

BsplineBasis make_bspline_basis(const Vector& x, int num_basis, int degree);

// Convenience: basis matrix for the construction sample itself.
Matrix bspline_design(const Vector& x, int num_basis, int degree);

// P = D'D for the order-th difference matrix D; PSD with null-space
// dimension equal to `order`.
Matrix difference_penalty(int num_basis, int order);

// Sum-to-zero reparametrization. `transform` maps constrained weights back to
// the original basis coefficients; columns of `basis * transform` sum to zero
// over the construction sample.
struct SumToZero {
  Matrix constrained;  // n x (q-1)
  Matrix transform;    // q x (q-1)
};

SumToZero sum_to_zero(const Matrix& basis);

// Effective degrees of freedom trace(X (X'X + lambda P)^-1 X').
// lambda == 0 returns rank(X); lambda == +inf returns the dimension of the
// penalty null space restricted to the design column space.
double df_for_lambda(const Matrix& design, const Matrix& penalty, double lambda);

// Smoothing parameter matching a degrees-of-freedom target, found by
// bisection on log10(lambda) over [-12, 12] after checking that df
// decreases along the grid. Throws config_error when the target lies
// outside the attainable [df_min, df_max].
double df_to_lambda(const Matrix& design, const Matrix& penalty, double target_df);

int matrix_rank(const Matrix& m);
int nullspace_dim(const Matrix& psd);

}  // namespace nmdr
