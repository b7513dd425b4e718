#pragma once

#include <cstdint>
#include <vector>

#include "nmdr/numerics.hpp"

namespace nmdr {

// Mixture of Gaussian linear regressions fitted by EM: closed-form
// responsibility-weighted least squares M-steps, responsibilities via the
// same stabilized log-sum-exp machinery as the mixture module.
struct EmModel {
  std::vector<Vector> beta;  // per component, intercept first
  Vector sigma;              // per component, > 0
  Vector pi;                 // simplex
  std::vector<double> loglik_trajectory;
  int iterations = 0;
  bool converged = false;
  bool sigma_floored = false;  // a component collapsed and was floored at 1e-8
};

// Random soft-assignment initialization (Dirichlet(1,...,1) rows). Singular
// weighted normal equations trigger a re-randomization of the
// responsibilities (up to 5 retries) before failing. The log-likelihood is
// recorded after every iteration and is non-decreasing.
EmModel em_fit(const Matrix& x, const Vector& y, int num_components, double tol, int max_iter,
               std::uint64_t seed);

// Independent restarts (seed, seed+1, ...); returns the highest final
// log-likelihood.
EmModel em_fit_restarts(const Matrix& x, const Vector& y, int num_components, double tol,
                        int max_iter, std::uint64_t seed, int restarts);

double em_loglik(const EmModel& model, const Matrix& x, const Vector& y);

}  // namespace nmdr
