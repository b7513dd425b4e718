#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nmdr/distributions.hpp"

namespace nmdr {

enum class PiCase { Equal, Increasing };

// A generated dataset plus everything needed to score an estimate against the
// generating process.
struct SimTruth {
  Matrix x;
  Vector y;
  std::vector<int> labels;
  Vector true_pi;
  // Per component: location coefficients (intercept first) and the constant
  // scale value. Location length is 1 + p for linear designs, 1 for additive
  // designs (the smooth part lives in true_smooths).
  std::vector<Vector> true_location;
  Vector true_scale;
  Matrix true_smooths;  // additive designs: n x 3 evaluations of f1..f3
  FamilyKind family = FamilyKind::Normal;
  std::string generator;
  std::uint64_t seed = 0;
  int num_components = 0;
};

// Location-scale mixtures with iid standard normal features, per-component
// coefficients U(-2, 2) and constant scales U(0.5, 2). Mixture probabilities
// are uniform-simplex draws rejected until the probability bounds hold
// (0.061..0.939 for M = 2; 0.027..0.309 for larger M whenever that box
// intersects the simplex).
SimTruth gen_linear_mixture(int n, int num_components, int p, FamilyKind family,
                            std::uint64_t seed);

// The sparse-recovery design: a two-component Gaussian linear mixture with
// p = 10 features and fixed probabilities (0.6077, 0.3923).
SimTruth gen_sparse_mixture(int n, std::uint64_t seed);

// Smooth test functions for the additive design.
double additive_f1(double x);
double additive_f2(double x);
double additive_f3(double x);

// Three-component additive mixture: mean predictor beta0_m + f1 + f2 + f3 on
// U(0,1) covariates plus p_noise pure-noise features. Gaussian: scale is the
// standard deviation; Poisson: the rate picks up the scale as a
// multiplicative effect through the log link.
SimTruth gen_additive_mixture(int n, FamilyKind family, PiCase pi_case, int p_noise, double scale,
                              std::uint64_t seed);

}  // namespace nmdr
