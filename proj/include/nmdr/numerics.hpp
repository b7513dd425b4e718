#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace nmdr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexVec = std::vector<Eigen::Index>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(1 + exp(x)) without overflow.
inline double log1pexp(double x) {
  if (x > 35.0) return x + std::exp(-x);
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double softplus(double x) { return log1pexp(x); }

// Inverse of softplus on (0, inf): log(exp(y) - 1).
inline double softplus_inv(double y) {
  if (y > 35.0) return y;
  return std::log(std::expm1(y));
}

inline double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// psi(x) for x > 0: shift into the asymptotic regime, then the standard
// Bernoulli-number series. Accurate to ~1e-12 over the parameter ranges used.
inline double digamma(double x) {
  double r = 0.0;
  while (x < 6.0) {
    r -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  r += std::log(x) - 0.5 * inv -
       inv2 * (1.0 / 12.0 -
               inv2 * (1.0 / 120.0 -
                       inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
  return r;
}

// Stabilized log(sum(exp(v))) with per-call max subtraction.
inline double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;  // all -inf (or a +inf made it in)
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
  return 0.5 * (v[mid - 1] + hi);
}

inline double median(const Vector& v) {
  return median(std::vector<double>(v.data(), v.data() + v.size()));
}

// Median absolute deviation scaled for normal consistency, floored away from 0.
inline double mad(const Vector& v, double floor_value = 0.1) {
  const double med = median(v);
  std::vector<double> dev(static_cast<size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) dev[static_cast<size_t>(i)] = std::abs(v[i] - med);
  return std::max(floor_value, 1.4826 * median(std::move(dev)));
}

// Linear-interpolated empirical quantile, p in [0, 1]. `sorted` must be ascending.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = p * static_cast<double>(n - 1);
  const size_t lo = static_cast<size_t>(pos);
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace nmdr
