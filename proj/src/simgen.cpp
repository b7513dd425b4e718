#include "nmdr/simgen.hpp"

#include <cmath>
#include <sstream>

#include "nmdr/errors.hpp"
#include "nmdr/rng.hpp"

namespace nmdr {
namespace {

// Uniform draw on the simplex via normalized exponential spacings, rejected
// until per-entry bounds hold.
Vector bounded_simplex(int m, std::mt19937_64& rng) {
  double lo = 0.0, hi = 1.0;
  if (m == 2) {
    lo = 0.061;
    hi = 0.939;
  } else if (m > 2 && 0.309 * m >= 1.0 && 0.027 * m <= 1.0) {
    lo = 0.027;
    hi = 0.309;
  }
  std::exponential_distribution<double> e(1.0);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    Vector pi(m);
    double total = 0.0;
    for (int j = 0; j < m; ++j) {
      pi[j] = e(rng);
      total += pi[j];
    }
    pi /= total;
    if (pi.minCoeff() >= lo && pi.maxCoeff() <= hi) return pi;
  }
  std::ostringstream os;
  os << "simplex rejection failed for M = " << m << " within 1e5 draws";
  throw config_error(os.str());
}

int sample_label(const Vector& pi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  for (int j = 0; j < pi.size(); ++j) {
    r -= pi[j];
    if (r <= 0.0) return j;
  }
  return static_cast<int>(pi.size()) - 1;
}

double sample_location_scale(FamilyKind family, double location, double scale,
                             std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(1e-12, 1.0 - 1e-12);
  switch (family) {
    case FamilyKind::Normal: {
      std::normal_distribution<double> g(0.0, 1.0);
      return location + scale * g(rng);
    }
    case FamilyKind::Laplace: {
      const double v = u(rng) - 0.5;
      return location - scale * (v > 0 ? 1.0 : -1.0) * std::log1p(-2.0 * std::abs(v));
    }
    case FamilyKind::Logistic: {
      const double v = u(rng);
      return location + scale * std::log(v / (1.0 - v));
    }
    default:
      throw config_error("location-scale sampling requested for a non location-scale family");
  }
}

}  // namespace

namespace {

SimTruth gen_linear_core(int n, int num_components, int p, FamilyKind family, std::uint64_t seed,
                         const Vector* fixed_pi) {
  if (n < 50) throw config_error("linear mixture generator needs n >= 50");
  if (num_components < 1 || p < 1) throw config_error("need M >= 1 and p >= 1");
  if (family != FamilyKind::Normal && family != FamilyKind::Laplace &&
      family != FamilyKind::Logistic) {
    throw config_error("linear mixture generator supports normal, laplace and logistic");
  }

  auto rng_params = make_rng(seed, Stream::DataParams);
  auto rng_feat = make_rng(seed, Stream::DataFeatures);
  auto rng_label = make_rng(seed, Stream::DataLabels);

  SimTruth truth;
  truth.generator = "linear_mixture";
  truth.family = family;
  truth.seed = seed;
  truth.num_components = num_components;
  if (fixed_pi != nullptr) {
    truth.true_pi = *fixed_pi;
  } else {
    truth.true_pi =
        num_components == 1 ? Vector::Ones(1) : bounded_simplex(num_components, rng_params);
  }

  std::uniform_real_distribution<double> beta_draw(-2.0, 2.0);
  std::uniform_real_distribution<double> scale_draw(0.5, 2.0);
  truth.true_scale.resize(num_components);
  for (int m = 0; m < num_components; ++m) {
    Vector loc = Vector::Zero(p + 1);  // intercept fixed at zero
    for (int j = 1; j <= p; ++j) loc[j] = beta_draw(rng_params);
    truth.true_location.push_back(std::move(loc));
    truth.true_scale[m] = scale_draw(rng_params);
  }

  std::normal_distribution<double> feat(0.0, 1.0);
  truth.x.resize(n, p);
  truth.y.resize(n);
  truth.labels.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) truth.x(i, j) = feat(rng_feat);
    const int label = sample_label(truth.true_pi, rng_label);
    truth.labels[static_cast<size_t>(i)] = label;
    const Vector& loc = truth.true_location[static_cast<size_t>(label)];
    double eta = loc[0];
    for (int j = 0; j < p; ++j) eta += loc[j + 1] * truth.x(i, j);
    truth.y[i] = sample_location_scale(family, eta, truth.true_scale[label], rng_label);
  }
  return truth;
}

}  // namespace

SimTruth gen_linear_mixture(int n, int num_components, int p, FamilyKind family,
                            std::uint64_t seed) {
  return gen_linear_core(n, num_components, p, family, seed, nullptr);
}

SimTruth gen_sparse_mixture(int n, std::uint64_t seed) {
  Vector pi(2);
  pi << 0.6077, 0.3923;
  SimTruth truth = gen_linear_core(n, 2, 10, FamilyKind::Normal, seed, &pi);
  truth.generator = "sparse_mixture";
  return truth;
}

double additive_f1(double x) { return 2.0 * std::sin(3.0 * x); }

double additive_f2(double x) { return std::exp(2.0 * x); }

double additive_f3(double x) {
  return 0.2 * std::pow(x, 11.0) * std::pow(10.0 * (1.0 - x), 6.0) +
         10.0 * std::pow(10.0 * x, 3.0) * std::pow(1.0 - x, 10.0);
}

SimTruth gen_additive_mixture(int n, FamilyKind family, PiCase pi_case, int p_noise, double scale,
                              std::uint64_t seed) {
  if (family != FamilyKind::Normal && family != FamilyKind::Poisson) {
    throw config_error("additive mixture generator supports normal and poisson");
  }
  if (n < 50) throw config_error("additive mixture generator needs n >= 50");
  if (p_noise < 0) throw config_error("p_noise must be >= 0");

  const int m_comp = 3;
  auto rng_params = make_rng(seed, Stream::DataParams);
  auto rng_feat = make_rng(seed, Stream::DataFeatures);
  auto rng_label = make_rng(seed, Stream::DataLabels);

  SimTruth truth;
  truth.generator = "additive_mixture";
  truth.family = family;
  truth.seed = seed;
  truth.num_components = m_comp;
  truth.true_pi.resize(m_comp);
  if (pi_case == PiCase::Equal) {
    truth.true_pi << 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0;
  } else {
    truth.true_pi << 0.1, 0.3, 0.6;
  }

  std::uniform_real_distribution<double> beta0_draw(-1.0, 1.0);
  truth.true_scale = Vector::Constant(m_comp, scale);
  for (int m = 0; m < m_comp; ++m) {
    truth.true_location.push_back(Vector::Constant(1, beta0_draw(rng_params)));
  }

  const int p = 3 + p_noise;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  truth.x.resize(n, p);
  truth.y.resize(n);
  truth.labels.resize(static_cast<size_t>(n));
  truth.true_smooths.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) truth.x(i, j) = u01(rng_feat);
    truth.true_smooths(i, 0) = additive_f1(truth.x(i, 0));
    truth.true_smooths(i, 1) = additive_f2(truth.x(i, 1));
    truth.true_smooths(i, 2) = additive_f3(truth.x(i, 2));

    const int label = sample_label(truth.true_pi, rng_label);
    truth.labels[static_cast<size_t>(i)] = label;
    const double eta = truth.true_location[static_cast<size_t>(label)][0] +
                       truth.true_smooths.row(i).sum();
    if (family == FamilyKind::Normal) {
      std::normal_distribution<double> g(0.0, 1.0);
      truth.y[i] = eta + scale * g(rng_label);
    } else {
      // Multiplicative scale effect on the rate through the log link.
      std::poisson_distribution<long> pois(scale * std::exp(eta));
      truth.y[i] = static_cast<double>(pois(rng_label));
    }
  }
  return truth;
}

}  // namespace nmdr
