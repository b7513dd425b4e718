#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "nmdr/em.hpp"
#include "nmdr/errors.hpp"
#include "nmdr/metrics.hpp"
#include "nmdr/mixture.hpp"

using namespace nmdr;

namespace {

struct TwoLines {
  Matrix x;
  Vector y;
  std::vector<Vector> beta;  // intercept first
  Vector sigma;
  Vector pi;
};

TwoLines two_lines(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TwoLines data;
  data.x.resize(n, 2);
  data.y.resize(n);
  Vector b1(3), b2(3);
  b1 << 1.0, 2.0, -1.0;
  b2 << -2.0, -0.5, 1.5;
  data.beta = {b1, b2};
  data.sigma = Vector::Constant(2, 0.4);
  data.pi.resize(2);
  data.pi << 0.55, 0.45;
  for (int i = 0; i < n; ++i) {
    data.x(i, 0) = g(rng);
    data.x(i, 1) = g(rng);
    const int label = u(rng) < data.pi[0] ? 0 : 1;
    const Vector& b = data.beta[static_cast<size_t>(label)];
    data.y[i] = b[0] + b[1] * data.x(i, 0) + b[2] * data.x(i, 1) + data.sigma[label] * g(rng);
  }
  return data;
}

}  // namespace

TEST_CASE("single-component EM is one weighted least squares solve") {
  const TwoLines data = two_lines(400, 3);
  const EmModel em = em_fit(data.x, data.y, 1, 1e-10, 200, 7);

  Matrix design(400, 3);
  design.col(0).setOnes();
  design.rightCols(2) = data.x;
  const Vector beta = (design.transpose() * design).ldlt().solve(design.transpose() * data.y);
  const double rss = (data.y - design * beta).squaredNorm();

  CHECK((em.beta[0] - beta).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(em.sigma[0] == doctest::Approx(std::sqrt(rss / 400.0)).epsilon(1e-9));
  CHECK(em.pi[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("well-separated lines are recovered with small coefficient error") {
  const TwoLines data = two_lines(2500, 11);
  const EmModel em = em_fit_restarts(data.x, data.y, 2, 1e-8, 500, 1, 5);

  std::vector<ComponentSummary> est, truth;
  for (int m = 0; m < 2; ++m) {
    ComponentSummary e;
    e.pi = em.pi[m];
    e.coefs = em.beta[static_cast<size_t>(m)];
    est.push_back(e);
    ComponentSummary t;
    t.pi = data.pi[m];
    t.coefs = data.beta[static_cast<size_t>(m)];
    truth.push_back(t);
  }
  const auto perm = align_components(est, truth);
  CHECK(coef_rmse(est, truth, perm) < 0.05);
  CHECK(pi_rmse(est, truth, perm) < 0.05);
}

TEST_CASE("log-likelihood is non-decreasing along every EM run") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    const TwoLines data = two_lines(600, 100 + seed);
    const EmModel em = em_fit(data.x, data.y, 2, 1e-9, 300, seed);
    REQUIRE(em.loglik_trajectory.size() >= 2);
    for (size_t i = 1; i < em.loglik_trajectory.size(); ++i) {
      CHECK(em.loglik_trajectory[i] >= em.loglik_trajectory[i - 1] - 1e-10);
    }
  }
}

TEST_CASE("final EM likelihood matches the mixture nll of the equivalent model") {
  const TwoLines data = two_lines(800, 21);
  const EmModel em = em_fit_restarts(data.x, data.y, 2, 1e-10, 500, 2, 3);

  ModelSpec spec;
  for (int m = 0; m < 2; ++m) {
    ComponentSpec comp((Family(FamilyKind::Normal)));
    PredictorSpec mu;
    mu.terms.push_back(intercept());
    mu.terms.push_back(linear({0, 1}));
    comp.param_predictors = {mu, intercept_only()};
    spec.components.push_back(std::move(comp));
  }
  CompiledModel model = CompiledModel::compile(spec, data.x, data.y);
  for (int m = 0; m < 2; ++m) {
    const int off = m * 4;
    model.weights()[off + 0] = em.beta[static_cast<size_t>(m)][0];
    model.weights()[off + 1] = em.beta[static_cast<size_t>(m)][1];
    model.weights()[off + 2] = em.beta[static_cast<size_t>(m)][2];
    model.weights()[off + 3] = softplus_inv(em.sigma[m]);
    model.weights()[8 + m] = std::log(em.pi[m]);
  }
  const double nll = model.nll(model.bind(data.x, data.y));
  CHECK(std::abs(-em.loglik_trajectory.back() - nll) < 1e-8);
}

TEST_CASE("an exact linear fit collapses sigma onto the floor and is flagged") {
  const int n = 120;
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix x(n, 1);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = g(rng);
    y[i] = 2.0 * x(i, 0) - 1.0;  // no noise
  }
  const EmModel em = em_fit(x, y, 1, 1e-12, 50, 3);
  CHECK(em.sigma_floored);
  CHECK(em.sigma[0] == doctest::Approx(1e-8));
}

TEST_CASE("collinear features exhaust the retry budget with a numeric error") {
  const int n = 200;
  std::mt19937_64 rng(41);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix x(n, 2);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = g(rng);
    x(i, 1) = 2.0 * x(i, 0);  // always singular normal equations
    y[i] = x(i, 0) + 0.1 * g(rng);
  }
  CHECK_THROWS_AS(em_fit(x, y, 2, 1e-8, 100, 5), numeric_error);
}

TEST_CASE("sample-size precondition is enforced") {
  Matrix x(10, 2);
  x.setRandom();
  Vector y = x.col(0);
  CHECK_THROWS_AS(em_fit(x, y, 3, 1e-8, 100, 1), config_error);
}
