#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "nmdr/errors.hpp"
#include "nmdr/mixture.hpp"
#include "support/models.hpp"
#include "support/oracles.hpp"

using namespace nmdr;

namespace {

// Plain two-component Gaussian mixture: location = intercept + linear,
// scale and gating are intercepts.
ModelSpec gaussian_linear_spec(int m_comp, int p) {
  ModelSpec spec;
  for (int m = 0; m < m_comp; ++m) {
    ComponentSpec comp((Family(FamilyKind::Normal)));
    PredictorSpec mu;
    mu.terms.push_back(intercept());
    std::vector<int> feats(static_cast<size_t>(p));
    for (int j = 0; j < p; ++j) feats[static_cast<size_t>(j)] = j;
    if (p > 0) mu.terms.push_back(linear(feats));
    comp.param_predictors.push_back(mu);
    comp.param_predictors.push_back(intercept_only());
    spec.components.push_back(std::move(comp));
  }
  return spec;
}

Matrix gaussian_x(int n, int p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix x(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = g(rng);
  }
  return x;
}

}  // namespace

TEST_CASE("forward: constant zero gating gives uniform mixture probabilities") {
  const int n = 12;
  const Matrix x = gaussian_x(n, 2, 1);
  const Vector y = x.col(0);
  CompiledModel model = CompiledModel::compile(gaussian_linear_spec(3, 2), x, y);
  // Gating intercepts initialize to exactly zero.
  const BoundData data = model.bind(x, y);
  const ParamField field = model.forward(data);
  for (int i = 0; i < n; ++i) {
    for (int m = 0; m < 3; ++m) CHECK(field.pi(i, m) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
}

TEST_CASE("forward: single component has probability one") {
  const Matrix x = gaussian_x(8, 1, 2);
  const Vector y = x.col(0);
  CompiledModel model = CompiledModel::compile(gaussian_linear_spec(1, 1), x, y);
  const BoundData data = model.bind(x, y);
  const ParamField field = model.forward(data);
  CHECK((field.pi.array() - 1.0).abs().maxCoeff() < 1e-15);
}

TEST_CASE("forward matches a hand-composed evaluation of the same weights") {
  const int n = 10;
  const Matrix x = gaussian_x(n, 2, 3);
  const Vector y = x.col(0) + 0.5 * x.col(1);
  ModelSpec spec = gaussian_linear_spec(2, 2);
  PredictorSpec gate;
  gate.terms.push_back(intercept());
  gate.terms.push_back(linear({0}));
  spec.gating = {gate, gate};
  CompiledModel model = CompiledModel::compile(spec, x, y);
  model.init_weights(7);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Eigen::Index i = 0; i < model.weights().size(); ++i) model.weights()[i] = u(rng);
  const Vector w = model.weights();

  const BoundData data = model.bind(x, y);
  const ParamField field = model.forward(data);

  // Weight layout: per component (mu: intercept, 2 linear; sigma: intercept),
  // then gating (intercept, 1 linear) per component.
  for (int i = 0; i < n; ++i) {
    const double mu0 = w[0] + w[1] * x(i, 0) + w[2] * x(i, 1);
    const double sg0 = softplus(w[3]);
    const double mu1 = w[4] + w[5] * x(i, 0) + w[6] * x(i, 1);
    const double sg1 = softplus(w[7]);
    const double g0 = w[8] + w[9] * x(i, 0);
    const double g1 = w[10] + w[11] * x(i, 0);
    const double z = std::max(g0, g1);
    const double p0 = std::exp(g0 - z) / (std::exp(g0 - z) + std::exp(g1 - z));
    CHECK(field.theta[0](i, 0) == doctest::Approx(mu0).epsilon(1e-12));
    CHECK(field.theta[0](i, 1) == doctest::Approx(sg0).epsilon(1e-12));
    CHECK(field.theta[1](i, 0) == doctest::Approx(mu1).epsilon(1e-12));
    CHECK(field.theta[1](i, 1) == doctest::Approx(sg1).epsilon(1e-12));
    CHECK(field.pi(i, 0) == doctest::Approx(p0).epsilon(1e-12));
    CHECK(field.pi(i, 1) == doctest::Approx(1.0 - p0).epsilon(1e-12));
  }
}

TEST_CASE("nll: single-component model equals the plain normal likelihood") {
  const int n = 40;
  const Matrix x = gaussian_x(n, 2, 5);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  Vector y(n);
  for (int i = 0; i < n; ++i) y[i] = 0.4 * x(i, 0) + g(rng);

  CompiledModel model = CompiledModel::compile(gaussian_linear_spec(1, 2), x, y);
  model.init_weights(3);
  const BoundData data = model.bind(x, y);
  const ParamField field = model.forward(data);

  double direct = 0.0;
  for (int i = 0; i < n; ++i) {
    const double mu = field.theta[0](i, 0);
    const double s = field.theta[0](i, 1);
    direct += 0.5 * std::log(2.0 * M_PI) + std::log(s) + 0.5 * std::pow((y[i] - mu) / s, 2);
  }
  CHECK(model.nll(data) == doctest::Approx(direct).epsilon(1e-13));
}

TEST_CASE("nll: two identical components at (1/2, 1/2) collapse to one") {
  const int n = 30;
  const Matrix x = gaussian_x(n, 1, 7);
  const Vector y = x.col(0);

  CompiledModel one = CompiledModel::compile(gaussian_linear_spec(1, 1), x, y);
  one.init_weights(11);

  CompiledModel two = CompiledModel::compile(gaussian_linear_spec(2, 1), x, y);
  two.init_weights(11);
  // Copy component-1 weights into component 2, gating intercepts equal.
  for (int j = 0; j < 3; ++j) two.weights()[3 + j] = one.weights()[j];
  for (int j = 0; j < 3; ++j) two.weights()[j] = one.weights()[j];
  two.weights()[6] = 0.25;
  two.weights()[7] = 0.25;

  const double nll_one = one.nll(one.bind(x, y));
  const double nll_two = two.nll(two.bind(x, y));
  CHECK(std::abs(nll_one - nll_two) < 1e-10);
}

TEST_CASE("nll matches a direct high-precision evaluation on a random model") {
  testmodels::ModelCase mc = testmodels::random_model_case(FamilyKind::Normal, 21, 3);
  CompiledModel model = testmodels::compile_scattered(mc, 4);
  const BoundData data = model.bind(mc.x, mc.y);
  const ParamField field = model.forward(data);

  std::vector<std::function<long double(Eigen::Index)>> dens;
  for (int m = 0; m < 3; ++m) {
    dens.push_back([&, m](Eigen::Index i) -> long double {
      const long double mu = field.theta[static_cast<size_t>(m)](i, 0);
      const long double s = field.theta[static_cast<size_t>(m)](i, 1);
      const long double z = (static_cast<long double>(mc.y[i]) - mu) / s;
      return std::exp(-0.5L * z * z) / (s * std::sqrt(2.0L * 3.14159265358979323846264338327950288L));
    });
  }
  const double direct = oracles::direct_mixture_nll(field.pi, dens, mc.y.size());
  CHECK(std::abs(model.nll(data) - direct) <
        1e-10 * std::max(1.0, std::abs(direct)));
}

TEST_CASE("responsibilities: identical components split evenly; degenerate gating is one-hot") {
  const int n = 25;
  const Matrix x = gaussian_x(n, 1, 9);
  const Vector y = x.col(0);
  CompiledModel two = CompiledModel::compile(gaussian_linear_spec(2, 1), x, y);
  two.init_weights(13);
  for (int j = 0; j < 3; ++j) two.weights()[3 + j] = two.weights()[j];
  two.weights()[6] = 0.0;
  two.weights()[7] = 0.0;
  const Matrix gamma = two.responsibilities(two.bind(x, y));
  for (int i = 0; i < n; ++i) {
    CHECK(gamma(i, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(gamma(i, 1) == doctest::Approx(0.5).epsilon(1e-12));
  }

  // pi = (1, 0) via a -1e6 gating score.
  two.weights()[7] = -1e6;
  const Matrix hard = two.responsibilities(two.bind(x, y));
  for (int i = 0; i < n; ++i) CHECK(hard(i, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("responsibility rows sum to one on a large random batch") {
  testmodels::ModelCase mc = testmodels::random_model_case(FamilyKind::Logistic, 33, 3);
  std::mt19937_64 rng(55);
  mc.x = testmodels::random_features(1000, 3, rng);
  mc.y = testmodels::random_outcomes(FamilyKind::Logistic, 1000, rng);
  CompiledModel model = testmodels::compile_scattered(mc, 5);
  const Matrix gamma = model.responsibilities(model.bind(mc.x, mc.y));
  for (Eigen::Index i = 0; i < gamma.rows(); ++i) {
    CHECK(std::abs(gamma.row(i).sum() - 1.0) < 1e-9);
  }
}

TEST_CASE("grad_nll: symmetric identical components have zero gating gradient") {
  const int n = 30;
  const Matrix x = gaussian_x(n, 1, 15);
  const Vector y = x.col(0);
  CompiledModel two = CompiledModel::compile(gaussian_linear_spec(2, 1), x, y);
  two.init_weights(17);
  for (int j = 0; j < 3; ++j) two.weights()[3 + j] = two.weights()[j];
  two.weights()[6] = 0.1;
  two.weights()[7] = 0.1;
  const Vector grad = two.grad_nll(two.bind(x, y));
  CHECK(std::abs(grad[6]) < 1e-12);
  CHECK(std::abs(grad[7]) < 1e-12);
}

TEST_CASE("grad_nll: intercept-only normal at the MLE has zero location gradient") {
  const int n = 50;
  std::mt19937_64 rng(19);
  std::normal_distribution<double> g(1.0, 2.0);
  Vector y(n);
  for (int i = 0; i < n; ++i) y[i] = g(rng);
  const Matrix x = Matrix::Zero(n, 1);

  ModelSpec spec = gaussian_linear_spec(1, 0);
  CompiledModel model = CompiledModel::compile(spec, x, y);
  model.init_weights(1);
  model.weights()[0] = y.mean();  // mu intercept at the sample mean
  const Vector grad = model.grad_nll(model.bind(x, y));
  CHECK(std::abs(grad[0]) < 1e-10);
}

TEST_CASE("grad_nll matches central finite differences on random models") {
  const FamilyKind kinds[] = {FamilyKind::Normal, FamilyKind::Laplace, FamilyKind::Logistic,
                              FamilyKind::Poisson, FamilyKind::Beta};
  int case_id = 0;
  for (FamilyKind kind : kinds) {
    testmodels::ModelCase mc = testmodels::random_model_case(kind, 100 + case_id, 2);
    CompiledModel model = testmodels::compile_scattered(mc, 200 + case_id);
    const BoundData data = model.bind(mc.x, mc.y);
    const Vector analytic = model.grad_nll(data);
    CompiledModel probe = model;
    const Vector fd = oracles::fd_gradient(
        [&](const Vector& w) {
          probe.weights() = w;
          return probe.nll(data);
        },
        model.weights(), 1e-5);
    CAPTURE(case_id);
    CHECK(oracles::max_rel_err(analytic, fd) < 1e-5);
    ++case_id;
  }
}

TEST_CASE("penalized objective gradient (penalty + entropy) matches finite differences") {
  testmodels::ModelCase mc = testmodels::random_model_case(FamilyKind::Normal, 301, 3);
  mc.spec.entropy_xi = 0.35;
  mc.spec.penalties.rho = 0.2;
  mc.spec.components[0].param_predictors[0].terms[1].l1 = true;
  CompiledModel model = testmodels::compile_scattered(mc, 302);
  const BoundData data = model.bind(mc.x, mc.y);
  const double n = static_cast<double>(mc.x.rows());
  const EvalScales scales{1.0, 1.0, mc.spec.entropy_xi * n};

  Vector grad = Vector::Zero(model.num_weights());
  model.objective(data, data.all_rows, scales, &grad);

  CompiledModel probe = model;
  const Vector fd = oracles::fd_gradient(
      [&](const Vector& w) {
        probe.weights() = w;
        return probe.objective(data, data.all_rows, scales, nullptr);
      },
      model.weights(), 1e-5);
  CHECK(oracles::max_rel_err(grad, fd) < 1e-5);
}

TEST_CASE("gradient with ordered-simplex gating matches finite differences") {
  testmodels::ModelCase mc = testmodels::random_model_case(FamilyKind::Normal, 401, 3);
  mc.spec.gating_kind = GatingKind::OrderedSimplex;
  mc.spec.entropy_xi = 0.1;
  CompiledModel model = testmodels::compile_scattered(mc, 402);
  const BoundData data = model.bind(mc.x, mc.y);
  const double n = static_cast<double>(mc.x.rows());
  const EvalScales scales{1.0, 0.0, mc.spec.entropy_xi * n};

  Vector grad = Vector::Zero(model.num_weights());
  model.objective(data, data.all_rows, scales, &grad);
  CompiledModel probe = model;
  const Vector fd = oracles::fd_gradient(
      [&](const Vector& w) {
        probe.weights() = w;
        return probe.objective(data, data.all_rows, scales, nullptr);
      },
      model.weights(), 1e-5);
  CHECK(oracles::max_rel_err(grad, fd) < 1e-5);

  // Ordered gating produces ascending mixture probabilities.
  const ParamField field = model.forward(data);
  for (Eigen::Index i = 0; i < field.pi.rows(); ++i) {
    for (int m = 0; m + 1 < 3; ++m) CHECK(field.pi(i, m) <= field.pi(i, m + 1) + 1e-12);
  }
}

TEST_CASE("nll is invariant to permuting components") {
  testmodels::ModelCase mc = testmodels::random_model_case(FamilyKind::Normal, 501, 2, true, false);
  CompiledModel model = testmodels::compile_scattered(mc, 502);
  const double base = model.nll(model.bind(mc.x, mc.y));

  // Swap the two components including their gating predictors.
  testmodels::ModelCase swapped = mc;
  std::swap(swapped.spec.components[0], swapped.spec.components[1]);
  std::swap(swapped.spec.gating[0], swapped.spec.gating[1]);
  CompiledModel perm = CompiledModel::compile(swapped.spec, swapped.x, swapped.y);
  // Weight blocks: components are compiled in order, so the layout mirrors the
  // swap: [comp1 block][comp2 block][gate1][gate2] -> sizes are equal here.
  const int comp_block = model.num_weights() / 2 - 3;  // per-component params
  (void)comp_block;
  // Instead of index juggling, rebuild by evaluating: copy weights per term.
  const auto& src_params = model.param_predictors();
  const auto& dst_params = perm.param_predictors();
  for (int m = 0; m < 2; ++m) {
    for (size_t j = 0; j < src_params[static_cast<size_t>(m)].size(); ++j) {
      const auto& sterms = src_params[static_cast<size_t>(m)][j].terms();
      const auto& dterms = dst_params[static_cast<size_t>(1 - m)][j].terms();
      for (size_t t = 0; t < sterms.size(); ++t) {
        perm.weights().segment(dterms[t].weight_offset, dterms[t].weight_count) =
            model.weights().segment(sterms[t].weight_offset, sterms[t].weight_count);
      }
    }
    const auto& sgate = model.gating_predictors()[static_cast<size_t>(m)].terms();
    const auto& dgate = perm.gating_predictors()[static_cast<size_t>(1 - m)].terms();
    for (size_t t = 0; t < sgate.size(); ++t) {
      perm.weights().segment(dgate[t].weight_offset, dgate[t].weight_count) =
          model.weights().segment(sgate[t].weight_offset, sgate[t].weight_count);
    }
  }
  const double permuted = perm.nll(perm.bind(mc.x, mc.y));
  CHECK(std::abs(base - permuted) < 1e-10);
}

TEST_CASE("a component with gating score -1e6 leaves the nll unchanged") {
  const int n = 30;
  const Matrix x = gaussian_x(n, 1, 23);
  const Vector y = x.col(0);

  CompiledModel two = CompiledModel::compile(gaussian_linear_spec(2, 1), x, y);
  two.init_weights(29);
  const double before_extra = [&] {
    CompiledModel one = CompiledModel::compile(gaussian_linear_spec(1, 1), x, y);
    one.weights() = two.weights().head(3);
    return one.nll(one.bind(x, y));
  }();

  two.weights()[6] = 0.0;
  two.weights()[7] = -1e6;
  const double with_extra = two.nll(two.bind(x, y));
  CHECK(std::abs(before_extra - with_extra) < 1e-6);
}

TEST_CASE("penalized risk: entropy reference values") {
  const int n = 20;
  const Matrix x = gaussian_x(n, 1, 31);
  const Vector y = x.col(0);

  SUBCASE("xi = 0 and no penalties equals the nll") {
    ModelSpec spec = gaussian_linear_spec(3, 1);
    CompiledModel model = CompiledModel::compile(spec, x, y);
    model.init_weights(37);
    const BoundData data = model.bind(x, y);
    CHECK(model.penalized_risk(data) == doctest::Approx(model.nll(data)).epsilon(1e-14));
  }

  SUBCASE("uniform mean probabilities contribute xi * log M") {
    ModelSpec spec = gaussian_linear_spec(5, 1);
    spec.entropy_xi = 1.0;
    CompiledModel model = CompiledModel::compile(spec, x, y);
    model.init_weights(41);
    // Zero gating intercepts -> exactly uniform pi.
    const BoundData data = model.bind(x, y);
    const double risk = model.penalized_risk(data);
    const double nll = model.nll(data);
    CHECK(risk - nll == doctest::Approx(std::log(5.0)).epsilon(1e-10));
  }

  SUBCASE("one-hot mean probabilities contribute zero entropy") {
    ModelSpec spec = gaussian_linear_spec(2, 1);
    spec.entropy_xi = 1.0;
    CompiledModel model = CompiledModel::compile(spec, x, y);
    model.init_weights(43);
    model.weights()[7] = -1e6;  // second gate score
    const BoundData data = model.bind(x, y);
    CHECK(model.penalized_risk(data) == doctest::Approx(model.nll(data)).epsilon(1e-12));
  }

  SUBCASE("at fixed weights, risk with xi > 0 dominates risk with xi = 0") {
    ModelSpec spec = gaussian_linear_spec(5, 1);
    CompiledModel base = CompiledModel::compile(spec, x, y);
    base.init_weights(47);
    ModelSpec spec_xi = spec;
    spec_xi.entropy_xi = 0.7;
    CompiledModel pen = CompiledModel::compile(spec_xi, x, y);
    pen.weights() = base.weights();
    CHECK(pen.penalized_risk(pen.bind(x, y)) >= base.penalized_risk(base.bind(x, y)));
  }
}

TEST_CASE("components with incompatible supports are rejected at build") {
  const Matrix x = gaussian_x(10, 1, 51);
  Vector y(10);
  for (int i = 0; i < 10; ++i) y[i] = i % 4;  // valid for poisson, not beta-compatible mix
  ModelSpec spec;
  spec.components.emplace_back(Family(FamilyKind::Poisson));
  spec.components.emplace_back(Family(FamilyKind::Normal));
  CHECK_THROWS_AS(CompiledModel::compile(spec, x, y), config_error);
}
