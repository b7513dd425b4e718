#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "nmdr/distributions.hpp"
#include "nmdr/errors.hpp"
#include "nmdr/transforms.hpp"
#include "support/oracles.hpp"

using namespace nmdr;

namespace {

Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

Vector v1(double a) {
  Vector v(1);
  v << a;
  return v;
}

struct RandomCase {
  Vector params;
  double y;
};

// In-domain parameter/observation draws per family, away from kinks so the
// finite-difference check is clean (Laplace is non-smooth at y == mu).
RandomCase draw_case(const Family& fam, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RandomCase c;
  switch (fam.kind()) {
    case FamilyKind::Normal:
    case FamilyKind::Logistic:
    case FamilyKind::Laplace: {
      c.params = v2(4.0 * u(rng) - 2.0, 0.3 + 2.0 * u(rng));
      do {
        c.y = c.params[0] + (4.0 * u(rng) - 2.0) * c.params[1];
      } while (std::abs(c.y - c.params[0]) < 1e-3);
      break;
    }
    case FamilyKind::Poisson: {
      c.params = v1(0.5 + 8.0 * u(rng));
      std::poisson_distribution<int> pois(c.params[0]);
      c.y = pois(rng);
      break;
    }
    case FamilyKind::Beta: {
      c.params = v2(0.8 + 4.0 * u(rng), 0.8 + 4.0 * u(rng));
      c.y = 0.05 + 0.9 * u(rng);
      break;
    }
  }
  return c;
}

const FamilyKind kAllKinds[] = {FamilyKind::Normal, FamilyKind::Laplace, FamilyKind::Logistic,
                                FamilyKind::Poisson, FamilyKind::Beta};

}  // namespace

TEST_CASE("log density reference values") {
  CHECK(Family(FamilyKind::Normal).log_density(v2(0.0, 1.0), 0.0) ==
        doctest::Approx(-0.9189385332046727).epsilon(1e-12));
  CHECK(Family(FamilyKind::Poisson).log_density(v1(1.0), 0.0) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(Family(FamilyKind::Beta).log_density(v2(1.0, 1.0), 0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(Family(FamilyKind::Laplace).log_density(v2(2.0, 0.5), 2.0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("gradient reference values") {
  const Vector g = Family(FamilyKind::Normal).grad_log_density(v2(0.0, 1.0), 1.0);
  CHECK(g[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(0.0).epsilon(1e-12));

  const Vector gp = Family(FamilyKind::Poisson).grad_log_density(v1(2.0), 2.0);
  CHECK(gp[0] == doctest::Approx(0.0).epsilon(1e-12));

  const Family beta(FamilyKind::Beta);
  const Vector params = v2(2.0, 3.0);
  const Vector fd = oracles::fd_gradient(
      [&](const Vector& p) { return beta.log_density(p, 0.4); }, params, 1e-6);
  CHECK(oracles::max_rel_err(beta.grad_log_density(params, 0.4), fd) < 1e-7);
}

TEST_CASE("gradients match finite differences for random in-domain cases") {
  std::mt19937_64 rng(7);
  for (FamilyKind kind : kAllKinds) {
    const Family fam(kind);
    for (int rep = 0; rep < 100; ++rep) {
      const RandomCase c = draw_case(fam, rng);
      const Vector analytic = fam.grad_log_density(c.params, c.y);
      const Vector fd = oracles::fd_gradient(
          [&](const Vector& p) { return fam.log_density(p, c.y); }, c.params, 1e-6);
      CAPTURE(fam.name());
      CAPTURE(rep);
      CHECK(oracles::max_rel_err(analytic, fd) < 1e-5);
    }
  }
}

TEST_CASE("densities integrate (or sum) to one") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  auto simpson = [](const std::function<double(double)>& f, double a, double b, int steps) {
    // steps must be even
    const double h = (b - a) / steps;
    double acc = f(a) + f(b);
    for (int i = 1; i < steps; ++i) acc += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    return acc * h / 3.0;
  };

  for (int rep = 0; rep < 5; ++rep) {
    {
      const Family fam(FamilyKind::Normal);
      const Vector p = v2(4.0 * u(rng) - 2.0, 0.3 + 2.0 * u(rng));
      const double mass = simpson([&](double y) { return std::exp(fam.log_density(p, y)); },
                                  p[0] - 12.0 * p[1], p[0] + 12.0 * p[1], 4000);
      CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));
    }
    {
      const Family fam(FamilyKind::Laplace);
      const Vector p = v2(4.0 * u(rng) - 2.0, 0.3 + 2.0 * u(rng));
      const double mass = simpson([&](double y) { return std::exp(fam.log_density(p, y)); },
                                  p[0] - 40.0 * p[1], p[0] + 40.0 * p[1], 8000);
      CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));
    }
    {
      const Family fam(FamilyKind::Logistic);
      const Vector p = v2(4.0 * u(rng) - 2.0, 0.3 + 2.0 * u(rng));
      const double mass = simpson([&](double y) { return std::exp(fam.log_density(p, y)); },
                                  p[0] - 45.0 * p[1], p[0] + 45.0 * p[1], 8000);
      CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));
    }
    {
      const Family fam(FamilyKind::Beta);
      const Vector p = v2(1.0 + 4.0 * u(rng), 1.0 + 4.0 * u(rng));
      const double mass = simpson([&](double y) { return std::exp(fam.log_density(p, y)); },
                                  kBetaEps, 1.0 - kBetaEps, 20000);
      CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));
    }
    {
      const Family fam(FamilyKind::Poisson);
      const Vector p = v1(0.5 + 19.5 * u(rng));
      double mass = 0.0;
      for (int k = 0; k <= 200; ++k) mass += std::exp(fam.log_density(p, k));
      CHECK(std::abs(mass - 1.0) < 1e-8);
    }
  }
}

TEST_CASE("domain errors name the parameter, support errors reject bad outcomes") {
  CHECK_THROWS_WITH_AS(Family(FamilyKind::Normal).log_density(v2(0.0, -1.0), 0.0),
                       doctest::Contains("sigma"), domain_error);
  CHECK_THROWS_WITH_AS(Family(FamilyKind::Poisson).log_density(v1(-2.0), 1.0),
                       doctest::Contains("lambda"), domain_error);
  CHECK_THROWS_AS(Family(FamilyKind::Poisson).log_density(v1(1.0), 1.5), support_error);
  CHECK_THROWS_AS(Family(FamilyKind::Poisson).log_density(v1(1.0), -1.0), support_error);
  CHECK_THROWS_AS(Family(FamilyKind::Beta).log_density(v2(1.0, 1.0), 1.5), support_error);
}

TEST_CASE("beta observations at the boundary are clipped, not rejected") {
  const Family fam(FamilyKind::Beta);
  CHECK(std::isfinite(fam.log_density(v2(2.0, 2.0), 0.0)));
  CHECK(std::isfinite(fam.log_density(v2(2.0, 2.0), 1.0)));
}

TEST_CASE("transform reference values") {
  const Transform softmax(TransformKind::SoftmaxGroup);
  Vector z3 = Vector::Zero(3);
  const Vector p = softmax.apply(z3);
  for (int i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  CHECK(Transform(TransformKind::Exp).apply(Vector::Zero(1))[0] == doctest::Approx(1.0));
  CHECK(Transform(TransformKind::Exp).jacobian(Vector::Zero(1)).diag[0] == doctest::Approx(1.0));
  CHECK(Transform(TransformKind::Sigmoid).jacobian(Vector::Zero(1)).diag[0] ==
        doctest::Approx(0.25).epsilon(1e-14));

  const TransformJacobian j = softmax.jacobian(Vector::Zero(2));
  CHECK(j.full(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(j.full(0, 1) == doctest::Approx(-0.25).epsilon(1e-14));
  CHECK(j.full(1, 0) == doctest::Approx(-0.25).epsilon(1e-14));
  CHECK(j.full(1, 1) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("softmax is shift invariant") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 3.0);
  const Transform softmax(TransformKind::SoftmaxGroup);
  for (int rep = 0; rep < 50; ++rep) {
    Vector raw(4);
    for (int i = 0; i < 4; ++i) raw[i] = g(rng);
    const Vector base = softmax.apply(raw);
    const Vector shifted = softmax.apply(raw.array() + g(rng));
    CHECK((base - shifted).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("ordered simplex output is ascending and sums to one") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 4.0);
  const Transform ordered(TransformKind::OrderedSimplex);
  for (int rep = 0; rep < 1000; ++rep) {
    Vector raw(5);
    for (int i = 0; i < 5; ++i) raw[i] = g(rng);
    const Vector p = ordered.apply(raw);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (int i = 0; i + 1 < 5; ++i) CHECK(p[i] <= p[i + 1] + 1e-15);
    CHECK(p.minCoeff() > 0.0);
  }
}

TEST_CASE("group transform jacobians match finite differences") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 2.0);
  for (TransformKind kind : {TransformKind::SoftmaxGroup, TransformKind::OrderedSimplex}) {
    const Transform t(kind);
    for (int rep = 0; rep < 20; ++rep) {
      Vector raw(4);
      for (int i = 0; i < 4; ++i) raw[i] = g(rng);
      const TransformJacobian j = t.jacobian(raw);
      for (int out = 0; out < 4; ++out) {
        const Vector fd = oracles::fd_gradient(
            [&](const Vector& r) { return t.apply(r)[out]; }, raw, 1e-6);
        for (int in = 0; in < 4; ++in) {
          CHECK(std::abs(j.full(out, in) - fd[in]) < 1e-7);
        }
      }
    }
  }
}

TEST_CASE("elementwise transforms land in their domains and invert") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int rep = 0; rep < 200; ++rep) {
    const double x = g(rng);
    CHECK(Transform(TransformKind::Softplus).apply(Vector::Constant(1, x))[0] > 0.0);
    const double s = Transform(TransformKind::Sigmoid).apply(Vector::Constant(1, x))[0];
    CHECK(s > 0.0);
    CHECK(s < 1.0);
    const double sp = softplus(x);
    CHECK(softplus_inv(sp) == doctest::Approx(x).epsilon(1e-9));
  }
  CHECK_THROWS_AS(Transform(TransformKind::Exp).apply(Vector::Constant(1, std::nan(""))),
                  numeric_error);
}
