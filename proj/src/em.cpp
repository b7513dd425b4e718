#include "nmdr/em.hpp"

#include <cmath>
#include <sstream>

#include "nmdr/distributions.hpp"
#include "nmdr/errors.hpp"
#include "nmdr/rng.hpp"

namespace nmdr {
namespace {

constexpr double kSigmaFloor = 1e-8;

Matrix with_intercept(const Matrix& x) {
  Matrix d(x.rows(), x.cols() + 1);
  d.col(0).setOnes();
  d.rightCols(x.cols()) = x;
  return d;
}

Matrix dirichlet_rows(Eigen::Index n, int m, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  Matrix gamma(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    double total = 0.0;
    for (int j = 0; j < m; ++j) {
      gamma(i, j) = e(rng);
      total += gamma(i, j);
    }
    gamma.row(i) /= total;
  }
  return gamma;
}

// E-step: responsibilities and the observed-data log-likelihood.
double e_step(const Matrix& design, const Vector& y, const EmModel& model, Matrix& gamma) {
  const Eigen::Index n = y.size();
  const int m = static_cast<int>(model.beta.size());
  const Family normal(FamilyKind::Normal);
  Vector a(m);
  Vector params(2);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      params[0] = design.row(i).dot(model.beta[static_cast<size_t>(j)]);
      params[1] = model.sigma[j];
      a[j] = std::log(model.pi[j]) + normal.log_density(params, y[i]);
    }
    const double lse = log_sum_exp(a);
    ll += lse;
    for (int j = 0; j < m; ++j) gamma(i, j) = std::exp(a[j] - lse);
  }
  return ll;
}

// M-step: responsibility-weighted least squares per component. Returns false
// when a component's normal equations are singular.
bool m_step(const Matrix& design, const Vector& y, const Matrix& gamma, EmModel& model) {
  const Eigen::Index n = y.size();
  const int m = static_cast<int>(gamma.cols());
  const Eigen::Index q = design.cols();
  for (int j = 0; j < m; ++j) {
    const Vector w = gamma.col(j);
    const double wsum = w.sum();
    if (wsum < 1e-10) return false;
    Matrix a = Matrix::Zero(q, q);
    Vector b = Vector::Zero(q);
    for (Eigen::Index i = 0; i < n; ++i) {
      a.noalias() += w[i] * design.row(i).transpose() * design.row(i);
      b.noalias() += (w[i] * y[i]) * design.row(i).transpose();
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    qr.setThreshold(1e-10);
    if (qr.rank() < q) return false;
    const Vector beta = qr.solve(b);
    if (!beta.allFinite()) return false;

    double rss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = y[i] - design.row(i).dot(beta);
      rss += w[i] * r * r;
    }
    double sigma = std::sqrt(rss / wsum);
    if (sigma < kSigmaFloor) {
      sigma = kSigmaFloor;
      model.sigma_floored = true;
    }
    model.beta[static_cast<size_t>(j)] = beta;
    model.sigma[j] = sigma;
    model.pi[j] = wsum / static_cast<double>(n);
  }
  return true;
}

}  // namespace

EmModel em_fit(const Matrix& x, const Vector& y, int num_components, double tol, int max_iter,
               std::uint64_t seed) {
  const Eigen::Index n = y.size();
  const Eigen::Index p = x.cols();
  if (num_components < 1) throw config_error("em: need at least one component");
  if (n <= static_cast<Eigen::Index>(num_components) * (p + 2)) {
    std::ostringstream os;
    os << "em: n = " << n << " too small for " << num_components << " components with p = " << p;
    throw config_error(os.str());
  }

  const Matrix design = with_intercept(x);
  auto rng = make_rng(seed, Stream::EmInit);

  EmModel model;
  model.beta.assign(static_cast<size_t>(num_components), Vector::Zero(design.cols()));
  model.sigma = Vector::Ones(num_components);
  model.pi = Vector::Constant(num_components, 1.0 / num_components);

  Matrix gamma = dirichlet_rows(n, num_components, rng);
  for (int attempt = 0;; ++attempt) {
    if (m_step(design, y, gamma, model)) break;
    if (attempt >= 5) throw numeric_error("em: singular weighted normal equations after 5 retries");
    gamma = dirichlet_rows(n, num_components, rng);
  }

  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    const double ll = e_step(design, y, model, gamma);
    model.loglik_trajectory.push_back(ll);
    model.iterations = it + 1;
    if (it > 0 && ll - prev_ll < tol) {
      model.converged = true;
      break;
    }
    prev_ll = ll;
    for (int attempt = 0;; ++attempt) {
      if (m_step(design, y, gamma, model)) break;
      if (attempt >= 5) throw numeric_error("em: singular weighted normal equations after 5 retries");
      gamma = dirichlet_rows(n, num_components, rng);
    }
  }
  if (!model.converged) {
    // The budget ran out right after an M-step; record the resulting
    // likelihood so the trajectory always matches the returned parameters.
    model.loglik_trajectory.push_back(e_step(design, y, model, gamma));
  }
  return model;
}

EmModel em_fit_restarts(const Matrix& x, const Vector& y, int num_components, double tol,
                        int max_iter, std::uint64_t seed, int restarts) {
  if (restarts < 1) throw config_error("em: restarts must be >= 1");
  EmModel best;
  double best_ll = -std::numeric_limits<double>::infinity();
  std::string last_error;
  for (int r = 0; r < restarts; ++r) {
    try {
      EmModel candidate =
          em_fit(x, y, num_components, tol, max_iter, seed + static_cast<std::uint64_t>(r));
      const double ll = candidate.loglik_trajectory.back();
      if (ll > best_ll) {
        best_ll = ll;
        best = std::move(candidate);
      }
    } catch (const numeric_error& e) {
      last_error = e.what();
    }
  }
  if (!std::isfinite(best_ll)) {
    throw numeric_error("em: every restart failed" +
                        (last_error.empty() ? std::string() : "; last: " + last_error));
  }
  return best;
}

double em_loglik(const EmModel& model, const Matrix& x, const Vector& y) {
  const Matrix design = with_intercept(x);
  Matrix gamma(y.size(), model.pi.size());
  return e_step(design, y, model, gamma);
}

}  // namespace nmdr
