#include "nmdr/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "nmdr/errors.hpp"

namespace nmdr {

double log_score(const CompiledModel& model, const BoundData& data) { return model.nll(data); }

double log_score(const std::vector<Family>& families, const Matrix& pi,
                 const std::vector<Matrix>& theta, const Vector& y) {
  return nll_from_params(families, pi, theta, y);
}

std::vector<int> min_cost_assignment(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw config_error("assignment cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();

  // Kuhn-Munkres with row/column potentials, 1-based with a virtual column 0.
  std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<size_t>(n) + 1, 0), way(static_cast<size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(n) + 1, inf);
    std::vector<bool> used(static_cast<size_t>(n) + 1, false);
    do {
      used[static_cast<size_t>(j0)] = true;
      const int i0 = p[static_cast<size_t>(j0)];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(static_cast<size_t>(n), -1);
  for (int j = 1; j <= n; ++j) {
    if (p[static_cast<size_t>(j)] > 0) row_to_col[static_cast<size_t>(p[static_cast<size_t>(j)]) - 1] = j - 1;
  }
  return row_to_col;
}

namespace {

void pad_summaries(std::vector<ComponentSummary>& a, size_t target, Eigen::Index coef_len) {
  while (a.size() < target) {
    ComponentSummary dummy;
    dummy.pi = 0.0;
    dummy.coefs = Vector::Zero(coef_len);
    a.push_back(std::move(dummy));
  }
}

}  // namespace

std::vector<int> align_components(std::vector<ComponentSummary> est,
                                  std::vector<ComponentSummary> truth) {
  Eigen::Index coef_len = 0;
  for (const auto& s : est) coef_len = std::max(coef_len, s.coefs.size());
  for (const auto& s : truth) coef_len = std::max(coef_len, s.coefs.size());
  for (auto& s : est) {
    if (s.coefs.size() != coef_len) throw config_error("component summaries have mismatched coefficient lengths");
  }
  for (auto& s : truth) {
    if (s.coefs.size() != coef_len) throw config_error("component summaries have mismatched coefficient lengths");
  }

  const size_t m = std::max(est.size(), truth.size());
  pad_summaries(est, m, coef_len);
  pad_summaries(truth, m, coef_len);

  Matrix cost(m, m);
  for (size_t t = 0; t < m; ++t) {
    for (size_t e = 0; e < m; ++e) {
      const double dpi = truth[t].pi - est[e].pi;
      cost(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(e)) =
          dpi * dpi + (truth[t].coefs - est[e].coefs).squaredNorm();
    }
  }
  return min_cost_assignment(cost);
}

double coef_rmse(const std::vector<ComponentSummary>& est,
                 const std::vector<ComponentSummary>& truth, const std::vector<int>& perm) {
  if (perm.size() < truth.size()) throw config_error("alignment is shorter than the truth side");
  double sq = 0.0;
  long count = 0;
  for (size_t t = 0; t < perm.size(); ++t) {
    const ComponentSummary* tr = t < truth.size() ? &truth[t] : nullptr;
    const size_t e = static_cast<size_t>(perm[t]);
    const ComponentSummary* es = e < est.size() ? &est[e] : nullptr;
    const Eigen::Index len = tr != nullptr ? tr->coefs.size() : es->coefs.size();
    for (Eigen::Index j = 0; j < len; ++j) {
      const double a = es != nullptr ? es->coefs[j] : 0.0;
      const double b = tr != nullptr ? tr->coefs[j] : 0.0;
      sq += (a - b) * (a - b);
      ++count;
    }
  }
  return std::sqrt(sq / static_cast<double>(count));
}

double pi_rmse(const std::vector<ComponentSummary>& est,
               const std::vector<ComponentSummary>& truth, const std::vector<int>& perm) {
  double sq = 0.0;
  long count = 0;
  for (size_t t = 0; t < perm.size(); ++t) {
    const double b = t < truth.size() ? truth[t].pi : 0.0;
    const size_t e = static_cast<size_t>(perm[t]);
    const double a = e < est.size() ? est[e].pi : 0.0;
    sq += (a - b) * (a - b);
    ++count;
  }
  return std::sqrt(sq / static_cast<double>(count));
}

std::vector<EntropyPathRow> entropy_path(const ModelSpec& base_spec, const Matrix& x,
                                         const Vector& y, const std::vector<double>& xi_grid,
                                         const TrainConfig& config) {
  for (size_t i = 1; i < xi_grid.size(); ++i) {
    if (xi_grid[i] < xi_grid[i - 1]) throw config_error("xi grid must be ascending");
  }

  std::vector<EntropyPathRow> rows;
  Vector warm;
  bool have_warm = false;
  for (size_t g = 0; g < xi_grid.size(); ++g) {
    ModelSpec spec = base_spec;
    spec.entropy_xi = xi_grid[g];
    CompiledModel model = CompiledModel::compile(spec, x, y);
    const BoundData data = model.bind(x, y);

    EntropyPathRow row;
    row.xi = xi_grid[g];
    try {
      FitResult fit;
      if (!have_warm) {
        const ModelFactory factory = [&](std::uint64_t seed) {
          CompiledModel m = model;
          m.init_weights(seed);
          return m;
        };
        fit = multi_restart(factory, data, config);
      } else {
        TrainConfig warm_config = config;
        warm_config.restarts = 1;
        model.weights() = warm;
        fit = train(model, data, warm_config);
      }
      warm = fit.weights;
      have_warm = true;
      Vector mean_pi = fit.train_field.pi.colwise().mean().transpose();
      std::sort(mean_pi.data(), mean_pi.data() + mean_pi.size(), std::greater<double>());
      row.mean_pi = std::move(mean_pi);
    } catch (const divergence_error&) {
      row.diverged = true;
      row.mean_pi = Vector::Constant(model.num_components(), std::numeric_limits<double>::quiet_NaN());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

MeanSd mean_sd(const std::vector<double>& values) {
  MeanSd out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return out;
}

}  // namespace nmdr
