#include "nmdr/mixture.hpp"

#include <cmath>
#include <sstream>

#include "nmdr/errors.hpp"
#include "nmdr/rng.hpp"

namespace nmdr {
namespace {

// Support classes must agree across components for a shared outcome vector.
int support_class(FamilyKind k) {
  switch (k) {
    case FamilyKind::Normal:
    case FamilyKind::Laplace:
    case FamilyKind::Logistic:
      return 0;
    case FamilyKind::Poisson:
      return 1;
    case FamilyKind::Beta:
      return 2;
  }
  return -1;
}

double entropy(const Vector& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  }
  return h;
}

}  // namespace

CompiledModel CompiledModel::compile(const ModelSpec& spec, const Matrix& x_train,
                                     const Vector& y_train) {
  if (spec.components.empty()) throw config_error("mixture needs at least one component");
  if (x_train.rows() != y_train.size()) throw config_error("x and y row counts differ");
  if (spec.entropy_xi < 0.0) throw config_error("entropy_xi must be >= 0");

  CompiledModel model;
  model.spec_ = spec;
  model.y_train_stats_ = y_train;

  const int m_comp = static_cast<int>(spec.components.size());
  const int support = support_class(spec.components[0].family.kind());
  for (const ComponentSpec& c : spec.components) {
    if (support_class(c.family.kind()) != support) {
      throw config_error("components mix incompatible outcome supports");
    }
  }
  for (Eigen::Index i = 0; i < y_train.size(); ++i) {
    spec.components[0].family.validate_support(y_train[i]);
  }

  // Fill defaulted predictors/transforms, then compile everything against the
  // training sample with a single weight cursor.
  int cursor = 0;
  model.params_.resize(static_cast<size_t>(m_comp));
  for (int m = 0; m < m_comp; ++m) {
    ComponentSpec& comp = model.spec_.components[static_cast<size_t>(m)];
    const int k = comp.family.param_count();
    if (comp.param_predictors.empty()) {
      comp.param_predictors.assign(static_cast<size_t>(k), intercept_only());
    }
    if (static_cast<int>(comp.param_predictors.size()) != k) {
      throw config_error("component " + std::to_string(m) + ": expected " + std::to_string(k) +
                         " parameter predictors");
    }
    if (comp.param_transforms.empty()) {
      for (int j = 0; j < k; ++j) {
        comp.param_transforms.push_back(default_transform_for(comp.family.param_domain(j)));
      }
    }
    if (static_cast<int>(comp.param_transforms.size()) != k) {
      throw config_error("component " + std::to_string(m) + ": expected " + std::to_string(k) +
                         " parameter transforms");
    }
    for (const Transform& t : comp.param_transforms) {
      if (!t.elementwise()) {
        throw config_error("group transforms are reserved for the gating vector");
      }
    }
    for (int j = 0; j < k; ++j) {
      const std::string prefix = "c" + std::to_string(m) + "." + comp.family.param_name(j);
      model.params_[static_cast<size_t>(m)].push_back(
          CompiledPredictor::compile(comp.param_predictors[static_cast<size_t>(j)], x_train, cursor, prefix));
    }
  }

  if (model.spec_.gating.empty()) {
    model.spec_.gating.assign(static_cast<size_t>(m_comp), intercept_only());
  }
  if (static_cast<int>(model.spec_.gating.size()) != m_comp) {
    throw config_error("gating needs one predictor per component");
  }
  for (int m = 0; m < m_comp; ++m) {
    model.gating_.push_back(CompiledPredictor::compile(model.spec_.gating[static_cast<size_t>(m)],
                                                       x_train, cursor, "gate.m" + std::to_string(m)));
  }

  model.weights_ = Vector::Zero(cursor);
  model.init_weights(0);
  return model;
}

void CompiledModel::init_weights(std::uint64_t seed) {
  auto rng = make_rng(seed, Stream::Init);
  std::normal_distribution<double> small(0.0, 0.01);

  auto init_predictor = [&](const CompiledPredictor& pred, bool gating, const Vector* preimages) {
    bool intercept_seen = false;
    for (const CompiledTerm& ct : pred.terms()) {
      auto w = weights_.segment(ct.weight_offset, ct.weight_count);
      if (!ct.layers.empty()) {
        // Glorot-uniform layer weights, zero biases.
        int off = 0;
        for (const auto& [in, out] : ct.layers) {
          const double bound = std::sqrt(6.0 / (in + out));
          std::uniform_real_distribution<double> u(-bound, bound);
          for (int i = 0; i < in * out; ++i) w[off + i] = u(rng);
          for (int i = 0; i < out; ++i) w[off + in * out + i] = 0.0;
          off += in * out + out;
        }
        continue;
      }
      for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = small(rng);
      if (std::holds_alternative<InterceptTerm>(ct.spec.kind)) {
        if (gating) {
          w[0] = 0.0;
        } else if (!intercept_seen && preimages != nullptr) {
          w[0] += (*preimages)[0];
          intercept_seen = true;
        }
      }
    }
  };

  for (size_t m = 0; m < params_.size(); ++m) {
    const ComponentSpec& comp = spec_.components[m];
    const Vector start = comp.family.initial_params(y_train_stats_);
    for (size_t j = 0; j < params_[m].size(); ++j) {
      const Vector pre = Vector::Constant(1, comp.param_transforms[j].preimage(start[static_cast<Eigen::Index>(j)]));
      init_predictor(params_[m][j], false, &pre);
    }
  }
  for (const CompiledPredictor& g : gating_) init_predictor(g, true, nullptr);
}

BoundData CompiledModel::bind(const Matrix& x, const Vector& y) const {
  if (x.rows() != y.size()) throw data_error("x and y row counts differ");
  BoundData data;
  data.x = x;
  data.y = y;
  data.param_designs.resize(params_.size());
  for (size_t m = 0; m < params_.size(); ++m) {
    for (const CompiledPredictor& p : params_[m]) {
      data.param_designs[m].push_back(p.design(x));
    }
  }
  for (const CompiledPredictor& g : gating_) data.gating_designs.push_back(g.design(x));
  data.all_rows.resize(static_cast<size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) data.all_rows[static_cast<size_t>(i)] = i;
  return data;
}

ParamField CompiledModel::forward(const BoundData& data) const {
  const Eigen::Index n = data.x.rows();
  const int m_comp = num_components();
  ParamField field;
  field.gating_raw.resize(n, m_comp);
  for (int m = 0; m < m_comp; ++m) {
    field.gating_raw.col(m) =
        gating_[static_cast<size_t>(m)].eval_rows(weights_, data.gating_designs[static_cast<size_t>(m)], data.x, data.all_rows);
  }
  const Transform gate_t(spec_.gating_kind == GatingKind::Softmax ? TransformKind::SoftmaxGroup
                                                                  : TransformKind::OrderedSimplex);
  field.pi.resize(n, m_comp);
  for (Eigen::Index i = 0; i < n; ++i) {
    field.pi.row(i) = gate_t.apply(field.gating_raw.row(i).transpose()).transpose();
  }

  field.theta.resize(static_cast<size_t>(m_comp));
  field.raw.resize(static_cast<size_t>(m_comp));
  for (int m = 0; m < m_comp; ++m) {
    const auto& preds = params_[static_cast<size_t>(m)];
    const int k = static_cast<int>(preds.size());
    Matrix raw(n, k), theta(n, k);
    for (int j = 0; j < k; ++j) {
      raw.col(j) = preds[static_cast<size_t>(j)].eval_rows(
          weights_, data.param_designs[static_cast<size_t>(m)][static_cast<size_t>(j)], data.x, data.all_rows);
      theta.col(j) = spec_.components[static_cast<size_t>(m)].param_transforms[static_cast<size_t>(j)].apply(raw.col(j));
    }
    field.raw[static_cast<size_t>(m)] = std::move(raw);
    field.theta[static_cast<size_t>(m)] = std::move(theta);
  }
  return field;
}

double CompiledModel::objective(const BoundData& data, const IndexVec& rows,
                                const EvalScales& scales, Vector* grad) const {
  const int m_comp = num_components();
  const Eigen::Index b = static_cast<Eigen::Index>(rows.size());
  const bool softmax_gate = spec_.gating_kind == GatingKind::Softmax;
  const Transform gate_t(softmax_gate ? TransformKind::SoftmaxGroup : TransformKind::OrderedSimplex);

  // Raw predictor values on the requested rows.
  Matrix gating_raw(b, m_comp);
  for (int m = 0; m < m_comp; ++m) {
    gating_raw.col(m) = gating_[static_cast<size_t>(m)].eval_rows(
        weights_, data.gating_designs[static_cast<size_t>(m)], data.x, rows);
  }
  std::vector<Matrix> raw(static_cast<size_t>(m_comp));
  std::vector<Matrix> theta(static_cast<size_t>(m_comp));
  for (int m = 0; m < m_comp; ++m) {
    const auto& preds = params_[static_cast<size_t>(m)];
    const int k = static_cast<int>(preds.size());
    raw[static_cast<size_t>(m)].resize(b, k);
    theta[static_cast<size_t>(m)].resize(b, k);
    for (int j = 0; j < k; ++j) {
      raw[static_cast<size_t>(m)].col(j) = preds[static_cast<size_t>(j)].eval_rows(
          weights_, data.param_designs[static_cast<size_t>(m)][static_cast<size_t>(j)], data.x, rows);
      theta[static_cast<size_t>(m)].col(j) =
          spec_.components[static_cast<size_t>(m)].param_transforms[static_cast<size_t>(j)].apply(
              raw[static_cast<size_t>(m)].col(j));
    }
  }

  // Row-wise mixture log-likelihood via stabilized log-sum-exp.
  Matrix log_pi(b, m_comp), pi(b, m_comp), log_f(b, m_comp), gamma(b, m_comp);
  double nll_sum = 0.0;
  Vector a(m_comp);
  for (Eigen::Index i = 0; i < b; ++i) {
    const Vector graw = gating_raw.row(i).transpose();
    const Vector lp = gate_t.log_apply(graw);
    log_pi.row(i) = lp.transpose();
    pi.row(i) = lp.array().exp().transpose();
    for (int m = 0; m < m_comp; ++m) {
      const double lf = spec_.components[static_cast<size_t>(m)].family.log_density(
          theta[static_cast<size_t>(m)].row(i).transpose(), data.y[rows[static_cast<size_t>(i)]]);
      log_f(i, m) = lf;
      a[m] = lp[m] + lf;
    }
    const double lse = log_sum_exp(a);
    nll_sum -= lse;
    for (int m = 0; m < m_comp; ++m) {
      gamma(i, m) = std::isfinite(lse) ? std::exp(a[m] - lse) : 0.0;
    }
  }

  const Vector pi_bar = pi.colwise().mean().transpose();
  double value = scales.data * nll_sum;
  if (scales.penalty != 0.0) value += scales.penalty * penalty();
  if (scales.entropy != 0.0) value += scales.entropy * entropy(pi_bar);

  if (grad == nullptr) return value;

  // d(entropy term)/d pi_im, shared across rows.
  Vector d_pi_entropy = Vector::Zero(m_comp);
  if (scales.entropy != 0.0) {
    for (int m = 0; m < m_comp; ++m) {
      const double pb = std::max(pi_bar[m], 1e-300);
      d_pi_entropy[m] = -scales.entropy * (std::log(pb) + 1.0) / static_cast<double>(b);
    }
  }

  Matrix d_gating_raw(b, m_comp);
  std::vector<Matrix> d_raw(static_cast<size_t>(m_comp));
  std::vector<Matrix> h_prime(static_cast<size_t>(m_comp));
  for (int m = 0; m < m_comp; ++m) {
    const auto& comp = spec_.components[static_cast<size_t>(m)];
    const Eigen::Index k = static_cast<Eigen::Index>(params_[static_cast<size_t>(m)].size());
    d_raw[static_cast<size_t>(m)].resize(b, k);
    h_prime[static_cast<size_t>(m)].resize(b, k);
    for (Eigen::Index j = 0; j < k; ++j) {
      h_prime[static_cast<size_t>(m)].col(j) =
          comp.param_transforms[static_cast<size_t>(j)].jacobian(raw[static_cast<size_t>(m)].col(j)).diag;
    }
  }

  Vector d_pi(m_comp);
  for (Eigen::Index i = 0; i < b; ++i) {
    // Gating chain. For softmax the nll part reduces to pi - gamma; the
    // entropy part goes through the Jacobian diag(pi) - pi pi'.
    if (softmax_gate) {
      const Vector pirow = pi.row(i).transpose();
      Vector d = scales.data * (pirow - gamma.row(i).transpose());
      if (scales.entropy != 0.0) {
        const double dot = pirow.dot(d_pi_entropy);
        d += pirow.cwiseProduct(d_pi_entropy) - dot * pirow;
      }
      d_gating_raw.row(i) = d.transpose();
    } else {
      // d(-L)/d pi_m = -exp(log f_m - L) = -gamma_m / pi_m, kept finite when
      // pi underflows (gamma is then 0 as well).
      for (int m = 0; m < m_comp; ++m) {
        d_pi[m] = d_pi_entropy[m];
        if (gamma(i, m) > 0.0) {
          d_pi[m] -= scales.data * gamma(i, m) / std::max(pi(i, m), 1e-300);
        }
      }
      const TransformJacobian gj = gate_t.jacobian(gating_raw.row(i).transpose());
      d_gating_raw.row(i) = (gj.full.transpose() * d_pi).transpose();
    }

    // Component parameter chains.
    for (int m = 0; m < m_comp; ++m) {
      const ComponentSpec& comp = spec_.components[static_cast<size_t>(m)];
      const int k = comp.family.param_count();
      if (gamma(i, m) == 0.0) {
        for (int j = 0; j < k; ++j) d_raw[static_cast<size_t>(m)](i, j) = 0.0;
        continue;
      }
      const Vector dlf = comp.family.grad_log_density(
          theta[static_cast<size_t>(m)].row(i).transpose(), data.y[rows[static_cast<size_t>(i)]]);
      for (int j = 0; j < k; ++j) {
        d_raw[static_cast<size_t>(m)](i, j) =
            scales.data * (-gamma(i, m)) * dlf[j] * h_prime[static_cast<size_t>(m)](i, j);
      }
    }
  }

  for (int m = 0; m < m_comp; ++m) {
    gating_[static_cast<size_t>(m)].accumulate_grad(weights_, data.gating_designs[static_cast<size_t>(m)],
                                                    data.x, rows, d_gating_raw.col(m), *grad);
    const auto& preds = params_[static_cast<size_t>(m)];
    for (size_t j = 0; j < preds.size(); ++j) {
      preds[j].accumulate_grad(weights_, data.param_designs[static_cast<size_t>(m)][j], data.x, rows,
                               d_raw[static_cast<size_t>(m)].col(static_cast<Eigen::Index>(j)), *grad);
    }
  }
  if (scales.penalty != 0.0) {
    accumulate_penalty_grad(all_predictors(), weights_, spec_.penalties, scales.penalty, *grad);
  }
  return value;
}

double CompiledModel::nll(const BoundData& data) const {
  return objective(data, data.all_rows, EvalScales{1.0, 0.0, 0.0}, nullptr);
}

Matrix CompiledModel::responsibilities(const BoundData& data) const {
  const ParamField field = forward(data);
  std::vector<Family> fams;
  for (const ComponentSpec& c : spec_.components) fams.push_back(c.family);
  return responsibilities_from_params(fams, field.pi, field.theta, data.y);
}

Vector CompiledModel::grad_nll(const BoundData& data) const {
  Vector grad = Vector::Zero(num_weights());
  objective(data, data.all_rows, EvalScales{1.0, 0.0, 0.0}, &grad);
  return grad;
}

double CompiledModel::penalized_risk(const BoundData& data) const {
  return objective(data, data.all_rows, EvalScales{1.0, 1.0, spec_.entropy_xi}, nullptr);
}

double CompiledModel::penalty() const {
  return penalty_value(all_predictors(), weights_, spec_.penalties);
}

std::vector<const CompiledPredictor*> CompiledModel::all_predictors() const {
  std::vector<const CompiledPredictor*> out;
  for (const auto& per_comp : params_) {
    for (const CompiledPredictor& p : per_comp) out.push_back(&p);
  }
  for (const CompiledPredictor& g : gating_) out.push_back(&g);
  return out;
}

std::vector<std::pair<std::string, double>> CompiledModel::resolved_lambdas() const {
  std::vector<std::pair<std::string, double>> out;
  for (const CompiledPredictor* pred : all_predictors()) {
    for (const CompiledTerm& ct : pred->terms()) {
      if (ct.has_quad) out.emplace_back(ct.label, ct.lambda);
    }
  }
  return out;
}

double nll_from_params(const std::vector<Family>& families, const Matrix& pi,
                       const std::vector<Matrix>& theta, const Vector& y) {
  const Eigen::Index n = y.size();
  const int m_comp = static_cast<int>(families.size());
  double nll = 0.0;
  Vector a(m_comp);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int m = 0; m < m_comp; ++m) {
      const double p = pi(i, m);
      const double lf = families[static_cast<size_t>(m)].log_density(
          theta[static_cast<size_t>(m)].row(i).transpose(), y[i]);
      a[m] = (p > 0.0 ? std::log(p) : kNegInf) + lf;
    }
    nll -= log_sum_exp(a);
  }
  return nll;
}

Matrix responsibilities_from_params(const std::vector<Family>& families, const Matrix& pi,
                                    const std::vector<Matrix>& theta, const Vector& y) {
  const Eigen::Index n = y.size();
  const int m_comp = static_cast<int>(families.size());
  Matrix gamma(n, m_comp);
  Vector a(m_comp);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int m = 0; m < m_comp; ++m) {
      const double p = pi(i, m);
      const double lf = families[static_cast<size_t>(m)].log_density(
          theta[static_cast<size_t>(m)].row(i).transpose(), y[i]);
      a[m] = (p > 0.0 ? std::log(p) : kNegInf) + lf;
    }
    const double lse = log_sum_exp(a);
    for (int m = 0; m < m_comp; ++m) {
      gamma(i, m) = std::isfinite(lse) ? std::exp(a[m] - lse) : 0.0;
    }
  }
  return gamma;
}

}  // namespace nmdr
