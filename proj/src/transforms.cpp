#include "nmdr/transforms.hpp"

#include <cmath>

#include "nmdr/errors.hpp"

namespace nmdr {
namespace {

// Keeps OrderedSimplex well-defined when every softplus output underflows.
constexpr double kOrderedFloor = 1e-12;

void require_finite(const Vector& raw, const char* what) {
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i])) {
      throw numeric_error(std::string(what) + ": non-finite raw value");
    }
  }
}

}  // namespace

const char* Transform::name() const {
  switch (kind_) {
    case TransformKind::Identity: return "identity";
    case TransformKind::Exp: return "exp";
    case TransformKind::Softplus: return "softplus";
    case TransformKind::Sigmoid: return "sigmoid";
    case TransformKind::SoftmaxGroup: return "softmax";
    case TransformKind::OrderedSimplex: return "ordered_simplex";
  }
  return "?";
}

Vector Transform::apply_scalar(const Vector& raw) const {
  Vector out(raw.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    const double x = raw[i];
    switch (kind_) {
      case TransformKind::Identity: out[i] = x; break;
      case TransformKind::Exp: out[i] = std::exp(x); break;
      case TransformKind::Softplus: out[i] = softplus(x); break;
      case TransformKind::Sigmoid: out[i] = sigmoid(x); break;
      default: break;
    }
  }
  return out;
}

Vector Transform::apply(const Vector& raw) const {
  require_finite(raw, name());
  switch (kind_) {
    case TransformKind::SoftmaxGroup: {
      Vector lp = log_apply(raw);
      return lp.array().exp();
    }
    case TransformKind::OrderedSimplex: {
      Vector u(raw.size());
      for (Eigen::Index i = 0; i < raw.size(); ++i) u[i] = softplus(raw[i]) + kOrderedFloor;
      Vector c(raw.size());
      double acc = 0.0;
      for (Eigen::Index i = 0; i < raw.size(); ++i) {
        acc += u[i];
        c[i] = acc;
      }
      return c / c.sum();
    }
    default:
      return apply_scalar(raw);
  }
}

Vector Transform::log_apply(const Vector& raw) const {
  switch (kind_) {
    case TransformKind::SoftmaxGroup: {
      // log-softmax: shift by the row LSE so tiny probabilities keep a
      // finite, accurate log.
      const double lse = log_sum_exp(raw);
      return raw.array() - lse;
    }
    case TransformKind::OrderedSimplex: {
      return apply(raw).array().log();
    }
    default: {
      return apply(raw).array().log();
    }
  }
}

TransformJacobian Transform::jacobian(const Vector& raw) const {
  require_finite(raw, name());
  TransformJacobian j;
  switch (kind_) {
    case TransformKind::SoftmaxGroup: {
      const Vector p = apply(raw);
      j.diagonal = false;
      j.full = Matrix(p.asDiagonal()) - p * p.transpose();
      return j;
    }
    case TransformKind::OrderedSimplex: {
      const Eigen::Index m = raw.size();
      Vector u(m), du(m);
      for (Eigen::Index i = 0; i < m; ++i) {
        u[i] = softplus(raw[i]) + kOrderedFloor;
        du[i] = sigmoid(raw[i]);
      }
      Vector c(m);
      double acc = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        acc += u[i];
        c[i] = acc;
      }
      const double total = c.sum();
      const Vector pi = c / total;
      // d c_k / d raw_l = du_l * [l <= k]; d total / d raw_l = du_l * (m - l)
      j.diagonal = false;
      j.full.resize(m, m);
      for (Eigen::Index k = 0; k < m; ++k) {
        for (Eigen::Index l = 0; l < m; ++l) {
          const double dck = (l <= k) ? du[l] : 0.0;
          const double dtotal = du[l] * static_cast<double>(m - l);
          j.full(k, l) = (dck - pi[k] * dtotal) / total;
        }
      }
      return j;
    }
    default: {
      j.diag.resize(raw.size());
      for (Eigen::Index i = 0; i < raw.size(); ++i) {
        const double x = raw[i];
        switch (kind_) {
          case TransformKind::Identity: j.diag[i] = 1.0; break;
          case TransformKind::Exp: j.diag[i] = std::exp(x); break;
          case TransformKind::Softplus: j.diag[i] = sigmoid(x); break;
          case TransformKind::Sigmoid: {
            const double s = sigmoid(x);
            j.diag[i] = s * (1.0 - s);
            break;
          }
          default: break;
        }
      }
      return j;
    }
  }
}

double Transform::preimage(double value) const {
  switch (kind_) {
    case TransformKind::Identity: return value;
    case TransformKind::Exp: return std::log(value);
    case TransformKind::Softplus: return softplus_inv(value);
    case TransformKind::Sigmoid: return logit(value);
    default:
      throw config_error(std::string("preimage undefined for group transform ") + name());
  }
}

Transform transform_from_name(const std::string& name) {
  if (name == "identity") return Transform(TransformKind::Identity);
  if (name == "exp") return Transform(TransformKind::Exp);
  if (name == "softplus") return Transform(TransformKind::Softplus);
  if (name == "sigmoid") return Transform(TransformKind::Sigmoid);
  if (name == "softmax") return Transform(TransformKind::SoftmaxGroup);
  if (name == "ordered_simplex") return Transform(TransformKind::OrderedSimplex);
  throw config_error("unknown transform: '" + name + "'");
}

Transform default_transform_for(ParamDomain domain) {
  switch (domain) {
    case ParamDomain::Real: return Transform(TransformKind::Identity);
    case ParamDomain::Positive: return Transform(TransformKind::Softplus);
    case ParamDomain::UnitInterval: return Transform(TransformKind::Sigmoid);
  }
  return Transform(TransformKind::Identity);
}

}  // namespace nmdr
