#include "nmdr/distributions.hpp"

#include <cmath>
#include <sstream>

#include "nmdr/errors.hpp"

namespace nmdr {
namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2*pi))

void require_finite(double y) {
  if (!std::isfinite(y)) throw support_error("observation is not finite");
}

double clip_beta_obs(double y) {
  return std::min(1.0 - kBetaEps, std::max(kBetaEps, y));
}

}  // namespace

int Family::param_count() const {
  return kind_ == FamilyKind::Poisson ? 1 : 2;
}

const char* Family::name() const {
  switch (kind_) {
    case FamilyKind::Normal: return "normal";
    case FamilyKind::Laplace: return "laplace";
    case FamilyKind::Logistic: return "logistic";
    case FamilyKind::Poisson: return "poisson";
    case FamilyKind::Beta: return "beta";
  }
  return "?";
}

const char* Family::param_name(int j) const {
  switch (kind_) {
    case FamilyKind::Normal: return j == 0 ? "mu" : "sigma";
    case FamilyKind::Laplace: return j == 0 ? "mu" : "b";
    case FamilyKind::Logistic: return j == 0 ? "mu" : "s";
    case FamilyKind::Poisson: return "lambda";
    case FamilyKind::Beta: return j == 0 ? "c0" : "c1";
  }
  return "?";
}

ParamDomain Family::param_domain(int j) const {
  switch (kind_) {
    case FamilyKind::Normal:
    case FamilyKind::Laplace:
    case FamilyKind::Logistic:
      return j == 0 ? ParamDomain::Real : ParamDomain::Positive;
    case FamilyKind::Poisson:
    case FamilyKind::Beta:
      return ParamDomain::Positive;
  }
  return ParamDomain::Real;
}

ParamRole Family::param_role(int j) const {
  switch (kind_) {
    case FamilyKind::Normal:
    case FamilyKind::Laplace:
    case FamilyKind::Logistic:
      return j == 0 ? ParamRole::Location : ParamRole::Scale;
    case FamilyKind::Poisson:
      return ParamRole::Location;
    case FamilyKind::Beta:
      return ParamRole::Shape;
  }
  return ParamRole::Location;
}

void Family::validate_params(const Vector& params) const {
  if (params.size() != param_count()) {
    std::ostringstream os;
    os << name() << " expects " << param_count() << " parameters, got " << params.size();
    throw domain_error(os.str());
  }
  for (int j = 0; j < param_count(); ++j) {
    const double v = params[j];
    const bool ok = std::isfinite(v) && (param_domain(j) == ParamDomain::Real || v > 0.0);
    if (!ok) {
      std::ostringstream os;
      os << name() << " parameter '" << param_name(j) << "' out of domain: " << v;
      throw domain_error(os.str());
    }
  }
}

void Family::validate_support(double y) const {
  require_finite(y);
  switch (kind_) {
    case FamilyKind::Normal:
    case FamilyKind::Laplace:
    case FamilyKind::Logistic:
      return;
    case FamilyKind::Poisson: {
      if (y < 0.0 || std::abs(y - std::round(y)) > 1e-9) {
        std::ostringstream os;
        os << "poisson outcome must be a non-negative integer, got " << y;
        throw support_error(os.str());
      }
      return;
    }
    case FamilyKind::Beta: {
      if (y < 0.0 || y > 1.0) {
        std::ostringstream os;
        os << "beta outcome must lie in [0,1], got " << y;
        throw support_error(os.str());
      }
      return;
    }
  }
}

double Family::log_density(const Vector& params, double y) const {
  validate_params(params);
  validate_support(y);
  switch (kind_) {
    case FamilyKind::Normal: {
      const double mu = params[0], sigma = params[1];
      const double z = (y - mu) / sigma;
      return -kLogSqrt2Pi - std::log(sigma) - 0.5 * z * z;
    }
    case FamilyKind::Laplace: {
      const double mu = params[0], b = params[1];
      return -std::log(2.0 * b) - std::abs(y - mu) / b;
    }
    case FamilyKind::Logistic: {
      const double mu = params[0], s = params[1];
      const double z = (y - mu) / s;
      // -z - 2*log(1+exp(-z)) - log(s), written symmetrically for stability
      return -std::abs(z) - 2.0 * log1pexp(-std::abs(z)) - std::log(s);
    }
    case FamilyKind::Poisson: {
      const double lambda = params[0];
      const double k = std::round(y);
      return k * std::log(lambda) - lambda - std::lgamma(k + 1.0);
    }
    case FamilyKind::Beta: {
      const double c0 = params[0], c1 = params[1];
      const double x = clip_beta_obs(y);
      return std::lgamma(c0 + c1) - std::lgamma(c0) - std::lgamma(c1) +
             (c0 - 1.0) * std::log(x) + (c1 - 1.0) * std::log1p(-x);
    }
  }
  return kNegInf;
}

Vector Family::grad_log_density(const Vector& params, double y) const {
  validate_params(params);
  validate_support(y);
  Vector g(param_count());
  switch (kind_) {
    case FamilyKind::Normal: {
      const double mu = params[0], sigma = params[1];
      const double r = y - mu;
      g[0] = r / (sigma * sigma);
      g[1] = (r * r - sigma * sigma) / (sigma * sigma * sigma);
      break;
    }
    case FamilyKind::Laplace: {
      const double mu = params[0], b = params[1];
      const double r = y - mu;
      g[0] = (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) / b;
      g[1] = (std::abs(r) - b) / (b * b);
      break;
    }
    case FamilyKind::Logistic: {
      const double mu = params[0], s = params[1];
      const double z = (y - mu) / s;
      const double p = sigmoid(z);
      g[0] = (2.0 * p - 1.0) / s;
      g[1] = (z * (2.0 * p - 1.0) - 1.0) / s;
      break;
    }
    case FamilyKind::Poisson: {
      const double lambda = params[0];
      g[0] = std::round(y) / lambda - 1.0;
      break;
    }
    case FamilyKind::Beta: {
      const double c0 = params[0], c1 = params[1];
      const double x = clip_beta_obs(y);
      const double dg_sum = digamma(c0 + c1);
      g[0] = dg_sum - digamma(c0) + std::log(x);
      g[1] = dg_sum - digamma(c1) + std::log1p(-x);
      break;
    }
  }
  return g;
}

Vector Family::initial_params(const Vector& y) const {
  Vector p(param_count());
  switch (kind_) {
    case FamilyKind::Normal:
    case FamilyKind::Laplace:
    case FamilyKind::Logistic:
      p[0] = median(y);
      p[1] = mad(y);
      break;
    case FamilyKind::Poisson:
      p[0] = std::max(0.1, y.mean());
      break;
    case FamilyKind::Beta: {
      // Method of moments, clamped to a sane shape range.
      const double m = std::min(1.0 - 1e-3, std::max(1e-3, y.mean()));
      const double n = static_cast<double>(y.size());
      double v = (y.array() - y.mean()).square().sum() / std::max(1.0, n - 1.0);
      v = std::max(v, 1e-6);
      const double k = std::max(0.5, std::min(100.0, m * (1.0 - m) / v - 1.0));
      p[0] = std::max(0.5, m * k);
      p[1] = std::max(0.5, (1.0 - m) * k);
      break;
    }
  }
  return p;
}

Family family_from_name(const std::string& name) {
  if (name == "normal" || name == "gaussian") return Family(FamilyKind::Normal);
  if (name == "laplace") return Family(FamilyKind::Laplace);
  if (name == "logistic") return Family(FamilyKind::Logistic);
  if (name == "poisson") return Family(FamilyKind::Poisson);
  if (name == "beta") return Family(FamilyKind::Beta);
  throw config_error("unknown family: '" + name + "'");
}

}  // namespace nmdr
