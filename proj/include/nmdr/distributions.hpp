#pragma once

#include <string>
#include <vector>

#include "nmdr/numerics.hpp"

namespace nmdr {

enum class FamilyKind { Normal, Laplace, Logistic, Poisson, Beta };

enum class ParamDomain { Real, Positive, UnitInterval };

// Rough role of a parameter, used only to pick data-informed initial values.
enum class ParamRole { Location, Scale, Shape };

// Beta observations are clipped into [kBetaEps, 1 - kBetaEps] before
// evaluating the density; the closed interval [0, 1] is accepted as support.
inline constexpr double kBetaEps = 1e-6;

// A parametric density family: parameter count, domains, log-density and its
// parameter gradient. All functions are pure.
class Family {
public:
  explicit Family(FamilyKind kind) : kind_(kind) {}

  FamilyKind kind() const { return kind_; }
  int param_count() const;
  const char* name() const;
  const char* param_name(int j) const;
  ParamDomain param_domain(int j) const;
  ParamRole param_role(int j) const;

  // Throws domain_error naming the offending parameter.
  void validate_params(const Vector& params) const;
  // Throws support_error if y cannot be an observation of this family.
  void validate_support(double y) const;

  double log_density(const Vector& params, double y) const;
  Vector grad_log_density(const Vector& params, double y) const;

  // Reasonable constrained-space starting parameters given raw outcomes;
  // used for intercept initialization before training.
  Vector initial_params(const Vector& y) const;

  bool operator==(const Family& o) const { return kind_ == o.kind_; }

private:
  FamilyKind kind_;
};

Family family_from_name(const std::string& name);

}  // namespace nmdr
