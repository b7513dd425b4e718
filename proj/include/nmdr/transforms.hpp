#pragma once

#include <string>

#include "nmdr/distributions.hpp"
#include "nmdr/numerics.hpp"

namespace nmdr {

// Maps raw predictor values into a parameter's domain. Identity/Exp/Softplus/
// Sigmoid act elementwise; SoftmaxGroup and OrderedSimplex act on the whole
// vector and produce a probability vector (OrderedSimplex additionally
// non-decreasing, via softplus + cumulative sum).
enum class TransformKind { Identity, Exp, Softplus, Sigmoid, SoftmaxGroup, OrderedSimplex };

struct TransformJacobian {
  bool diagonal = true;
  Vector diag;   // set when diagonal
  Matrix full;   // set for group transforms
};

class Transform {
public:
  explicit Transform(TransformKind kind) : kind_(kind) {}

  TransformKind kind() const { return kind_; }
  bool elementwise() const {
    return kind_ != TransformKind::SoftmaxGroup && kind_ != TransformKind::OrderedSimplex;
  }

  // Throws numeric_error on non-finite input.
  Vector apply(const Vector& raw) const;
  TransformJacobian jacobian(const Vector& raw) const;

  // log of apply() for probability-producing transforms, computed stably.
  Vector log_apply(const Vector& raw) const;

  // Elementwise transforms only: raw value whose image is `value`.
  double preimage(double value) const;

  const char* name() const;

private:
  Vector apply_scalar(const Vector& raw) const;
  TransformKind kind_;
};

Transform transform_from_name(const std::string& name);

// Default transform for a parameter domain: Identity on the real line,
// Softplus for positive parameters, Sigmoid for the unit interval.
// Exp stays selectable through configuration.
Transform default_transform_for(ParamDomain domain);

}  // namespace nmdr
