#include "nmdr/predictors.hpp"

#include <cmath>
#include <sstream>

#include "nmdr/errors.hpp"

namespace nmdr {
namespace {

void check_features(const std::vector<int>& features, Eigen::Index p, const std::string& label) {
  for (int f : features) {
    if (f < 0 || f >= p) {
      std::ostringstream os;
      os << label << ": feature index " << f << " outside input with " << p << " columns";
      throw data_error(os.str());
    }
  }
}

double activate(Activation a, double v) {
  switch (a) {
    case Activation::ReLU: return v > 0.0 ? v : 0.0;
    case Activation::Tanh: return std::tanh(v);
    case Activation::Identity: return v;
  }
  return v;
}

double activate_grad(Activation a, double v) {
  switch (a) {
    case Activation::ReLU: return v > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      const double t = std::tanh(v);
      return 1.0 - t * t;
    }
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

}  // namespace

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  throw config_error("unknown activation: '" + name + "'");
}

CompiledPredictor CompiledPredictor::compile(const PredictorSpec& spec, const Matrix& x_train,
                                             int& weight_cursor, const std::string& label_prefix) {
  CompiledPredictor out;
  int col_cursor = 0;
  int index = 0;
  for (const TermSpec& term : spec.terms) {
    CompiledTerm ct;
    ct.spec = term;
    ct.label = term.label.empty() ? label_prefix + ".t" + std::to_string(index) : term.label;

    if (std::holds_alternative<InterceptTerm>(term.kind)) {
      ct.col_offset = col_cursor;
      ct.col_count = 1;
      ct.weight_count = 1;
    } else if (const auto* lin = std::get_if<LinearTerm>(&term.kind)) {
      check_features(lin->features, x_train.cols(), ct.label);
      if (lin->features.empty()) throw config_error(ct.label + ": linear term needs features");
      ct.col_offset = col_cursor;
      ct.col_count = static_cast<int>(lin->features.size());
      ct.weight_count = ct.col_count;
      if (lin->lambda) {
        if (term.l1) throw config_error(ct.label + ": term cannot carry both L1 and quadratic penalties");
        ct.has_quad = true;
        ct.lambda = *lin->lambda;
        ct.quad_penalty = Matrix::Identity(ct.col_count, ct.col_count);
      }
    } else if (const auto* sp = std::get_if<SplineTerm>(&term.kind)) {
      check_features({sp->feature}, x_train.cols(), ct.label);
      if (sp->lambda && sp->df) throw config_error(ct.label + ": give lambda or df, not both");
      ct.basis = make_bspline_basis(x_train.col(sp->feature), sp->num_basis, sp->degree);
      Matrix design = ct.basis.eval(Vector(x_train.col(sp->feature)));
      Matrix pen = difference_penalty(sp->num_basis, sp->penalty_order);
      if (sp->sum_to_zero) {
        SumToZero stz = sum_to_zero(design);
        ct.constraint = stz.transform;
        design = std::move(stz.constrained);
        pen = ct.constraint.transpose() * pen * ct.constraint;
      }
      ct.col_offset = col_cursor;
      ct.col_count = static_cast<int>(design.cols());
      ct.weight_count = ct.col_count;
      if (sp->lambda || sp->df) {
        if (term.l1) throw config_error(ct.label + ": term cannot carry both L1 and quadratic penalties");
        ct.has_quad = true;
        ct.quad_penalty = std::move(pen);
        ct.lambda = sp->lambda ? *sp->lambda : df_to_lambda(design, ct.quad_penalty, *sp->df);
      }
    } else if (const auto* dn = std::get_if<DenseTerm>(&term.kind)) {
      std::vector<int> features = dn->features;
      if (features.empty()) {
        features.resize(static_cast<size_t>(x_train.cols()));
        for (Eigen::Index f = 0; f < x_train.cols(); ++f) features[static_cast<size_t>(f)] = static_cast<int>(f);
      }
      check_features(features, x_train.cols(), ct.label);
      if (dn->widths.empty() || dn->widths.back() != 1) {
        throw config_error(ct.label + ": dense term widths must end in an output width of 1");
      }
      for (int w : dn->widths) {
        if (w < 1) throw config_error(ct.label + ": dense layer widths must be >= 1");
      }
      std::get<DenseTerm>(ct.spec.kind).features = features;
      int in = static_cast<int>(features.size());
      int wcount = 0;
      for (int width : dn->widths) {
        ct.layers.emplace_back(in, width);
        wcount += in * width + width;
        in = width;
      }
      ct.weight_count = wcount;
      ct.col_count = 0;
      out.has_dense_ = true;
    }

    if (const auto* lin2 = std::get_if<LinearTerm>(&ct.spec.kind)) {
      for (int f : lin2->features) out.max_feature_ = std::max(out.max_feature_, f);
    } else if (const auto* sp2 = std::get_if<SplineTerm>(&ct.spec.kind)) {
      out.max_feature_ = std::max(out.max_feature_, sp2->feature);
    } else if (const auto* dn2 = std::get_if<DenseTerm>(&ct.spec.kind)) {
      for (int f : dn2->features) out.max_feature_ = std::max(out.max_feature_, f);
    }
    ct.weight_offset = weight_cursor;
    weight_cursor += ct.weight_count;
    col_cursor += ct.col_count;
    out.terms_.push_back(std::move(ct));
    ++index;
  }
  out.struct_cols_ = col_cursor;
  return out;
}

Matrix CompiledPredictor::design(const Matrix& x) const {
  if (max_feature_ >= x.cols()) {
    std::ostringstream os;
    os << "input has " << x.cols() << " features but the predictor uses feature index "
       << max_feature_;
    throw data_error(os.str());
  }
  Matrix d(x.rows(), struct_cols_);
  for (const CompiledTerm& ct : terms_) {
    if (ct.col_count == 0) continue;
    if (std::holds_alternative<InterceptTerm>(ct.spec.kind)) {
      d.col(ct.col_offset).setOnes();
    } else if (const auto* lin = std::get_if<LinearTerm>(&ct.spec.kind)) {
      for (size_t j = 0; j < lin->features.size(); ++j) {
        d.col(ct.col_offset + static_cast<int>(j)) = x.col(lin->features[j]);
      }
    } else if (const auto* sp = std::get_if<SplineTerm>(&ct.spec.kind)) {
      Matrix b = ct.basis.eval(Vector(x.col(sp->feature)));
      if (ct.constraint.size() > 0) b = b * ct.constraint;
      d.middleCols(ct.col_offset, ct.col_count) = b;
    }
  }
  return d;
}

Vector CompiledPredictor::eval_rows(const Vector& weights, const Matrix& design_cache,
                                    const Matrix& x, const IndexVec& rows) const {
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  Vector eta = Vector::Zero(n);
  if (struct_cols_ > 0) {
    // Gather the structured weights for this predictor in design-column order.
    Vector ws(struct_cols_);
    for (const CompiledTerm& ct : terms_) {
      if (ct.col_count > 0) {
        ws.segment(ct.col_offset, ct.col_count) = weights.segment(ct.weight_offset, ct.weight_count);
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) eta[i] = design_cache.row(rows[static_cast<size_t>(i)]).dot(ws);
  }
  if (has_dense_) {
    for (const CompiledTerm& ct : terms_) {
      if (ct.layers.empty()) continue;
      for (Eigen::Index i = 0; i < n; ++i) {
        eta[i] += dense_value(weights, ct, x.row(rows[static_cast<size_t>(i)]).transpose());
      }
    }
  }
  return eta;
}

double CompiledPredictor::dense_value(const Vector& weights, const CompiledTerm& term,
                                      const Vector& x_row) const {
  const auto& dn = std::get<DenseTerm>(term.spec.kind);
  Vector h(dn.features.size());
  for (size_t j = 0; j < dn.features.size(); ++j) h[static_cast<Eigen::Index>(j)] = x_row[dn.features[j]];
  int off = term.weight_offset;
  for (size_t l = 0; l < term.layers.size(); ++l) {
    const auto [in, outw] = term.layers[l];
    Vector z(outw);
    for (int o = 0; o < outw; ++o) {
      double acc = weights[off + in * outw + o];  // bias block follows the weight block
      for (int i = 0; i < in; ++i) acc += weights[off + o * in + i] * h[i];
      z[o] = acc;
    }
    off += in * outw + outw;
    const bool last = (l + 1 == term.layers.size());
    if (!last) {
      for (int o = 0; o < outw; ++o) z[o] = activate(dn.activation, z[o]);
    }
    h = std::move(z);
  }
  return h[0];
}

void CompiledPredictor::dense_backprop(const Vector& weights, const CompiledTerm& term,
                                       const Vector& x_row, double d_out, Vector& grad) const {
  const auto& dn = std::get<DenseTerm>(term.spec.kind);
  Vector h(dn.features.size());
  for (size_t j = 0; j < dn.features.size(); ++j) h[static_cast<Eigen::Index>(j)] = x_row[dn.features[j]];

  // Forward pass, keeping inputs and pre-activations per layer.
  std::vector<Vector> inputs;
  std::vector<Vector> preacts;
  std::vector<int> offsets;
  int off = term.weight_offset;
  for (size_t l = 0; l < term.layers.size(); ++l) {
    const auto [in, outw] = term.layers[l];
    inputs.push_back(h);
    offsets.push_back(off);
    Vector z(outw);
    for (int o = 0; o < outw; ++o) {
      double acc = weights[off + in * outw + o];
      for (int i = 0; i < in; ++i) acc += weights[off + o * in + i] * h[i];
      z[o] = acc;
    }
    preacts.push_back(z);
    off += in * outw + outw;
    const bool last = (l + 1 == term.layers.size());
    Vector a(outw);
    for (int o = 0; o < outw; ++o) a[o] = last ? z[o] : activate(dn.activation, z[o]);
    h = std::move(a);
  }

  // Backward pass.
  Vector delta(1);
  delta[0] = d_out;
  for (size_t l = term.layers.size(); l-- > 0;) {
    const auto [in, outw] = term.layers[l];
    const int o0 = offsets[l];
    const bool last = (l + 1 == term.layers.size());
    Vector dz(outw);
    for (int o = 0; o < outw; ++o) {
      dz[o] = last ? delta[o] : delta[o] * activate_grad(dn.activation, preacts[l][o]);
    }
    Vector dprev = Vector::Zero(in);
    for (int o = 0; o < outw; ++o) {
      for (int i = 0; i < in; ++i) {
        grad[o0 + o * in + i] += dz[o] * inputs[l][i];
        dprev[i] += dz[o] * weights[o0 + o * in + i];
      }
      grad[o0 + in * outw + o] += dz[o];
    }
    delta = std::move(dprev);
  }
}

void CompiledPredictor::accumulate_grad(const Vector& weights, const Matrix& design_cache,
                                        const Matrix& x, const IndexVec& rows, const Vector& d_eta,
                                        Vector& grad) const {
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  if (struct_cols_ > 0) {
    Vector gs = Vector::Zero(struct_cols_);
    for (Eigen::Index i = 0; i < n; ++i) {
      gs += d_eta[i] * design_cache.row(rows[static_cast<size_t>(i)]).transpose();
    }
    for (const CompiledTerm& ct : terms_) {
      if (ct.col_count > 0 && ct.spec.trainable) {
        grad.segment(ct.weight_offset, ct.weight_count) += gs.segment(ct.col_offset, ct.col_count);
      }
    }
  }
  for (const CompiledTerm& ct : terms_) {
    if (ct.layers.empty() || !ct.spec.trainable) continue;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d_eta[i] != 0.0) {
        dense_backprop(weights, ct, x.row(rows[static_cast<size_t>(i)]).transpose(), d_eta[i], grad);
      }
    }
  }
}

double CompiledPredictor::eval_row(const Vector& weights, const Vector& x_row) const {
  Matrix x(1, x_row.size());
  x.row(0) = x_row.transpose();
  const Matrix d = design(x);
  return eval_rows(weights, d, x, {0})[0];
}

double penalty_value(const std::vector<const CompiledPredictor*>& predictors,
                     const Vector& weights, const PenaltyConfig& config) {
  double value = 0.0;
  for (const CompiledPredictor* pred : predictors) {
    for (const CompiledTerm& ct : pred->terms()) {
      const auto w = weights.segment(ct.weight_offset, ct.weight_count);
      if (ct.spec.l1) value += config.rho * w.cwiseAbs().sum();
      if (ct.has_quad) value += ct.lambda * w.dot(ct.quad_penalty * w);
    }
  }
  return value;
}

void accumulate_penalty_grad(const std::vector<const CompiledPredictor*>& predictors,
                             const Vector& weights, const PenaltyConfig& config, double scale,
                             Vector& grad) {
  for (const CompiledPredictor* pred : predictors) {
    for (const CompiledTerm& ct : pred->terms()) {
      if (!ct.spec.trainable) continue;
      const auto w = weights.segment(ct.weight_offset, ct.weight_count);
      auto g = grad.segment(ct.weight_offset, ct.weight_count);
      if (ct.spec.l1) {
        for (Eigen::Index i = 0; i < w.size(); ++i) {
          g[i] += scale * config.rho * (w[i] > 0.0 ? 1.0 : (w[i] < 0.0 ? -1.0 : 0.0));
        }
      }
      if (ct.has_quad) g += scale * 2.0 * ct.lambda * (ct.quad_penalty * w);
    }
  }
}

}  // namespace nmdr
