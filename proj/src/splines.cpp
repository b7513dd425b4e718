#include "nmdr/splines.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nmdr/errors.hpp"

namespace nmdr {
namespace {

// Index of the knot span containing x, for clamped knot vectors.
int find_span(const std::vector<double>& knots, int degree, int num_basis, double x) {
  const int last = num_basis;  // spans live in [degree, num_basis - 1]
  if (x >= knots[static_cast<size_t>(last)]) return num_basis - 1;
  if (x <= knots[static_cast<size_t>(degree)]) return degree;
  int lo = degree, hi = last;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (x < knots[static_cast<size_t>(mid)]) hi = mid; else lo = mid;
  }
  return lo;
}

}  // namespace

Vector BsplineBasis::eval(double x) const {
  const double a = knots[static_cast<size_t>(degree)];
  const double b = knots[static_cast<size_t>(num_basis)];
  x = std::min(b, std::max(a, x));

  const int span = find_span(knots, degree, num_basis, x);
  // de Boor triangular scheme: N[j] holds the nonzero functions on this span.
  std::vector<double> N(static_cast<size_t>(degree) + 1, 0.0);
  std::vector<double> left(static_cast<size_t>(degree) + 1, 0.0);
  std::vector<double> right(static_cast<size_t>(degree) + 1, 0.0);
  N[0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[static_cast<size_t>(j)] = x - knots[static_cast<size_t>(span + 1 - j)];
    right[static_cast<size_t>(j)] = knots[static_cast<size_t>(span + j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[static_cast<size_t>(r + 1)] + left[static_cast<size_t>(j - r)];
      const double temp = denom > 0.0 ? N[static_cast<size_t>(r)] / denom : 0.0;
      N[static_cast<size_t>(r)] = saved + right[static_cast<size_t>(r + 1)] * temp;
      saved = left[static_cast<size_t>(j - r)] * temp;
    }
    N[static_cast<size_t>(j)] = saved;
  }

  Vector out = Vector::Zero(num_basis);
  for (int j = 0; j <= degree; ++j) {
    out[span - degree + j] = N[static_cast<size_t>(j)];
  }
  return out;
}

Matrix BsplineBasis::eval(const Vector& x) const {
  Matrix out(x.size(), num_basis);
  for (Eigen::Index i = 0; i < x.size(); ++i) out.row(i) = eval(x[i]).transpose();
  return out;
}

BsplineBasis make_bspline_basis(const Vector& x, int num_basis, int degree) {
  if (degree < 1) throw config_error("spline degree must be >= 1");
  if (num_basis < degree + 2) {
    std::ostringstream os;
    os << "num_basis (" << num_basis << ") must be >= degree + 2 (" << degree + 2 << ")";
    throw config_error(os.str());
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw numeric_error("spline construction sample contains non-finite values");
  }

  std::vector<double> sorted(x.data(), x.data() + x.size());
  std::sort(sorted.begin(), sorted.end());
  double lo = sorted.front();
  double hi = sorted.back();
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  } else {
    const double pad = 1e-6 * (hi - lo);
    lo -= pad;
    hi += pad;
  }

  const int n_interior = num_basis - degree - 1;
  std::vector<double> interior(static_cast<size_t>(n_interior));
  for (int k = 0; k < n_interior; ++k) {
    interior[static_cast<size_t>(k)] =
        quantile_sorted(sorted, static_cast<double>(k + 1) / (n_interior + 1));
  }
  // Ties in the sample can collapse quantile knots; fall back to a uniform grid.
  bool strict = true;
  double prev = lo;
  for (double v : interior) {
    if (v <= prev) { strict = false; break; }
    prev = v;
  }
  if (!strict || (n_interior > 0 && interior.back() >= hi)) {
    for (int k = 0; k < n_interior; ++k) {
      interior[static_cast<size_t>(k)] = lo + (hi - lo) * (k + 1) / (n_interior + 1);
    }
  }

  BsplineBasis basis;
  basis.num_basis = num_basis;
  basis.degree = degree;
  basis.knots.reserve(static_cast<size_t>(num_basis + degree + 1));
  for (int i = 0; i <= degree; ++i) basis.knots.push_back(lo);
  basis.knots.insert(basis.knots.end(), interior.begin(), interior.end());
  for (int i = 0; i <= degree; ++i) basis.knots.push_back(hi);
  return basis;
}

Matrix bspline_design(const Vector& x, int num_basis, int degree) {
  return make_bspline_basis(x, num_basis, degree).eval(x);
}

Matrix difference_penalty(int num_basis, int order) {
  if (order < 1 || order >= num_basis) {
    throw config_error("difference penalty order must satisfy 1 <= order < num_basis");
  }
  Matrix d = Matrix::Identity(num_basis, num_basis);
  for (int k = 0; k < order; ++k) {
    const Eigen::Index rows = d.rows() - 1;
    Matrix next(rows, num_basis);
    for (Eigen::Index i = 0; i < rows; ++i) next.row(i) = d.row(i + 1) - d.row(i);
    d = std::move(next);
  }
  return d.transpose() * d;
}

SumToZero sum_to_zero(const Matrix& basis) {
  const Eigen::Index q = basis.cols();
  if (matrix_rank(basis) < q) {
    std::ostringstream os;
    os << "sum-to-zero constraint: basis (" << basis.rows() << "x" << q
       << ") is rank deficient on the data";
    throw numeric_error(os.str());
  }
  // Null space of the constraint c'w = 0 with c = basis' * 1, taken from the
  // trailing columns of a full Householder Q.
  const Vector c = basis.colwise().sum().transpose();
  Eigen::HouseholderQR<Matrix> qr(c);
  const Matrix qfull = qr.householderQ();
  SumToZero out;
  out.transform = qfull.rightCols(q - 1);
  out.constrained = basis * out.transform;
  return out;
}

int matrix_rank(const Matrix& m) {
  if (m.size() == 0) return 0;
  Eigen::ColPivHouseholderQR<Matrix> qr(m);
  qr.setThreshold(1e-9);
  return static_cast<int>(qr.rank());
}

int nullspace_dim(const Matrix& psd) {
  if (psd.size() == 0) return 0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(psd);
  const Vector ev = es.eigenvalues();
  const double tol = std::max(1e-12, 1e-10 * std::max(1.0, ev.maxCoeff()));
  int dim = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (std::abs(ev[i]) < tol) ++dim;
  }
  return dim;
}

double df_for_lambda(const Matrix& design, const Matrix& penalty, double lambda) {
  if (lambda < 0.0) throw config_error("lambda must be non-negative");
  if (lambda == 0.0) return static_cast<double>(matrix_rank(design));
  const Matrix gram = design.transpose() * design;

  Eigen::LLT<Matrix> chol(gram);
  if (chol.info() == Eigen::Success) {
    // Whitened form: with G = LL' and S = L^-1 P L^-T (PSD),
    // df(lambda) = sum_i 1 / (1 + lambda * s_i), exactly monotone in lambda
    // and stable for arbitrarily large lambda.
    const Matrix linv_p = chol.matrixL().solve(penalty);
    const Matrix s = chol.matrixL().solve(linv_p.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (s + s.transpose()));
    const Vector ev = es.eigenvalues();
    const double tol = std::max(1e-14, 1e-11 * std::max(1.0, ev.maxCoeff()));
    double df = 0.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      const double si = ev[i] < tol ? 0.0 : ev[i];
      df += std::isinf(lambda) ? (si == 0.0 ? 1.0 : 0.0) : 1.0 / (1.0 + lambda * si);
    }
    return df;
  }

  // Rank-deficient design: fall back to the direct trace.
  if (std::isinf(lambda)) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(penalty);
    const Vector ev = es.eigenvalues();
    const double tol = std::max(1e-12, 1e-10 * std::max(1.0, ev.maxCoeff()));
    std::vector<Eigen::Index> null_cols;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      if (std::abs(ev[i]) < tol) null_cols.push_back(i);
    }
    if (null_cols.empty()) return 0.0;
    Matrix z(penalty.rows(), static_cast<Eigen::Index>(null_cols.size()));
    for (size_t j = 0; j < null_cols.size(); ++j) {
      z.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(null_cols[j]);
    }
    return static_cast<double>(matrix_rank(design * z));
  }
  const Matrix a = gram + lambda * penalty;
  return a.ldlt().solve(gram).trace();
}

double df_to_lambda(const Matrix& design, const Matrix& penalty, double target_df) {
  const double df_max = static_cast<double>(matrix_rank(design));
  const double df_min = df_for_lambda(design, penalty, std::numeric_limits<double>::infinity());
  if (target_df < df_min - 1e-9 || target_df > df_max + 1e-9) {
    std::ostringstream os;
    os << "target df " << target_df << " outside attainable range [" << df_min << ", "
       << df_max << "]";
    throw config_error(os.str());
  }

  double lo = -12.0, hi = 12.0;  // log10(lambda)
  // df must decrease along lambda for bisection to be valid.
  double prev = df_for_lambda(design, penalty, std::pow(10.0, lo));
  for (double g = lo + 4.0; g <= hi; g += 4.0) {
    const double cur = df_for_lambda(design, penalty, std::pow(10.0, g));
    if (cur > prev + 1e-6) throw numeric_error("df(lambda) is not decreasing on the bisection grid");
    prev = cur;
  }

  const double df_lo = df_for_lambda(design, penalty, std::pow(10.0, lo));
  const double df_hi = df_for_lambda(design, penalty, std::pow(10.0, hi));
  if (target_df >= df_lo) return std::pow(10.0, lo);
  if (target_df <= df_hi) return std::pow(10.0, hi);

  double mid = 0.0;
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    const double df = df_for_lambda(design, penalty, std::pow(10.0, mid));
    if (std::abs(df - target_df) < 1e-7) break;
    if (df > target_df) lo = mid; else hi = mid;
  }
  return std::pow(10.0, mid);
}

}  // namespace nmdr
