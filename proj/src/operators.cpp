#include "rflex/operators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "rflex/rng.hpp"

namespace rflex {

std::string_view to_string(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::dense: return "dense";
    case OperatorKind::diagonal: return "diagonal";
    case OperatorKind::composite: return "composite";
    case OperatorKind::convolution2d: return "convolution2d";
    case OperatorKind::radon: return "radon";
    case OperatorKind::identity: return "identity";
  }
  return "unknown";
}

LinearOperator::LinearOperator() : impl_(std::make_shared<detail::IdentityImpl>(0)) {}

LinearOperator::LinearOperator(std::shared_ptr<const detail::OperatorImpl> impl) : impl_(std::move(impl)) {}

LinearOperator LinearOperator::identity(Index n) {
  if (n <= 0) throw DimensionError("identity operator needs a positive dimension");
  return LinearOperator(std::make_shared<detail::IdentityImpl>(n));
}

LinearOperator LinearOperator::dense(const Eigen::Ref<const Matrix>& matrix) {
  if (matrix.rows() <= 0 || matrix.cols() <= 0) throw DimensionError("dense operator needs positive dimensions");
  return LinearOperator(std::make_shared<detail::DenseImpl>(RowMajorMatrix(matrix)));
}

LinearOperator LinearOperator::diagonal(const Vector& entries) {
  if (entries.size() <= 0) throw DimensionError("diagonal operator needs a positive dimension");
  return LinearOperator(std::make_shared<detail::DiagonalImpl>(entries));
}

LinearOperator LinearOperator::sparse(Eigen::SparseMatrix<Scalar, Eigen::RowMajor> matrix, OperatorKind kind) {
  matrix.makeCompressed();
  return LinearOperator(std::make_shared<detail::SparseImpl>(std::move(matrix), kind));
}

Index LinearOperator::rows() const { return impl_->rows(); }
Index LinearOperator::cols() const { return impl_->cols(); }
OperatorKind LinearOperator::kind() const { return impl_->kind(); }

Vector LinearOperator::apply(const Vector& x) const {
  if (x.size() != cols())
    throw DimensionError("apply: operator is " + shape_string(rows(), cols()) + " but input has length " +
                         std::to_string(x.size()));
  Vector y(rows());
  impl_->apply(x, y);
  return y;
}

Vector LinearOperator::apply_adjoint(const Vector& y) const {
  if (y.size() != rows())
    throw DimensionError("apply_adjoint: operator is " + shape_string(rows(), cols()) + " but input has length " +
                         std::to_string(y.size()));
  Vector x(cols());
  impl_->apply_adjoint(y, x);
  return x;
}

Matrix LinearOperator::apply_block(const Matrix& x) const {
  if (x.rows() != cols())
    throw DimensionError("apply: operator is " + shape_string(rows(), cols()) + " but block is " +
                         shape_string(x.rows(), x.cols()));
  Matrix y(rows(), x.cols());
  Vector col(rows());
  for (Index j = 0; j < x.cols(); ++j) {
    impl_->apply(x.col(j), col);
    y.col(j) = col;
  }
  return y;
}

Matrix LinearOperator::apply_adjoint_block(const Matrix& y) const {
  if (y.rows() != rows())
    throw DimensionError("apply_adjoint: operator is " + shape_string(rows(), cols()) + " but block is " +
                         shape_string(y.rows(), y.cols()));
  Matrix x(cols(), y.cols());
  Vector col(cols());
  for (Index j = 0; j < y.cols(); ++j) {
    impl_->apply_adjoint(y.col(j), col);
    x.col(j) = col;
  }
  return x;
}

bool LinearOperator::is_identity() const { return kind() == OperatorKind::identity; }

LinearOperator LinearOperator::inverse() const {
  switch (kind()) {
    case OperatorKind::identity: return *this;
    case OperatorKind::diagonal: {
      const auto& d = static_cast<const detail::DiagonalImpl&>(*impl_).entries();
      if ((d.array() == 0.0).any()) throw NumericalError("diagonal operator has a zero entry and is not invertible");
      return diagonal(d.cwiseInverse());
    }
    case OperatorKind::dense: {
      if (rows() != cols()) throw DimensionError("only square dense operators can be inverted");
      const Matrix m = static_cast<const detail::DenseImpl&>(*impl_).matrix();
      Eigen::FullPivLU<Matrix> lu(m);
      if (!lu.isInvertible()) throw NumericalError("dense operator is singular");
      return dense(lu.inverse());
    }
    case OperatorKind::composite: {
      const auto& factors = static_cast<const detail::CompositeImpl&>(*impl_).factors();
      std::vector<LinearOperator> inv;
      inv.reserve(factors.size());
      for (auto it = factors.rbegin(); it != factors.rend(); ++it) inv.push_back(it->inverse());
      return compose(std::move(inv));
    }
    default:
      throw NumericalError(std::string("no inverse available for operator kind ") + std::string(to_string(kind())));
  }
}

namespace detail {

void CompositeImpl::apply(const Vector& x, Vector& y) const {
  Vector cur = x;
  for (auto it = factors_.rbegin(); it != factors_.rend(); ++it) {
    Vector next(it->rows());
    it->impl().apply(cur, next);
    cur.swap(next);
  }
  y = std::move(cur);
}

void CompositeImpl::apply_adjoint(const Vector& y, Vector& x) const {
  Vector cur = y;
  for (const auto& f : factors_) {
    Vector next(f.cols());
    f.impl().apply_adjoint(cur, next);
    cur.swap(next);
  }
  x = std::move(cur);
}

ConvolutionImpl::ConvolutionImpl(Index nx, Index ny, Matrix kernel) : nx_(nx), ny_(ny), kernel_(std::move(kernel)) {
  if (nx <= 0 || ny <= 0) throw DimensionError("convolution needs a positive image size");
  if (kernel_.rows() % 2 == 0 || kernel_.cols() % 2 == 0)
    throw DimensionError("convolution kernel must have odd dimensions, got " +
                         shape_string(kernel_.rows(), kernel_.cols()));
}

void ConvolutionImpl::correlate(const Vector& in, Vector& out, bool adjoint) const {
  const Index rx = kernel_.rows() / 2;
  const Index ry = kernel_.cols() / 2;
  const int sign = adjoint ? 1 : -1;
  out.setZero(nx_ * ny_);
  for (Index c = 0; c < ny_; ++c) {
    for (Index r = 0; r < nx_; ++r) {
      double acc = 0.0;
      for (Index b = -ry; b <= ry; ++b) {
        Index cc = (c + sign * b) % ny_;
        if (cc < 0) cc += ny_;
        const double* src = in.data() + nx_ * cc;
        for (Index a = -rx; a <= rx; ++a) {
          Index rr = (r + sign * a) % nx_;
          if (rr < 0) rr += nx_;
          acc += kernel_(a + rx, b + ry) * src[rr];
        }
      }
      out(r + nx_ * c) = acc;
    }
  }
}

void ConvolutionImpl::apply(const Vector& x, Vector& y) const { correlate(x, y, false); }
void ConvolutionImpl::apply_adjoint(const Vector& y, Vector& x) const { correlate(y, x, true); }

}  // namespace detail

Vector apply(const LinearOperator& op, const Vector& x) { return op.apply(x); }
Vector apply_adjoint(const LinearOperator& op, const Vector& y) { return op.apply_adjoint(y); }

LinearOperator compose(std::vector<LinearOperator> ops) {
  if (ops.empty()) throw DimensionError("compose needs at least one operator");
  for (std::size_t i = 0; i + 1 < ops.size(); ++i) {
    if (ops[i].cols() != ops[i + 1].rows())
      throw DimensionError("compose: factor " + std::to_string(i) + " is " +
                           shape_string(ops[i].rows(), ops[i].cols()) + " but factor " + std::to_string(i + 1) +
                           " is " + shape_string(ops[i + 1].rows(), ops[i + 1].cols()));
  }
  if (ops.size() == 1) return ops.front();
  return LinearOperator(std::make_shared<detail::CompositeImpl>(std::move(ops)));
}

Matrix materialize(const LinearOperator& op) {
  Matrix out(op.rows(), op.cols());
  Vector e = Vector::Zero(op.cols());
  for (Index j = 0; j < op.cols(); ++j) {
    e(j) = 1.0;
    out.col(j) = op.apply(e);
    e(j) = 0.0;
  }
  return out;
}

Matrix gaussian_psf(double sigma, Index radius) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_psf: sigma must be positive");
  if (radius < 0) radius = static_cast<Index>(std::ceil(3.0 * sigma));
  const Index w = 2 * radius + 1;
  Matrix k(w, w);
  for (Index b = 0; b < w; ++b)
    for (Index a = 0; a < w; ++a) {
      const double da = static_cast<double>(a - radius);
      const double db = static_cast<double>(b - radius);
      k(a, b) = std::exp(-(da * da + db * db) / (2.0 * sigma * sigma));
    }
  return k / k.sum();
}

LinearOperator convolution2d(Index nx, Index ny, const Matrix& kernel) {
  return LinearOperator(std::make_shared<detail::ConvolutionImpl>(nx, ny, kernel));
}

std::vector<double> RadonGeometry::angles_degrees() const {
  std::vector<double> out(static_cast<std::size_t>(n_angles));
  for (Index i = 0; i < n_angles; ++i) out[i] = 180.0 * static_cast<double>(i + 1) / static_cast<double>(n_angles);
  return out;
}

std::vector<double> RadonGeometry::ray_offsets() const {
  const double width = std::sqrt(2.0) * static_cast<double>(nx);
  const double step = width / static_cast<double>(n_rays);
  std::vector<double> out(static_cast<std::size_t>(n_rays));
  for (Index j = 0; j < n_rays; ++j) out[j] = -0.5 * width + (static_cast<double>(j) + 0.5) * step;
  return out;
}

namespace {

// Parametric interval [s_lo, s_hi] of p(s) = t*(c, s_) + s*(-s_, c) inside the
// box; empty when s_lo >= s_hi.
bool clip_ray(double cs, double sn, double t, double x0, double x1, double y0, double y1, double& s_lo,
              double& s_hi) {
  s_lo = -std::numeric_limits<double>::infinity();
  s_hi = std::numeric_limits<double>::infinity();
  const double px = t * cs;
  const double py = t * sn;
  const double dx = -sn;
  const double dy = cs;
  auto clip = [&](double p0, double d, double lo, double hi) {
    if (std::abs(d) < 1e-15) return p0 >= lo && p0 <= hi;
    double a = (lo - p0) / d;
    double b = (hi - p0) / d;
    if (a > b) std::swap(a, b);
    s_lo = std::max(s_lo, a);
    s_hi = std::min(s_hi, b);
    return true;
  };
  if (!clip(px, dx, x0, x1)) return false;
  if (!clip(py, dy, y0, y1)) return false;
  return s_lo < s_hi;
}

}  // namespace

double chord_length(double angle_degrees, double offset, double x0, double x1, double y0, double y1) {
  const double theta = angle_degrees * std::numbers::pi / 180.0;
  double s_lo = 0.0;
  double s_hi = 0.0;
  if (!clip_ray(std::cos(theta), std::sin(theta), offset, x0, x1, y0, y1, s_lo, s_hi)) return 0.0;
  return s_hi - s_lo;
}

LinearOperator radon(const RadonGeometry& g) {
  if (g.nx <= 0 || g.n_angles <= 0 || g.n_rays <= 0) throw DimensionError("radon: geometry sizes must be positive");
  const Index nx = g.nx;
  const double half = 0.5 * static_cast<double>(nx);
  const auto angles = g.angles_degrees();
  const auto offsets = g.ray_offsets();

  std::vector<Eigen::Triplet<Scalar>> triplets;
  triplets.reserve(static_cast<std::size_t>(g.n_angles * g.n_rays * 2 * nx));
  std::vector<double> knots;
  knots.reserve(static_cast<std::size_t>(2 * nx + 4));

  for (Index ia = 0; ia < g.n_angles; ++ia) {
    const double theta = angles[ia] * std::numbers::pi / 180.0;
    const double cs = std::cos(theta);
    const double sn = std::sin(theta);
    for (Index ir = 0; ir < g.n_rays; ++ir) {
      const double t = offsets[ir];
      double s_lo = 0.0;
      double s_hi = 0.0;
      if (!clip_ray(cs, sn, t, -half, half, -half, half, s_lo, s_hi)) continue;
      knots.clear();
      knots.push_back(s_lo);
      knots.push_back(s_hi);
      // Crossings with the vertical lines x = -half + i and horizontal lines
      // y = -half + i.
      if (std::abs(sn) > 1e-15) {
        for (Index i = 0; i <= nx; ++i) {
          const double s = (t * cs - (-half + static_cast<double>(i))) / sn;
          if (s > s_lo && s < s_hi) knots.push_back(s);
        }
      }
      if (std::abs(cs) > 1e-15) {
        for (Index i = 0; i <= nx; ++i) {
          const double s = ((-half + static_cast<double>(i)) - t * sn) / cs;
          if (s > s_lo && s < s_hi) knots.push_back(s);
        }
      }
      std::sort(knots.begin(), knots.end());
      const Index row = ir + g.n_rays * ia;
      for (std::size_t q = 0; q + 1 < knots.size(); ++q) {
        const double len = knots[q + 1] - knots[q];
        if (len <= 1e-12) continue;
        const double sm = 0.5 * (knots[q] + knots[q + 1]);
        const double x = t * cs - sm * sn;
        const double y = t * sn + sm * cs;
        const Index c = static_cast<Index>(std::floor(x + half));
        const Index r = static_cast<Index>(std::floor(half - y));
        if (c < 0 || c >= nx || r < 0 || r >= nx) continue;
        triplets.emplace_back(row, r + nx * c, len);
      }
    }
  }
  Eigen::SparseMatrix<Scalar, Eigen::RowMajor> m(g.n_angles * g.n_rays, nx * nx);
  m.setFromTriplets(triplets.begin(), triplets.end());
  return LinearOperator::sparse(std::move(m), OperatorKind::radon);
}

double estimate_norm2(const LinearOperator& op, int iterations, std::uint64_t seed) {
  CounterRng rng(seed, 0x6e6f726d);
  Vector v = normal_vector(rng, op.cols());
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Vector w = op.apply_adjoint(op.apply(v));
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    sigma = std::sqrt(nw);
    v = w / nw;
  }
  return sigma;
}

}  // namespace rflex
