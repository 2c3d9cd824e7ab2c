#pragma once

#include <memory>
#include <string_view>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/LU>

#include "rflex/types.hpp"

namespace rflex {

enum class OperatorKind { dense, diagonal, composite, convolution2d, radon, identity };

std::string_view to_string(OperatorKind kind);

namespace detail {
class OperatorImpl;
}

/// Immutable matrix-free linear map R^cols -> R^rows with an adjoint.
///
/// Copies share the underlying implementation; an operator never changes after
/// construction, so it may be read concurrently from several threads.
class LinearOperator {
 public:
  LinearOperator();  // 0x0 identity

  static LinearOperator identity(Index n);
  /// Stored row-major.
  static LinearOperator dense(const Eigen::Ref<const Matrix>& matrix);
  static LinearOperator diagonal(const Vector& entries);
  static LinearOperator sparse(Eigen::SparseMatrix<Scalar, Eigen::RowMajor> matrix, OperatorKind kind);

  Index rows() const;
  Index cols() const;
  OperatorKind kind() const;

  Vector apply(const Vector& x) const;
  Vector apply_adjoint(const Vector& y) const;

  /// Column-by-column application to a block.
  Matrix apply_block(const Matrix& x) const;
  Matrix apply_adjoint_block(const Matrix& y) const;

  /// Available for identity, diagonal (nonzero entries), square dense, and
  /// composites of those.
  LinearOperator inverse() const;
  bool is_identity() const;

  /// Underlying implementation, for kind-specific inspection.
  const detail::OperatorImpl& impl() const { return *impl_; }

  explicit LinearOperator(std::shared_ptr<const detail::OperatorImpl> impl);

 private:
  std::shared_ptr<const detail::OperatorImpl> impl_;
};

namespace detail {

class OperatorImpl {
 public:
  virtual ~OperatorImpl() = default;
  virtual Index rows() const = 0;
  virtual Index cols() const = 0;
  virtual OperatorKind kind() const = 0;
  virtual void apply(const Vector& x, Vector& y) const = 0;
  virtual void apply_adjoint(const Vector& y, Vector& x) const = 0;
};

class DenseImpl final : public OperatorImpl {
 public:
  explicit DenseImpl(RowMajorMatrix m) : m_(std::move(m)) {}
  Index rows() const override { return m_.rows(); }
  Index cols() const override { return m_.cols(); }
  OperatorKind kind() const override { return OperatorKind::dense; }
  void apply(const Vector& x, Vector& y) const override { y.noalias() = m_ * x; }
  void apply_adjoint(const Vector& y, Vector& x) const override { x.noalias() = m_.transpose() * y; }
  const RowMajorMatrix& matrix() const { return m_; }

 private:
  RowMajorMatrix m_;
};

class DiagonalImpl final : public OperatorImpl {
 public:
  explicit DiagonalImpl(Vector d) : d_(std::move(d)) {}
  Index rows() const override { return d_.size(); }
  Index cols() const override { return d_.size(); }
  OperatorKind kind() const override { return OperatorKind::diagonal; }
  void apply(const Vector& x, Vector& y) const override { y = d_.cwiseProduct(x); }
  void apply_adjoint(const Vector& y, Vector& x) const override { x = d_.cwiseProduct(y); }
  const Vector& entries() const { return d_; }

 private:
  Vector d_;
};

class IdentityImpl final : public OperatorImpl {
 public:
  explicit IdentityImpl(Index n) : n_(n) {}
  Index rows() const override { return n_; }
  Index cols() const override { return n_; }
  OperatorKind kind() const override { return OperatorKind::identity; }
  void apply(const Vector& x, Vector& y) const override { y = x; }
  void apply_adjoint(const Vector& y, Vector& x) const override { x = y; }

 private:
  Index n_;
};

/// Explicit sparse matrix; backs the Radon projector.
class SparseImpl final : public OperatorImpl {
 public:
  SparseImpl(Eigen::SparseMatrix<Scalar, Eigen::RowMajor> m, OperatorKind kind)
      : m_(std::move(m)), mt_(m_.transpose()), kind_(kind) {}
  Index rows() const override { return m_.rows(); }
  Index cols() const override { return m_.cols(); }
  OperatorKind kind() const override { return kind_; }
  void apply(const Vector& x, Vector& y) const override { y = m_ * x; }
  void apply_adjoint(const Vector& y, Vector& x) const override { x = mt_ * y; }
  const Eigen::SparseMatrix<Scalar, Eigen::RowMajor>& matrix() const { return m_; }

 private:
  Eigen::SparseMatrix<Scalar, Eigen::RowMajor> m_;
  Eigen::SparseMatrix<Scalar, Eigen::RowMajor> mt_;
  OperatorKind kind_;
};

class CompositeImpl final : public OperatorImpl {
 public:
  explicit CompositeImpl(std::vector<LinearOperator> factors) : factors_(std::move(factors)) {}
  Index rows() const override { return factors_.front().rows(); }
  Index cols() const override { return factors_.back().cols(); }
  OperatorKind kind() const override { return OperatorKind::composite; }
  void apply(const Vector& x, Vector& y) const override;
  void apply_adjoint(const Vector& y, Vector& x) const override;
  const std::vector<LinearOperator>& factors() const { return factors_; }

 private:
  std::vector<LinearOperator> factors_;
};

/// Periodic 2-D convolution of an nx-by-ny image (column-major vectorization,
/// pixel (r, c) at r + nx * c) with a (2 r_x + 1) x (2 r_y + 1) kernel centred
/// at the origin, by direct summation.
class ConvolutionImpl final : public OperatorImpl {
 public:
  ConvolutionImpl(Index nx, Index ny, Matrix kernel);
  Index rows() const override { return nx_ * ny_; }
  Index cols() const override { return nx_ * ny_; }
  OperatorKind kind() const override { return OperatorKind::convolution2d; }
  void apply(const Vector& x, Vector& y) const override;
  void apply_adjoint(const Vector& y, Vector& x) const override;
  const Matrix& kernel() const { return kernel_; }
  Index nx() const { return nx_; }
  Index ny() const { return ny_; }

 private:
  void correlate(const Vector& in, Vector& out, bool flip) const;
  Index nx_;
  Index ny_;
  Matrix kernel_;
};

}  // namespace detail

Vector apply(const LinearOperator& op, const Vector& x);
Vector apply_adjoint(const LinearOperator& op, const Vector& y);

/// ops[0] * ops[1] * ... * ops.back(); the forward map applies right to left.
LinearOperator compose(std::vector<LinearOperator> ops);

/// Dense copy of the operator, built by applying it to unit vectors.
Matrix materialize(const LinearOperator& op);

/// Normalized (sum one), truncated Gaussian point-spread function of radius
/// ceil(3 sigma).
Matrix gaussian_psf(double sigma, Index radius = -1);

LinearOperator convolution2d(Index nx, Index ny, const Matrix& kernel);

/// Parallel-beam geometry on an nx-by-nx grid of unit pixels centred at the
/// origin. Pixel (r, c) has centre (c - (nx-1)/2, (nx-1)/2 - r) and index
/// r + nx * c. Angles (degrees) are equispaced in (0, 180]; the n_rays
/// detector offsets are bin centres spanning a width of sqrt(2) * nx.
struct RadonGeometry {
  Index nx = 0;
  Index n_angles = 0;
  Index n_rays = 0;

  std::vector<double> angles_degrees() const;
  std::vector<double> ray_offsets() const;
};

/// Ray-driven projector with exact (Siddon) ray-pixel intersection lengths.
/// Row index is ray + n_rays * angle.
LinearOperator radon(const RadonGeometry& geometry);

/// Length of the chord of the ray {t * theta + s * theta_perp} through the
/// axis-aligned box [x0, x1] x [y0, y1]; used as an independent check of the
/// projector.
double chord_length(double angle_degrees, double offset, double x0, double x1, double y0, double y1);

/// Power-iteration estimate of the spectral norm.
double estimate_norm2(const LinearOperator& op, int iterations = 50, std::uint64_t seed = 7);

}  // namespace rflex
