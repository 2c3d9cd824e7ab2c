#include "rflex/projected.hpp"

#include <cmath>

#include <Eigen/QR>
#include <Eigen/SVD>

namespace rflex {

Matrix triangular_factor(const Matrix& m) {
  const Index k = m.cols();
  Matrix padded = m;
  if (m.rows() < k) {
    padded = Matrix::Zero(k, k);
    padded.topRows(m.rows()) = m;
  }
  Eigen::HouseholderQR<Matrix> qr(padded);
  return qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
}

ProjectedProblem make_projected_problem(const Matrix& s1_az, const Vector& s1_b, const Matrix& s2_wz) {
  if (s1_az.rows() != s1_b.size() || s1_az.cols() != s2_wz.cols())
    throw DimensionError("make_projected_problem: blocks " + shape_string(s1_az.rows(), s1_az.cols()) + " and " +
                         shape_string(s2_wz.rows(), s2_wz.cols()) + " with rhs length " +
                         std::to_string(s1_b.size()));
  const Index k = s1_az.cols();
  if (s1_az.rows() < k) throw DimensionError("make_projected_problem: sketch has fewer rows than columns");
  Eigen::HouseholderQR<Matrix> qr(s1_az);
  ProjectedProblem pp;
  pp.r1 = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  const Vector qtb = qr.householderQ().transpose() * s1_b;
  pp.beta = qtb.head(k);
  pp.beta_perp = qtb.tail(qtb.size() - k).norm();
  pp.r2 = triangular_factor(s2_wz);
  return pp;
}

IncrementalQr::IncrementalQr(Index rows) : q_(rows, 8), r_(Matrix::Zero(8, 8)) {}

void IncrementalQr::append(const Vector& column) {
  if (column.size() != q_.rows())
    throw DimensionError("IncrementalQr: column has length " + std::to_string(column.size()) + ", expected " +
                         std::to_string(q_.rows()));
  if (k_ == q_.cols()) {
    const Index next = 2 * q_.cols();
    q_.conservativeResize(Eigen::NoChange, next);
    Matrix r = Matrix::Zero(next, next);
    r.topLeftCorner(k_, k_) = r_.topLeftCorner(k_, k_);
    r_.swap(r);
  }
  Vector a = column;
  Vector coeffs = Vector::Zero(k_);
  for (int pass = 0; pass < 2; ++pass) {
    const Vector c = q_.leftCols(k_).transpose() * a;
    a -= q_.leftCols(k_) * c;
    coeffs += c;
  }
  const double rho = a.norm();
  r_.block(0, k_, k_, 1) = coeffs;
  r_(k_, k_) = rho;
  if (rho > 0.0) {
    q_.col(k_) = a / rho;
  } else {
    q_.col(k_).setZero();
  }
  ++k_;
}

Vector solve_projected_tikhonov(const ProjectedProblem& pp, double lambda) {
  const Index k = pp.k();
  if (lambda < 0.0) throw std::invalid_argument("solve_projected_tikhonov: lambda must be non-negative");
  if (pp.beta.size() != k || pp.r2.rows() != k || pp.r2.cols() != k)
    throw DimensionError("solve_projected_tikhonov: R1 is " + shape_string(pp.r1.rows(), k) + ", R2 " +
                         shape_string(pp.r2.rows(), pp.r2.cols()) + ", beta length " +
                         std::to_string(pp.beta.size()));
  if (k == 0) return Vector();
  Matrix stacked(lambda > 0.0 ? 2 * k : k, k);
  Vector rhs = Vector::Zero(stacked.rows());
  stacked.topRows(k) = pp.r1;
  rhs.head(k) = pp.beta;
  if (lambda > 0.0) stacked.bottomRows(k) = std::sqrt(lambda) * pp.r2;
  Eigen::ColPivHouseholderQR<Matrix> qr(stacked);
  if (qr.rank() < k)
    throw NumericalError("solve_projected_tikhonov: singular pencil (rank " + std::to_string(qr.rank()) + " < " +
                         std::to_string(k) + ")");
  return qr.solve(rhs);
}

double projected_residual_norm(const ProjectedProblem& pp, const Vector& y) {
  return std::sqrt((pp.r1 * y - pp.beta).squaredNorm() + pp.beta_perp * pp.beta_perp);
}

GsvdPair gsvd_small(const Matrix& r1, const Matrix& r2) {
  const Index k = r1.cols();
  if (r1.rows() != k || r2.rows() != k || r2.cols() != k)
    throw DimensionError("gsvd_small: expected two square matrices of the same size, got " +
                         shape_string(r1.rows(), r1.cols()) + " and " + shape_string(r2.rows(), r2.cols()));
  if (r2.isZero(0.0)) throw NumericalError("gsvd_small: R2 is zero; the pencil is degenerate");
  Matrix stacked(2 * k, k);
  stacked << r1, r2;
  Eigen::ColPivHouseholderQR<Matrix> rank_check(stacked);
  if (rank_check.rank() < k) throw NumericalError("gsvd_small: [R1; R2] is rank deficient");

  Eigen::HouseholderQR<Matrix> qr(stacked);
  const Matrix q = qr.householderQ() * Matrix::Identity(2 * k, k);
  const Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  Eigen::JacobiSVD<Matrix> svd(q.topRows(k), Eigen::ComputeFullU | Eigen::ComputeFullV);
  GsvdPair g;
  g.u = svd.matrixU();
  const Matrix w = svd.matrixV();
  g.c = svd.singularValues();
  Matrix q2w = q.bottomRows(k) * w;
  g.s.resize(k);
  g.v.resize(k, k);
  Vector scale(k);
  for (Index i = 0; i < k; ++i) {
    // Small sines are accurate from the column norms, small cosines from the
    // SVD; renormalize the pair.
    const double si = q2w.col(i).norm();
    const double h = std::hypot(g.c(i), si);
    g.s(i) = si / h;
    g.c(i) /= h;
    scale(i) = h;
  }
  // The columns of Q2 W are orthogonal in exact arithmetic. Normalizing them in
  // order of decreasing sine with Gram-Schmidt against the earlier ones keeps
  // V orthonormal when some sines are at rounding level; columns that are
  // (numerically) inside the span of the earlier ones are completed from the unit vectors.
  g.v.setZero();
  for (Index i = k - 1; i >= 0; --i) {
    Vector col = q2w.col(i);
    const double before = col.norm();
    for (int pass = 0; pass < 2; ++pass)
      for (Index j = k - 1; j > i; --j) col -= g.v.col(j).dot(col) * g.v.col(j);
    double nrm = col.norm();
    if (nrm <= 1e-8 * before) nrm = 0.0;
    for (Index e = 0; nrm == 0.0 && e < k; ++e) {
      col = Vector::Unit(k, e);
      for (int pass = 0; pass < 2; ++pass)
        for (Index j = 0; j < k; ++j)
          if (j != i) col -= g.v.col(j).dot(col) * g.v.col(j);
      nrm = col.norm() > 0.5 ? col.norm() : 0.0;
    }
    g.v.col(i) = col / nrm;
  }
  g.x = r.transpose() * w * scale.asDiagonal();
  return g;
}

}  // namespace rflex
