#pragma once

#include "rflex/types.hpp"

namespace rflex {

/// Small projected Tikhonov problem
///   min_y ‖R1 y - beta‖² + beta_perp² + λ ‖R2 y‖²
/// where S1 A Ψ⁻¹ Z = Q1 R1, beta = Q1ᵀ S1 b, beta_perp = ‖(I - Q1 Q1ᵀ) S1 b‖
/// and S2 W Z = Q2 R2.
struct ProjectedProblem {
  Matrix r1;
  Vector beta;
  double beta_perp = 0.0;
  Matrix r2;

  Index k() const { return r1.cols(); }
};

/// Upper-triangular k x k factor of a QR of m (rows >= k), or of m padded with
/// zero rows when it is short.
Matrix triangular_factor(const Matrix& m);

/// Builds the projected problem from the sketched blocks by Householder QR.
ProjectedProblem make_projected_problem(const Matrix& s1_az, const Vector& s1_b, const Matrix& s2_wz);

/// Thin QR maintained one column at a time (classical Gram-Schmidt with one
/// reorthogonalization), for the growing sketched matrix S1 A Ψ⁻¹ Z.
class IncrementalQr {
 public:
  explicit IncrementalQr(Index rows = 0);
  void append(const Vector& column);
  Index rows() const { return q_.rows(); }
  Index cols() const { return k_; }
  auto q() const { return q_.leftCols(k_); }
  auto r() const { return r_.topLeftCorner(k_, k_); }

 private:
  Matrix q_;
  Matrix r_;
  Index k_ = 0;
};

/// y = argmin ‖R1 y - beta‖² + λ ‖R2 y‖², from a QR of [R1; √λ R2]. Throws
/// NumericalError when the stacked matrix is rank deficient.
Vector solve_projected_tikhonov(const ProjectedProblem& pp, double lambda);

/// Sketched residual norm sqrt(‖R1 y - beta‖² + beta_perp²).
double projected_residual_norm(const ProjectedProblem& pp, const Vector& y);

/// Generalized singular value decomposition of a square pair,
///   R1 = U diag(c) Xᵀ,  R2 = V diag(s) Xᵀ,  c² + s² = 1,
/// with c in non-increasing order.
struct GsvdPair {
  Matrix u;
  Matrix v;
  Matrix x;
  Vector c;
  Vector s;
};

/// Computed from the CS decomposition of the orthogonal factor of [R1; R2].
/// Throws NumericalError if [R1; R2] is rank deficient or R2 is zero.
GsvdPair gsvd_small(const Matrix& r1, const Matrix& r2);

}  // namespace rflex
