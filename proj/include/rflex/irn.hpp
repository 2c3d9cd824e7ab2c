#pragma once

#include <cstdint>
#include <optional>

#include "rflex/krylov.hpp"
#include "rflex/solver_common.hpp"

namespace rflex {

/// Outer majorization-minimization loop with an LSQR inner solver on the
/// reweighted standard-form problem
///   s_k = argmin ‖A Ψ⁻¹ W_k⁻¹ s - b‖² + λ_k ‖s‖²,  x_k = Ψ⁻¹ W_k⁻¹ s_k.
/// Every inner solve starts from zero.
struct IRNConfig {
  WeightSpec weight;
  Index outer_max = 30;
  /// Relative normal-equations residual at which an inner solve stops.
  double inner_tol = 1e-8;
  /// Inner iteration cap; 0 means 2 n.
  Index inner_max = 0;
  LambdaPolicy lambda_policy;
  /// Discrepancy rule: within one outer iteration, secant steps on λ each
  /// followed by an inner solve until |‖Ax-b‖ - target| <= dp_rtol target or
  /// dp_max_steps solves were spent.
  double dp_rtol = 1e-2;
  Index dp_max_steps = 8;
  /// Starting point; zero when absent.
  std::optional<Vector> x0;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on an unusable configuration. The
  /// preconditioned path additionally needs a positive fixed λ.
  void validate(bool preconditioned) const;
};

SolveResult irn_solve(const LinearOperator& a, const LinearOperator& psi, const Vector& b, const IRNConfig& config,
                      const std::optional<Vector>& x_true = std::nullopt);

/// Upper-triangular R with RᵀR = W⁻¹ C0 W⁻¹ + λ I, w the diagonal of W.
/// Throws NumericalError when the Cholesky factorization fails.
Matrix build_partly_exact_preconditioner(const Matrix& c0, const Vector& w, double lambda);

/// irn_solve with every inner LSQR right-preconditioned by R_k⁻¹, R_k built
/// from the partly exact sketch Y0 = S A Ψ⁻¹ (formed once) and C0 = Y0ᵀ Y0.
SolveResult irn_s2p_solve(const LinearOperator& a, const LinearOperator& psi, const Vector& b,
                          const IRNConfig& config, const SketchOperator& sketch,
                          const std::optional<Vector>& x_true = std::nullopt);

}  // namespace rflex
