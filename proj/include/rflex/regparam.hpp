#pragma once

#include <functional>

#include "rflex/projected.hpp"

namespace rflex {

struct ParamChoice {
  double lambda = 0.0;
  /// Set when no interior optimum or root was found (flat criterion, optimum
  /// on the search boundary, or the discrepancy equation has no root inside
  /// the bracket).
  bool flagged = false;
};

/// Default safety factor for the discrepancy principle.
inline constexpr double kDefaultTauLambda = 1.01;

/// τ_λ · nl · ‖b‖.
double dp_target(double tau_lambda, double nl, double norm_b);

/// Discrepancy principle: λ with residual_norm(λ) = target, by bisection on
/// log λ over [1e-12, 1e12] · scale; residual_norm must be non-decreasing in
/// λ. Returns λ = 0 when residual_norm(0) >= target, and the upper bracket end
/// (flagged) when even that residual stays below the target.
ParamChoice dp_select(const std::function<double(double)>& residual_norm, double target, double scale = 1.0);

/// Minimizes f over `points` log-spaced values in [lo, hi] and refines the
/// best bracket by golden-section search in log λ to relative width rel_tol.
ParamChoice minimize_on_log_grid(const std::function<double(double)>& f, double lo, double hi, Index points = 200,
                                 double rel_tol = 1e-3);

/// ω = (k + 1) / s, capped at one.
double wgcv_omega(Index k, Index s);

/// G^ω_k(λ) = k ‖(I - R1 R_λ†) beta‖² / tr(I - ω R1 R_λ†)² from the GSVD of
/// (R1, R2); beta_hat = Uᵀ beta.
double projected_gcv_value(const GsvdPair& g, const Vector& beta_hat, double lambda, double omega);

/// argmin of G^ω_k with ω = (k + 1) / s over [1e-12, 1e4] · σ_max(R1)².
ParamChoice wgcv_select(const ProjectedProblem& pp, Index s, Index k);
ParamChoice wgcv_select_with_omega(const ProjectedProblem& pp, double omega);

/// Full-problem GCV m ‖A_k x(λ) - b‖² / tr(I - A_k A_k†(λ))² via the SVD of a
/// dense A_k (the minimizer coincides with that of the unsquared ratio).
double gcv_full_value(const Matrix& a_k, const Vector& b, double lambda);
ParamChoice gcv_full_select(const Matrix& a_k, const Vector& b);

/// argmin over λ of ‖x(λ) - x_true‖ on the log grid [1e-12, 1e4] · scale.
ParamChoice optimal_select(const std::function<Vector(double)>& solution_map, const Vector& x_true,
                           double scale = 1.0, Index points = 200);

}  // namespace rflex
