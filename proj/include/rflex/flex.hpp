#pragma once

#include <cstdint>
#include <optional>

#include "rflex/krylov.hpp"
#include "rflex/projected.hpp"
#include "rflex/solver_common.hpp"

namespace rflex {

/// Regularization term R_k(y) of the projected problem
///   min ‖A Ψ⁻¹ Z̄_k y - b‖² + λ_k R_k(y).
enum class FlexMode {
  /// λ_k = 0; regularization by early stopping only.
  none,
  /// R_k(y) = ‖y‖².
  hybrid,
  /// R_k(y) = ‖W_k Z̄_k y‖², the projected quadratic majorant.
  irw,
};

enum class FlexScheme {
  /// Both terms replaced by their sketches S1, S2 (small dense solve).
  sketch_and_solve,
  /// Unsketched projected problem solved by LSQR preconditioned with the
  /// Cholesky factor of C_k + λ D_k built from the sketches.
  sketch_to_precondition,
  /// Unsketched projected problem solved by dense QR; the reference scheme.
  exact,
};

std::string_view to_string(FlexMode mode);
std::string_view to_string(FlexScheme scheme);
FlexMode parse_flex_mode(std::string_view name);
FlexScheme parse_flex_scheme(std::string_view name);

struct FlexSolverConfig {
  FactorizationKind basis = FactorizationKind::golub_kahan;
  FlexMode mode = FlexMode::irw;
  FlexScheme scheme = FlexScheme::sketch_and_solve;
  /// Truncation window; nullopt orthogonalizes against the whole basis.
  std::optional<Index> ell = 4;
  Index k_max = 50;
  WeightSpec weight;
  LambdaPolicy lambda_policy;
  /// false builds the basis with W_k = I (standard Arnoldi / Golub-Kahan)
  /// while the weights still enter the irw regularizer.
  bool reweight_basis = true;
  std::uint64_t seed = 0;
  /// Projected LSQR tolerance and cap (0 means 4 k) for sketch_to_precondition.
  double inner_tol = 1e-10;
  Index inner_max = 0;
  /// Sketch rows s = sketch_mult * k_max.
  Index sketch_mult = 4;

  /// Throws std::invalid_argument on an unusable configuration.
  void validate() const;
};

/// Row-sampling sketches S1 (s x m, for [A Ψ⁻¹ Z̄, b]) and S2 (s x n, for
/// W Z̄) drawn from leverage scores of a pilot subspace: min(k_max, 20)
/// standard Krylov steps. A sketch with s >= its ambient dimension is the
/// identity.
struct FlexSketches {
  SketchOperator s1;
  SketchOperator s2;
};

FlexSketches build_flex_sketches(const LinearOperator& a, const LinearOperator& psi, const Vector& b,
                                 const FlexSolverConfig& config);

SolveResult sns_flex_solve(const LinearOperator& a, const LinearOperator& psi, const Vector& b,
                           const FlexSolverConfig& config, const SketchOperator& s1, const SketchOperator& s2,
                           const std::optional<Vector>& x_true = std::nullopt);

SolveResult s2p_flex_solve(const LinearOperator& a, const LinearOperator& psi, const Vector& b,
                           const FlexSolverConfig& config, const SketchOperator& s1, const SketchOperator& s2,
                           const std::optional<Vector>& x_true = std::nullopt);

SolveResult exact_flex_solve(const LinearOperator& a, const LinearOperator& psi, const Vector& b,
                             const FlexSolverConfig& config, const std::optional<Vector>& x_true = std::nullopt);

/// Dispatches on config.scheme, building the sketches when needed.
SolveResult flex_solve(const LinearOperator& a, const LinearOperator& psi, const Vector& b,
                       const FlexSolverConfig& config, const std::optional<Vector>& x_true = std::nullopt);

struct MonotonicityCheck {
  bool satisfied = false;
  /// (q_prev - q_curr) / q_curr - 2ε/(1-ε).
  double margin = 0.0;
};

/// Sufficient-decrease test on the sketched majorant: with distortion ε_k the
/// full objective cannot increase when the relative decrease of Q̂ reaches
/// 2ε/(1-ε). q_curr = 0 counts as satisfied.
MonotonicityCheck check_monotonicity_condition(double qhat_prev, double qhat_curr, double eps_k);

/// Proximal gradient (FISTA) for ‖Ax - b‖² + 2λ‖x‖₁, i.e. the p = 1 objective
/// in the limit τ -> 0, with step 1 / (2.02 ‖A‖²) from a power-iteration norm
/// estimate. One trace row per iteration; Ψ must be the identity.
SolveResult fista_solve(const LinearOperator& a, const LinearOperator& psi, const Vector& b, double lambda,
                        Index iterations, const WeightSpec& weight, const std::optional<Vector>& x_true = std::nullopt);

}  // namespace rflex
