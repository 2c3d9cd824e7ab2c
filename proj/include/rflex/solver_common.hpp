#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rflex/operators.hpp"
#include "rflex/regparam.hpp"
#include "rflex/sketching.hpp"
#include "rflex/weights.hpp"

namespace rflex {

enum class LambdaPolicyKind { fixed, dp, gcv, wgcv, optimal };

std::string_view to_string(LambdaPolicyKind kind);
/// Inverse of to_string; throws std::invalid_argument naming the value.
LambdaPolicyKind parse_lambda_policy(std::string_view name);

/// How λ_k is chosen at every outer iteration. For `fixed` the value is
/// `lambda`; for `dp` it is the starting value (0 picks a scale-based
/// default) and `nl`, `tau_lambda` define the target τ_λ nl ‖b‖.
struct LambdaPolicy {
  LambdaPolicyKind kind = LambdaPolicyKind::fixed;
  double lambda = 0.0;
  double nl = 0.0;
  double tau_lambda = kDefaultTauLambda;

  static LambdaPolicy fixed(double lambda) { return {LambdaPolicyKind::fixed, lambda, 0.0, kDefaultTauLambda}; }
  static LambdaPolicy dp(double nl, double tau_lambda = kDefaultTauLambda, double initial = 0.0) {
    return {LambdaPolicyKind::dp, initial, nl, tau_lambda};
  }
};

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// One outer iteration of a solver, in the column order of the CSV trace.
struct TraceRow {
  Index outer_iter = 0;
  Index cum_inner_iter = 0;
  /// ‖x_k - x_true‖ / ‖x_true‖, NaN without a reference solution.
  double rel_error = kNaN;
  double objective_mm = kNaN;
  double objective_literal = kNaN;
  double lambda = 0.0;
  /// Measured sketch distortion (sketch-and-solve IRW only).
  double eps_hat = kNaN;
  bool mono_cond_satisfied = false;
  /// Basis breakdown, or an inner solve that stagnated.
  bool breakdown_flag = false;
  /// The λ rule returned a flagged choice (boundary or flat criterion).
  bool lambda_flagged = false;
  /// Iterations of the projected preconditioned solve (sketch-to-precondition).
  Index inner_iterations = 0;
};

struct SolveResult {
  std::vector<Vector> iterates;
  std::vector<TraceRow> trace;
  /// mm_consistent objective at the starting point with the first λ.
  double objective_initial = 0.0;

  const Vector& x() const { return iterates.back(); }
};

/// ‖x - x_true‖ / ‖x_true‖, or NaN when x_true is absent or zero.
double relative_error(const Vector& x, const std::optional<Vector>& x_true);

/// Fills rel_error, both objectives, and lambda for iterate x.
TraceRow evaluate_iterate(const LinearOperator& a, const LinearOperator& psi, const Vector& b, const Vector& x,
                          const WeightSpec& weight, double lambda, const std::optional<Vector>& x_true);

/// S * op as a dense s x cols matrix, one adjoint application per sketch row.
Matrix sketch_operator(const SketchOperator& s, const LinearOperator& op);

/// Safeguarded secant step on log λ towards residual = target, using the
/// last two (λ, residual) pairs when both are available. The log-log slope
/// is clamped to [0.25, 4] (default 1) and the step to a factor of 100.
double dp_secant_step(double lambda, double residual, double target, double prev_lambda, double prev_residual);

}  // namespace rflex
