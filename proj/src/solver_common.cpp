#include "rflex/solver_common.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rflex {

std::string_view to_string(LambdaPolicyKind kind) {
  switch (kind) {
    case LambdaPolicyKind::fixed: return "fixed";
    case LambdaPolicyKind::dp: return "dp";
    case LambdaPolicyKind::gcv: return "gcv";
    case LambdaPolicyKind::wgcv: return "wgcv";
    case LambdaPolicyKind::optimal: return "optimal";
  }
  return "unknown";
}

LambdaPolicyKind parse_lambda_policy(std::string_view name) {
  for (auto k : {LambdaPolicyKind::fixed, LambdaPolicyKind::dp, LambdaPolicyKind::gcv, LambdaPolicyKind::wgcv,
                 LambdaPolicyKind::optimal})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown lambda policy '" + std::string(name) + "'");
}

double relative_error(const Vector& x, const std::optional<Vector>& x_true) {
  if (!x_true) return kNaN;
  const double nt = x_true->norm();
  if (nt == 0.0) return kNaN;
  if (x.size() != x_true->size())
    throw DimensionError("relative_error: x has length " + std::to_string(x.size()) + " but x_true has length " +
                         std::to_string(x_true->size()));
  return (x - *x_true).norm() / nt;
}

TraceRow evaluate_iterate(const LinearOperator& a, const LinearOperator& psi, const Vector& b, const Vector& x,
                          const WeightSpec& weight, double lambda, const std::optional<Vector>& x_true) {
  TraceRow row;
  row.lambda = lambda;
  row.rel_error = relative_error(x, x_true);
  const double fit = (a.apply(x) - b).squaredNorm();
  const Vector z = psi.apply(x);
  row.objective_mm = fit + penalty_value(z, weight, lambda, ObjectiveVariant::mm_consistent);
  row.objective_literal = fit + penalty_value(z, weight, lambda, ObjectiveVariant::literal);
  return row;
}

Matrix sketch_operator(const SketchOperator& s, const LinearOperator& op) {
  if (s.ambient_dim() != op.rows())
    throw DimensionError("sketch_operator: sketch acts on " + std::to_string(s.ambient_dim()) +
                         " rows but the operator is " + shape_string(op.rows(), op.cols()));
  const Index rows = s.size();
  Matrix out(rows, op.cols());
  Vector e = Vector::Zero(op.rows());
  for (Index j = 0; j < rows; ++j) {
    if (s.kind() == SketchKind::dense) {
      e = s.matrix().row(j).transpose();
    } else {
      e.setZero();
      e(s.selected_rows()[j]) = s.scales()(j);
    }
    out.row(j) = op.apply_adjoint(e).transpose();
  }
  return out;
}

double dp_secant_step(double lambda, double residual, double target, double prev_lambda, double prev_residual) {
  if (!(lambda > 0.0)) throw std::invalid_argument("dp_secant_step: lambda must be positive");
  const double max_step = std::log(100.0);
  if (!(residual > 0.0)) return lambda * 100.0;
  double slope = 1.0;
  if (prev_lambda > 0.0 && prev_residual > 0.0 && prev_lambda != lambda) {
    const double est = (std::log(residual) - std::log(prev_residual)) / (std::log(lambda) - std::log(prev_lambda));
    if (std::isfinite(est) && est > 0.0) slope = std::clamp(est, 0.25, 4.0);
  }
  const double step = std::clamp(std::log(target / residual) / slope, -max_step, max_step);
  return lambda * std::exp(step);
}

}  // namespace rflex
