#include "rflex/irn.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

namespace rflex {

void IRNConfig::validate(bool preconditioned) const {
  weight.validate();
  if (outer_max < 1) throw std::invalid_argument("IRNConfig: outer_max must be at least 1");
  if (!(inner_tol > 0.0)) throw std::invalid_argument("IRNConfig: inner_tol must be positive");
  if (inner_max < 0) throw std::invalid_argument("IRNConfig: inner_max must be non-negative");
  const auto& pol = lambda_policy;
  if (pol.kind == LambdaPolicyKind::wgcv)
    throw std::invalid_argument("IRNConfig: the wgcv policy applies to projected problems only");
  if (pol.kind == LambdaPolicyKind::fixed) {
    if (pol.lambda < 0.0) throw std::invalid_argument("IRNConfig: lambda must be non-negative");
    if (preconditioned && !(pol.lambda > 0.0))
      throw std::invalid_argument("IRNConfig: the preconditioned solver needs lambda > 0");
  }
  if (dp_max_steps < 1) throw std::invalid_argument("IRNConfig: dp_max_steps must be at least 1");
  if (pol.kind == LambdaPolicyKind::dp) {
    if (!(pol.nl > 0.0)) throw std::invalid_argument("IRNConfig: dp needs a positive noise level");
    if (!(pol.tau_lambda > 1.0)) throw std::invalid_argument("IRNConfig: dp needs tau_lambda > 1");
  }
}

Matrix build_partly_exact_preconditioner(const Matrix& c0, const Vector& w, double lambda) {
  const Index n = c0.rows();
  if (c0.cols() != n || w.size() != n)
    throw DimensionError("build_partly_exact_preconditioner: C0 is " + shape_string(c0.rows(), c0.cols()) +
                         " but w has length " + std::to_string(w.size()));
  if (!(lambda > 0.0)) throw std::invalid_argument("build_partly_exact_preconditioner: lambda must be positive");
  const Vector w_inv = w.cwiseInverse();
  Matrix g(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) g(i, j) = w_inv(i) * c0(i, j) * w_inv(j);
  g.diagonal().array() += lambda;
  Eigen::LLT<Matrix> llt(g);
  if (llt.info() != Eigen::Success)
    throw NumericalError("build_partly_exact_preconditioner: Cholesky failed for lambda = " +
                         std::to_string(lambda) + "; lambda must dominate the rounding level of ‖S A Ψ⁻¹ W⁻¹‖, "
                         "try a larger value");
  return llt.matrixU();
}

namespace {

/// Dense Tikhonov solution map λ -> argmin ‖K s - b‖² + λ‖s‖² via one SVD.
struct DenseTikhonov {
  Eigen::BDCSVD<Matrix> svd;
  Vector utb;

  DenseTikhonov(const Matrix& k, const Vector& b) : svd(k, Eigen::ComputeThinU | Eigen::ComputeThinV) {
    utb = svd.matrixU().transpose() * b;
  }
  Vector solve(double lambda) const {
    const Vector& sv = svd.singularValues();
    Vector f(sv.size());
    for (Index i = 0; i < sv.size(); ++i) {
      const double d = sv(i) * sv(i) + lambda;
      f(i) = d > 0.0 ? sv(i) * utb(i) / d : 0.0;
    }
    return svd.matrixV() * f;
  }
};

Matrix materialize_small(const LinearOperator& k, const char* what) {
  if (std::min(k.rows(), k.cols()) > 500)
    throw std::invalid_argument(std::string("irn: the ") + what + " policy needs min(m, n) <= 500, got " +
                                shape_string(k.rows(), k.cols()));
  return materialize(k);
}

SolveResult irn_loop(const LinearOperator& a, const LinearOperator& psi, const Vector& b, const IRNConfig& config,
                     const std::optional<Vector>& x_true, const Matrix* c0) {
  config.validate(c0 != nullptr);
  const Index n = a.cols();
  if (b.size() != a.rows())
    throw DimensionError("irn: A is " + shape_string(a.rows(), a.cols()) + " but b has length " +
                         std::to_string(b.size()));
  if (psi.rows() != n || psi.cols() != n)
    throw DimensionError("irn: Ψ is " + shape_string(psi.rows(), psi.cols()) + " but A has " + std::to_string(n) +
                         " columns");
  const LinearOperator psi_inv = psi.inverse();
  const LinearOperator a_psi_inv = psi.is_identity() ? a : compose({a, psi_inv});
  const Index inner_max = config.inner_max > 0 ? config.inner_max : 2 * n;
  const auto& pol = config.lambda_policy;

  Vector x = config.x0 ? *config.x0 : Vector::Zero(n);
  if (x.size() != n) throw DimensionError("irn: x0 has length " + std::to_string(x.size()));

  double lambda = pol.lambda;
  double target = 0.0;
  if (pol.kind == LambdaPolicyKind::dp) {
    target = dp_target(pol.tau_lambda, pol.nl, b.norm());
    if (!(lambda > 0.0)) {
      const double nrm = estimate_norm2(a_psi_inv);
      lambda = 1e-3 * nrm * nrm;
    }
  }
  SolveResult result;
  bool initial_set = false;
  Index cum_inner = 0;
  for (Index k = 1; k <= config.outer_max; ++k) {
    const Vector w = compute_weights(psi.apply(x), config.weight);
    const Vector w_inv = w.cwiseInverse();
    const LinearOperator kop = compose({a_psi_inv, LinearOperator::diagonal(w_inv)});

    bool flagged = false;
    if (pol.kind == LambdaPolicyKind::gcv || pol.kind == LambdaPolicyKind::optimal) {
      const Matrix kd = materialize_small(kop, to_string(pol.kind).data());
      if (pol.kind == LambdaPolicyKind::gcv) {
        const ParamChoice c = gcv_full_select(kd, b);
        lambda = c.lambda;
        flagged = c.flagged;
      } else {
        if (!x_true) throw std::invalid_argument("irn: the optimal policy needs x_true");
        const DenseTikhonov tik(kd, b);
        const double smax = tik.svd.singularValues().size() ? tik.svd.singularValues()(0) : 1.0;
        const auto map = [&](double lam) -> Vector {
          return psi_inv.apply(Vector(w_inv.cwiseProduct(tik.solve(lam))));
        };
        const ParamChoice c = optimal_select(map, *x_true, smax * smax);
        lambda = c.lambda;
        flagged = c.flagged;
      }
    }
    if (!initial_set) {
      result.objective_initial = evaluate_iterate(a, psi, b, x, config.weight, lambda, x_true).objective_mm;
      initial_set = true;
    }

    Vector s;
    bool stagnated = false;
    Index steps = 0;
    double prev_lambda = 0.0;
    double prev_residual = 0.0;
    while (true) {
      Matrix r;
      if (c0) r = build_partly_exact_preconditioner(*c0, w, lambda);
      const IterativeResult inner = lsqr_solve(kop, b, lambda, c0 ? &r : nullptr, config.inner_tol, inner_max);
      cum_inner += inner.iterations;
      stagnated = stagnated || inner.stagnated;
      s = inner.x;
      ++steps;
      if (pol.kind != LambdaPolicyKind::dp) break;
      const double residual = (kop.apply(s) - b).norm();
      if (std::abs(residual - target) <= config.dp_rtol * target || steps >= config.dp_max_steps) break;
      const double next = dp_secant_step(lambda, residual, target, prev_lambda, prev_residual);
      prev_lambda = lambda;
      prev_residual = residual;
      lambda = next;
    }
    x = psi_inv.apply(Vector(w_inv.cwiseProduct(s)));

    TraceRow row = evaluate_iterate(a, psi, b, x, config.weight, lambda, x_true);
    row.outer_iter = k;
    row.cum_inner_iter = cum_inner;
    row.breakdown_flag = stagnated;
    row.lambda_flagged = flagged;
    result.trace.push_back(row);
    result.iterates.push_back(x);

  }
  return result;
}

}  // namespace

SolveResult irn_solve(const LinearOperator& a, const LinearOperator& psi, const Vector& b, const IRNConfig& config,
                      const std::optional<Vector>& x_true) {
  return irn_loop(a, psi, b, config, x_true, nullptr);
}

SolveResult irn_s2p_solve(const LinearOperator& a, const LinearOperator& psi, const Vector& b,
                          const IRNConfig& config, const SketchOperator& sketch,
                          const std::optional<Vector>& x_true) {
  const LinearOperator a_psi_inv = psi.is_identity() ? a : compose({a, psi.inverse()});
  const Matrix y0 = sketch_operator(sketch, a_psi_inv);
  const Matrix c0 = y0.transpose() * y0;
  return irn_loop(a, psi, b, config, x_true, &c0);
}

}  // namespace rflex
