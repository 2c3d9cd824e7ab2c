#include "rflex/flex.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "rflex/rng.hpp"

namespace rflex {

std::string_view to_string(FlexMode mode) {
  switch (mode) {
    case FlexMode::none: return "none";
    case FlexMode::hybrid: return "hybrid";
    case FlexMode::irw: return "irw";
  }
  return "unknown";
}

std::string_view to_string(FlexScheme scheme) {
  switch (scheme) {
    case FlexScheme::sketch_and_solve: return "sketch_and_solve";
    case FlexScheme::sketch_to_precondition: return "sketch_to_precondition";
    case FlexScheme::exact: return "exact";
  }
  return "unknown";
}

FlexMode parse_flex_mode(std::string_view name) {
  for (auto m : {FlexMode::none, FlexMode::hybrid, FlexMode::irw})
    if (to_string(m) == name) return m;
  throw std::invalid_argument("unknown flexible mode '" + std::string(name) + "'");
}

FlexScheme parse_flex_scheme(std::string_view name) {
  for (auto s : {FlexScheme::sketch_and_solve, FlexScheme::sketch_to_precondition, FlexScheme::exact})
    if (to_string(s) == name) return s;
  throw std::invalid_argument("unknown flexible scheme '" + std::string(name) + "'");
}

void FlexSolverConfig::validate() const {
  weight.validate();
  if (k_max < 1) throw std::invalid_argument("FlexSolverConfig: k_max must be at least 1");
  if (ell && *ell < 1) throw std::invalid_argument("FlexSolverConfig: ell must be at least 1");
  if (sketch_mult < 1) throw std::invalid_argument("FlexSolverConfig: sketch_mult must be at least 1");
  if (!(inner_tol > 0.0)) throw std::invalid_argument("FlexSolverConfig: inner_tol must be positive");
  if (inner_max < 0) throw std::invalid_argument("FlexSolverConfig: inner_max must be non-negative");
  if (mode == FlexMode::none) return;
  const auto& pol = lambda_policy;
  if (pol.kind == LambdaPolicyKind::fixed && pol.lambda < 0.0)
    throw std::invalid_argument("FlexSolverConfig: lambda must be non-negative");
  if (pol.kind == LambdaPolicyKind::dp) {
    if (!(pol.nl > 0.0)) throw std::invalid_argument("FlexSolverConfig: dp needs a positive noise level");
    if (!(pol.tau_lambda > 1.0)) throw std::invalid_argument("FlexSolverConfig: dp needs tau_lambda > 1");
  }
  if (scheme == FlexScheme::sketch_to_precondition &&
      (pol.kind == LambdaPolicyKind::gcv || pol.kind == LambdaPolicyKind::wgcv))
    throw std::invalid_argument("FlexSolverConfig: sketch_to_precondition supports fixed, dp and optimal lambda only");
}

MonotonicityCheck check_monotonicity_condition(double qhat_prev, double qhat_curr, double eps_k) {
  if (!(eps_k >= 0.0 && eps_k < 1.0))
    throw std::invalid_argument("check_monotonicity_condition: eps must lie in [0, 1), got " + std::to_string(eps_k));
  if (qhat_curr < 0.0) throw std::invalid_argument("check_monotonicity_condition: qhat_curr must be non-negative");
  if (qhat_curr == 0.0) return {true, std::numeric_limits<double>::infinity()};
  const double margin = (qhat_prev - qhat_curr) / qhat_curr - 2.0 * eps_k / (1.0 - eps_k);
  return {margin >= 0.0, margin};
}

namespace {

void check_problem(const LinearOperator& a, const LinearOperator& psi, const Vector& b, const char* who) {
  if (b.size() != a.rows())
    throw DimensionError(std::string(who) + ": A is " + shape_string(a.rows(), a.cols()) + " but b has length " +
                         std::to_string(b.size()));
  if (psi.rows() != a.cols() || psi.cols() != a.cols())
    throw DimensionError(std::string(who) + ": Ψ is " + shape_string(psi.rows(), psi.cols()) + " but A has " +
                         std::to_string(a.cols()) + " columns");
}

void check_sketches(const LinearOperator& a, const SketchOperator& s1, const SketchOperator& s2, const char* who) {
  if (s1.ambient_dim() != a.rows() || s2.ambient_dim() != a.cols())
    throw DimensionError(std::string(who) + ": sketches act on " + std::to_string(s1.ambient_dim()) + " and " +
                         std::to_string(s2.ambient_dim()) + " rows but A is " + shape_string(a.rows(), a.cols()));
}

/// ‖R1 y - beta‖² + beta_perp² + λ ‖R2 y‖².
double projected_value(const ProjectedProblem& pp, const Vector& y, double lambda) {
  const double fit = (pp.r1 * y - pp.beta).squaredNorm() + pp.beta_perp * pp.beta_perp;
  return lambda > 0.0 ? fit + lambda * (pp.r2 * y).squaredNorm() : fit;
}

/// solve_projected_tikhonov, falling back to the minimum-norm least-squares
/// solution when the stacked matrix is rank deficient.
Vector projected_solve(const ProjectedProblem& pp, double lambda) {
  try {
    return solve_projected_tikhonov(pp, lambda);
  } catch (const NumericalError&) {
    const Index k = pp.k();
    Matrix stacked(2 * k, k);
    stacked.topRows(k) = pp.r1;
    stacked.bottomRows(k) = std::sqrt(lambda) * pp.r2;
    Vector rhs = Vector::Zero(2 * k);
    rhs.head(k) = pp.beta;
    return Eigen::CompleteOrthogonalDecomposition<Matrix>(stacked).solve(rhs);
  }
}

double largest_singular_value(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
}

struct LambdaContext {
  const LambdaPolicy* policy = nullptr;
  double norm_b = 0.0;
  /// Sketch rows for the WGCV weight ω = (k+1)/s.
  Index sketch_rows = 0;
  const LinearOperator* psi_inv = nullptr;
  const std::optional<Vector>* x_true = nullptr;
};

/// λ_k for a projected problem. R2 is rescaled to the spectral norm of R1
/// before the search so that the λ grids are anchored at ‖R1‖² regardless of
/// the (possibly enormous) weight scale; the result is mapped back.
ParamChoice select_projected_lambda(const ProjectedProblem& pp, const Matrix& zbar, const LambdaContext& ctx,
                                    FlexMode mode) {
  const LambdaPolicy& pol = *ctx.policy;
  if (mode == FlexMode::none) return {0.0, false};
  if (pol.kind == LambdaPolicyKind::fixed) return {pol.lambda, false};

  const double s1 = largest_singular_value(pp.r1);
  const double s2 = largest_singular_value(pp.r2);
  if (!(s1 > 0.0) || !(s2 > 0.0)) return {0.0, true};
  ProjectedProblem scaled = pp;
  const double c = s2 / s1;
  scaled.r2 /= c;
  const double anchor = s1 * s1;

  ParamChoice choice;
  switch (pol.kind) {
    case LambdaPolicyKind::dp: {
      const double target = dp_target(pol.tau_lambda, pol.nl, ctx.norm_b);
      const auto residual = [&](double lam) { return projected_residual_norm(scaled, projected_solve(scaled, lam)); };
      choice = dp_select(residual, target, anchor);
      break;
    }
    case LambdaPolicyKind::gcv:
      choice = wgcv_select_with_omega(scaled, 1.0);
      break;
    case LambdaPolicyKind::wgcv:
      choice = wgcv_select(scaled, ctx.sketch_rows, pp.k());
      break;
    case LambdaPolicyKind::optimal: {
      if (!ctx.x_true || !*ctx.x_true) throw std::invalid_argument("the optimal lambda policy needs x_true");
      const auto map = [&](double lam) -> Vector {
        return ctx.psi_inv->apply(Vector(zbar * projected_solve(scaled, lam)));
      };
      choice = optimal_select(map, **ctx.x_true, anchor);
      break;
    }
    case LambdaPolicyKind::fixed:
      break;
  }
  choice.lambda /= c * c;
  return choice;
}

/// Shared basis bookkeeping: the flexible factorization plus A Ψ⁻¹ Z̄ kept
/// column by column as U_{k+1} h_k.
struct Basis {
  FlexibleFactorization fac;
  Matrix az;

  Basis(const FlexSolverConfig& config, const LinearOperator& a, const Vector& b)
      : fac(start_flexible_factorization(config.basis, config.ell, a, b, config.k_max)),
        az(a.rows(), config.k_max) {}

  Index k() const { return fac.k; }
  auto AZ() const { return az.leftCols(fac.k); }

  /// A truncated basis never breaks down on its own, so growth stops once it
  /// spans min(m, n) columns.
  bool expand(const LinearOperator& a, const LinearOperator& psi_inv, const Vector& w_inv) {
    if (fac.k >= std::min(a.rows(), a.cols())) {
      fac.breakdown = true;
      return false;
    }
    if (!flex_expand(fac, a, psi_inv, w_inv)) return false;
    const Index j = fac.k - 1;
    if (az.cols() <= j) az.conservativeResize(Eigen::NoChange, 2 * az.cols() + 1);
    az.col(j) = fac.u_store.leftCols(j + 2) * fac.h_store.col(j).head(j + 2);
    return true;
  }
};

/// Sketched W Z̄ via S2 W = W̄ S2 on the cached rows of Z̄ (row sampling), or
/// directly for a dense sketch.
Matrix sketched_weighted_basis(const SketchOperator& s2, const Vector& w, const Matrix& gathered, const Matrix& zbar) {
  if (s2.kind() == SketchKind::row_sampling) return apply_sketch_weighted(s2, commute_diagonal(s2, w), gathered);
  return apply_sketch(s2, Matrix(w.asDiagonal() * zbar));
}

Vector gathered_column(const SketchOperator& s2, const Vector& z) {
  Vector g(s2.size());
  if (s2.kind() != SketchKind::row_sampling) return g.setZero();
  const auto& rows = s2.selected_rows();
  for (Index j = 0; j < s2.size(); ++j) g(j) = z(rows[j]);
  return g;
}

struct Prepared {
  LinearOperator psi_inv;
  Vector ones;
};

Prepared prepare(const LinearOperator& a, const LinearOperator& psi) {
  return {psi.inverse(), Vector::Ones(a.cols())};
}

TraceRow make_row(const LinearOperator& a, const LinearOperator& psi, const Vector& b, const Vector& x,
                  const FlexSolverConfig& config, double lambda, const std::optional<Vector>& x_true, Index k,
                  bool breakdown, bool flagged) {
  TraceRow row = evaluate_iterate(a, psi, b, x, config.weight, lambda, x_true);
  row.outer_iter = k;
  row.cum_inner_iter = k;
  row.breakdown_flag = breakdown;
  row.lambda_flagged = flagged;
  return row;
}

double initial_lambda(const FlexSolverConfig& config) {
  if (config.mode == FlexMode::none) return 0.0;
  return config.lambda_policy.kind == LambdaPolicyKind::fixed ? config.lambda_policy.lambda : 0.0;
}

}  // namespace

FlexSketches build_flex_sketches(const LinearOperator& a, const LinearOperator& psi, const Vector& b,
                                 const FlexSolverConfig& config) {
  config.validate();
  check_problem(a, psi, b, "build_flex_sketches");
  const Index m = a.rows();
  const Index n = a.cols();
  const Index s = config.sketch_mult * config.k_max;
  FlexSketches out;
  if (s >= m && s >= n) {
    out.s1 = SketchOperator::identity(m);
    out.s2 = SketchOperator::identity(n);
    return out;
  }
  const Index pilot_steps = std::min<Index>(config.k_max, 20);
  auto pilot = start_flexible_factorization(config.basis, std::nullopt, a, b, pilot_steps);
  const LinearOperator psi_inv = psi.inverse();
  const Vector ones = Vector::Ones(n);
  for (Index i = 0; i < pilot_steps; ++i)
    if (!flex_expand(pilot, a, psi_inv, ones)) break;
  if (pilot.k == 0) throw NumericalError("build_flex_sketches: the pilot Krylov subspace is empty (b = 0?)");
  if (s >= m) {
    out.s1 = SketchOperator::identity(m);
  } else {
    Matrix range(m, pilot.k + 1);
    range.leftCols(pilot.k) = factorization_image(pilot);
    range.col(pilot.k) = b;
    out.s1 = build_leverage_sketch(estimate_leverage_scores(range), s, splitmix64(config.seed));
  }
  if (s >= n) {
    out.s2 = SketchOperator::identity(n);
  } else {
    out.s2 = build_leverage_sketch(estimate_leverage_scores(Matrix(pilot.Z())), s, splitmix64(config.seed + 1));
  }
  return out;
}

SolveResult sns_flex_solve(const LinearOperator& a, const LinearOperator& psi, const Vector& b,
                           const FlexSolverConfig& config, const SketchOperator& s1, const SketchOperator& s2,
                           const std::optional<Vector>& x_true) {
  config.validate();
  if (config.scheme != FlexScheme::sketch_and_solve)
    throw std::invalid_argument("sns_flex_solve: config.scheme must be sketch_and_solve");
  check_problem(a, psi, b, "sns_flex_solve");
  check_sketches(a, s1, s2, "sns_flex_solve");
  const Index n = a.cols();
  const auto prep = prepare(a, psi);
  const LambdaContext ctx{&config.lambda_policy, b.norm(), s1.size(), &prep.psi_inv, &x_true};

  Basis basis(config, a, b);
  IncrementalQr qr1(s1.size());
  const Vector s1b = apply_sketch(s1, b);
  Matrix gathered(s2.size(), config.k_max);

  SolveResult result;
  Vector x = Vector::Zero(n);
  Vector y_prev;
  result.objective_initial =
      evaluate_iterate(a, psi, b, x, config.weight, initial_lambda(config), x_true).objective_mm;

  for (Index k = 1; k <= config.k_max; ++k) {
    const Vector w = compute_weights(psi.apply(x), config.weight);
    const Vector w_inv = w.cwiseInverse();
    if (basis.expand(a, prep.psi_inv, config.reweight_basis ? w_inv : prep.ones)) {
      const Index j = basis.k() - 1;
      qr1.append(apply_sketch(s1, Vector(basis.az.col(j))));
      gathered.col(j) = gathered_column(s2, basis.fac.z_store.col(j));
    }
    const Index kk = basis.k();
    if (kk == 0) {
      result.iterates.push_back(x);
      result.trace.push_back(make_row(a, psi, b, x, config, 0.0, x_true, k, true, false));
      continue;
    }
    const Matrix zbar = basis.fac.Z();

    ProjectedProblem pp;
    pp.r1 = qr1.r();
    pp.beta = qr1.q().transpose() * s1b;
    pp.beta_perp = (s1b - qr1.q() * pp.beta).norm();
    if (config.mode == FlexMode::irw)
      pp.r2 = triangular_factor(sketched_weighted_basis(s2, w, gathered.leftCols(kk), zbar));
    else
      pp.r2 = Matrix::Identity(kk, kk);

    const ParamChoice choice = select_projected_lambda(pp, zbar, ctx, config.mode);
    const Vector y = projected_solve(pp, choice.lambda);
    x = prep.psi_inv.apply(Vector(zbar * y));

    TraceRow row = make_row(a, psi, b, x, config, choice.lambda, x_true, k, basis.fac.breakdown, choice.flagged);
    if (config.mode == FlexMode::irw) {
      Matrix range(a.rows(), kk + 1);
      range.leftCols(kk) = basis.AZ();
      range.col(kk) = b;
      const double eps = std::max(exact_distortion(s1, range, DistortionMetric::squared_norm),
                                  exact_distortion(s2, Matrix(w.asDiagonal() * zbar), DistortionMetric::squared_norm));
      row.eps_hat = eps;
      Vector y_old = Vector::Zero(kk);
      y_old.head(y_prev.size()) = y_prev;
      if (eps < 1.0) {
        row.mono_cond_satisfied = check_monotonicity_condition(projected_value(pp, y_old, choice.lambda),
                                                               projected_value(pp, y, choice.lambda), eps)
                                      .satisfied;
      }
    }
    y_prev = y;
    result.iterates.push_back(x);
    result.trace.push_back(row);
  }
  return result;
}

SolveResult exact_flex_solve(const LinearOperator& a, const LinearOperator& psi, const Vector& b,
                             const FlexSolverConfig& config, const std::optional<Vector>& x_true) {
  config.validate();
  check_problem(a, psi, b, "exact_flex_solve");
  const Index n = a.cols();
  const auto prep = prepare(a, psi);
  const LambdaContext ctx{&config.lambda_policy, b.norm(), a.rows(), &prep.psi_inv, &x_true};
  Basis basis(config, a, b);

  SolveResult result;
  Vector x = Vector::Zero(n);
  result.objective_initial =
      evaluate_iterate(a, psi, b, x, config.weight, initial_lambda(config), x_true).objective_mm;
  for (Index k = 1; k <= config.k_max; ++k) {
    const Vector w = compute_weights(psi.apply(x), config.weight);
    basis.expand(a, prep.psi_inv, config.reweight_basis ? Vector(w.cwiseInverse()) : prep.ones);
    const Index kk = basis.k();
    if (kk == 0) {
      result.iterates.push_back(x);
      result.trace.push_back(make_row(a, psi, b, x, config, 0.0, x_true, k, true, false));
      continue;
    }
    const Matrix zbar = basis.fac.Z();
    const Matrix reg = config.mode == FlexMode::irw ? Matrix(w.asDiagonal() * zbar) : Matrix(Matrix::Identity(kk, kk));
    const ProjectedProblem pp = make_projected_problem(basis.AZ(), b, reg);
    const ParamChoice choice = select_projected_lambda(pp, zbar, ctx, config.mode);
    const Vector y = projected_solve(pp, choice.lambda);
    x = prep.psi_inv.apply(Vector(zbar * y));
    result.iterates.push_back(x);
    result.trace.push_back(make_row(a, psi, b, x, config, choice.lambda, x_true, k, basis.fac.breakdown, choice.flagged));
  }
  return result;
}

SolveResult s2p_flex_solve(const LinearOperator& a, const LinearOperator& psi, const Vector& b,
                           const FlexSolverConfig& config, const SketchOperator& s1, const SketchOperator& s2,
                           const std::optional<Vector>& x_true) {
  config.validate();
  if (config.scheme != FlexScheme::sketch_to_precondition)
    throw std::invalid_argument("s2p_flex_solve: config.scheme must be sketch_to_precondition");
  check_problem(a, psi, b, "s2p_flex_solve");
  check_sketches(a, s1, s2, "s2p_flex_solve");
  const Index m = a.rows();
  const Index n = a.cols();
  const auto prep = prepare(a, psi);
  const LambdaContext ctx{&config.lambda_policy, b.norm(), s1.size(), &prep.psi_inv, &x_true};
  const LinearOperator a_psi_inv = psi.is_identity() ? a : compose({a, prep.psi_inv});

  Basis basis(config, a, b);
  Matrix y_sk(s1.size(), config.k_max);
  Matrix c = Matrix::Zero(config.k_max, config.k_max);
  Matrix gathered(s2.size(), config.k_max);
  bool full_space = false;
  double lambda = initial_lambda(config);

  Vector y_prev;

  SolveResult result;
  Vector x = Vector::Zero(n);
  result.objective_initial = evaluate_iterate(a, psi, b, x, config.weight, lambda, x_true).objective_mm;

  for (Index k = 1; k <= config.k_max; ++k) {
    const Vector w = compute_weights(psi.apply(x), config.weight);
    const Vector w_inv = w.cwiseInverse();
    if (!full_space) {
      if (k < std::min(m, n) && basis.expand(a, prep.psi_inv, config.reweight_basis ? w_inv : prep.ones)) {
        const Index j = basis.k() - 1;
        y_sk.col(j) = apply_sketch(s1, Vector(basis.az.col(j)));
        const Vector border = y_sk.leftCols(j + 1).transpose() * y_sk.col(j);
        c.block(0, j, j + 1, 1) = border;
        c.block(j, 0, 1, j + 1) = border.transpose();
        gathered.col(j) = gathered_column(s2, basis.fac.z_store.col(j));
      } else {
        full_space = true;
      }
    }

    if (full_space) {
      // Z̄ = I: one classic reweighted step on the whole space.
      const Index maxit = config.inner_max > 0 ? config.inner_max : 4 * n;
      Vector s;
      IterativeResult inner;
      if (config.mode == FlexMode::irw) {
        inner = lsqr_solve(compose({a_psi_inv, LinearOperator::diagonal(w_inv)}), b, lambda, nullptr,
                           config.inner_tol, maxit);
        s = w_inv.cwiseProduct(inner.x);
      } else {
        inner = lsqr_solve(a_psi_inv, b, config.mode == FlexMode::hybrid ? lambda : 0.0, nullptr, config.inner_tol,
                           maxit);
        s = inner.x;
      }
      x = prep.psi_inv.apply(s);
      TraceRow row = make_row(a, psi, b, x, config, lambda, x_true, k, true, false);
      result.iterates.push_back(x);
      result.trace.push_back(row);
      continue;
    }

    const Index kk = basis.k();
    const Matrix zbar = basis.fac.Z();
    const Matrix az = basis.AZ();
    const bool irw = config.mode == FlexMode::irw;
    const Matrix wz = irw ? Matrix(w.asDiagonal() * zbar) : Matrix();

    ParamChoice choice{lambda, false};
    if (config.mode != FlexMode::none && config.lambda_policy.kind != LambdaPolicyKind::fixed) {
      const ProjectedProblem pp = make_projected_problem(az, b, irw ? wz : Matrix(Matrix::Identity(kk, kk)));
      choice = select_projected_lambda(pp, zbar, ctx, config.mode);
    }
    lambda = choice.lambda;

    Matrix gram = c.topLeftCorner(kk, kk);
    if (lambda > 0.0) {
      if (irw) {
        const Matrix sw = sketched_weighted_basis(s2, w, gathered.leftCols(kk), zbar);
        gram += lambda * (sw.transpose() * sw);
      } else {
        gram.diagonal().array() += lambda;
      }
    }
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) {
      gram.diagonal().array() += 1e-8 * gram.trace();
      llt.compute(gram);
      if (llt.info() != Eigen::Success)
        throw NumericalError("s2p_flex_solve: Cholesky of C_k + λ D_k failed at k = " + std::to_string(kk));
    }
    const Matrix r = llt.matrixU();

    const double sl = std::sqrt(lambda);
    const Index reg_rows = lambda > 0.0 ? (irw ? n : kk) : 0;
    auto fwd = [&](const Vector& t) -> Vector {
      const Vector v = r.triangularView<Eigen::Upper>().solve(t);
      Vector out(m + reg_rows);
      out.head(m) = az * v;
      if (reg_rows > 0) out.tail(reg_rows) = irw ? Vector(sl * (wz * v)) : Vector(sl * v);
      return out;
    };
    auto adj = [&](const Vector& u) -> Vector {
      Vector t = az.transpose() * u.head(m);
      if (reg_rows > 0) t += irw ? Vector(sl * (wz.transpose() * u.tail(reg_rows))) : Vector(sl * u.tail(reg_rows));
      return r.transpose().triangularView<Eigen::Lower>().solve(t);
    };
    // Warm start at the previous iterate [y_{k-1}; 0], applied as a
    // correction so y_{k-1} never round-trips through R. LSQR residuals are
    // monotone, so Q_k(y_k) <= Q_k(y_{k-1}) = F(x_{k-1}) even when the inner
    // solve stops early on a nearly dependent truncated basis.
    Vector y0 = Vector::Zero(kk);
    y0.head(y_prev.size()) = y_prev;
    Vector rhs = Vector::Zero(m + reg_rows);
    rhs.head(m) = b - az * y0;
    if (reg_rows > 0) rhs.tail(reg_rows) = irw ? Vector(-sl * (wz * y0)) : Vector(-sl * y0);
    const Index maxit = config.inner_max > 0 ? config.inner_max : 4 * kk;
    const IterativeResult inner = lsqr_core(fwd, adj, rhs, kk, config.inner_tol, maxit);
    Vector y = y0 + r.triangularView<Eigen::Upper>().solve(inner.x);

    // On a numerically dependent basis the preconditioned solve can lose the
    // descent that an exact solve guarantees; fall back to the dense min-norm
    // projected solve and, failing that, keep the previous point.
    const auto q = [&](const Vector& v) {
      double val = (az * v - b).squaredNorm();
      if (lambda > 0.0) val += lambda * (irw ? (wz * v).squaredNorm() : v.squaredNorm());
      return val;
    };
    const double q0 = q(y0);
    bool rejected = false;
    if (q(y) > q0) {
      rejected = true;
      const ProjectedProblem pp = make_projected_problem(az, b, irw ? wz : Matrix(Matrix::Identity(kk, kk)));
      y = projected_solve(pp, lambda);
      if (q(y) > q0) y = y0;
    }
    y_prev = y;
    x = prep.psi_inv.apply(Vector(zbar * y));

    TraceRow row = make_row(a, psi, b, x, config, lambda, x_true, k,
                            basis.fac.breakdown || inner.stagnated || rejected, choice.flagged);
    row.inner_iterations = inner.iterations;
    result.iterates.push_back(x);
    result.trace.push_back(row);
  }
  return result;
}

SolveResult flex_solve(const LinearOperator& a, const LinearOperator& psi, const Vector& b,
                       const FlexSolverConfig& config, const std::optional<Vector>& x_true) {
  if (config.scheme == FlexScheme::exact) return exact_flex_solve(a, psi, b, config, x_true);
  const FlexSketches sk = build_flex_sketches(a, psi, b, config);
  if (config.scheme == FlexScheme::sketch_and_solve) return sns_flex_solve(a, psi, b, config, sk.s1, sk.s2, x_true);
  return s2p_flex_solve(a, psi, b, config, sk.s1, sk.s2, x_true);
}

SolveResult fista_solve(const LinearOperator& a, const LinearOperator& psi, const Vector& b, double lambda,
                        Index iterations, const WeightSpec& weight, const std::optional<Vector>& x_true) {
  check_problem(a, psi, b, "fista_solve");
  if (!psi.is_identity()) throw std::invalid_argument("fista_solve: only Ψ = I is supported");
  if (lambda < 0.0) throw std::invalid_argument("fista_solve: lambda must be non-negative");
  if (iterations < 1) throw std::invalid_argument("fista_solve: iterations must be at least 1");
  weight.validate();
  const Index n = a.cols();
  const double nrm = estimate_norm2(a, 100);
  const double step = 1.0 / (2.02 * nrm * nrm);
  const double thresh = 2.0 * lambda * step;

  SolveResult result;
  Vector x = Vector::Zero(n);
  Vector v = x;
  double t = 1.0;
  result.objective_initial = evaluate_iterate(a, psi, b, x, weight, lambda, x_true).objective_mm;
  for (Index k = 1; k <= iterations; ++k) {
    const Vector g = 2.0 * a.apply_adjoint(Vector(a.apply(v) - b));
    Vector xn = v - step * g;
    xn = xn.unaryExpr([thresh](double u) { return u > thresh ? u - thresh : (u < -thresh ? u + thresh : 0.0); });
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    v = xn + ((t - 1.0) / tn) * (xn - x);
    x = std::move(xn);
    t = tn;
    TraceRow row = evaluate_iterate(a, psi, b, x, weight, lambda, x_true);
    row.outer_iter = k;
    row.cum_inner_iter = k;
    result.iterates.push_back(x);
    result.trace.push_back(row);
  }
  return result;
}

}  // namespace rflex
