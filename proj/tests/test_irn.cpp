#include <gtest/gtest.h>
#include <cstring>

#include <cmath>

#include <Eigen/SVD>

#include "rflex/irn.hpp"
#include "rflex/problems.hpp"
#include "rflex/rng.hpp"

namespace rflex {
namespace {

IRNConfig fixed_config(double p, double tau, double lambda, Index outer, double inner_tol = 1e-12) {
  IRNConfig c;
  c.weight = {p, tau};
  c.outer_max = outer;
  c.inner_tol = inner_tol;
  c.inner_max = 1000;
  c.lambda_policy = LambdaPolicy::fixed(lambda);
  return c;
}

/// Reference MM iteration by dense normal equations:
/// x_k = (AᵀA + λ ΨᵀW_k²Ψ)⁻¹ Aᵀb.
Vector dense_mm(const Matrix& a, const Matrix& psi, const Vector& b, const WeightSpec& ws, double lambda, int its) {
  Vector x = Vector::Zero(a.cols());
  for (int k = 0; k < its; ++k) {
    const Vector w = compute_weights(psi * x, ws);
    const Matrix g = a.transpose() * a + lambda * psi.transpose() * w.array().square().matrix().asDiagonal() * psi;
    x = g.ldlt().solve(a.transpose() * b);
  }
  return x;
}

TEST(Irn, QuadraticPenaltyIsOneTikhonovSolve) {
  CounterRng rng(1);
  const Matrix a = normal_matrix(rng, 30, 12);
  const Vector b = normal_vector(rng, 30);
  const double lambda = 0.7;
  const auto res = irn_solve(LinearOperator::dense(a), LinearOperator::identity(12), b, fixed_config(2.0, 1e-3, lambda, 1));
  const Vector ref = (a.transpose() * a + lambda * Matrix::Identity(12, 12)).ldlt().solve(a.transpose() * b);
  ASSERT_EQ(res.trace.size(), 1u);
  EXPECT_LE((res.x() - ref).norm(), 1e-8 * ref.norm());
}

TEST(Irn, ZeroDataGivesZeroIterates) {
  CounterRng rng(2);
  const auto a = LinearOperator::dense(normal_matrix(rng, 15, 8));
  const auto res = irn_solve(a, LinearOperator::identity(8), Vector::Zero(15), fixed_config(1.0, 1e-4, 0.5, 5));
  for (const auto& x : res.iterates) EXPECT_TRUE(x.isZero(0.0));
}

TEST(Irn, ConvergesToLongRunReference) {
  CounterRng rng(3);
  const Matrix a = normal_matrix(rng, 20, 10);
  Vector xt = Vector::Zero(10);
  xt(2) = 1.0;
  xt(7) = -2.0;
  const Vector b = a * xt + 0.05 * normal_vector(rng, 20);
  const WeightSpec ws{1.0, 1e-4};
  const double lambda = 0.5;
  const Vector ref = dense_mm(a, Matrix::Identity(10, 10), b, ws, lambda, 500);
  const auto res = irn_solve(LinearOperator::dense(a), LinearOperator::identity(10), b, fixed_config(1.0, 1e-4, lambda, 300));
  EXPECT_LE((res.x() - ref).norm(), 1e-5 * ref.norm());
}

TEST(Irn, NonIdentityPsiMatchesDenseReference) {
  CounterRng rng(4);
  const Matrix a = normal_matrix(rng, 25, 8);
  const Matrix psi = Matrix::Identity(8, 8) + 0.2 * normal_matrix(rng, 8, 8);
  const Vector b = normal_vector(rng, 25);
  const WeightSpec ws{1.0, 1e-2};
  const Vector ref = dense_mm(a, psi, b, ws, 0.3, 20);
  const auto res = irn_solve(LinearOperator::dense(a), LinearOperator::dense(psi), b, fixed_config(1.0, 1e-2, 0.3, 20));
  EXPECT_LE((res.x() - ref).norm(), 1e-7 * ref.norm());
}

TEST(Irn, ObjectiveNonIncreasingWithFixedLambda) {
  for (double p : {0.5, 1.0, 1.5}) {
    auto inst = add_noise(gen_subset_selection(120, 40, 0.9, 0.2, 5), 0.05, 6);
    const auto res = irn_solve(inst.a, inst.psi, inst.b, fixed_config(p, 1e-6, 2.0, 25), inst.x_true);
    double prev = res.objective_initial;
    for (const auto& row : res.trace) {
      EXPECT_LE(row.objective_mm, prev + 1e-8 * res.objective_initial) << "p=" << p << " k=" << row.outer_iter;
      prev = row.objective_mm;
    }
  }
}

TEST(Irn, TraceBookkeeping) {
  auto inst = add_noise(gen_subset_selection(60, 20, 0.5, 0.2, 7), 0.05, 8);
  const auto res = irn_solve(inst.a, inst.psi, inst.b, fixed_config(1.0, 1e-6, 1.0, 6, 1e-8), inst.x_true);
  ASSERT_EQ(res.trace.size(), 6u);
  ASSERT_EQ(res.iterates.size(), 6u);
  for (std::size_t i = 0; i < res.trace.size(); ++i) {
    EXPECT_EQ(res.trace[i].outer_iter, static_cast<Index>(i + 1));
    if (i > 0) {
      EXPECT_GE(res.trace[i].cum_inner_iter, res.trace[i - 1].cum_inner_iter);
    }
    EXPECT_NEAR(res.trace[i].rel_error, (res.iterates[i] - inst.x_true).norm() / inst.x_true.norm(), 1e-15);
    EXPECT_TRUE(std::isnan(res.trace[i].eps_hat));
    EXPECT_DOUBLE_EQ(res.trace[i].lambda, 1.0);
  }
}

TEST(Irn, ConfigValidation) {
  auto c = fixed_config(1.0, 1e-6, 0.0, 1);
  EXPECT_NO_THROW(c.validate(false));
  EXPECT_THROW(c.validate(true), std::invalid_argument);
  c.outer_max = 0;
  EXPECT_THROW(c.validate(false), std::invalid_argument);
  c = fixed_config(3.0, 1e-6, 1.0, 1);
  EXPECT_THROW(c.validate(false), std::invalid_argument);
  c = fixed_config(1.0, 1e-6, 1.0, 1);
  c.lambda_policy = LambdaPolicy::dp(0.0);
  EXPECT_THROW(c.validate(false), std::invalid_argument);
  c.lambda_policy = LambdaPolicy::dp(0.01, 1.0);
  EXPECT_THROW(c.validate(false), std::invalid_argument);
}

TEST(PartlyExactPreconditioner, HandCases) {
  const Matrix r0 = build_partly_exact_preconditioner(Matrix::Zero(3, 3), Vector::Ones(3), 4.0);
  EXPECT_LE((r0 - 2.0 * Matrix::Identity(3, 3)).norm(), 1e-15);
  const Matrix r1 = build_partly_exact_preconditioner(Matrix::Identity(3, 3), Vector::Ones(3), 3.0);
  EXPECT_LE((r1 - 2.0 * Matrix::Identity(3, 3)).norm(), 1e-15);
  EXPECT_THROW(build_partly_exact_preconditioner(Matrix::Identity(3, 3), Vector::Ones(3), 0.0),
               std::invalid_argument);
  EXPECT_THROW(build_partly_exact_preconditioner(-Matrix::Identity(3, 3), Vector::Ones(3), 0.5), NumericalError);
}

TEST(PartlyExactPreconditioner, ReconstructsGram) {
  CounterRng rng(9);
  const Matrix y = normal_matrix(rng, 40, 30);
  const Matrix c0 = y.transpose() * y;
  Vector w(30);
  for (Index i = 0; i < 30; ++i) w(i) = rng.uniform(0.1, 10.0);
  const Matrix r = build_partly_exact_preconditioner(c0, w, 0.1);
  const Matrix expected =
      w.cwiseInverse().asDiagonal() * c0 * w.cwiseInverse().asDiagonal() + 0.1 * Matrix::Identity(30, 30);
  EXPECT_LE((r.transpose() * r - expected).norm(), 1e-12 * expected.norm());
  EXPECT_TRUE(r.isUpperTriangular(0.0));
}

TEST(PartlyExactPreconditioner, LambdaSweepIsBitwiseReproducible) {
  CounterRng rng(10);
  const Matrix y = normal_matrix(rng, 50, 20);
  const Matrix c0 = y.transpose() * y;
  const Vector w = normal_vector(rng, 20).cwiseAbs().array() + 0.5;
  for (int i = 0; i < 20; ++i) {
    const double lambda = std::pow(10.0, -4 + 0.3 * i);
    const Matrix reused = build_partly_exact_preconditioner(c0, w, lambda);
    const Matrix y_fresh = y;
    const Matrix fresh = build_partly_exact_preconditioner(y_fresh.transpose() * y_fresh, w, lambda);
    EXPECT_EQ(std::memcmp(reused.data(), fresh.data(), sizeof(double) * reused.size()), 0) << i;
  }
}

TEST(PartlyExactPreconditioner, LeverageSketchConditioningFollowsEmbeddingBound) {
  // The preconditioned stack has condition number at most (1+ε)/(1-ε), ε the
  // exact distortion of S on range(A); s = 4n puts ε near 1/2.
  const Index m = 2000;
  const Index n = 50;
  const double lambda = 1e-2;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CounterRng rng(seed, 11);
    const Matrix a = normal_matrix(rng, m, n);
    const Vector w = Vector::Ones(n);
    const auto s = build_leverage_sketch(estimate_leverage_scores(a), 4 * n, seed);
    const Matrix y0 = apply_sketch(s, a);
    const Matrix r = build_partly_exact_preconditioner(y0.transpose() * y0, w, lambda);
    Matrix stacked(m + n, n);
    stacked << a, std::sqrt(lambda) * Matrix::Identity(n, n);
    const Matrix pre = r.transpose().triangularView<Eigen::Lower>().solve(stacked.transpose()).transpose();
    const Vector sv = Eigen::JacobiSVD<Matrix>(pre).singularValues();
    const double eps = exact_distortion(s, a, DistortionMetric::norm);
    ASSERT_LT(eps, 1.0);
    EXPECT_LE(sv(0) / sv(n - 1), (1.0 + eps) / (1.0 - eps) * (1.0 + 1e-10)) << "seed " << seed;
    EXPECT_LE(sv(0) / sv(n - 1), 3.5) << "seed " << seed;
  }
}

TEST(IrnS2p, IdentitySketchConvergesInTwoInnerIterations) {
  CounterRng rng(12);
  const Matrix a = normal_matrix(rng, 80, 20);
  const Vector b = normal_vector(rng, 80);
  auto c = fixed_config(2.0, 1e-3, 0.5, 3, 1e-10);
  const auto res = irn_s2p_solve(LinearOperator::dense(a), LinearOperator::identity(20), b, c, SketchOperator::identity(80));
  Index prev = 0;
  for (const auto& row : res.trace) {
    EXPECT_LE(row.cum_inner_iter - prev, 2);
    prev = row.cum_inner_iter;
  }
}

TEST(IrnS2p, IdentitySketchMatchesUnpreconditioned) {
  auto inst = add_noise(gen_subset_selection(100, 30, 0.9, 0.2, 13), 0.05, 14);
  const auto c = fixed_config(1.0, 1e-4, 1.0, 10, 1e-13);
  const auto plain = irn_solve(inst.a, inst.psi, inst.b, c);
  const auto pre = irn_s2p_solve(inst.a, inst.psi, inst.b, c, SketchOperator::identity(100));
  for (std::size_t k = 0; k < plain.iterates.size(); ++k)
    EXPECT_LE((plain.iterates[k] - pre.iterates[k]).norm(), 1e-8 * plain.iterates[k].norm()) << k;
}

TEST(IrnS2p, LeverageSketchHalvesInnerWork) {
  auto inst = add_noise(gen_subset_selection(2000, 100, 0.95, 0.1, 15), 0.01, 16);
  const Matrix ad = materialize(inst.a);
  const auto s = build_leverage_sketch(estimate_leverage_scores(ad), 400, 17);
  const auto c = fixed_config(1.0, 1e-6, 1.0, 20, 1e-8);
  const auto plain = irn_solve(inst.a, inst.psi, inst.b, c);
  const auto pre = irn_s2p_solve(inst.a, inst.psi, inst.b, c, s);
  const double f_target = plain.trace.back().objective_mm;
  Index needed = -1;
  for (const auto& row : pre.trace)
    if (row.objective_mm <= f_target * (1.0 + 1e-9)) {
      needed = row.cum_inner_iter;
      break;
    }
  ASSERT_GE(needed, 0) << "preconditioned run never reached the plain final objective";
  EXPECT_LE(static_cast<double>(needed), 0.5 * static_cast<double>(plain.trace.back().cum_inner_iter));
}

TEST(IrnPolicies, DiscrepancyPrincipleApproachesTarget) {
  auto inst = add_noise(gen_subset_selection(300, 60, 0.9, 0.1, 18), 0.05, 19);
  auto c = fixed_config(1.0, 1e-6, 0.0, 40, 1e-10);
  c.lambda_policy = LambdaPolicy::dp(0.05);
  const auto res = irn_solve(inst.a, inst.psi, inst.b, c, inst.x_true);
  const double target = dp_target(kDefaultTauLambda, 0.05, inst.b.norm());
  const double residual = (inst.a.apply(res.x()) - inst.b).norm();
  EXPECT_NEAR(residual, target, 0.02 * target);
  const auto& t = res.trace;
  for (std::size_t i = t.size() - 5; i < t.size(); ++i)
    EXPECT_LE(std::abs(t[i].lambda - t[i - 1].lambda), 0.05 * t[i - 1].lambda);
}

TEST(IrnPolicies, GcvAndOptimalProduceFiniteLambdas) {
  auto inst = add_noise(gen_subset_selection(80, 30, 0.9, 0.2, 20), 0.05, 21);
  auto c = fixed_config(1.0, 1e-6, 0.0, 4, 1e-10);
  c.lambda_policy.kind = LambdaPolicyKind::gcv;
  const auto g = irn_solve(inst.a, inst.psi, inst.b, c, inst.x_true);
  c.lambda_policy.kind = LambdaPolicyKind::optimal;
  const auto o = irn_solve(inst.a, inst.psi, inst.b, c, inst.x_true);
  for (const auto* r : {&g, &o})
    for (const auto& row : r->trace) {
      EXPECT_TRUE(std::isfinite(row.lambda));
      EXPECT_GT(row.lambda, 0.0);
    }
  EXPECT_LE(o.trace.front().rel_error, g.trace.front().rel_error + 1e-12);
  EXPECT_THROW(irn_solve(inst.a, inst.psi, inst.b, c), std::invalid_argument);
}

TEST(DpSecant, StepsTowardTarget) {
  EXPECT_NEAR(dp_secant_step(1.0, 1.0, 2.0, 0.0, 0.0), 2.0, 1e-15);
  EXPECT_NEAR(dp_secant_step(1.0, 4.0, 2.0, 0.0, 0.0), 0.5, 1e-15);
  // Exact power law r = λ^0.5 is solved in one step.
  EXPECT_NEAR(dp_secant_step(4.0, 2.0, 3.0, 1.0, 1.0), 9.0, 1e-12);
  EXPECT_NEAR(dp_secant_step(1.0, 1e-9, 1.0, 0.0, 0.0), 100.0, 1e-12);
  EXPECT_NEAR(dp_secant_step(1.0, 0.0, 1.0, 0.0, 0.0), 100.0, 0.0);
}

}  // namespace
}  // namespace rflex
