#include <gtest/gtest.h>

#include <cmath>

#include "rflex/problems.hpp"

namespace rflex {
namespace {

Matrix dense_of(const ProblemInstance& inst) { return materialize(inst.a); }

TEST(SubsetSelection, UncorrelatedCase) {
  const auto inst = gen_subset_selection(4000, 5, 0.0, 0.3, 1);
  const Matrix a = dense_of(inst);
  const Matrix cov = a.transpose() * a / 4000.0;
  EXPECT_LE((cov - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff(), 5.0 / std::sqrt(4000.0));
}

TEST(SubsetSelection, AdjacentCorrelation) {
  const auto inst = gen_subset_selection(20000, 10, 0.95, 0.1, 2);
  const Matrix a = dense_of(inst);
  for (Index j = 0; j + 1 < 10; ++j) {
    const Vector x = a.col(j).array() - a.col(j).mean();
    const Vector y = a.col(j + 1).array() - a.col(j + 1).mean();
    const double corr = x.dot(y) / (x.norm() * y.norm());
    EXPECT_GE(corr, 0.93);
    EXPECT_LE(corr, 0.97);
  }
}

TEST(SubsetSelection, PopulationCovariance) {
  const auto inst = gen_subset_selection(50000, 8, 0.95, 0.1, 3);
  const Matrix a = dense_of(inst);
  const Matrix cov = a.transpose() * a / 50000.0;
  double worst = 0.0;
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 8; ++j)
      worst = std::max(worst, std::abs(cov(i, j) - std::pow(0.95, std::abs(static_cast<double>(i - j)))));
  EXPECT_LE(worst, 0.02);
}

TEST(SubsetSelection, BernoulliCount) {
  const auto inst = gen_subset_selection(2, 10000, 0.95, 0.1, 4);
  const double ones = inst.x_true.sum();
  EXPECT_GE(ones, 850);
  EXPECT_LE(ones, 1150);
  EXPECT_TRUE(((inst.x_true.array() == 0.0) || (inst.x_true.array() == 1.0)).all());
}

TEST(Starfield, EmptyField) {
  const auto inst = gen_starfield_deblur(16, 0.0, 1.5, 1);
  EXPECT_TRUE(inst.x_true.isZero(0.0));
  EXPECT_TRUE(inst.b_exact.isZero(0.0));
}

TEST(Starfield, SparsityAndMassConservation) {
  const auto inst = gen_starfield_deblur(64, 0.072, 1.5, 2);
  const double below = (inst.x_true.array().abs() < 1e-10).cast<double>().sum() / 4096.0;
  EXPECT_DOUBLE_EQ(below, 1.0 - std::ceil(0.072 * 4096.0) / 4096.0);
  EXPECT_NEAR(below, 0.928, 1e-3);
  EXPECT_NEAR(inst.b_exact.sum(), inst.x_true.sum(), 1e-10 * inst.x_true.sum());
  const double lo = (inst.x_true.array() > 0).select(inst.x_true.array(), 2.0).minCoeff();
  EXPECT_GE(lo, 0.1);
  EXPECT_LE(inst.x_true.maxCoeff(), 1.0);
}

TEST(Tomo, Dimensions) {
  const auto inst = gen_tomo(64, 18, 95, 1);
  EXPECT_EQ(inst.a.rows(), 1710);
  EXPECT_EQ(inst.a.cols(), 4096);
}

TEST(Tomo, PhantomRangeAndReferenceRasterization) {
  const Matrix img = shepp_logan(16);
  EXPECT_DOUBLE_EQ(img.maxCoeff(), 1.0);
  EXPECT_DOUBLE_EQ(img.minCoeff(), 0.0);
  // Independent membership test for the outer two ellipses only: pixels
  // inside the head but outside the brain ellipse carry intensity 1.
  const double h = 7.5;
  for (Index c = 0; c < 16; ++c) {
    for (Index r = 0; r < 16; ++r) {
      const double x = (c - h) / h;
      const double y = (h - r) / h;
      const bool head = x * x / (0.69 * 0.69) + y * y / (0.92 * 0.92) <= 1.0;
      const bool brain = x * x / (0.6624 * 0.6624) + (y + 0.0184) * (y + 0.0184) / (0.874 * 0.874) <= 1.0;
      if (!head) EXPECT_EQ(img(r, c), 0.0);
      if (head && !brain) EXPECT_DOUBLE_EQ(img(r, c), 1.0);
      if (brain) EXPECT_LT(img(r, c), 0.5);
    }
  }
}

TEST(Tomo, DiskMassPreservedByEveryProjection) {
  const RadonGeometry g{64, 18, 95};
  const auto op = radon(g);
  Vector disk = Vector::Zero(64 * 64);
  for (Index c = 0; c < 64; ++c)
    for (Index r = 0; r < 64; ++r) {
      const double x = c - 31.5;
      const double y = 31.5 - r;
      if (x * x + y * y <= 20.0 * 20.0) disk(r + 64 * c) = 1.0;
    }
  const Vector sino = op.apply(disk);
  const double spacing = std::sqrt(2.0) * 64.0 / 95.0;
  for (Index a = 0; a < g.n_angles; ++a) {
    const double mass = sino.segment(a * g.n_rays, g.n_rays).sum() * spacing;
    EXPECT_NEAR(mass, disk.sum(), 0.02 * disk.sum()) << "angle " << a;
  }
}

TEST(Noise, ExactLevelAndDeterminism) {
  const auto clean = gen_tomo(16, 4, 23, 1);
  const auto same = add_noise(clean, 0.0, 5);
  EXPECT_EQ(same.b, clean.b_exact);
  const auto noisy = add_noise(clean, 0.01, 5);
  EXPECT_NEAR((noisy.b - noisy.b_exact).norm() / noisy.b_exact.norm(), 0.01, 1e-14);
  EXPECT_EQ(add_noise(clean, 0.01, 5).b, noisy.b);
  EXPECT_NE(add_noise(clean, 0.01, 6).b, noisy.b);
  EXPECT_THROW(add_noise(gen_starfield_deblur(16, 0.0, 1.0, 1), 0.01, 1), std::invalid_argument);
}

TEST(Generators, Deterministic) {
  EXPECT_EQ(gen_subset_selection(30, 7, 0.9, 0.2, 9).b_exact, gen_subset_selection(30, 7, 0.9, 0.2, 9).b_exact);
  EXPECT_EQ(gen_starfield_deblur(16, 0.1, 1.0, 9).x_true, gen_starfield_deblur(16, 0.1, 1.0, 9).x_true);
  EXPECT_EQ(gen_identity(5, 3).x_true, gen_identity(5, 3).x_true);
}

}  // namespace
}  // namespace rflex
