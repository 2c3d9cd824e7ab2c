#include <gtest/gtest.h>

#include <cmath>

#include "rflex/operators.hpp"
#include "rflex/rng.hpp"

namespace rflex {
namespace {

/// Worst adjoint mismatch |<Ax,y> - <x,A^T y>| / (|Ax| |y|) over random pairs.
double worst_adjoint_gap(const LinearOperator& op, int pairs, std::uint64_t seed) {
  CounterRng rng(seed);
  double worst = 0.0;
  for (int t = 0; t < pairs; ++t) {
    const Vector x = normal_vector(rng, op.cols());
    const Vector y = normal_vector(rng, op.rows());
    const Vector ax = op.apply(x);
    const Vector aty = op.apply_adjoint(y);
    const double gap = std::abs(ax.dot(y) - x.dot(aty));
    const double scale = ax.norm() * y.norm();
    worst = std::max(worst, scale > 0.0 ? gap / scale : gap);
  }
  return worst;
}

TEST(Operators, IdentityApply) {
  const auto op = LinearOperator::identity(3);
  const Vector x = Vector::LinSpaced(3, 1.0, 3.0);
  EXPECT_EQ(apply(op, x), x);
  EXPECT_EQ(op.kind(), OperatorKind::identity);
}

TEST(Operators, DiagonalApply) {
  const auto op = LinearOperator::diagonal(Vector{{2.0, 0.5}});
  const Vector y = apply(op, Vector{{3.0, 4.0}});
  EXPECT_DOUBLE_EQ(y(0), 6.0);
  EXPECT_DOUBLE_EQ(y(1), 2.0);
}

TEST(Operators, DenseApplyAndAdjoint) {
  Matrix a{{1.0, 2.0}, {3.0, 4.0}};
  const auto op = LinearOperator::dense(a);
  const Vector y = apply(op, Vector{{1.0, 1.0}});
  EXPECT_DOUBLE_EQ(y(0), 3.0);
  EXPECT_DOUBLE_EQ(y(1), 7.0);
  const Vector x = apply_adjoint(op, Vector{{1.0, 0.0}});
  EXPECT_DOUBLE_EQ(x(0), 1.0);
  EXPECT_DOUBLE_EQ(x(1), 2.0);
}

TEST(Operators, DimensionMismatchReportsBothSizes) {
  const auto op = LinearOperator::dense(Matrix::Ones(3, 2));
  try {
    op.apply(Vector(Vector::Ones(5)));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("3x2"), std::string::npos) << msg;
    EXPECT_NE(msg.find('5'), std::string::npos) << msg;
  }
  EXPECT_THROW(op.apply_adjoint(Vector(Vector::Ones(2))), DimensionError);
}

TEST(Operators, SymmetricConvolutionIsSelfAdjoint) {
  const auto op = convolution2d(12, 10, gaussian_psf(1.3));
  CounterRng rng(3);
  const Vector x = normal_vector(rng, op.cols());
  EXPECT_LE((op.apply(x) - op.apply_adjoint(x)).norm(), 1e-13 * x.norm());
}

TEST(Operators, GaussianPsfIsNormalized) {
  const Matrix k = gaussian_psf(1.5);
  EXPECT_EQ(k.rows(), 2 * 5 + 1);
  EXPECT_NEAR(k.sum(), 1.0, 1e-15);
  EXPECT_NEAR(k(5, 5), k.maxCoeff(), 0.0);
}

TEST(Operators, ConvolutionMatchesDirectPeriodicSum) {
  // Non-symmetric kernel so that forward and adjoint differ.
  Matrix kernel{{0.0, 1.0, 0.0}, {2.0, 3.0, 0.0}, {0.0, 0.0, 4.0}};
  const Index nx = 5;
  const Index ny = 4;
  const auto op = convolution2d(nx, ny, kernel);
  const Matrix dense = materialize(op);
  Matrix expected = Matrix::Zero(nx * ny, nx * ny);
  for (Index c = 0; c < ny; ++c)
    for (Index r = 0; r < nx; ++r)
      for (Index b = -1; b <= 1; ++b)
        for (Index a = -1; a <= 1; ++a) {
          const Index rr = ((r - a) % nx + nx) % nx;
          const Index cc = ((c - b) % ny + ny) % ny;
          expected(r + nx * c, rr + nx * cc) += kernel(a + 1, b + 1);
        }
  EXPECT_LE((dense - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE(worst_adjoint_gap(op, 100, 11), 1e-10);
}

TEST(Operators, RadonAdjointConsistency) {
  const auto op = radon({16, 8, 23});
  EXPECT_EQ(op.rows(), 8 * 23);
  EXPECT_EQ(op.cols(), 256);
  EXPECT_LE(worst_adjoint_gap(op, 100, 5), 1e-10);
}

TEST(Operators, AdjointSuiteAllKinds) {
  CounterRng rng(21);
  std::vector<LinearOperator> ops{
      LinearOperator::identity(7),
      LinearOperator::diagonal(normal_vector(rng, 9)),
      LinearOperator::dense(normal_matrix(rng, 13, 6)),
      convolution2d(9, 9, gaussian_psf(1.0)),
      radon({16, 8, 23}),
  };
  ops.push_back(compose({ops[2], LinearOperator::diagonal(normal_vector(rng, 6))}));
  for (const auto& op : ops) EXPECT_LE(worst_adjoint_gap(op, 100, 99), 1e-10) << to_string(op.kind());
}

TEST(Operators, ComposeExamples) {
  const Vector x{{0.3, -1.7}};
  EXPECT_EQ(compose({LinearOperator::identity(2), LinearOperator::identity(2)}).apply(x), x);
  const auto pair = compose({LinearOperator::diagonal(Vector::Constant(2, 2.0)),
                             LinearOperator::diagonal(Vector::Constant(2, 0.5))});
  EXPECT_EQ(pair.apply(x), x);

  Matrix a{{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}};
  Vector d{{2.0, -1.0}};
  const auto c = compose({LinearOperator::dense(a), LinearOperator::diagonal(d)});
  const Vector expected = a * d.asDiagonal() * Vector::Ones(2);
  EXPECT_LE((c.apply(Vector(Vector::Ones(2))) - expected).norm(), 1e-15);
}

TEST(Operators, ComposeNamesBrokenPair) {
  try {
    compose({LinearOperator::identity(3), LinearOperator::identity(3), LinearOperator::identity(4)});
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("factor 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("factor 2"), std::string::npos) << msg;
  }
}

TEST(Operators, CompositeMaterializesToProduct) {
  CounterRng rng(8);
  const Matrix a = normal_matrix(rng, 40, 64);
  const Matrix b = normal_matrix(rng, 64, 30);
  const Vector d = normal_vector(rng, 30);
  const auto op = compose({LinearOperator::dense(a), LinearOperator::dense(b), LinearOperator::diagonal(d)});
  const Matrix expected = a * b * d.asDiagonal();
  EXPECT_LE((materialize(op) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Operators, InverseOfDiagonalAndComposite) {
  const auto d = LinearOperator::diagonal(Vector{{2.0, -4.0, 0.5}});
  const Vector x{{1.0, 2.0, 3.0}};
  EXPECT_LE((d.inverse().apply(d.apply(x)) - x).norm(), 1e-15);
  EXPECT_THROW(LinearOperator::diagonal(Vector{{1.0, 0.0}}).inverse(), NumericalError);

  Matrix m{{2.0, 1.0, 0.0}, {0.0, 1.0, 0.0}, {1.0, 0.0, 3.0}};
  const auto c = compose({LinearOperator::dense(m), d});
  EXPECT_LE((c.inverse().apply(c.apply(x)) - x).norm(), 1e-13);
  EXPECT_THROW(radon({16, 4, 10}).inverse(), NumericalError);
}

TEST(Operators, RadonOnePixelMatchesChordLengths) {
  // An even ray count keeps every ray off the pixel edges at 90 and 180
  // degrees, where the chord through a closed box is ambiguous.
  const RadonGeometry g{16, 8, 22};
  const auto op = radon(g);
  const auto angles = g.angles_degrees();
  const auto offsets = g.ray_offsets();
  for (Index r : {0, 5, 15}) {
    for (Index c : {0, 7, 12}) {
      Vector x = Vector::Zero(g.nx * g.nx);
      x(r + g.nx * c) = 1.0;
      const Vector sino = op.apply(x);
      EXPECT_GE(sino.minCoeff(), 0.0);
      const double cx = static_cast<double>(c) - 7.5;
      const double cy = 7.5 - static_cast<double>(r);
      for (Index ia = 0; ia < g.n_angles; ++ia) {
        double mass = 0.0;
        for (Index ir = 0; ir < g.n_rays; ++ir) {
          const double expected = chord_length(angles[ia], offsets[ir], cx - 0.5, cx + 0.5, cy - 0.5, cy + 0.5);
          const double got = sino(ir + g.n_rays * ia);
          EXPECT_NEAR(got, expected, 1e-12);
          if (expected == 0.0) {
            EXPECT_EQ(got, 0.0);
          }
          mass += got;
        }
        EXPECT_GT(mass, 0.0);
      }
    }
  }
}

TEST(Operators, ChordLengthHandCases) {
  // Vertical ray (angle 0: direction (0,1)) through the middle of a unit box.
  EXPECT_NEAR(chord_length(0.0, 0.0, -0.5, 0.5, -0.5, 0.5), 1.0, 1e-15);
  // Diagonal through a unit box centred at the origin.
  EXPECT_NEAR(chord_length(45.0, 0.0, -0.5, 0.5, -0.5, 0.5), std::sqrt(2.0), 1e-14);
  EXPECT_EQ(chord_length(0.0, 3.0, -0.5, 0.5, -0.5, 0.5), 0.0);
}

TEST(Operators, NormEstimateMatchesSvd) {
  CounterRng rng(2);
  const Matrix a = normal_matrix(rng, 30, 12);
  const double exact = Eigen::JacobiSVD<Matrix>(a).singularValues()(0);
  EXPECT_NEAR(estimate_norm2(LinearOperator::dense(a), 200), exact, 1e-8 * exact);
}

}  // namespace
}  // namespace rflex
