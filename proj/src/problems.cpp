#include "rflex/problems.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "rflex/rng.hpp"

namespace rflex {

namespace {

// Streams of the counter-based generator used by the problem generators.
constexpr std::uint64_t kMatrixStream = 1;
constexpr std::uint64_t kSolutionStream = 2;
constexpr std::uint64_t kNoiseStream = 3;

}  // namespace

ProblemInstance gen_subset_selection(Index m, Index n, double rho, double bern_p, std::uint64_t seed) {
  if (m <= 0 || n <= 0) throw DimensionError("gen_subset_selection: dimensions must be positive");
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("gen_subset_selection: rho must lie in [0, 1)");
  if (!(bern_p > 0.0 && bern_p < 1.0)) throw std::invalid_argument("gen_subset_selection: bern_p must lie in (0, 1)");
  CounterRng rng(seed, kMatrixStream);
  const double innov = std::sqrt(1.0 - rho * rho);
  RowMajorMatrix a(m, n);
  for (Index i = 0; i < m; ++i) {
    a(i, 0) = rng.normal();
    for (Index j = 1; j < n; ++j) a(i, j) = rho * a(i, j - 1) + innov * rng.normal();
  }
  CounterRng xr(seed, kSolutionStream);
  Vector x(n);
  for (Index j = 0; j < n; ++j) x(j) = xr.uniform() < bern_p ? 1.0 : 0.0;

  ProblemInstance inst;
  inst.a = LinearOperator::dense(a);
  inst.psi = LinearOperator::identity(n);
  inst.x_true = x;
  inst.b_exact = inst.a.apply(x);
  inst.b = inst.b_exact;
  inst.seed = seed;
  inst.descriptor = "subset_selection m=" + std::to_string(m) + " n=" + std::to_string(n) +
                    " rho=" + std::to_string(rho) + " bern_p=" + std::to_string(bern_p);
  return inst;
}

ProblemInstance gen_starfield_deblur(Index nx, double density, double sigma_blur, std::uint64_t seed) {
  if (nx < 16) throw DimensionError("gen_starfield_deblur: nx must be at least 16");
  if (!(density >= 0.0 && density <= 1.0)) throw std::invalid_argument("gen_starfield_deblur: density in [0, 1]");
  const Index npix = nx * nx;
  const auto stars = static_cast<Index>(std::ceil(density * static_cast<double>(npix)));
  CounterRng rng(seed, kSolutionStream);
  std::vector<Index> perm(static_cast<std::size_t>(npix));
  for (Index i = 0; i < npix; ++i) perm[i] = i;
  Vector x = Vector::Zero(npix);
  for (Index i = 0; i < stars; ++i) {
    const Index j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(npix - i)));
    std::swap(perm[i], perm[j]);
    x(perm[i]) = rng.uniform(0.1, 1.0);
  }
  ProblemInstance inst;
  inst.a = convolution2d(nx, nx, gaussian_psf(sigma_blur));
  inst.psi = LinearOperator::identity(npix);
  inst.x_true = x;
  inst.b_exact = inst.a.apply(x);
  inst.b = inst.b_exact;
  inst.seed = seed;
  inst.image_rows = nx;
  inst.image_cols = nx;
  inst.descriptor = "starfield nx=" + std::to_string(nx) + " density=" + std::to_string(density) +
                    " sigma=" + std::to_string(sigma_blur);
  return inst;
}

Matrix shepp_logan(Index nx) {
  if (nx < 2) throw DimensionError("shepp_logan: nx must be at least 2");
  // Modified Shepp-Logan table (Toft): intensity, semi-axes a and b, centre
  // (x0, y0) and rotation in degrees.
  struct Ellipse {
    double value, a, b, x0, y0, phi;
  };
  static constexpr Ellipse kTable[] = {
      {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},        {-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0},
      {-0.2, 0.11, 0.31, 0.22, 0.0, -18.0},    {-0.2, 0.16, 0.41, -0.22, 0.0, 18.0},
      {0.1, 0.21, 0.25, 0.0, 0.35, 0.0},       {0.1, 0.046, 0.046, 0.0, 0.1, 0.0},
      {0.1, 0.046, 0.046, 0.0, -0.1, 0.0},     {0.1, 0.046, 0.023, -0.08, -0.605, 0.0},
      {0.1, 0.023, 0.023, 0.0, -0.606, 0.0},   {0.1, 0.023, 0.046, 0.06, -0.605, 0.0},
  };
  const double h = 0.5 * static_cast<double>(nx - 1);
  Matrix img = Matrix::Zero(nx, nx);
  for (Index c = 0; c < nx; ++c) {
    for (Index r = 0; r < nx; ++r) {
      const double x = (static_cast<double>(c) - h) / h;
      const double y = (h - static_cast<double>(r)) / h;
      double v = 0.0;
      for (const auto& e : kTable) {
        const double phi = e.phi * std::numbers::pi / 180.0;
        const double dx = x - e.x0;
        const double dy = y - e.y0;
        const double u = dx * std::cos(phi) + dy * std::sin(phi);
        const double w = -dx * std::sin(phi) + dy * std::cos(phi);
        if ((u * u) / (e.a * e.a) + (w * w) / (e.b * e.b) <= 1.0) v += e.value;
      }
      // Overlapping intensities such as 1 - 0.8 - 0.2 leave rounding-level
      // negatives; densities are non-negative.
      img(r, c) = std::max(0.0, v);
    }
  }
  return img;
}

ProblemInstance gen_tomo(Index nx, Index n_angles, Index n_rays, std::uint64_t seed) {
  if (nx < 16) throw DimensionError("gen_tomo: nx must be at least 16");
  ProblemInstance inst;
  inst.a = radon({nx, n_angles, n_rays});
  inst.psi = LinearOperator::identity(nx * nx);
  const Matrix img = shepp_logan(nx);
  inst.x_true = Eigen::Map<const Vector>(img.data(), img.size());
  inst.b_exact = inst.a.apply(inst.x_true);
  inst.b = inst.b_exact;
  inst.seed = seed;
  inst.image_rows = nx;
  inst.image_cols = nx;
  inst.descriptor = "tomo nx=" + std::to_string(nx) + " angles=" + std::to_string(n_angles) +
                    " rays=" + std::to_string(n_rays);
  return inst;
}

ProblemInstance gen_identity(Index n, std::uint64_t seed) {
  if (n <= 0) throw DimensionError("gen_identity: n must be positive");
  CounterRng rng(seed, kSolutionStream);
  ProblemInstance inst;
  inst.a = LinearOperator::identity(n);
  inst.psi = LinearOperator::identity(n);
  inst.x_true = normal_vector(rng, n);
  inst.b_exact = inst.x_true;
  inst.b = inst.b_exact;
  inst.seed = seed;
  inst.descriptor = "identity n=" + std::to_string(n);
  return inst;
}

ProblemInstance add_noise(ProblemInstance inst, double nl, std::uint64_t seed) {
  if (!(nl >= 0.0)) throw std::invalid_argument("add_noise: noise level must be non-negative");
  inst.nl = nl;
  if (nl == 0.0) {
    inst.b = inst.b_exact;
    return inst;
  }
  const double nb = inst.b_exact.norm();
  if (nb == 0.0) throw std::invalid_argument("add_noise: cannot scale noise relative to a zero right-hand side");
  CounterRng rng(seed, kNoiseStream);
  const Vector g = normal_vector(rng, inst.b_exact.size());
  inst.b = inst.b_exact + (nl * nb / g.norm()) * g;
  inst.descriptor += " nl=" + std::to_string(nl);
  return inst;
}

}  // namespace rflex
