#pragma once

#include <cstdint>
#include <string>

#include "rflex/operators.hpp"

namespace rflex {

/// A linear inverse problem b = A x_true + noise with its penalty transform Ψ.
struct ProblemInstance {
  LinearOperator a;
  LinearOperator psi;
  Vector b;
  Vector b_exact;
  Vector x_true;
  double nl = 0.0;
  std::uint64_t seed = 0;
  std::string descriptor;
  /// Image shape when x is a vectorized image (column-major), else 0.
  Index image_rows = 0;
  Index image_cols = 0;
};

/// Rows of A i.i.d. N(0, Σ) with Σ_ij = rho^|i-j| (AR(1) recurrence along each
/// row), x_true i.i.d. Bernoulli(bern_p) in {0, 1}, Ψ = I. Noise-free.
ProblemInstance gen_subset_selection(Index m, Index n, double rho, double bern_p, std::uint64_t seed);

/// ceil(density nx²) distinct random pixels with intensities U[0.1, 1] blurred
/// by a periodic Gaussian PSF of width sigma_blur. Noise-free.
ProblemInstance gen_starfield_deblur(Index nx, double density, double sigma_blur, std::uint64_t seed);

/// Modified Shepp-Logan phantom on an nx x nx grid imaged by the parallel-beam
/// projector. Noise-free.
ProblemInstance gen_tomo(Index nx, Index n_angles, Index n_rays, std::uint64_t seed);

/// A = Ψ = I_n with a Gaussian x_true; a trivial smoke-test problem.
ProblemInstance gen_identity(Index n, std::uint64_t seed);

/// b = b_exact + nl ‖b_exact‖ g / ‖g‖ with g standard normal, so the noise
/// level is exactly nl.
ProblemInstance add_noise(ProblemInstance inst, double nl, std::uint64_t seed);

/// Modified Shepp-Logan phantom (ten-ellipse table with the higher-contrast
/// intensities), pixel (r, c) centred at ((c - h) / h, (h - r) / h), h = (nx-1)/2.
Matrix shepp_logan(Index nx);

}  // namespace rflex
