#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "rflex/operators.hpp"

namespace rflex {

enum class FactorizationKind { arnoldi, golub_kahan };

/// State of a (possibly ell-truncated) flexible Arnoldi or Golub-Kahan process
///   A Ψ⁻¹ Z_k = U_{k+1} H_{k+1,k},   Z_k = [W_1⁻¹ v_1, ..., W_k⁻¹ v_k].
/// With ell = nullopt every new vector is orthogonalized against all previous
/// ones. Storage grows geometrically; the accessors return the active blocks.
struct FlexibleFactorization {
  FactorizationKind kind = FactorizationKind::golub_kahan;
  std::optional<Index> ell;
  Index k = 0;
  double beta1 = 0.0;
  bool breakdown = false;

  Matrix z_store;  // n x cap
  Matrix u_store;  // m x (cap + 1)
  Matrix v_store;  // n x cap (Golub-Kahan only)
  Matrix h_store;  // (cap + 1) x cap

  auto Z() const { return z_store.leftCols(k); }
  auto U() const { return u_store.leftCols(k + 1); }
  auto V() const { return v_store.leftCols(k); }
  auto H() const { return h_store.topLeftCorner(k + 1, k); }
};

/// u_1 = b / ‖b‖ and an empty basis. Arnoldi requires a square operator.
FlexibleFactorization start_flexible_factorization(FactorizationKind kind, std::optional<Index> ell,
                                                   const LinearOperator& a, const Vector& b, Index capacity = 16);

/// One step k -> k+1 with the preconditioner W_{k+1}⁻¹ = diag(w_inv). Orthogonalization is modified Gram-Schmidt
/// plus one reorthogonalization pass over the retained window (the last ell
/// vectors, or all of them). A new direction whose norm drops below 1e-14 of
/// its norm before orthogonalization sets `breakdown`; if the breakdown is in
/// the A-image the new column is still appended with a zero subdiagonal.
/// Returns false when no column could be appended.
bool flex_expand(FlexibleFactorization& state, const LinearOperator& a, const LinearOperator& psi_inv,
                 const Vector& w_inv);

/// A Ψ⁻¹ Z_k recovered from the factorization as U_{k+1} H_{k+1,k}.
Matrix factorization_image(const FlexibleFactorization& state);

struct IterativeResult {
  Vector x;
  /// Residual norm after each iteration, starting with the initial residual.
  std::vector<double> residual_history;
  Index iterations = 0;
  bool converged = false;
  bool stagnated = false;
};

/// LSQR (Paige-Saunders) for min ‖K y - rhs‖ with K given by the callables
/// fwd: R^n -> R^M and adj: R^M -> R^n. Stops when ‖Kᵀr‖ <= tol ‖K‖ ‖r‖
/// (‖K‖ the running Frobenius estimate), when ‖r‖ <= tol ‖rhs‖, after maxit
/// iterations, or when neither ‖r‖ nor ‖Kᵀr‖ improved over 10 iterations
/// (flagged as stagnation).
template <class Fwd, class Adj>
IterativeResult lsqr_core(Fwd&& fwd, Adj&& adj, const Vector& rhs, Index n, double tol, Index maxit) {
  IterativeResult res;
  res.x = Vector::Zero(n);
  Vector u = rhs;
  double beta = u.norm();
  res.residual_history.push_back(beta);
  if (beta == 0.0) {
    res.converged = true;
    return res;
  }
  u /= beta;
  Vector v = adj(u);
  double alpha = v.norm();
  if (alpha == 0.0) {
    res.converged = true;
    return res;
  }
  v /= alpha;
  Vector w = v;
  double phibar = beta;
  double rhobar = alpha;
  double anorm2 = alpha * alpha;
  const double bnorm = beta;
  std::vector<double> normal_history{alpha * beta};

  for (Index it = 0; it < maxit; ++it) {
    u = fwd(v) - alpha * u;
    beta = u.norm();
    if (beta > 0.0) u /= beta;
    anorm2 += beta * beta;
    v = adj(u) - beta * v;
    alpha = v.norm();
    if (alpha > 0.0) v /= alpha;
    anorm2 += alpha * alpha;

    const double rho = std::hypot(rhobar, beta);
    const double c = rhobar / rho;
    const double s = beta / rho;
    const double theta = s * alpha;
    rhobar = -c * alpha;
    const double phi = c * phibar;
    phibar = s * phibar;
    res.x += (phi / rho) * w;
    w = v - (theta / rho) * w;
    res.iterations = it + 1;
    res.residual_history.push_back(phibar);

    const double normal = phibar * alpha * std::abs(c);
    normal_history.push_back(normal);
    if (normal <= tol * std::sqrt(anorm2) * phibar || phibar <= tol * bnorm || alpha == 0.0 || beta == 0.0) {
      res.converged = true;
      break;
    }
    const std::size_t h = res.residual_history.size();
    if (h > 11) {
      const double r_then = res.residual_history[h - 11];
      const double n_then = *std::min_element(normal_history.begin(), normal_history.end() - 10);
      const double n_recent = *std::min_element(normal_history.end() - 10, normal_history.end());
      if (phibar >= r_then * (1.0 - 1e-14) && n_recent >= n_then) {
        res.stagnated = true;
        break;
      }
    }
  }
  return res;
}

/// min ‖[A; √λ I] x - [b; 0]‖. With an upper-triangular right preconditioner
/// R the iteration runs on [A; √λ I] R⁻¹ and x = R⁻¹ y is returned.
IterativeResult lsqr_solve(const LinearOperator& a, const Vector& b, double lambda, const Matrix* right_precond,
                           double tol, Index maxit);

/// Full GMRES (Arnoldi with MGS and reorthogonalization, Givens rotations)
/// from x0 = 0; the residual history is non-increasing.
IterativeResult gmres_solve(const LinearOperator& a, const Vector& b, double tol, Index maxit);

}  // namespace rflex
