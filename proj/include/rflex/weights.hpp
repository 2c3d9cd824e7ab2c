#pragma once

#include "rflex/operators.hpp"
#include "rflex/sketching.hpp"

namespace rflex {

/// Smoothed lp weights (z^2 + tau^2)^((p-2)/4).
struct WeightSpec {
  double p = 1.0;
  double tau = 1e-10;

  /// Throws std::invalid_argument unless p in (0, 2] and tau > 0.
  void validate() const;
};

enum class ObjectiveVariant {
  /// ‖Ax-b‖² + λ Σ ((Ψx)_i² + τ²)^((p-2)/2) (Ψx)_i²
  literal,
  /// ‖Ax-b‖² + (2λ/p) Σ ((Ψx)_i² + τ²)^(p/2); globally majorized by the
  /// reweighted quadratic, so this is the functional monitored for descent.
  mm_consistent,
};

struct ObjectiveSpec {
  WeightSpec weight;
  double lambda = 0.0;
  LinearOperator psi;
  ObjectiveVariant variant = ObjectiveVariant::mm_consistent;
};

Vector compute_weights(const Vector& z, const WeightSpec& spec);

/// Penalty term of the objective (including λ) at z = Ψx.
double penalty_value(const Vector& z, const WeightSpec& spec, double lambda, ObjectiveVariant variant);

double objective_value(const LinearOperator& a, const Vector& b, const Vector& x, const ObjectiveSpec& spec);

/// c_k = (2λ/p) Σ (z_i²+τ²)^(p/2) - λ ‖W z‖², z = Ψ x_prev, W = weights(z).
double majorant_constant(const Vector& z_prev, const WeightSpec& spec, double lambda);

/// Q_k(x) = ‖Ax-b‖² + λ ‖W_k Ψ x‖² + c_k with W_k from Ψ x_prev. Tangent to
/// the mm_consistent objective at x_prev regardless of spec.variant.
double majorant_value(const LinearOperator& a, const Vector& b, const Vector& x, const Vector& x_prev,
                      const ObjectiveSpec& spec);

/// Q̂(x) = ‖S1(Ax-b)‖² + λ ‖S2 W x‖², w the diagonal of W.
double sketched_majorant_value(const SketchOperator& s1, const SketchOperator& s2, const LinearOperator& a,
                               const Vector& b, const Vector& w, const Vector& x, double lambda);

}  // namespace rflex
