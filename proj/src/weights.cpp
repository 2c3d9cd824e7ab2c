#include "rflex/weights.hpp"

#include <cmath>
#include <stdexcept>

namespace rflex {

void WeightSpec::validate() const {
  if (!(p > 0.0 && p <= 2.0)) throw std::invalid_argument("weight exponent p must lie in (0, 2], got " + std::to_string(p));
  if (!(tau > 0.0)) throw std::invalid_argument("smoothing parameter tau must be positive");
}

Vector compute_weights(const Vector& z, const WeightSpec& spec) {
  spec.validate();
  const double e = 0.5 * (spec.p - 2.0);
  Vector w(z.size());
  // hypot avoids the overflow of z^2 and the underflow of tau^2 for tiny tau.
  for (Index i = 0; i < z.size(); ++i) w(i) = e == 0.0 ? 1.0 : std::pow(std::hypot(z(i), spec.tau), e);
  return w;
}

double penalty_value(const Vector& z, const WeightSpec& spec, double lambda, ObjectiveVariant variant) {
  spec.validate();
  double acc = 0.0;
  if (variant == ObjectiveVariant::mm_consistent) {
    for (Index i = 0; i < z.size(); ++i) acc += std::pow(std::hypot(z(i), spec.tau), spec.p);
    return 2.0 * lambda / spec.p * acc;
  }
  for (Index i = 0; i < z.size(); ++i) {
    if (z(i) == 0.0) continue;
    acc += std::pow(std::hypot(z(i), spec.tau), spec.p - 2.0) * z(i) * z(i);
  }
  return lambda * acc;
}

namespace {

const LinearOperator& checked_psi(const ObjectiveSpec& spec, Index n) {
  if (spec.psi.rows() != n || spec.psi.cols() != n)
    throw DimensionError("objective: psi is " + shape_string(spec.psi.rows(), spec.psi.cols()) +
                         " but x has length " + std::to_string(n));
  return spec.psi;
}

double misfit(const LinearOperator& a, const Vector& b, const Vector& x) {
  if (b.size() != a.rows())
    throw DimensionError("objective: operator is " + shape_string(a.rows(), a.cols()) + " but b has length " +
                         std::to_string(b.size()));
  return (a.apply(x) - b).squaredNorm();
}

}  // namespace

double objective_value(const LinearOperator& a, const Vector& b, const Vector& x, const ObjectiveSpec& spec) {
  const Vector z = checked_psi(spec, x.size()).apply(x);
  return misfit(a, b, x) + penalty_value(z, spec.weight, spec.lambda, spec.variant);
}

double majorant_constant(const Vector& z_prev, const WeightSpec& spec, double lambda) {
  const Vector w = compute_weights(z_prev, spec);
  return penalty_value(z_prev, spec, lambda, ObjectiveVariant::mm_consistent) -
         lambda * w.cwiseProduct(z_prev).squaredNorm();
}

double majorant_value(const LinearOperator& a, const Vector& b, const Vector& x, const Vector& x_prev,
                      const ObjectiveSpec& spec) {
  if (x_prev.size() != x.size())
    throw DimensionError("majorant_value: x has length " + std::to_string(x.size()) + " but x_prev has length " +
                         std::to_string(x_prev.size()));
  const LinearOperator& psi = checked_psi(spec, x.size());
  const Vector z_prev = psi.apply(x_prev);
  const Vector w = compute_weights(z_prev, spec.weight);
  const Vector z = psi.apply(x);
  return misfit(a, b, x) + spec.lambda * w.cwiseProduct(z).squaredNorm() +
         majorant_constant(z_prev, spec.weight, spec.lambda);
}

double sketched_majorant_value(const SketchOperator& s1, const SketchOperator& s2, const LinearOperator& a,
                               const Vector& b, const Vector& w, const Vector& x, double lambda) {
  if (s1.ambient_dim() != a.rows() || b.size() != a.rows())
    throw DimensionError("sketched_majorant_value: S1 ambient dimension " + std::to_string(s1.ambient_dim()) +
                         ", operator " + shape_string(a.rows(), a.cols()) + ", b length " +
                         std::to_string(b.size()));
  if (s2.ambient_dim() != x.size() || w.size() != x.size())
    throw DimensionError("sketched_majorant_value: S2 ambient dimension " + std::to_string(s2.ambient_dim()) +
                         ", weights length " + std::to_string(w.size()) + ", x length " + std::to_string(x.size()));
  const Vector r = a.apply(x) - b;
  const Vector wx = w.cwiseProduct(x);
  return apply_sketch(s1, r).squaredNorm() + lambda * apply_sketch(s2, wx).squaredNorm();
}

}  // namespace rflex
