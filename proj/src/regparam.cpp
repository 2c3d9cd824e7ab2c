#include "rflex/regparam.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/SVD>

namespace rflex {

double dp_target(double tau_lambda, double nl, double norm_b) {
  if (!(tau_lambda > 1.0)) throw std::invalid_argument("discrepancy safety factor must exceed 1");
  return tau_lambda * nl * norm_b;
}

ParamChoice dp_select(const std::function<double(double)>& residual_norm, double target, double scale) {
  if (!(target > 0.0)) throw std::invalid_argument("dp_select: target must be positive");
  if (!(scale > 0.0)) scale = 1.0;
  if (residual_norm(0.0) >= target) return {0.0, false};
  double lo = std::log(1e-12 * scale);
  double hi = std::log(1e12 * scale);
  if (residual_norm(std::exp(hi)) < target) return {std::exp(hi), true};
  if (residual_norm(std::exp(lo)) >= target) return {std::exp(lo), false};
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 100; ++it) {
    mid = 0.5 * (lo + hi);
    const double r = residual_norm(std::exp(mid));
    if (std::abs(r - target) <= 1e-6 * target) break;
    if (r < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return {std::exp(mid), false};
}

ParamChoice minimize_on_log_grid(const std::function<double(double)>& f, double lo, double hi, Index points,
                                 double rel_tol) {
  if (!(lo > 0.0 && hi > lo) || points < 3) throw std::invalid_argument("minimize_on_log_grid: bad search range");
  const double a = std::log(lo);
  const double b = std::log(hi);
  const double step = (b - a) / static_cast<double>(points - 1);
  Index best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  double vmin = std::numeric_limits<double>::infinity();
  double vmax = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < points; ++i) {
    const double v = f(std::exp(a + step * static_cast<double>(i)));
    if (std::isfinite(v)) {
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  if (!std::isfinite(best_val)) return {std::exp(a), true};
  if (vmax - vmin <= 1e-14 * std::abs(vmax)) return {std::exp(a + step * static_cast<double>(best)), true};
  if (best == 0 || best == points - 1) return {std::exp(a + step * static_cast<double>(best)), true};

  // Golden-section search in log λ over the neighbouring grid cells.
  double left = a + step * static_cast<double>(best - 1);
  double right = a + step * static_cast<double>(best + 1);
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = right - ratio * (right - left);
  double x2 = left + ratio * (right - left);
  double f1 = f(std::exp(x1));
  double f2 = f(std::exp(x2));
  const double tol = std::log1p(rel_tol);
  while (right - left > tol) {
    if (f1 <= f2) {
      right = x2;
      x2 = x1;
      f2 = f1;
      x1 = right - ratio * (right - left);
      f1 = f(std::exp(x1));
    } else {
      left = x1;
      x1 = x2;
      f1 = f2;
      x2 = left + ratio * (right - left);
      f2 = f(std::exp(x2));
    }
  }
  const double refined = 0.5 * (left + right);
  if (f(std::exp(refined)) <= best_val) return {std::exp(refined), false};
  return {std::exp(a + step * static_cast<double>(best)), false};
}

double wgcv_omega(Index k, Index s) {
  if (k < 1 || s < 1) throw std::invalid_argument("wgcv_omega: k and s must be positive");
  return std::min(1.0, static_cast<double>(k + 1) / static_cast<double>(s));
}

double projected_gcv_value(const GsvdPair& g, const Vector& beta_hat, double lambda, double omega) {
  const Index k = g.c.size();
  double res = 0.0;
  double trace = static_cast<double>(k);
  for (Index i = 0; i < k; ++i) {
    const double c2 = g.c(i) * g.c(i);
    const double denom = c2 + lambda * g.s(i) * g.s(i);
    const double f = denom > 0.0 ? c2 / denom : 0.0;
    const double r = (1.0 - f) * beta_hat(i);
    res += r * r;
    trace -= omega * f;
  }
  if (trace <= 0.0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(k) * res / (trace * trace);
}

ParamChoice wgcv_select_with_omega(const ProjectedProblem& pp, double omega) {
  if (!(omega > 0.0 && omega <= 1.0)) throw std::invalid_argument("wgcv: omega must lie in (0, 1]");
  const GsvdPair g = gsvd_small(pp.r1, pp.r2);
  const Vector beta_hat = g.u.transpose() * pp.beta;
  const double smax = Eigen::JacobiSVD<Matrix>(pp.r1).singularValues()(0);
  const double scale = smax > 0.0 ? smax * smax : 1.0;
  return minimize_on_log_grid([&](double l) { return projected_gcv_value(g, beta_hat, l, omega); }, 1e-12 * scale,
                              1e4 * scale);
}

ParamChoice wgcv_select(const ProjectedProblem& pp, Index s, Index k) {
  return wgcv_select_with_omega(pp, wgcv_omega(k, s));
}

namespace {

struct SvdData {
  Vector sigma;
  Vector coef;   // Uᵀ b
  double outside = 0.0;  // ‖b - U Uᵀ b‖²
  Index m = 0;
  Index rank = 0;
};

SvdData svd_data(const Matrix& a_k, const Vector& b) {
  if (b.size() != a_k.rows())
    throw DimensionError("gcv_full: matrix is " + shape_string(a_k.rows(), a_k.cols()) + " but b has length " +
                         std::to_string(b.size()));
  if (std::min(a_k.rows(), a_k.cols()) > 500)
    throw DimensionError("gcv_full: matrix " + shape_string(a_k.rows(), a_k.cols()) + " is too large for a dense SVD");
  Eigen::JacobiSVD<Matrix> svd(a_k, Eigen::ComputeThinU);
  SvdData d;
  d.m = a_k.rows();
  const Vector sv = svd.singularValues();
  const double thresh = sv.size() > 0 ? sv(0) * 1e-15 * static_cast<double>(std::max(a_k.rows(), a_k.cols())) : 0.0;
  d.rank = 0;
  while (d.rank < sv.size() && sv(d.rank) > thresh) ++d.rank;
  d.sigma = sv.head(d.rank);
  const Matrix u = svd.matrixU().leftCols(d.rank);
  d.coef = u.transpose() * b;
  d.outside = std::max(0.0, b.squaredNorm() - d.coef.squaredNorm());
  return d;
}

double gcv_from_svd(const SvdData& d, double lambda) {
  double res = d.outside;
  double trace = static_cast<double>(d.m - d.rank);
  for (Index i = 0; i < d.rank; ++i) {
    const double f = lambda / (d.sigma(i) * d.sigma(i) + lambda);
    res += f * f * d.coef(i) * d.coef(i);
    trace += f;
  }
  if (trace <= 0.0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(d.m) * res / (trace * trace);
}

}  // namespace

double gcv_full_value(const Matrix& a_k, const Vector& b, double lambda) {
  return gcv_from_svd(svd_data(a_k, b), lambda);
}

ParamChoice gcv_full_select(const Matrix& a_k, const Vector& b) {
  const SvdData d = svd_data(a_k, b);
  const double scale = d.rank > 0 ? d.sigma(0) * d.sigma(0) : 1.0;
  return minimize_on_log_grid([&](double l) { return gcv_from_svd(d, l); }, 1e-12 * scale, 1e4 * scale);
}

ParamChoice optimal_select(const std::function<Vector(double)>& solution_map, const Vector& x_true, double scale,
                           Index points) {
  if (!(scale > 0.0)) scale = 1.0;
  return minimize_on_log_grid([&](double l) { return (solution_map(l) - x_true).norm(); }, 1e-12 * scale,
                              1e4 * scale, points);
}

}  // namespace rflex
