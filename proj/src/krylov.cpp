#include "rflex/krylov.hpp"

#include <stdexcept>

namespace rflex {

namespace {

constexpr double kBreakdownRatio = 1e-14;

/// Two modified Gram-Schmidt sweeps of w against columns [first, last) of
/// basis; the projection coefficients are accumulated into coeffs.
void orthogonalize(const Matrix& basis, Index first, Index last, Vector& w, Vector& coeffs) {
  coeffs.setZero(last - first);
  for (int pass = 0; pass < 2; ++pass) {
    for (Index j = first; j < last; ++j) {
      const double c = basis.col(j).dot(w);
      w -= c * basis.col(j);
      coeffs(j - first) += c;
    }
  }
}

Index window_start(const std::optional<Index>& ell, Index end) {
  if (!ell) return 0;
  return std::max<Index>(0, end - *ell);
}

void grow(FlexibleFactorization& s) {
  const Index cap = s.z_store.cols();
  if (s.k < cap) return;
  const Index next = std::max<Index>(4, 2 * cap);
  s.z_store.conservativeResize(Eigen::NoChange, next);
  if (s.kind == FactorizationKind::golub_kahan) s.v_store.conservativeResize(Eigen::NoChange, next);
  s.u_store.conservativeResize(Eigen::NoChange, next + 1);
  Matrix h = Matrix::Zero(next + 1, next);
  h.topLeftCorner(s.h_store.rows(), s.h_store.cols()) = s.h_store;
  s.h_store.swap(h);
}

}  // namespace

FlexibleFactorization start_flexible_factorization(FactorizationKind kind, std::optional<Index> ell,
                                                   const LinearOperator& a, const Vector& b, Index capacity) {
  if (b.size() != a.rows())
    throw DimensionError("flexible factorization: operator is " + shape_string(a.rows(), a.cols()) +
                         " but b has length " + std::to_string(b.size()));
  if (kind == FactorizationKind::arnoldi && a.rows() != a.cols())
    throw DimensionError("flexible Arnoldi needs a square operator, got " + shape_string(a.rows(), a.cols()));
  if (ell && *ell < 0) throw std::invalid_argument("truncation parameter must be non-negative");
  capacity = std::max<Index>(capacity, 1);
  FlexibleFactorization s;
  s.kind = kind;
  s.ell = ell;
  s.beta1 = b.norm();
  s.z_store.resize(a.cols(), capacity);
  if (kind == FactorizationKind::golub_kahan) s.v_store.resize(a.cols(), capacity);
  s.u_store.resize(a.rows(), capacity + 1);
  s.h_store = Matrix::Zero(capacity + 1, capacity);
  if (s.beta1 == 0.0) {
    s.breakdown = true;
    s.u_store.col(0).setZero();
  } else {
    s.u_store.col(0) = b / s.beta1;
  }
  return s;
}

bool flex_expand(FlexibleFactorization& s, const LinearOperator& a, const LinearOperator& psi_inv,
                 const Vector& w_inv) {
  if (s.breakdown) return false;
  if (w_inv.size() != a.cols() || psi_inv.rows() != a.cols() || psi_inv.cols() != a.cols())
    throw DimensionError("flex_expand: operator is " + shape_string(a.rows(), a.cols()) + ", psi_inv " +
                         shape_string(psi_inv.rows(), psi_inv.cols()) + ", weights length " +
                         std::to_string(w_inv.size()));
  grow(s);
  const Index k = s.k;
  Vector coeffs;

  Vector v;
  if (s.kind == FactorizationKind::arnoldi) {
    v = s.u_store.col(k);
  } else {
    v = psi_inv.apply_adjoint(a.apply_adjoint(Vector(s.u_store.col(k))));
    const double before = v.norm();
    orthogonalize(s.v_store, window_start(s.ell, k), k, v, coeffs);
    const double after = v.norm();
    if (before == 0.0 || after <= kBreakdownRatio * before) {
      s.breakdown = true;
      return false;
    }
    v /= after;
    s.v_store.col(k) = v;
  }

  const Vector z = w_inv.cwiseProduct(v);
  Vector w = a.apply(psi_inv.apply(z));
  const double before = w.norm();
  const Index first = window_start(s.ell, k + 1);
  orthogonalize(s.u_store, first, k + 1, w, coeffs);
  s.z_store.col(k) = z;
  s.h_store.col(k).setZero();
  s.h_store.block(first, k, k + 1 - first, 1) = coeffs;
  const double after = w.norm();
  if (before == 0.0 || after <= kBreakdownRatio * before) {
    s.breakdown = true;
    s.h_store(k + 1, k) = 0.0;
    s.u_store.col(k + 1).setZero();
  } else {
    s.h_store(k + 1, k) = after;
    s.u_store.col(k + 1) = w / after;
  }
  s.k = k + 1;
  return true;
}

Matrix factorization_image(const FlexibleFactorization& state) { return state.U() * state.H(); }

IterativeResult lsqr_solve(const LinearOperator& a, const Vector& b, double lambda, const Matrix* right_precond,
                           double tol, Index maxit) {
  if (b.size() != a.rows())
    throw DimensionError("lsqr_solve: operator is " + shape_string(a.rows(), a.cols()) + " but b has length " +
                         std::to_string(b.size()));
  if (lambda < 0.0) throw std::invalid_argument("lsqr_solve: lambda must be non-negative");
  const Index m = a.rows();
  const Index n = a.cols();
  if (right_precond && (right_precond->rows() != n || right_precond->cols() != n))
    throw DimensionError("lsqr_solve: preconditioner is " + shape_string(right_precond->rows(), right_precond->cols()) +
                         " but the operator has " + std::to_string(n) + " columns");
  const double sl = std::sqrt(lambda);
  const bool damped = lambda > 0.0;

  auto precond = [&](const Vector& y) -> Vector {
    if (!right_precond) return y;
    return right_precond->triangularView<Eigen::Upper>().solve(y);
  };
  auto precond_t = [&](const Vector& y) -> Vector {
    if (!right_precond) return y;
    return right_precond->transpose().triangularView<Eigen::Lower>().solve(y);
  };
  auto fwd = [&](const Vector& y) -> Vector {
    const Vector x = precond(y);
    if (!damped) return a.apply(x);
    Vector out(m + n);
    out.head(m) = a.apply(x);
    out.tail(n) = sl * x;
    return out;
  };
  auto adj = [&](const Vector& r) -> Vector {
    if (!damped) return precond_t(a.apply_adjoint(r));
    Vector t = a.apply_adjoint(Vector(r.head(m)));
    t += sl * r.tail(n);
    return precond_t(t);
  };
  Vector rhs = Vector::Zero(damped ? m + n : m);
  rhs.head(m) = b;
  IterativeResult res = lsqr_core(fwd, adj, rhs, n, tol, maxit);
  res.x = precond(res.x);
  return res;
}

IterativeResult gmres_solve(const LinearOperator& a, const Vector& b, double tol, Index maxit) {
  if (a.rows() != a.cols()) throw DimensionError("gmres_solve: operator must be square, got " +
                                                 shape_string(a.rows(), a.cols()));
  if (b.size() != a.rows())
    throw DimensionError("gmres_solve: operator is " + shape_string(a.rows(), a.cols()) + " but b has length " +
                         std::to_string(b.size()));
  const Index n = a.rows();
  maxit = std::min(maxit, n);
  IterativeResult res;
  res.x = Vector::Zero(n);
  const double beta = b.norm();
  res.residual_history.push_back(beta);
  if (beta == 0.0) {
    res.converged = true;
    return res;
  }
  Matrix v(n, maxit + 1);
  Matrix h = Matrix::Zero(maxit + 1, maxit);
  Vector cs = Vector::Zero(maxit);
  Vector sn = Vector::Zero(maxit);
  Vector g = Vector::Zero(maxit + 1);
  g(0) = beta;
  v.col(0) = b / beta;
  Index k = 0;
  Vector coeffs;
  for (; k < maxit; ++k) {
    Vector w = a.apply(Vector(v.col(k)));
    const double before = w.norm();
    orthogonalize(v, 0, k + 1, w, coeffs);
    h.block(0, k, k + 1, 1) = coeffs;
    const double after = w.norm();
    const bool breakdown = before == 0.0 || after <= kBreakdownRatio * before;
    h(k + 1, k) = breakdown ? 0.0 : after;
    if (!breakdown) v.col(k + 1) = w / after;
    for (Index i = 0; i < k; ++i) {
      const double t = cs(i) * h(i, k) + sn(i) * h(i + 1, k);
      h(i + 1, k) = -sn(i) * h(i, k) + cs(i) * h(i + 1, k);
      h(i, k) = t;
    }
    const double r = std::hypot(h(k, k), h(k + 1, k));
    cs(k) = r == 0.0 ? 1.0 : h(k, k) / r;
    sn(k) = r == 0.0 ? 0.0 : h(k + 1, k) / r;
    h(k, k) = r;
    h(k + 1, k) = 0.0;
    g(k + 1) = -sn(k) * g(k);
    g(k) = cs(k) * g(k);
    res.residual_history.push_back(std::abs(g(k + 1)));
    if (breakdown || std::abs(g(k + 1)) <= tol * beta) {
      res.converged = true;
      ++k;
      break;
    }
  }
  res.iterations = k;
  const Vector y = h.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
  res.x = v.leftCols(k) * y;
  return res;
}

}  // namespace rflex
