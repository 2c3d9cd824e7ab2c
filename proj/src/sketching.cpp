#include "rflex/sketching.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "rflex/rng.hpp"

namespace rflex {

SketchOperator SketchOperator::identity(Index m) {
  if (m <= 0) throw DimensionError("identity sketch needs a positive dimension");
  SketchOperator s;
  s.m_ = m;
  s.rows_.resize(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) s.rows_[i] = i;
  s.scales_ = Vector::Ones(m);
  s.probabilities_ = Vector::Ones(m);
  s.is_identity_ = true;
  return s;
}

SketchOperator SketchOperator::from_rows(Index m, std::vector<Index> rows, Vector scales) {
  if (static_cast<Index>(rows.size()) != scales.size())
    throw DimensionError("from_rows: " + std::to_string(rows.size()) + " rows but " +
                         std::to_string(scales.size()) + " scales");
  for (Index r : rows)
    if (r < 0 || r >= m) throw DimensionError("from_rows: row index " + std::to_string(r) + " outside [0, m)");
  for (Index j = 0; j < scales.size(); ++j)
    if (!(scales(j) > 0.0) || !std::isfinite(scales(j)))
      throw std::invalid_argument("from_rows: scales must be finite and positive");
  SketchOperator s;
  s.m_ = m;
  s.rows_ = std::move(rows);
  s.scales_ = std::move(scales);
  return s;
}

SketchOperator SketchOperator::from_matrix(const Matrix& matrix) {
  SketchOperator s;
  s.kind_ = SketchKind::dense;
  s.m_ = matrix.cols();
  s.dense_ = matrix;
  return s;
}

Index SketchOperator::size() const {
  return kind_ == SketchKind::dense ? dense_.rows() : static_cast<Index>(rows_.size());
}

Matrix orthonormal_basis(const Matrix& m) {
  Eigen::ColPivHouseholderQR<Matrix> qr(m);
  const Index r = qr.rank();
  Matrix q = qr.householderQ() * Matrix::Identity(m.rows(), r);
  return q;
}

Vector estimate_leverage_scores(const Matrix& m) {
  if (m.cols() > m.rows())
    throw DimensionError("estimate_leverage_scores: more columns than rows (" + shape_string(m.rows(), m.cols()) +
                         ")");
  return orthonormal_basis(m).rowwise().squaredNorm();
}

SketchOperator build_leverage_sketch(const Vector& p, Index s, std::uint64_t seed) {
  if (s < 1) throw std::invalid_argument("build_leverage_sketch: s must be at least 1");
  if ((p.array() < 0.0).any() || !p.allFinite())
    throw std::invalid_argument("build_leverage_sketch: weights must be finite and non-negative");
  const double total = p.sum();
  if (!(total > 0.0)) throw std::invalid_argument("build_leverage_sketch: all sampling weights are zero");

  const Index m = p.size();
  std::vector<double> cdf(static_cast<std::size_t>(m));
  double acc = 0.0;
  for (Index i = 0; i < m; ++i) {
    acc += p(i);
    cdf[i] = acc / total;
  }
  // Force the last positive entry to close the distribution exactly.
  Index last = m - 1;
  while (p(last) == 0.0) --last;
  for (Index i = last; i < m; ++i) cdf[i] = 1.0;

  SketchOperator out;
  out.m_ = m;
  out.seed_ = seed;
  out.probabilities_ = p;
  out.rows_.resize(static_cast<std::size_t>(s));
  out.scales_.resize(s);
  CounterRng rng(seed, 0x736b6574);
  for (Index j = 0; j < s; ++j) {
    const double u = rng.uniform();
    // First index with cdf > u; zero-weight rows have cdf equal to their
    // predecessor and are therefore never the first to exceed u.
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const Index row = static_cast<Index>(it - cdf.begin());
    out.rows_[j] = row;
    out.scales_(j) = std::sqrt(total / (static_cast<double>(s) * p(row)));
  }
  return out;
}

Matrix apply_sketch(const SketchOperator& s, const Matrix& m) {
  if (m.rows() != s.ambient_dim())
    throw DimensionError("apply_sketch: sketch is " + shape_string(s.size(), s.ambient_dim()) + " but matrix is " +
                         shape_string(m.rows(), m.cols()));
  if (s.kind() == SketchKind::dense) return s.matrix() * m;
  Matrix out(s.size(), m.cols());
  const auto& rows = s.selected_rows();
  const Vector& sc = s.scales();
  for (Index i = 0; i < m.cols(); ++i)
    for (Index j = 0; j < s.size(); ++j) out(j, i) = sc(j) * m(rows[j], i);
  return out;
}

Vector apply_sketch(const SketchOperator& s, const Vector& v) {
  if (v.size() != s.ambient_dim())
    throw DimensionError("apply_sketch: sketch is " + shape_string(s.size(), s.ambient_dim()) +
                         " but vector has length " + std::to_string(v.size()));
  if (s.kind() == SketchKind::dense) return s.matrix() * v;
  Vector out(s.size());
  const auto& rows = s.selected_rows();
  for (Index j = 0; j < s.size(); ++j) out(j) = s.scales()(j) * v(rows[j]);
  return out;
}

Matrix gather_rows(const SketchOperator& s, const Matrix& m) {
  if (s.kind() != SketchKind::row_sampling) throw std::invalid_argument("gather_rows: sketch is not a row sampler");
  if (m.rows() != s.ambient_dim())
    throw DimensionError("gather_rows: sketch is " + shape_string(s.size(), s.ambient_dim()) + " but matrix is " +
                         shape_string(m.rows(), m.cols()));
  Matrix out(s.size(), m.cols());
  const auto& rows = s.selected_rows();
  for (Index i = 0; i < m.cols(); ++i)
    for (Index j = 0; j < s.size(); ++j) out(j, i) = m(rows[j], i);
  return out;
}

Vector commute_diagonal(const SketchOperator& s, const Vector& w) {
  if (s.kind() != SketchKind::row_sampling)
    throw std::invalid_argument("commute_diagonal: only row-sampling sketches commute with diagonal matrices");
  if (w.size() != s.ambient_dim())
    throw DimensionError("commute_diagonal: sketch ambient dimension " + std::to_string(s.ambient_dim()) +
                         " but diagonal has length " + std::to_string(w.size()));
  Vector out(s.size());
  const auto& rows = s.selected_rows();
  for (Index j = 0; j < s.size(); ++j) out(j) = w(rows[j]);
  return out;
}

Matrix apply_sketch_weighted(const SketchOperator& s, const Vector& w_bar, const Matrix& gathered) {
  if (w_bar.size() != s.size() || gathered.rows() != s.size())
    throw DimensionError("apply_sketch_weighted: sketch has " + std::to_string(s.size()) + " rows, weights " +
                         std::to_string(w_bar.size()) + ", gathered block " +
                         shape_string(gathered.rows(), gathered.cols()));
  Matrix out(gathered.rows(), gathered.cols());
  const Vector& sc = s.scales();
  for (Index i = 0; i < gathered.cols(); ++i)
    for (Index j = 0; j < gathered.rows(); ++j) out(j, i) = sc(j) * (w_bar(j) * gathered(j, i));
  return out;
}

namespace {

double distortion_of_ratio(double ratio_sq, DistortionMetric metric) {
  return metric == DistortionMetric::norm ? std::abs(std::sqrt(ratio_sq) - 1.0) : std::abs(ratio_sq - 1.0);
}

}  // namespace

double measure_distortion(const SketchOperator& s, const Matrix& basis, int trials, std::uint64_t seed,
                          DistortionMetric metric) {
  if (basis.rows() != s.ambient_dim())
    throw DimensionError("measure_distortion: sketch is " + shape_string(s.size(), s.ambient_dim()) +
                         " but basis is " + shape_string(basis.rows(), basis.cols()));
  if (basis.cols() == 0 || basis.isZero(0.0)) throw std::invalid_argument("measure_distortion: basis is zero");
  const Matrix q = orthonormal_basis(basis);
  CounterRng rng(seed, 0x64697374);
  double eps = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Vector x = q * normal_vector(rng, q.cols());
    const double nx = x.squaredNorm();
    if (nx == 0.0) continue;
    eps = std::max(eps, distortion_of_ratio(apply_sketch(s, x).squaredNorm() / nx, metric));
  }
  return eps;
}

double exact_distortion(const SketchOperator& s, const Matrix& basis, DistortionMetric metric) {
  if (basis.rows() != s.ambient_dim())
    throw DimensionError("exact_distortion: sketch is " + shape_string(s.size(), s.ambient_dim()) +
                         " but basis is " + shape_string(basis.rows(), basis.cols()));
  const Matrix q = orthonormal_basis(basis);
  if (q.cols() == 0) throw std::invalid_argument("exact_distortion: basis is zero");
  const Vector sv = Eigen::JacobiSVD<Matrix>(apply_sketch(s, q)).singularValues();
  const double hi = sv(0);
  const double lo = q.cols() <= s.size() ? sv(sv.size() - 1) : 0.0;
  return std::max(distortion_of_ratio(hi * hi, metric), distortion_of_ratio(lo * lo, metric));
}

}  // namespace rflex
