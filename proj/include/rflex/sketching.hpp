#pragma once

#include <cstdint>
#include <vector>

#include "rflex/types.hpp"

namespace rflex {

enum class SketchKind { row_sampling, dense };

/// s x m embedding. The row-sampling kind stores 0-based selected rows and
/// per-row scale factors; row j of S * M is scales[j] * M.row(rows[j]).
/// A dense kind exists for contrived embeddings that are not row samplers.
class SketchOperator {
 public:
  SketchOperator() = default;

  /// S = I_m (s = m, rows j -> j, unit scales).
  static SketchOperator identity(Index m);
  /// Explicit row-sampling sketch; probabilities are left empty.
  static SketchOperator from_rows(Index m, std::vector<Index> rows, Vector scales);
  /// General s x m matrix.
  static SketchOperator from_matrix(const Matrix& s);

  SketchKind kind() const { return kind_; }
  Index size() const;
  Index ambient_dim() const { return m_; }
  const std::vector<Index>& selected_rows() const { return rows_; }
  const Vector& scales() const { return scales_; }
  const Vector& probabilities() const { return probabilities_; }
  std::uint64_t seed() const { return seed_; }
  const Matrix& matrix() const { return dense_; }
  bool is_identity() const { return is_identity_; }

  friend SketchOperator build_leverage_sketch(const Vector& p, Index s, std::uint64_t seed);

 private:
  SketchKind kind_ = SketchKind::row_sampling;
  Index m_ = 0;
  std::vector<Index> rows_;
  Vector scales_;
  Vector probabilities_;
  std::uint64_t seed_ = 0;
  Matrix dense_;
  bool is_identity_ = false;
};

/// Orthonormal basis of range(M) from a column-pivoted QR; the numerical rank
/// uses the default threshold of Eigen's rank-revealing QR.
Matrix orthonormal_basis(const Matrix& m);

/// Squared row norms of an orthonormal basis for range(M), from a
/// column-pivoted (rank-revealing) QR. Sums to rank(M).
Vector estimate_leverage_scores(const Matrix& m);

/// s i.i.d. draws from the distribution proportional to p (inverse CDF on a
/// counter-based generator), with scales sqrt(sum(p) / (s p_xi)). Rows with
/// zero weight are never drawn.
SketchOperator build_leverage_sketch(const Vector& p, Index s, std::uint64_t seed);

Matrix apply_sketch(const SketchOperator& s, const Matrix& m);
Vector apply_sketch(const SketchOperator& s, const Vector& v);

/// Selected rows of M without the scale factors (row-sampling kind only).
Matrix gather_rows(const SketchOperator& s, const Matrix& m);

/// w_bar with w_bar[j] = w[rows[j]], so that S diag(w) = diag(w_bar) S.
Vector commute_diagonal(const SketchOperator& s, const Vector& w);

/// diag(w_bar) * S * M evaluated from the gathered rows G = gather_rows(S, M)
/// as scales[j] * (w_bar[j] * G(j, i)). This is the same operation order as
/// apply_sketch(S, diag(w) * M), so both agree bit for bit.
Matrix apply_sketch_weighted(const SketchOperator& s, const Vector& w_bar, const Matrix& gathered);

enum class DistortionMetric {
  /// max |‖Sx‖/‖x‖ - 1|
  norm,
  /// max |‖Sx‖²/‖x‖² - 1|, the form in which quadratic functionals are bounded
  squared_norm,
};

/// Monte-Carlo distortion of S over span(basis): random Gaussian combinations
/// of an orthonormal basis of the span.
double measure_distortion(const SketchOperator& s, const Matrix& basis, int trials, std::uint64_t seed,
                          DistortionMetric metric = DistortionMetric::norm);

/// Exact distortion from the extreme singular values of S Q, Q an orthonormal
/// basis of span(basis).
double exact_distortion(const SketchOperator& s, const Matrix& basis,
                        DistortionMetric metric = DistortionMetric::norm);

}  // namespace rflex
