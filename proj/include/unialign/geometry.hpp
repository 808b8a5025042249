#pragma once

// Normalized-embedding primitives shared by the losses and the estimators:
// batch types, squared distances in both geometries, Gaussian kernels,
// weighted centroids and per-tuple Gram matrices.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "unialign/error.hpp"

namespace unialign {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixT<double>;
using Vector = VectorT<double>;

inline constexpr double kUnitNormTolerance = 1e-9;
inline constexpr double kZeroNormThreshold = 1e-12;
inline constexpr double kCentroidEpsilon = 1e-8;

enum class Geometry { Euclidean, Geodesic };

inline std::string to_string(Geometry g) {
  return g == Geometry::Euclidean ? "euclidean" : "geodesic";
}

struct KernelSpec {
  Geometry geometry = Geometry::Euclidean;
  double tau = 0.07;

  void validate() const {
    require(tau > 0.0 && std::isfinite(tau), ErrorCode::InvalidArgument,
            "kernel bandwidth tau must be positive, got " + std::to_string(tau));
  }
};

/// B unit-norm rows of dimension d belonging to one modality.
class ModalityBatch {
 public:
  /// Wraps rows that are already unit-norm; throws if any row is not.
  static ModalityBatch from_unit_rows(Matrix rows, int modality_id = 0) {
    check_shape(rows);
    for (Index i = 0; i < rows.rows(); ++i) {
      const double n = rows.row(i).norm();
      require(std::abs(n - 1.0) <= kUnitNormTolerance, ErrorCode::InvalidArgument,
              "row " + std::to_string(i) + " has norm " + std::to_string(n) + ", expected 1");
    }
    return ModalityBatch(std::move(rows), modality_id);
  }

  const Matrix& data() const noexcept { return data_; }
  int modality_id() const noexcept { return modality_id_; }
  Index size() const noexcept { return data_.rows(); }
  Index dim() const noexcept { return data_.cols(); }
  auto row(Index i) const { return data_.row(i); }

 private:
  friend ModalityBatch l2_normalize(const Matrix& rows, int modality_id);

  ModalityBatch(Matrix data, int modality_id) : data_(std::move(data)), modality_id_(modality_id) {}

  static void check_shape(const Matrix& rows) {
    require(rows.rows() >= 1, ErrorCode::InvalidArgument, "a batch needs at least one row");
    require(rows.cols() >= 2, ErrorCode::InvalidArgument,
            "embedding dimension must be at least 2, got " + std::to_string(rows.cols()));
  }

  Matrix data_;
  int modality_id_ = 0;
};

/// Divides every row by its Euclidean norm.
inline ModalityBatch l2_normalize(const Matrix& rows, int modality_id = 0) {
  ModalityBatch::check_shape(rows);
  Matrix out(rows.rows(), rows.cols());
  for (Index i = 0; i < rows.rows(); ++i) {
    const double n = rows.row(i).norm();
    require(n > kZeroNormThreshold, ErrorCode::ZeroVector,
            "row " + std::to_string(i) + " has norm " + std::to_string(n));
    out.row(i) = rows.row(i) / n;
  }
  return ModalityBatch(std::move(out), modality_id);
}

/// M aligned modality batches; row i of every modality forms tuple i.
class MultimodalBatch {
 public:
  MultimodalBatch(const std::vector<ModalityBatch>& modalities, int anchor = 0) {
    require(modalities.size() >= 2, ErrorCode::InvalidArgument,
            "a multimodal batch needs at least two modalities");
    const Index b = modalities.front().size();
    const Index d = modalities.front().dim();
    for (const auto& m : modalities) {
      require(m.size() == b && m.dim() == d, ErrorCode::DimensionMismatch,
              "modalities disagree on batch size or dimension");
      data_.push_back(m.data());
    }
    set_anchor(anchor);
  }

  /// Validates unit norms of every row of every modality.
  static MultimodalBatch from_matrices(std::vector<Matrix> modalities, int anchor = 0) {
    std::vector<ModalityBatch> batches;
    batches.reserve(modalities.size());
    for (std::size_t m = 0; m < modalities.size(); ++m)
      batches.push_back(ModalityBatch::from_unit_rows(std::move(modalities[m]), static_cast<int>(m)));
    return MultimodalBatch(batches, anchor);
  }

  static MultimodalBatch normalized(const std::vector<Matrix>& modalities, int anchor = 0) {
    std::vector<ModalityBatch> batches;
    for (std::size_t m = 0; m < modalities.size(); ++m)
      batches.push_back(l2_normalize(modalities[m], static_cast<int>(m)));
    return MultimodalBatch(batches, anchor);
  }

  const std::vector<Matrix>& matrices() const noexcept { return data_; }
  const Matrix& modality(int m) const { return data_.at(static_cast<std::size_t>(m)); }
  int num_modalities() const noexcept { return static_cast<int>(data_.size()); }
  Index batch_size() const noexcept { return data_.front().rows(); }
  Index dim() const noexcept { return data_.front().cols(); }
  int anchor() const noexcept { return anchor_; }

  void set_anchor(int anchor) {
    require(anchor >= 0 && anchor < num_modalities(), ErrorCode::InvalidArgument,
            "anchor index " + std::to_string(anchor) + " out of range");
    anchor_ = anchor;
  }

  /// Tuple i as an M x d matrix.
  Matrix tuple(Index i) const {
    Matrix t(num_modalities(), dim());
    for (int m = 0; m < num_modalities(); ++m) t.row(m) = data_[static_cast<std::size_t>(m)].row(i);
    return t;
  }

 private:
  std::vector<Matrix> data_;
  int anchor_ = 0;
};

// ---------------------------------------------------------------------------
// Distances and kernels. The templated forms work on raw matrices (rows need
// not be unit-norm) so finite-difference checks can perturb coordinates.

/// theta / sin(theta) for theta = arccos(c); the factor that turns the
/// derivative of arccos(c)^2 into a multiple of the other vector. At the
/// antipode the derivative has no preferred direction and 0 is returned.
template <typename Scalar>
Scalar arc_ratio(Scalar c) {
  using std::acos;
  using std::sqrt;
  const Scalar one(1);
  const Scalar cc = std::clamp(c, -one, one);
  const Scalar s2 = one - cc * cc;
  if (s2 <= Scalar(1e-30)) return cc > 0 ? one : Scalar(0);
  return acos(cc) / sqrt(s2);
}

template <typename Scalar, typename RowA, typename RowB>
Scalar sq_dist(const RowA& a, const RowB& b, Geometry geometry) {
  if (geometry == Geometry::Euclidean) return (a - b).squaredNorm();
  if ((a.array() == b.array()).all()) return Scalar(0);
  using std::acos;
  const Scalar one(1);
  const Scalar theta = acos(std::clamp<Scalar>(a.dot(b), -one, one));
  return theta * theta;
}

template <typename Scalar>
MatrixT<Scalar> pairwise_sq_dist(const MatrixT<Scalar>& a, const MatrixT<Scalar>& b, Geometry geometry) {
  require(a.cols() == b.cols(), ErrorCode::DimensionMismatch,
          "pairwise distance between dimensions " + std::to_string(a.cols()) + " and " +
              std::to_string(b.cols()));
  MatrixT<Scalar> out(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j) out(i, j) = sq_dist<Scalar>(a.row(i), b.row(j), geometry);
  return out;
}

inline Matrix pairwise_sq_dist(const ModalityBatch& a, const ModalityBatch& b, Geometry geometry) {
  return pairwise_sq_dist<double>(a.data(), b.data(), geometry);
}

/// exp(-sq_dist / (2 tau^2)) entrywise. Far pairs may underflow to 0.
template <typename Derived>
auto gaussian_kernel(const Eigen::MatrixBase<Derived>& sq_dist, const KernelSpec& spec) {
  spec.validate();
  using Scalar = typename Derived::Scalar;
  const Scalar scale = Scalar(-1) / (Scalar(2) * Scalar(spec.tau) * Scalar(spec.tau));
  MatrixT<Scalar> out = (sq_dist.derived().array() * scale).exp().matrix();
  return out;
}

/// Weighted, normalized centroid of one tuple (rows of `tuple`).
inline Vector centroid(const Matrix& tuple, std::span<const double> weights) {
  require(static_cast<Index>(weights.size()) == tuple.rows(), ErrorCode::DimensionMismatch,
          "centroid weights do not match the tuple size");
  double total = 0.0;
  for (double w : weights) {
    require(w >= 0.0, ErrorCode::InvalidWeights, "centroid weights must be nonnegative");
    total += w;
  }
  require(std::abs(total - 1.0) <= 1e-9, ErrorCode::InvalidWeights, "centroid weights must sum to 1");
  Vector s = Vector::Zero(tuple.cols());
  for (Index m = 0; m < tuple.rows(); ++m) s += weights[static_cast<std::size_t>(m)] * tuple.row(m).transpose();
  const double n = s.norm();
  require(n > kCentroidEpsilon, ErrorCode::DegenerateCentroid,
          "weighted tuple sum has norm " + std::to_string(n));
  return s / n;
}

/// [G]_{mn} = <z^(m), z^(n)> for the rows of `tuple`.
template <typename Scalar>
MatrixT<Scalar> gram_matrix(const MatrixT<Scalar>& tuple) {
  const Index m = tuple.rows();
  MatrixT<Scalar> g(m, m);
  for (Index a = 0; a < m; ++a)
    for (Index b = a; b < m; ++b) g(a, b) = g(b, a) = tuple.row(a).dot(tuple.row(b));
  return g;
}

inline Matrix gram_matrix(const std::vector<Vector>& tuple) {
  require(!tuple.empty(), ErrorCode::InvalidArgument, "empty tuple");
  Matrix rows(static_cast<Index>(tuple.size()), tuple.front().size());
  for (std::size_t m = 0; m < tuple.size(); ++m) {
    require(tuple[m].size() == rows.cols(), ErrorCode::DimensionMismatch,
            "tuple vectors differ in dimension");
    rows.row(static_cast<Index>(m)) = tuple[m].transpose();
  }
  return gram_matrix<double>(rows);
}

}  // namespace unialign
