#pragma once

// Training objectives with hand-derived ambient gradients:
//   infonce            multimodal contrastive loss over all ordered pairs
//   uniformity         intra-modality Gaussian-kernel log-mean
//   alignment          squared distance of every modality to the anchor
//   tuple_uniformity   uniformity of the weighted normalized tuple centroids
//   volume_loss        mean sqrt det of the per-tuple Gram matrices
//
// Gradients are with respect to the raw coordinates (no tangent projection);
// the trainer handles the sphere constraint.

#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "unialign/geometry.hpp"

namespace unialign {

inline constexpr double kVolumeDetFloor = 1e-12;
inline constexpr double kVolumeRegularizer = 1e-9;

struct LossConfig {
  KernelSpec kernel{Geometry::Euclidean, 0.07};
  double lambda_align = 1.0;
  Matrix infonce_weights;             // M x M, empty means 1 for every m != n
  std::vector<double> tuple_weights;  // length M, empty means 1/M each
  double tau_ctr = 0.07;
  bool enable_tuple_uniformity = false;
  bool enable_volume = false;

  Matrix resolved_infonce_weights(int num_modalities) const {
    if (infonce_weights.size() == 0) {
      Matrix w = Matrix::Ones(num_modalities, num_modalities);
      w.diagonal().setZero();
      return w;
    }
    require(infonce_weights.rows() == num_modalities && infonce_weights.cols() == num_modalities,
            ErrorCode::DimensionMismatch, "infonce weights must be M x M");
    double off = 0.0;
    for (int m = 0; m < num_modalities; ++m)
      for (int n = 0; n < num_modalities; ++n) {
        require(infonce_weights(m, n) >= 0.0, ErrorCode::InvalidWeights, "infonce weights must be nonnegative");
        if (m != n) off += infonce_weights(m, n);
      }
    require(off > 0.0, ErrorCode::InvalidWeights, "all off-diagonal infonce weights are zero");
    Matrix w = infonce_weights;
    w.diagonal().setZero();
    return w;
  }

  std::vector<double> resolved_tuple_weights(int num_modalities) const {
    if (tuple_weights.empty()) return std::vector<double>(static_cast<std::size_t>(num_modalities), 1.0 / num_modalities);
    require(static_cast<int>(tuple_weights.size()) == num_modalities, ErrorCode::DimensionMismatch,
            "tuple weights must have one entry per modality");
    double total = 0.0;
    for (double w : tuple_weights) {
      require(w >= 0.0, ErrorCode::InvalidWeights, "tuple weights must be nonnegative");
      total += w;
    }
    require(std::abs(total - 1.0) <= 1e-9, ErrorCode::InvalidWeights, "tuple weights must sum to 1");
    return tuple_weights;
  }

  void validate() const {
    kernel.validate();
    require(lambda_align > 0.0, ErrorCode::InvalidArgument, "lambda_align must be positive");
    require(tau_ctr > 0.0, ErrorCode::InvalidArgument, "tau_ctr must be positive");
  }

  KernelSpec centroid_kernel() const { return KernelSpec{kernel.geometry, tau_ctr}; }
};

struct LossValue {
  double total = 0.0;
  std::map<std::string, double> per_term;
};

/// One B x d ambient gradient per modality.
using LossGradient = std::vector<Matrix>;

struct LossResult {
  LossValue value;
  LossGradient gradient;
};

template <typename Scalar>
struct TermResult {
  Scalar value{};
  std::vector<MatrixT<Scalar>> grad;  // empty unless requested
};

/// Result of a single-batch objective (uniformity on one modality).
struct SingleResult {
  double value = 0.0;
  Matrix grad;
};

struct MultiResult {
  double value = 0.0;
  LossGradient grad;
};

namespace raw {

template <typename Scalar>
using Batches = std::span<const MatrixT<Scalar>>;

template <typename Scalar>
std::vector<MatrixT<Scalar>> zeros_like(Batches<Scalar> z) {
  std::vector<MatrixT<Scalar>> out;
  out.reserve(z.size());
  for (const auto& m : z) out.push_back(MatrixT<Scalar>::Zero(m.rows(), m.cols()));
  return out;
}

template <typename Scalar>
void check_aligned(Batches<Scalar> z, std::size_t min_modalities = 2) {
  require(z.size() >= min_modalities, ErrorCode::InvalidArgument,
          "need at least " + std::to_string(min_modalities) + " modalities");
  for (const auto& m : z)
    require(m.rows() == z[0].rows() && m.cols() == z[0].cols(), ErrorCode::DimensionMismatch,
            "modalities disagree on batch size or dimension");
}

/// Row-wise log-sum-exp; entries equal to -inf are ignored.
template <typename Scalar>
VectorT<Scalar> row_logsumexp(const MatrixT<Scalar>& logits) {
  using std::exp;
  using std::log;
  VectorT<Scalar> out(logits.rows());
  for (Index i = 0; i < logits.rows(); ++i) {
    const Scalar mx = logits.row(i).maxCoeff();
    Scalar acc(0);
    for (Index j = 0; j < logits.cols(); ++j) acc += exp(logits(i, j) - mx);
    out(i) = mx + log(acc);
  }
  return out;
}

template <typename Scalar>
TermResult<Scalar> infonce(Batches<Scalar> z, const Matrix& weights, Scalar tau, bool with_grad) {
  check_aligned(z);
  const int num_mod = static_cast<int>(z.size());
  const Index b = z[0].rows();
  double wsum = 0.0;
  for (int m = 0; m < num_mod; ++m)
    for (int n = 0; n < num_mod; ++n)
      if (m != n) wsum += weights(m, n);
  require(wsum > 0.0, ErrorCode::InvalidWeights, "all off-diagonal infonce weights are zero");

  TermResult<Scalar> out;
  if (with_grad) out.grad = zeros_like(z);
  const Scalar norm = Scalar(1) / (Scalar(wsum) * Scalar(b));
  const MatrixT<Scalar> eye = MatrixT<Scalar>::Identity(b, b);
  for (int m = 0; m < num_mod; ++m) {
    for (int n = 0; n < num_mod; ++n) {
      const Scalar w(weights(m, n));
      if (m == n || w == Scalar(0)) continue;
      const MatrixT<Scalar> logits = (z[m] * z[n].transpose()) / tau;
      const VectorT<Scalar> lse = row_logsumexp(logits);
      out.value -= w * norm * (logits.diagonal() - lse).sum();
      if (!with_grad) continue;
      MatrixT<Scalar> p = logits;
      for (Index i = 0; i < b; ++i) p.row(i) = (logits.row(i).array() - lse(i)).exp().matrix();
      const MatrixT<Scalar> g = eye - p;
      const Scalar coeff = -w * norm / tau;
      out.grad[static_cast<std::size_t>(m)] += coeff * (g * z[n]);
      out.grad[static_cast<std::size_t>(n)] += coeff * (g.transpose() * z[m]);
    }
  }
  return out;
}

template <typename Scalar>
TermResult<Scalar> uniformity(const MatrixT<Scalar>& z, const KernelSpec& kernel, bool with_grad) {
  using std::exp;
  using std::log;
  kernel.validate();
  const Index b = z.rows();
  require(b >= 2, ErrorCode::BatchTooSmall, "uniformity needs at least two rows");
  const Scalar tau(kernel.tau);
  const Scalar scale = Scalar(-1) / (Scalar(2) * tau * tau);

  MatrixT<Scalar> logits = pairwise_sq_dist<Scalar>(z, z, kernel.geometry) * scale;
  logits.diagonal().setConstant(-std::numeric_limits<Scalar>::infinity());
  const VectorT<Scalar> lse = row_logsumexp(logits);

  TermResult<Scalar> out;
  out.value = lse.mean() - log(Scalar(b - 1));
  if (!with_grad) return out;

  MatrixT<Scalar> p(b, b);
  for (Index i = 0; i < b; ++i)
    for (Index j = 0; j < b; ++j) p(i, j) = i == j ? Scalar(0) : exp(logits(i, j) - lse(i));
  MatrixT<Scalar> sym = p + p.transpose();
  const Scalar factor = Scalar(1) / (tau * tau * Scalar(b));

  MatrixT<Scalar> grad;
  if (kernel.geometry == Geometry::Euclidean) {
    grad = -factor * (sym.rowwise().sum().asDiagonal() * z - sym * z);
  } else {
    for (Index i = 0; i < b; ++i)
      for (Index j = 0; j < b; ++j)
        if (i != j) sym(i, j) *= arc_ratio<Scalar>(z.row(i).dot(z.row(j)));
    grad = factor * (sym * z);
  }
  out.grad.push_back(std::move(grad));
  return out;
}

template <typename Scalar>
TermResult<Scalar> alignment(Batches<Scalar> z, int anchor, bool with_grad) {
  check_aligned(z);
  const int num_mod = static_cast<int>(z.size());
  require(anchor >= 0 && anchor < num_mod, ErrorCode::InvalidArgument, "anchor out of range");
  const Scalar norm = Scalar(1) / (Scalar(z[0].rows()) * Scalar(num_mod - 1));
  const auto& za = z[static_cast<std::size_t>(anchor)];
  TermResult<Scalar> out;
  if (with_grad) out.grad = zeros_like(z);
  for (int n = 0; n < num_mod; ++n) {
    if (n == anchor) continue;
    const MatrixT<Scalar> diff = za - z[static_cast<std::size_t>(n)];
    out.value += norm * diff.squaredNorm();
    if (with_grad) {
      out.grad[static_cast<std::size_t>(anchor)] += Scalar(2) * norm * diff;
      out.grad[static_cast<std::size_t>(n)] -= Scalar(2) * norm * diff;
    }
  }
  return out;
}

template <typename Scalar>
TermResult<Scalar> tuple_uniformity(Batches<Scalar> z, std::span<const double> weights,
                                    const KernelSpec& kernel, bool with_grad) {
  check_aligned(z, 1);
  require(weights.size() == z.size(), ErrorCode::DimensionMismatch, "tuple weights must match M");
  const Index b = z[0].rows();
  MatrixT<Scalar> sums = MatrixT<Scalar>::Zero(b, z[0].cols());
  for (std::size_t m = 0; m < z.size(); ++m) sums += Scalar(weights[m]) * z[m];
  VectorT<Scalar> norms = sums.rowwise().norm();
  for (Index i = 0; i < b; ++i)
    require(norms(i) > Scalar(kCentroidEpsilon), ErrorCode::DegenerateCentroid,
            "tuple " + std::to_string(i) + " has a vanishing weighted sum");
  const MatrixT<Scalar> centroids = norms.cwiseInverse().asDiagonal() * sums;

  TermResult<Scalar> inner = uniformity<Scalar>(centroids, kernel, with_grad);
  TermResult<Scalar> out;
  out.value = inner.value;
  if (!with_grad) return out;

  // dc/ds = (I - c c^T) / |s|
  const MatrixT<Scalar>& gc = inner.grad.front();
  MatrixT<Scalar> gs(b, z[0].cols());
  for (Index i = 0; i < b; ++i) {
    const Scalar radial = centroids.row(i).dot(gc.row(i));
    gs.row(i) = (gc.row(i) - radial * centroids.row(i)) / norms(i);
  }
  for (std::size_t m = 0; m < z.size(); ++m) out.grad.push_back(Scalar(weights[m]) * gs);
  return out;
}

template <typename Scalar>
TermResult<Scalar> volume(Batches<Scalar> z, bool with_grad) {
  using std::sqrt;
  check_aligned(z);
  const int num_mod = static_cast<int>(z.size());
  const Index b = z[0].rows();
  const Index d = z[0].cols();
  TermResult<Scalar> out;
  if (with_grad) out.grad = zeros_like(z);
  const Scalar inv_b = Scalar(1) / Scalar(b);
  MatrixT<Scalar> tuple(num_mod, d);
  for (Index i = 0; i < b; ++i) {
    for (int m = 0; m < num_mod; ++m) tuple.row(m) = z[static_cast<std::size_t>(m)].row(i);
    const MatrixT<Scalar> gram = gram_matrix<Scalar>(tuple);
    const Scalar det = std::max(gram.determinant(), Scalar(0));
    out.value += inv_b * sqrt(det);
    if (!with_grad) continue;
    // d sqrt(det G) / dG = sqrt(det G) G^{-1} / 2; regularized near collinearity.
    MatrixT<Scalar> coeff;
    if (det < Scalar(kVolumeDetFloor)) {
      const MatrixT<Scalar> reg = gram + Scalar(kVolumeRegularizer) * MatrixT<Scalar>::Identity(num_mod, num_mod);
      coeff = sqrt(std::max(reg.determinant(), Scalar(0))) * reg.inverse();
    } else {
      coeff = sqrt(det) * gram.inverse();
    }
    const MatrixT<Scalar> g = coeff * tuple;
    for (int m = 0; m < num_mod; ++m) out.grad[static_cast<std::size_t>(m)].row(i) += inv_b * g.row(m);
  }
  return out;
}

}  // namespace raw

inline std::string uniformity_term_name(int m) { return "uniformity_" + std::to_string(m); }

// ---------------------------------------------------------------------------
// Typed entry points.

inline LossResult infonce(const MultimodalBatch& batch, const LossConfig& cfg) {
  cfg.validate();
  const Matrix w = cfg.resolved_infonce_weights(batch.num_modalities());
  auto r = raw::infonce<double>(batch.matrices(), w, cfg.kernel.tau, true);
  LossResult out;
  out.value.total = r.value;
  out.value.per_term["infonce"] = r.value;
  out.gradient = std::move(r.grad);
  return out;
}

inline SingleResult uniformity(const ModalityBatch& z, const KernelSpec& kernel) {
  auto r = raw::uniformity<double>(z.data(), kernel, true);
  return {r.value, std::move(r.grad.front())};
}

inline MultiResult alignment(const MultimodalBatch& batch) {
  auto r = raw::alignment<double>(batch.matrices(), batch.anchor(), true);
  return {r.value, std::move(r.grad)};
}

inline MultiResult tuple_uniformity(const MultimodalBatch& batch, const LossConfig& cfg) {
  cfg.validate();
  const auto w = cfg.resolved_tuple_weights(batch.num_modalities());
  auto r = raw::tuple_uniformity<double>(batch.matrices(), w, cfg.centroid_kernel(), true);
  return {r.value, std::move(r.grad)};
}

inline MultiResult volume_loss(const MultimodalBatch& batch) {
  auto r = raw::volume<double>(batch.matrices(), true);
  return {r.value, std::move(r.grad)};
}

/// sum_m U(Z^m) + lambda_align * L_align, plus U(C) and L_vol when enabled.
/// Terms are accumulated in a fixed order.
inline LossResult total_loss(const MultimodalBatch& batch, const LossConfig& cfg) {
  cfg.validate();
  const auto& z = batch.matrices();
  LossResult out;
  out.gradient.reserve(z.size());
  for (const auto& m : z) out.gradient.push_back(Matrix::Zero(m.rows(), m.cols()));
  auto& total = out.value.total;
  auto& terms = out.value.per_term;

  for (std::size_t m = 0; m < z.size(); ++m) {
    auto u = raw::uniformity<double>(z[m], cfg.kernel, true);
    terms[uniformity_term_name(static_cast<int>(m))] = u.value;
    total += u.value;
    out.gradient[m] += u.grad.front();
  }

  auto align = raw::alignment<double>(z, batch.anchor(), true);
  terms["alignment"] = align.value;
  total += cfg.lambda_align * align.value;
  for (std::size_t m = 0; m < z.size(); ++m) out.gradient[m] += cfg.lambda_align * align.grad[m];

  if (cfg.enable_tuple_uniformity) {
    const auto w = cfg.resolved_tuple_weights(batch.num_modalities());
    auto tu = raw::tuple_uniformity<double>(z, w, cfg.centroid_kernel(), true);
    terms["tuple_uniformity"] = tu.value;
    total += tu.value;
    for (std::size_t m = 0; m < z.size(); ++m) out.gradient[m] += tu.grad[m];
  }

  if (cfg.enable_volume) {
    auto vol = raw::volume<double>(z, true);
    terms["volume"] = vol.value;
    total += vol.value;
    for (std::size_t m = 0; m < z.size(); ++m) out.gradient[m] += vol.grad[m];
  }
  return out;
}

/// Sum of the uniformity_* entries of a breakdown.
inline double uniformity_sum(const LossValue& v) {
  double s = 0.0;
  for (const auto& [name, value] : v.per_term)
    if (name.rfind("uniformity_", 0) == 0) s += value;
  return s;
}

}  // namespace unialign
