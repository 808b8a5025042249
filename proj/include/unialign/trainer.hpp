#pragma once

// Free-point optimization on the unit sphere. Embeddings are the parameters;
// each epoch takes one full-batch Riemannian gradient step (tangent
// projection, then renormalization) on the chosen objective and the run
// records loss terms, conflict diagnostics and the divergence estimate.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "unialign/diagnostics.hpp"
#include "unialign/divergence.hpp"
#include "unialign/losses.hpp"
#include "unialign/random.hpp"

namespace unialign {

struct SyntheticSpec {
  Index batch_size = 256;
  Index dim = 32;
  int num_modalities = 3;
  double latent_coupling = 0.7;  // rho
  double init_gap = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(batch_size >= 2, ErrorCode::InvalidArgument, "batch size must be >= 2");
    require(dim >= 2, ErrorCode::InvalidArgument, "dimension must be >= 2");
    require(num_modalities >= 2, ErrorCode::InvalidArgument, "need at least two modalities");
    require(latent_coupling >= 0.0 && latent_coupling <= 1.0, ErrorCode::InvalidArgument,
            "latent coupling must lie in [0, 1]");
    require(init_gap >= 0.0, ErrorCode::InvalidArgument, "init gap must be nonnegative");
  }
};

enum class Objective { InfoNCE, UniAlign, UniAlignPlus };

inline std::string to_string(Objective o) {
  switch (o) {
    case Objective::InfoNCE: return "infonce";
    case Objective::UniAlign: return "unialign";
    case Objective::UniAlignPlus: return "unialign_plus";
  }
  return "unknown";
}

struct OptimizerSpec {
  /// UniAlign honours the tuple/volume flags of `loss`; UniAlignPlus forces
  /// both on.
  Objective objective = Objective::UniAlign;
  double step_size = 0.5;
  int epochs = 200;
  LossConfig loss;
  int record_every = 5;
  double divergence_tau = kDefaultDivergenceTau;

  void validate() const {
    require(step_size > 0.0, ErrorCode::InvalidArgument, "step size must be positive");
    require(epochs >= 0, ErrorCode::InvalidArgument, "epochs must be nonnegative");
    require(record_every >= 1, ErrorCode::InvalidArgument, "record_every must be >= 1");
    require(divergence_tau > 0.0, ErrorCode::InvalidArgument, "divergence tau must be positive");
    loss.validate();
  }

  LossConfig effective_loss() const {
    LossConfig cfg = loss;
    if (objective == Objective::UniAlignPlus) {
      cfg.enable_tuple_uniformity = true;
      cfg.enable_volume = true;
    }
    return cfg;
  }
};

struct TrajectoryRecord {
  int epoch = 0;
  double loss_total = 0.0;
  double loss_uniformity = 0.0;
  double loss_align = 0.0;
  double loss_tuple_uniformity = 0.0;
  double loss_volume = 0.0;
  double zeta_mean = 0.0;
  double chi_mean = 0.0;
  double holder_div = 0.0;
  double seconds = 0.0;  // wall clock since the start of the run
};

/// Correlated tuples: z_i^m = normalize(sqrt(rho) u_i + sqrt(1 - rho) g_i^m
/// + init_gap o_m) with u_i uniform on the sphere, g ~ N(0, I/d) and o_m a
/// fixed unit offset per modality.
inline MultimodalBatch generate(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed, 0);
  const Index b = spec.batch_size;
  const Index d = spec.dim;
  std::vector<Vector> offsets;
  for (int m = 0; m < spec.num_modalities; ++m) offsets.push_back(rng.unit_vector(d));
  std::vector<Matrix> rows(static_cast<std::size_t>(spec.num_modalities), Matrix(b, d));
  const double a = std::sqrt(spec.latent_coupling);
  const double c = std::sqrt(1.0 - spec.latent_coupling);
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  for (Index i = 0; i < b; ++i) {
    const Vector latent = rng.unit_vector(d);
    for (int m = 0; m < spec.num_modalities; ++m) {
      for (;;) {
        const Vector v = a * latent + c * rng.normal_vector(d, sd) + spec.init_gap * offsets[static_cast<std::size_t>(m)];
        const double n = v.norm();
        if (n > kZeroNormThreshold) {
          rows[static_cast<std::size_t>(m)].row(i) = (v / n).transpose();
          break;
        }
      }
    }
  }
  return MultimodalBatch::normalized(rows, 0);
}

/// Value and ambient gradient of the optimized objective.
inline LossResult objective_loss(const MultimodalBatch& batch, const OptimizerSpec& opt) {
  if (opt.objective == Objective::InfoNCE) return infonce(batch, opt.loss);
  return total_loss(batch, opt.effective_loss());
}

/// z' = normalize(z - eta (g - (g.z) z)) for every row.
inline MultimodalBatch apply_step(const MultimodalBatch& batch, const LossGradient& gradient, double step_size) {
  require(static_cast<int>(gradient.size()) == batch.num_modalities(), ErrorCode::DimensionMismatch,
          "gradient does not match the batch");
  std::vector<Matrix> next;
  next.reserve(gradient.size());
  for (int m = 0; m < batch.num_modalities(); ++m) {
    const Matrix& z = batch.modality(m);
    const Matrix& g = gradient[static_cast<std::size_t>(m)];
    require(g.rows() == z.rows() && g.cols() == z.cols(), ErrorCode::DimensionMismatch,
            "gradient block has the wrong shape");
    Matrix out(z.rows(), z.cols());
    for (Index i = 0; i < z.rows(); ++i) {
      const auto zi = z.row(i);
      const auto gi = g.row(i);
      const Eigen::RowVectorXd tangent = gi - gi.dot(zi) * zi;
      if ((tangent.array() == 0.0).all()) {
        out.row(i) = zi;
        continue;
      }
      const Eigen::RowVectorXd moved = zi - step_size * tangent;
      const double n = moved.norm();
      require(n >= kZeroNormThreshold && std::isfinite(n), ErrorCode::StepBlowup,
              "modality " + std::to_string(m) + " row " + std::to_string(i) + " has norm " +
                  std::to_string(n));
      out.row(i) = moved / n;
    }
    next.push_back(std::move(out));
  }
  std::vector<ModalityBatch> wrapped;
  for (std::size_t m = 0; m < next.size(); ++m)
    wrapped.push_back(ModalityBatch::from_unit_rows(std::move(next[m]), static_cast<int>(m)));
  return MultimodalBatch(wrapped, batch.anchor());
}

/// One Riemannian gradient step on the objective of `opt`.
inline MultimodalBatch step(const MultimodalBatch& batch, const OptimizerSpec& opt) {
  opt.validate();
  return apply_step(batch, objective_loss(batch, opt).gradient, opt.step_size);
}

namespace detail {

inline TrajectoryRecord make_record(int epoch, const MultimodalBatch& batch, const OptimizerSpec& opt,
                                    const LossResult& objective, double seconds) {
  TrajectoryRecord r;
  r.epoch = epoch;
  r.seconds = seconds;
  r.loss_total = objective.value.total;
  // Uniformity and alignment are always reported; the tuple terms only when
  // they are part of the objective.
  LossValue breakdown = objective.value;
  if (opt.objective == Objective::InfoNCE) {
    LossConfig plain = opt.loss;
    plain.enable_tuple_uniformity = false;
    plain.enable_volume = false;
    breakdown = total_loss(batch, plain).value;
  }
  r.loss_uniformity = uniformity_sum(breakdown);
  r.loss_align = breakdown.per_term.at("alignment");
  if (auto it = breakdown.per_term.find("tuple_uniformity"); it != breakdown.per_term.end())
    r.loss_tuple_uniformity = it->second;
  if (auto it = breakdown.per_term.find("volume"); it != breakdown.per_term.end()) r.loss_volume = it->second;
  const ConflictReport conflict = conflict_report(batch, opt.loss);
  r.zeta_mean = conflict.zeta_mean;
  r.chi_mean = conflict.chi_mean;
  r.holder_div = holder_kde(batch, opt.divergence_tau, false).value;
  return r;
}

}  // namespace detail

using RecordObserver = std::function<void(const TrajectoryRecord&)>;

/// Runs full-batch descent from an explicit starting batch. If an epoch
/// increases the objective it is retried once at half the step size; the
/// retry is accepted either way.
inline std::vector<TrajectoryRecord> run_from(MultimodalBatch batch, const OptimizerSpec& opt,
                                              const RecordObserver& observer = {}) {
  opt.validate();
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  std::vector<TrajectoryRecord> records;
  auto emit = [&](int epoch, const MultimodalBatch& b, const LossResult& loss) {
    records.push_back(detail::make_record(epoch, b, opt, loss, elapsed()));
    if (observer) observer(records.back());
  };

  LossResult current = objective_loss(batch, opt);
  emit(0, batch, current);
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    try {
      MultimodalBatch candidate = apply_step(batch, current.gradient, opt.step_size);
      LossResult next = objective_loss(candidate, opt);
      if (next.value.total > current.value.total) {
        candidate = apply_step(batch, current.gradient, 0.5 * opt.step_size);
        next = objective_loss(candidate, opt);
      }
      require(std::isfinite(next.value.total), ErrorCode::StepBlowup, "objective is not finite");
      batch = std::move(candidate);
      current = std::move(next);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::StepBlowup) throw;
      throw Error(ErrorCode::StepBlowup, "epoch " + std::to_string(epoch) + ": " + e.detail());
    }
    if (epoch % opt.record_every == 0 || epoch == opt.epochs) emit(epoch, batch, current);
  }
  return records;
}

inline std::vector<TrajectoryRecord> run(const SyntheticSpec& spec, const OptimizerSpec& opt,
                                         const RecordObserver& observer = {}) {
  return run_from(generate(spec), opt, observer);
}

// ---------------------------------------------------------------------------
// Gradient verification.

enum class LossTerm { InfoNCE, UniformityEuclidean, UniformityGeodesic, Alignment, TupleUniformity, Volume };

inline constexpr LossTerm kAllLossTerms[] = {LossTerm::InfoNCE,   LossTerm::UniformityEuclidean,
                                             LossTerm::UniformityGeodesic, LossTerm::Alignment,
                                             LossTerm::TupleUniformity,    LossTerm::Volume};

inline std::string_view to_string(LossTerm t) {
  switch (t) {
    case LossTerm::InfoNCE: return "infonce";
    case LossTerm::UniformityEuclidean: return "uniformity_euclidean";
    case LossTerm::UniformityGeodesic: return "uniformity_geodesic";
    case LossTerm::Alignment: return "alignment";
    case LossTerm::TupleUniformity: return "tuple_uniformity";
    case LossTerm::Volume: return "volume";
  }
  return "unknown";
}

/// Value (and optionally gradient) of one loss on raw coordinates. The
/// uniformity terms sum over modalities.
template <typename Scalar>
TermResult<Scalar> evaluate_term(LossTerm term, std::span<const MatrixT<Scalar>> z, int anchor,
                                 const LossConfig& cfg, bool with_grad) {
  const int num_mod = static_cast<int>(z.size());
  switch (term) {
    case LossTerm::InfoNCE:
      return raw::infonce<Scalar>(z, cfg.resolved_infonce_weights(num_mod), Scalar(cfg.kernel.tau), with_grad);
    case LossTerm::UniformityEuclidean:
    case LossTerm::UniformityGeodesic: {
      const KernelSpec k{term == LossTerm::UniformityEuclidean ? Geometry::Euclidean : Geometry::Geodesic,
                         cfg.kernel.tau};
      TermResult<Scalar> out;
      for (const auto& zm : z) {
        auto u = raw::uniformity<Scalar>(zm, k, with_grad);
        out.value += u.value;
        if (with_grad) out.grad.push_back(std::move(u.grad.front()));
      }
      return out;
    }
    case LossTerm::Alignment:
      return raw::alignment<Scalar>(z, anchor, with_grad);
    case LossTerm::TupleUniformity: {
      const auto w = cfg.resolved_tuple_weights(num_mod);
      return raw::tuple_uniformity<Scalar>(z, w, cfg.centroid_kernel(), with_grad);
    }
    case LossTerm::Volume:
      return raw::volume<Scalar>(z, with_grad);
  }
  fail(ErrorCode::InvalidArgument, "unknown loss term");
}

struct GradcheckEntry {
  LossTerm term;
  double max_rel_error = 0.0;
};

struct GradcheckReport {
  double step = 0.0;
  std::vector<GradcheckEntry> entries;

  double max_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
  }
  bool passed(double threshold = 1e-4) const { return max_error() < threshold; }
};

/// Lets tests tamper with the analytic gradient before it is compared.
using GradientHook = std::function<void(LossTerm, std::vector<Matrix>&)>;

/// Compares analytic gradients against central differences over every
/// coordinate of every modality. Differences are evaluated in long double so
/// cancellation in f(x+h) - f(x-h) stays well below the tolerance; the
/// relative error of a coordinate is |a - n| / max(|a|, |n|, 1e-12).
inline GradcheckReport gradcheck(const MultimodalBatch& batch, const LossConfig& cfg, double step,
                                 std::span<const LossTerm> terms = kAllLossTerms, const GradientHook& hook = {}) {
  require(step >= 1e-7 && step <= 1e-3, ErrorCode::InvalidArgument, "finite-difference step must lie in [1e-7, 1e-3]");
  cfg.validate();
  using Wide = long double;
  std::vector<MatrixT<Wide>> wide;
  for (const auto& m : batch.matrices()) wide.push_back(m.cast<Wide>());

  GradcheckReport report;
  report.step = step;
  for (LossTerm term : terms) {
    auto analytic = evaluate_term<double>(term, std::span<const Matrix>(batch.matrices()), batch.anchor(), cfg, true);
    if (hook) hook(term, analytic.grad);
    double worst = 0.0;
    for (std::size_t m = 0; m < wide.size(); ++m) {
      for (Index i = 0; i < wide[m].rows(); ++i) {
        for (Index k = 0; k < wide[m].cols(); ++k) {
          const Wide saved = wide[m](i, k);
          wide[m](i, k) = saved + Wide(step);
          const Wide up = evaluate_term<Wide>(term, std::span<const MatrixT<Wide>>(wide), batch.anchor(), cfg, false).value;
          wide[m](i, k) = saved - Wide(step);
          const Wide down = evaluate_term<Wide>(term, std::span<const MatrixT<Wide>>(wide), batch.anchor(), cfg, false).value;
          wide[m](i, k) = saved;
          const double numeric = static_cast<double>((up - down) / (Wide(2) * Wide(step)));
          const double a = analytic.grad[m](i, k);
          const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
          worst = std::max(worst, std::abs(a - numeric) / denom);
        }
      }
    }
    report.entries.push_back({term, worst});
  }
  return report;
}

/// Random unit-norm batch for gradient checks.
inline MultimodalBatch random_batch(Index batch_size, int num_modalities, Index dim, std::uint64_t seed, int anchor = 0) {
  Rng rng(seed, 0x9AD);
  std::vector<Matrix> rows(static_cast<std::size_t>(num_modalities), Matrix(batch_size, dim));
  for (auto& m : rows)
    for (Index i = 0; i < batch_size; ++i) m.row(i) = rng.unit_vector(dim).transpose();
  return MultimodalBatch::normalized(rows, anchor);
}

}  // namespace unialign
