#pragma once

// Conflict diagnostics for multimodal InfoNCE.
//
// For anchor modality a and sample i the InfoNCE gradient splits into an
// attraction V = sum_n (w_an/tau) z_i^n and a repulsion
// Phi = sum_n (w_an/tau) sum_k p_ik^(an) z_k^n. zeta is cos(V, Phi) and chi is
// 1 - |V| / sum_n (w_an/tau). The Monte-Carlo routines check how both scale
// with the number of modalities.

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "unialign/losses.hpp"
#include "unialign/parallel.hpp"
#include "unialign/random.hpp"

namespace unialign {

struct PushPull {
  Vector attraction;  // V_a
  Vector repulsion;   // Phi_a
};

struct ConflictReport {
  std::vector<PushPull> forces;  // one per sample
  std::vector<double> zeta;      // NaN where the cosine is undefined
  std::vector<double> chi;
  double zeta_mean = 0.0;  // over samples with a defined zeta
  double chi_mean = 0.0;
  Index zeta_defined = 0;
};

namespace detail {

/// Row-softmax of <z_i^a, z_k^n> / tau.
inline Matrix anchor_softmax(const Matrix& anchor, const Matrix& other, double tau) {
  const Matrix logits = (anchor * other.transpose()) / tau;
  const Vector lse = raw::row_logsumexp<double>(logits);
  Matrix p(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) p.row(i) = (logits.row(i).array() - lse(i)).exp().matrix();
  return p;
}

inline double pull_weight_sum(const Matrix& w, int anchor, double tau) {
  double s = 0.0;
  for (Index n = 0; n < w.cols(); ++n)
    if (n != anchor) s += w(anchor, n) / tau;
  return s;
}

}  // namespace detail

/// V_a and Phi_a for one sample of the anchor modality.
inline PushPull decompose_gradient(const MultimodalBatch& batch, const LossConfig& cfg, Index sample) {
  cfg.validate();
  require(sample >= 0 && sample < batch.batch_size(), ErrorCode::InvalidArgument, "sample index out of range");
  const Matrix w = cfg.resolved_infonce_weights(batch.num_modalities());
  const int a = batch.anchor();
  const double tau = cfg.kernel.tau;
  PushPull out{Vector::Zero(batch.dim()), Vector::Zero(batch.dim())};
  for (int n = 0; n < batch.num_modalities(); ++n) {
    if (n == a || w(a, n) == 0.0) continue;
    const double c = w(a, n) / tau;
    const Matrix& zn = batch.modality(n);
    out.attraction += c * zn.row(sample).transpose();
    const Matrix logits_row = (batch.modality(a).row(sample) * zn.transpose()) / tau;
    const Vector lse = raw::row_logsumexp<double>(logits_row);
    const Matrix p = (logits_row.array() - lse(0)).exp().matrix();
    out.repulsion += c * (p * zn).transpose();
  }
  return out;
}

/// cos(V, Phi), clamped to [-1, 1].
inline double zeta(const Vector& attraction, const Vector& repulsion) {
  const double nv = attraction.norm();
  const double np = repulsion.norm();
  require(nv > kZeroNormThreshold && np > kZeroNormThreshold, ErrorCode::UndefinedCosine,
          "zeta needs nonzero attraction and repulsion");
  return std::clamp(attraction.dot(repulsion) / (nv * np), -1.0, 1.0);
}

/// 1 - |V| / sum of pull weights.
inline double chi_from_attraction(const Vector& attraction, double pull_weight_sum) {
  require(pull_weight_sum > 0.0, ErrorCode::InvalidWeights, "chi needs a positive pull weight sum");
  return 1.0 - attraction.norm() / pull_weight_sum;
}

inline double chi(const MultimodalBatch& batch, const LossConfig& cfg, Index sample) {
  const Matrix w = cfg.resolved_infonce_weights(batch.num_modalities());
  const auto forces = decompose_gradient(batch, cfg, sample);
  return chi_from_attraction(forces.attraction, detail::pull_weight_sum(w, batch.anchor(), cfg.kernel.tau));
}

/// Per-sample forces, zeta and chi for the whole batch with batch means.
inline ConflictReport conflict_report(const MultimodalBatch& batch, const LossConfig& cfg) {
  cfg.validate();
  const Matrix w = cfg.resolved_infonce_weights(batch.num_modalities());
  const int a = batch.anchor();
  const double tau = cfg.kernel.tau;
  const Index b = batch.batch_size();
  const double denom = detail::pull_weight_sum(w, a, tau);
  require(denom > 0.0, ErrorCode::InvalidWeights, "anchor has no positive pull weights");

  Matrix attraction = Matrix::Zero(b, batch.dim());
  Matrix repulsion = Matrix::Zero(b, batch.dim());
  for (int n = 0; n < batch.num_modalities(); ++n) {
    if (n == a || w(a, n) == 0.0) continue;
    const double c = w(a, n) / tau;
    attraction += c * batch.modality(n);
    repulsion += c * (detail::anchor_softmax(batch.modality(a), batch.modality(n), tau) * batch.modality(n));
  }

  ConflictReport report;
  report.forces.reserve(static_cast<std::size_t>(b));
  double zsum = 0.0;
  double csum = 0.0;
  for (Index i = 0; i < b; ++i) {
    PushPull f{attraction.row(i).transpose(), repulsion.row(i).transpose()};
    const bool defined = f.attraction.norm() > kZeroNormThreshold && f.repulsion.norm() > kZeroNormThreshold;
    const double z = defined ? zeta(f.attraction, f.repulsion) : std::nan("");
    const double x = chi_from_attraction(f.attraction, denom);
    if (defined) {
      zsum += z;
      ++report.zeta_defined;
    }
    csum += x;
    report.zeta.push_back(z);
    report.chi.push_back(x);
    report.forces.push_back(std::move(f));
  }
  report.zeta_mean = report.zeta_defined > 0 ? zsum / static_cast<double>(report.zeta_defined) : 0.0;
  report.chi_mean = csum / static_cast<double>(b);
  return report;
}

// ---------------------------------------------------------------------------
// Monte-Carlo checks.

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

inline McEstimate summarize(std::span<const double> samples) {
  McEstimate est;
  if (samples.empty()) return est;
  double s = 0.0;
  for (double x : samples) s += x;
  est.mean = s / static_cast<double>(samples.size());
  if (samples.size() > 1) {
    double ss = 0.0;
    for (double x : samples) ss += (x - est.mean) * (x - est.mean);
    const double var = ss / static_cast<double>(samples.size() - 1);
    est.std_error = std::sqrt(var / static_cast<double>(samples.size()));
  }
  return est;
}

/// Per-modality repulsion Phi^(n) = c_n * Vhat + eps_n with isotropic
/// Gaussian residuals of per-coordinate standard deviation sigma.
struct SystematicConflictModel {
  Index dim = 16;
  double c0 = 0.5;
  double sigma = 0.25;
  std::uint64_t seed = 0;
  /// c_n for modality n; must return values >= c0. Unset means c_n = c0.
  std::function<double(Rng&, int)> c_sampler;

  void validate() const {
    require(dim >= 2, ErrorCode::InvalidArgument, "model dimension must be >= 2");
    require(c0 > 0.0, ErrorCode::InvalidArgument, "c0 must be positive");
    require(sigma >= 0.0, ErrorCode::InvalidArgument, "sigma must be nonnegative");
  }
};

struct ScanPoint {
  int num_modalities = 0;
  McEstimate estimate;
};

inline std::uint64_t trial_stream(int num_modalities, int trial) {
  return (static_cast<std::uint64_t>(num_modalities) << 32) | static_cast<std::uint32_t>(trial);
}

/// Mean zeta over `trials` draws of N = M - 1 modality components, per M.
inline std::vector<ScanPoint> simulate_prop1(const SystematicConflictModel& model, std::span<const int> modality_counts,
                                             int trials) {
  model.validate();
  require(trials >= 1, ErrorCode::InvalidArgument, "trials must be >= 1");
  std::vector<ScanPoint> out;
  for (int m : modality_counts) {
    require(m >= 2, ErrorCode::InvalidArgument, "modality counts must be >= 2");
    std::vector<double> zetas(static_cast<std::size_t>(trials));
    parallel_for(zetas.size(), [&](std::size_t t) {
      Rng rng(model.seed, trial_stream(m, static_cast<int>(t)));
      const Vector direction = rng.unit_vector(model.dim);
      Vector total = Vector::Zero(model.dim);
      for (int n = 0; n < m - 1; ++n) {
        const double c = model.c_sampler ? model.c_sampler(rng, n) : model.c0;
        require(c >= model.c0, ErrorCode::InvalidArgument, "c_sampler returned a value below c0");
        total += c * direction;
        if (model.sigma > 0.0) total += rng.normal_vector(model.dim, model.sigma);
      }
      zetas[t] = zeta(direction, total);
    });
    out.push_back({m, summarize(zetas)});
  }
  return out;
}

/// Lower bound on E[chi] for M modalities with mean pairwise alignment mu_bar.
inline double prop2_bound(int num_modalities, double mu_bar) {
  require(num_modalities >= 2, ErrorCode::DomainError, "bound needs M >= 2");
  require(mu_bar >= 0.0 && mu_bar <= 1.0, ErrorCode::DomainError, "mu_bar must lie in [0, 1]");
  const double m = num_modalities;
  return 1.0 - std::sqrt((1.0 + (m - 2.0) * mu_bar) / (m - 1.0));
}

/// Large-M limit of prop2_bound.
inline double prop2_asymptote(double mu_bar) {
  require(mu_bar >= 0.0 && mu_bar <= 1.0, ErrorCode::DomainError, "mu_bar must lie in [0, 1]");
  return 1.0 - std::sqrt(mu_bar);
}

/// Unit vectors normalize(sqrt(rho) u + sqrt(1 - rho) g) with a shared latent
/// u on the sphere and g ~ N(0, I/d); pairwise inner products are about rho.
struct CorrelatedSphereSampler {
  Index dim = 64;
  double rho = 0.0;

  Vector draw(Rng& rng, const Vector& latent) const {
    for (;;) {
      Vector v = std::sqrt(rho) * latent;
      if (rho < 1.0) v += std::sqrt(1.0 - rho) * rng.normal_vector(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
      const double n = v.norm();
      if (n > kZeroNormThreshold) return v / n;
    }
  }
};

struct CalibrationResult {
  double rho = 0.0;
  double achieved_mu = 0.0;
};

/// Bisection on rho so the empirical mean pairwise inner product of the
/// sampler matches mu_bar within 0.01. Uses common random numbers: pair
/// statistics are drawn once and re-weighted for every rho.
inline CalibrationResult calibrate_rho(Index dim, double mu_bar, std::uint64_t seed, int pairs = 20000,
                                       int iterations = 20, double tolerance = 0.01) {
  require(mu_bar >= 0.0 && mu_bar <= 1.0, ErrorCode::DomainError, "mu_bar must lie in [0, 1]");
  struct PairStats {
    double ug1, ug2, g1g2, g1g1, g2g2;
  };
  std::vector<PairStats> stats(static_cast<std::size_t>(pairs));
  Rng rng(seed, 0xCA11B4A7E);
  const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
  for (auto& s : stats) {
    const Vector u = rng.unit_vector(dim);
    const Vector g1 = rng.normal_vector(dim, sd);
    const Vector g2 = rng.normal_vector(dim, sd);
    s = {u.dot(g1), u.dot(g2), g1.dot(g2), g1.squaredNorm(), g2.squaredNorm()};
  }
  auto mean_inner = [&](double rho) {
    const double a = std::sqrt(rho);
    const double b = std::sqrt(1.0 - rho);
    double acc = 0.0;
    for (const auto& s : stats) {
      const double dot = rho + a * b * (s.ug1 + s.ug2) + (1.0 - rho) * s.g1g2;
      const double n1 = rho + 2.0 * a * b * s.ug1 + (1.0 - rho) * s.g1g1;
      const double n2 = rho + 2.0 * a * b * s.ug2 + (1.0 - rho) * s.g2g2;
      acc += dot / std::sqrt(n1 * n2);
    }
    return acc / static_cast<double>(stats.size());
  };

  if (mu_bar >= 1.0) return {1.0, 1.0};
  const double at_zero = mean_inner(0.0);
  if (mu_bar <= at_zero) {
    require(std::abs(at_zero - mu_bar) < tolerance, ErrorCode::CalibrationFailure,
            "target mean inner product below what independent draws give");
    return {0.0, at_zero};
  }
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_inner(mid) < mu_bar ? lo : hi) = mid;
  }
  const double rho = 0.5 * (lo + hi);
  const double achieved = mean_inner(rho);
  require(std::abs(achieved - mu_bar) < tolerance, ErrorCode::CalibrationFailure,
          "bisection did not reach the target mean inner product");
  return {rho, achieved};
}

struct Prop2Row {
  int num_modalities = 0;
  McEstimate chi;
  double bound = 0.0;
};

struct Prop2Result {
  double mu_bar = 0.0;
  CalibrationResult calibration;
  std::vector<Prop2Row> rows;
};

/// Empirical E[chi] with uniform pull weights next to prop2_bound, per M.
inline Prop2Result verify_prop2(Index dim, std::span<const int> modality_counts, double mu_bar, int trials,
                                std::uint64_t seed) {
  require(dim >= 2, ErrorCode::InvalidArgument, "dimension must be >= 2");
  require(trials >= 1, ErrorCode::InvalidArgument, "trials must be >= 1");
  Prop2Result result;
  result.mu_bar = mu_bar;
  result.calibration = calibrate_rho(dim, mu_bar, seed);
  const CorrelatedSphereSampler sampler{dim, result.calibration.rho};
  for (int m : modality_counts) {
    require(m >= 2, ErrorCode::InvalidArgument, "modality counts must be >= 2");
    std::vector<double> chis(static_cast<std::size_t>(trials));
    parallel_for(chis.size(), [&](std::size_t t) {
      Rng rng(seed, trial_stream(m, static_cast<int>(t)));
      const Vector latent = rng.unit_vector(dim);
      Vector pull = Vector::Zero(dim);
      for (int n = 0; n < m - 1; ++n) pull += sampler.draw(rng, latent);
      chis[t] = chi_from_attraction(pull, static_cast<double>(m - 1));
    });
    result.rows.push_back({m, summarize(chis), prop2_bound(m, mu_bar)});
  }
  return result;
}

}  // namespace unialign
