#pragma once

// Global Hoelder divergence among M densities,
//
//   D = (1/M) sum_m log int p_m^M  -  log int prod_m p_m,
//
// which is >= 0 with equality iff all p_m coincide. holder_kde is the
// Gaussian-KDE plug-in estimate from samples; holder_quadrature evaluates the
// same integrals for Gaussian mixtures on a grid and serves as the oracle.
//
// Kernel sums are done in the log domain, so far-apart samples do not
// underflow to log(0).

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "unialign/geometry.hpp"
#include "unialign/losses.hpp"

namespace unialign {

inline constexpr double kDefaultDivergenceTau = 0.3;

struct DivergenceEstimate {
  double value = 0.0;
  double uniformity_term = 0.0;
  double alignment_term = 0.0;
  double bandwidth = 0.0;
  bool normalized_kernel = false;
};

/// Which modality's samples the joint-overlap expectation is taken over.
enum class JointAnchor {
  First,     // modality 0, the plain plug-in estimator
  Averaged,  // mean of the alignment term over every choice of anchor
};

namespace detail {

inline double log_mean_exp(std::span<const double> xs) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - mx);
  return mx + std::log(acc / static_cast<double>(xs.size()));
}

/// log((1/|to|) sum_k K(from_i, to_k)) for every row of `from`.
inline std::vector<double> log_kernel_means(const Matrix& from, const Matrix& to, double tau, double log_norm) {
  const double scale = -1.0 / (2.0 * tau * tau);
  std::vector<double> out(static_cast<std::size_t>(from.rows()));
  std::vector<double> row(static_cast<std::size_t>(to.rows()));
  for (Index i = 0; i < from.rows(); ++i) {
    for (Index k = 0; k < to.rows(); ++k)
      row[static_cast<std::size_t>(k)] = scale * (from.row(i) - to.row(k)).squaredNorm() + log_norm;
    out[static_cast<std::size_t>(i)] = log_mean_exp(row);
  }
  return out;
}

inline void check_finite(std::span<const double> xs, const char* what) {
  for (double x : xs)
    require(std::isfinite(x), ErrorCode::NumericalUnderflow, std::string(what) + " kernel mean is zero or not finite");
}

}  // namespace detail

/// Gaussian-KDE plug-in estimate from M sample sets (rows are samples).
/// With normalized = false the (2 pi tau^2)^{-d/2} factor is dropped, which
/// shifts the value by a constant only.
inline DivergenceEstimate holder_kde(std::span<const Matrix> samples, double tau, bool normalized = false,
                                     JointAnchor joint = JointAnchor::First) {
  require(samples.size() >= 2, ErrorCode::InvalidArgument, "divergence needs at least two sample sets");
  require(tau > 0.0, ErrorCode::InvalidArgument, "bandwidth must be positive");
  const Index d = samples.front().cols();
  for (const auto& s : samples) {
    require(s.cols() == d, ErrorCode::DimensionMismatch, "sample sets differ in dimension");
    require(s.rows() >= 2, ErrorCode::BatchTooSmall, "each sample set needs at least two samples");
  }
  const std::size_t num = samples.size();
  const double log_norm = normalized ? -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi * tau * tau) : 0.0;

  DivergenceEstimate est;
  est.bandwidth = tau;
  est.normalized_kernel = normalized;

  // (1/M) sum_m log mean_i s_i^(M-1)
  for (std::size_t m = 0; m < num; ++m) {
    auto log_s = detail::log_kernel_means(samples[m], samples[m], tau, log_norm);
    detail::check_finite(log_s, "within-modality");
    for (double& x : log_s) x *= static_cast<double>(num - 1);
    est.uniformity_term += detail::log_mean_exp(log_s);
  }
  est.uniformity_term /= static_cast<double>(num);

  // -log mean_i prod_{m != anchor} mean_k K(z_i^anchor, z_k^m)
  auto alignment_for = [&](std::size_t anchor) {
    std::vector<double> log_c(static_cast<std::size_t>(samples[anchor].rows()), 0.0);
    for (std::size_t m = 0; m < num; ++m) {
      if (m == anchor) continue;
      const auto lm = detail::log_kernel_means(samples[anchor], samples[m], tau, log_norm);
      detail::check_finite(lm, "cross-modality");
      for (std::size_t i = 0; i < log_c.size(); ++i) log_c[i] += lm[i];
    }
    return -detail::log_mean_exp(log_c);
  };
  if (joint == JointAnchor::First) {
    est.alignment_term = alignment_for(0);
  } else {
    for (std::size_t a = 0; a < num; ++a) est.alignment_term += alignment_for(a);
    est.alignment_term /= static_cast<double>(num);
  }
  est.value = est.uniformity_term + est.alignment_term;
  return est;
}

inline DivergenceEstimate holder_kde(const MultimodalBatch& batch, double tau, bool normalized = false,
                                     JointAnchor joint = JointAnchor::First) {
  return holder_kde(std::span<const Matrix>(batch.matrices()), tau, normalized, joint);
}

/// Normalized Gaussian KDE of `samples` evaluated at x.
inline double kde_density(const Vector& x, const Matrix& samples, double tau) {
  require(tau > 0.0, ErrorCode::InvalidArgument, "bandwidth must be positive");
  require(x.size() == samples.cols(), ErrorCode::DimensionMismatch, "point and samples differ in dimension");
  require(samples.rows() >= 1, ErrorCode::InvalidArgument, "no samples");
  const double d = static_cast<double>(samples.cols());
  const double norm = std::pow(2.0 * std::numbers::pi * tau * tau, -0.5 * d);
  double acc = 0.0;
  for (Index k = 0; k < samples.rows(); ++k)
    acc += std::exp(-(samples.row(k).transpose() - x).squaredNorm() / (2.0 * tau * tau));
  return norm * acc / static_cast<double>(samples.rows());
}

// ---------------------------------------------------------------------------
// Quadrature oracle.

/// Gaussian mixture with one diagonal covariance shared by its components.
struct DensitySpec {
  std::vector<Vector> means;
  std::vector<double> weights;
  Vector stddev;

  static DensitySpec gaussian(Vector mean, Vector stddev) {
    return DensitySpec{{std::move(mean)}, {1.0}, std::move(stddev)};
  }

  Index dim() const { return stddev.size(); }

  void validate() const {
    require(!means.empty() && means.size() == weights.size(), ErrorCode::InvalidArgument,
            "mixture needs one weight per component");
    double total = 0.0;
    for (double w : weights) {
      require(w >= 0.0, ErrorCode::InvalidWeights, "mixture weights must be nonnegative");
      total += w;
    }
    require(std::abs(total - 1.0) <= 1e-9, ErrorCode::InvalidWeights, "mixture weights must sum to 1");
    require((stddev.array() > 0.0).all(), ErrorCode::InvalidArgument, "standard deviations must be positive");
    for (const auto& mu : means)
      require(mu.size() == stddev.size(), ErrorCode::DimensionMismatch, "component mean has the wrong dimension");
  }

  double operator()(std::span<const double> x) const {
    const Index d = dim();
    double log_norm = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
    for (Index k = 0; k < d; ++k) log_norm -= std::log(stddev(k));
    double acc = 0.0;
    for (std::size_t c = 0; c < means.size(); ++c) {
      double q = 0.0;
      for (Index k = 0; k < d; ++k) {
        const double t = (x[static_cast<std::size_t>(k)] - means[c](k)) / stddev(k);
        q += t * t;
      }
      acc += weights[c] * std::exp(log_norm - 0.5 * q);
    }
    return acc;
  }
};

struct QuadratureResult {
  double value = 0.0;
  double uniformity_term = 0.0;
  double alignment_term = 0.0;
  double error_estimate = 0.0;
  int intervals_per_axis = 0;
};

namespace detail {

inline std::vector<double> simpson_weights(int intervals, double h) {
  std::vector<double> w(static_cast<std::size_t>(intervals + 1));
  for (int k = 0; k <= intervals; ++k) w[static_cast<std::size_t>(k)] = (k == 0 || k == intervals) ? 1.0 : (k % 2 ? 4.0 : 2.0);
  for (double& x : w) x *= h / 3.0;
  return w;
}

}  // namespace detail

/// Evaluates the divergence integrals for M Gaussian mixtures in d <= 2 by
/// composite Simpson on the box (means +- 10 sigma), doubling the grid and
/// Richardson-extrapolating until the estimated error of D falls below
/// 1e-10. Throws GridTooCoarse if the estimate is still above 1e-5 at the
/// finest grid.
inline QuadratureResult holder_quadrature(std::span<const DensitySpec> specs) {
  require(specs.size() >= 2, ErrorCode::InvalidArgument, "quadrature needs at least two densities");
  const Index d = specs.front().dim();
  require(d == 1 || d == 2, ErrorCode::InvalidArgument, "quadrature oracle supports d = 1 or d = 2 only");
  for (const auto& s : specs) {
    s.validate();
    require(s.dim() == d, ErrorCode::DimensionMismatch, "densities differ in dimension");
  }
  const std::size_t num = specs.size();
  const double power = static_cast<double>(num);

  std::vector<double> lo(static_cast<std::size_t>(d), std::numeric_limits<double>::infinity());
  std::vector<double> hi(static_cast<std::size_t>(d), -std::numeric_limits<double>::infinity());
  for (const auto& s : specs)
    for (const auto& mu : s.means)
      for (Index k = 0; k < d; ++k) {
        lo[static_cast<std::size_t>(k)] = std::min(lo[static_cast<std::size_t>(k)], mu(k) - 10.0 * s.stddev(k));
        hi[static_cast<std::size_t>(k)] = std::max(hi[static_cast<std::size_t>(k)], mu(k) + 10.0 * s.stddev(k));
      }

  struct Integrals {
    std::vector<double> self_power;  // int p_m^M
    double overlap = 0.0;            // int prod p_m
  };
  auto integrate = [&](int intervals) {
    Integrals out{std::vector<double>(num, 0.0), 0.0};
    std::vector<std::vector<double>> nodes(static_cast<std::size_t>(d));
    std::vector<std::vector<double>> weights(static_cast<std::size_t>(d));
    for (Index k = 0; k < d; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      const double h = (hi[ku] - lo[ku]) / intervals;
      weights[ku] = detail::simpson_weights(intervals, h);
      nodes[ku].resize(static_cast<std::size_t>(intervals + 1));
      for (int j = 0; j <= intervals; ++j) nodes[ku][static_cast<std::size_t>(j)] = lo[ku] + j * h;
    }
    const std::size_t n1 = nodes[0].size();
    const std::size_t n2 = d == 2 ? nodes[1].size() : 1;
    std::vector<double> point(static_cast<std::size_t>(d));
    for (std::size_t a = 0; a < n1; ++a) {
      for (std::size_t b = 0; b < n2; ++b) {
        point[0] = nodes[0][a];
        double w = weights[0][a];
        if (d == 2) {
          point[1] = nodes[1][b];
          w *= weights[1][b];
        }
        double prod = 1.0;
        for (std::size_t m = 0; m < num; ++m) {
          const double p = specs[m](point);
          out.self_power[m] += w * std::pow(p, power);
          prod *= p;
        }
        out.overlap += w * prod;
      }
    }
    return out;
  };

  const int max_intervals = d == 1 ? (1 << 15) : (1 << 10);
  int intervals = 32;
  Integrals coarse = integrate(intervals);
  QuadratureResult result;
  for (;;) {
    const int finer = intervals * 2;
    const Integrals fine = integrate(finer);
    Integrals extrap{std::vector<double>(num), 0.0};
    double err = 0.0;
    for (std::size_t m = 0; m < num; ++m) {
      const double delta = (fine.self_power[m] - coarse.self_power[m]) / 15.0;
      extrap.self_power[m] = fine.self_power[m] + delta;
      err += std::abs(delta) / (power * fine.self_power[m]);
    }
    const double delta = (fine.overlap - coarse.overlap) / 15.0;
    extrap.overlap = fine.overlap + delta;
    err += std::abs(delta) / fine.overlap;

    require(extrap.overlap > 0.0, ErrorCode::NumericalUnderflow, "densities have no numerical overlap");
    result.uniformity_term = 0.0;
    for (double v : extrap.self_power) result.uniformity_term += std::log(v);
    result.uniformity_term /= power;
    result.alignment_term = -std::log(extrap.overlap);
    result.value = result.uniformity_term + result.alignment_term;
    result.error_estimate = err;
    result.intervals_per_axis = finer;
    if (err < 1e-10 || finer >= max_intervals) break;
    intervals = finer;
    coarse = fine;
  }
  require(result.error_estimate <= 1e-5, ErrorCode::GridTooCoarse,
          "quadrature error estimate " + std::to_string(result.error_estimate) + " exceeds 1e-5");
  return result;
}

}  // namespace unialign
