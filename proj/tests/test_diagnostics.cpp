#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "unialign/diagnostics.hpp"

using namespace unialign;
using namespace testing_support;

namespace {

LossConfig unit_weight_config() {
  LossConfig cfg;
  cfg.kernel.tau = 1.0;
  return cfg;
}

}  // namespace

TEST(Decompose, SingleSampleForcesCancel) {
  const auto batch = MultimodalBatch::from_matrices({rows({{1, 0}}), rows({{0.6, 0.8}})});
  const auto f = decompose_gradient(batch, unit_weight_config(), 0);
  EXPECT_EQ(f.attraction, f.repulsion);
  EXPECT_EQ(f.attraction, Vector(rows({{0.6, 0.8}}).row(0).transpose()));
}

TEST(Decompose, AttractionIsWeightedSum) {
  const auto batch = MultimodalBatch::from_matrices({rows({{0, 1}}), rows({{1, 0}}), rows({{0, 1}})});
  const auto f = decompose_gradient(batch, unit_weight_config(), 0);
  EXPECT_EQ(f.attraction(0), 1.0);
  EXPECT_EQ(f.attraction(1), 1.0);
}

TEST(Decompose, MatchesAnchorRestrictedInfoNCE) {
  Rng rng(77);
  for (int rep = 0; rep < 25; ++rep) {
    const int num = 2 + rep % 3;
    const int anchor = rep % num;
    const auto batch = unit_batch(rng, 4, num, 5, anchor);
    LossConfig cfg;
    cfg.kernel.tau = rep % 2 ? 0.07 : 0.5;
    Matrix w = Matrix::Zero(num, num);
    double total_w = 0.0;
    for (int n = 0; n < num; ++n)
      if (n != anchor) total_w += (w(anchor, n) = 1.0 + 0.5 * n);
    cfg.infonce_weights = w;
    const auto grad = infonce(batch, cfg).gradient[static_cast<std::size_t>(anchor)];
    for (Index i = 0; i < 4; ++i) {
      const auto f = decompose_gradient(batch, cfg, i);
      const Vector lhs = -f.attraction + f.repulsion;
      const Vector rhs = total_w * 4.0 * grad.row(i).transpose();
      EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(Zeta, Examples) {
  EXPECT_DOUBLE_EQ(zeta(Vector::Unit(2, 0), 2.0 * Vector::Unit(2, 0)), 1.0);
  EXPECT_DOUBLE_EQ(zeta(Vector::Unit(2, 0), Vector::Unit(2, 1)), 0.0);
  EXPECT_NEAR(zeta(Vector::Unit(2, 0), Vector::Ones(2)), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Zeta, UndefinedForZeroVectors) {
  try {
    zeta(Vector::Zero(3), Vector::Ones(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UndefinedCosine);
  }
  EXPECT_THROW(zeta(Vector::Ones(3), Vector::Zero(3)), Error);
}

TEST(Zeta, ScaleInvariantAndBounded) {
  Rng rng(9);
  for (int rep = 0; rep < 200; ++rep) {
    const Vector v = rng.normal_vector(6);
    const Vector p = rng.normal_vector(6);
    const double s = 0.01 + 10.0 * rng.uniform();
    const double t = 0.01 + 10.0 * rng.uniform();
    const double z = zeta(v, p);
    EXPECT_NEAR(zeta(s * v, t * p), z, 1e-12);
    EXPECT_GE(z, -1.0);
    EXPECT_LE(z, 1.0);
  }
}

TEST(Chi, Examples) {
  const Matrix a = rows({{0, 1}});
  auto chi_of = [&](const Matrix& p1, const Matrix& p2) {
    return chi(MultimodalBatch::from_matrices({a, p1, p2}), unit_weight_config(), 0);
  };
  EXPECT_NEAR(chi_of(rows({{1, 0}}), rows({{1, 0}})), 0.0, 1e-15);
  EXPECT_NEAR(chi_of(rows({{1, 0}}), rows({{-1, 0}})), 1.0, 1e-15);
  EXPECT_NEAR(chi_of(rows({{1, 0}}), rows({{0, 1}})), 1.0 - std::sqrt(2.0) / 2.0, 1e-15);
  EXPECT_NEAR(chi_of(rows({{1, 0}}), rows({{0, 1}})), 0.292893, 1e-6);
}

TEST(Chi, ZeroPullWeightsRejected) {
  const auto batch = MultimodalBatch::from_matrices({rows({{0, 1}}), rows({{1, 0}}), rows({{1, 0}})});
  LossConfig cfg;
  cfg.infonce_weights = rows({{0, 0, 0}, {1, 0, 1}, {1, 1, 0}});
  try {
    chi(batch, cfg, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidWeights);
  }
}

TEST(ConflictReport, BoundsAndConsistency) {
  Rng rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    const auto batch = unit_batch(rng, 8, 2 + rep % 4, 6);
    LossConfig cfg;
    cfg.kernel.tau = 0.1 + 0.1 * (rep % 5);
    const auto report = conflict_report(batch, cfg);
    ASSERT_EQ(report.chi.size(), 8u);
    for (Index i = 0; i < 8; ++i) {
      const auto su = static_cast<std::size_t>(i);
      EXPECT_GE(report.chi[su], -1e-9);
      EXPECT_LE(report.chi[su], 1.0 + 1e-9);
      EXPECT_GE(report.zeta[su], -1.0 - 1e-9);
      EXPECT_LE(report.zeta[su], 1.0 + 1e-9);
      const auto f = decompose_gradient(batch, cfg, i);
      EXPECT_LE((f.attraction - report.forces[su].attraction).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LE((f.repulsion - report.forces[su].repulsion).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_NEAR(chi(batch, cfg, i), report.chi[su], 1e-12);
    }
  }
}

TEST(ConflictReport, EqualPositivesGiveZeroChi) {
  Rng rng(14);
  const Matrix anchor = unit_rows(rng, 5, 4);
  const Matrix other = unit_rows(rng, 5, 4);
  const auto report = conflict_report(MultimodalBatch::from_matrices({anchor, other, other, other}), LossConfig{});
  for (double c : report.chi) EXPECT_NEAR(c, 0.0, 1e-12);
}

TEST(Summarize, MeanAndStandardError) {
  const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
  const auto est = summarize(xs);
  EXPECT_DOUBLE_EQ(est.mean, 2.5);
  EXPECT_NEAR(est.std_error, std::sqrt((1.25 * 4.0 / 3.0) / 4.0), 1e-15);
}

TEST(SystematicConflict, NoResidualMeansPerfectConflict) {
  SystematicConflictModel model;
  model.sigma = 0.0;
  const std::vector<int> ms{2, 3, 9, 33};
  for (const auto& p : simulate_prop1(model, ms, 200)) {
    EXPECT_EQ(p.estimate.mean, 1.0);
    EXPECT_LT(p.estimate.std_error, 1e-12);
  }
}

TEST(SystematicConflict, ReferenceMeansAndTrend) {
  SystematicConflictModel model;
  model.seed = 1;
  const std::vector<int> ms{5, 17, 65, 513};
  const auto pts = simulate_prop1(model, ms, 10000);
  const double expected[] = {0.70, 0.89, 0.97};
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(pts[static_cast<std::size_t>(k)].estimate.mean, expected[k], 0.02);
  for (std::size_t k = 1; k < pts.size(); ++k)
    EXPECT_GE(pts[k].estimate.mean + 2.0 * pts[k].estimate.std_error, pts[k - 1].estimate.mean);
  EXPECT_GT(pts.back().estimate.mean, 0.99);
}

TEST(SystematicConflict, CustomSamplerAtLeastC0) {
  SystematicConflictModel model;
  model.c_sampler = [](Rng& rng, int) { return 0.5 + rng.uniform(); };
  const std::vector<int> ms{5};
  const auto larger = simulate_prop1(model, ms, 2000);
  const auto base = simulate_prop1(SystematicConflictModel{}, ms, 2000);
  EXPECT_GT(larger.front().estimate.mean, base.front().estimate.mean);

  model.c_sampler = [](Rng&, int) { return 0.1; };
  EXPECT_THROW(simulate_prop1(model, ms, 10), Error);
}

TEST(SystematicConflict, Deterministic) {
  SystematicConflictModel model;
  model.seed = 99;
  const std::vector<int> ms{4, 8};
  const auto a = simulate_prop1(model, ms, 500);
  const auto b = simulate_prop1(model, ms, 500);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k].estimate.mean, b[k].estimate.mean);
}

TEST(ConflictBound, BoundExamples) {
  EXPECT_NEAR(prop2_bound(3, 1.0), 0.0, 1e-15);
  EXPECT_NEAR(prop2_bound(3, 0.0), 1.0 - std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(prop2_bound(3, 0.0), 0.292893, 1e-6);
  EXPECT_NEAR(prop2_asymptote(0.25), 0.5, 1e-15);
  EXPECT_NEAR(prop2_bound(1000000, 0.25), 0.5, 1e-3);
  for (int m : {2, 5, 17}) EXPECT_NEAR(prop2_bound(m, 1.0), 0.0, 1e-15);
}

TEST(ConflictBound, DomainErrors) {
  for (auto [m, mu] : std::vector<std::pair<int, double>>{{1, 0.5}, {3, -0.1}, {3, 1.1}}) {
    try {
      prop2_bound(m, mu);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::DomainError);
    }
  }
}

TEST(ConflictBound, IndependentDirectionsRespectBound) {
  const std::vector<int> ms{3};
  const auto r = verify_prop2(64, ms, 0.0, 5000, 3);
  const auto& row = r.rows.front();
  EXPECT_GE(row.chi.mean, 0.2929 - 3.0 * row.chi.std_error);
  EXPECT_NEAR(r.calibration.achieved_mu, 0.0, 0.01);
}

TEST(ConflictBound, IdenticalDirectionsGiveZero) {
  const std::vector<int> ms{3, 5, 9, 17};
  const auto r = verify_prop2(16, ms, 1.0, 200, 4);
  for (const auto& row : r.rows) {
    EXPECT_NEAR(row.chi.mean, 0.0, 1e-12);
    EXPECT_EQ(row.bound, 0.0);
  }
}

TEST(ConflictBound, NondecreasingInModalityCount) {
  const std::vector<int> ms{3, 5, 9, 17};
  const auto r = verify_prop2(64, ms, 0.25, 4000, 5);
  EXPECT_NEAR(r.calibration.achieved_mu, 0.25, 0.01);
  for (std::size_t k = 0; k < r.rows.size(); ++k) {
    EXPECT_GE(r.rows[k].chi.mean, r.rows[k].bound - 3.0 * r.rows[k].chi.std_error);
    if (k > 0) {
      const double se = std::hypot(r.rows[k].chi.std_error, r.rows[k - 1].chi.std_error);
      EXPECT_GE(r.rows[k].chi.mean + 2.0 * se, r.rows[k - 1].chi.mean);
    }
  }
}

TEST(Calibration, HitsTargets) {
  for (double mu : {0.1, 0.5, 0.9}) {
    const auto c = calibrate_rho(32, mu, 11);
    EXPECT_NEAR(c.achieved_mu, mu, 0.01);
    EXPECT_GT(c.rho, 0.0);
    EXPECT_LT(c.rho, 1.0);
  }
  EXPECT_EQ(calibrate_rho(32, 1.0, 11).rho, 1.0);
}

TEST(Sampler, UnitNormOutputs) {
  Rng rng(6);
  const CorrelatedSphereSampler s{12, 0.4};
  const Vector u = rng.unit_vector(12);
  for (int k = 0; k < 100; ++k) EXPECT_NEAR(s.draw(rng, u).norm(), 1.0, 1e-12);
}
