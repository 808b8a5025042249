#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "unialign/geometry.hpp"
#include "unialign/random.hpp"

using namespace unialign;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(static_cast<Index>(r.size()), static_cast<Index>(r.begin()->size()));
  Index i = 0;
  for (const auto& row : r) {
    Index k = 0;
    for (double v : row) m(i, k++) = v;
    ++i;
  }
  return m;
}

Matrix random_unit_rows(Rng& rng, Index b, Index d) {
  Matrix m(b, d);
  for (Index i = 0; i < b; ++i) m.row(i) = rng.unit_vector(d).transpose();
  return m;
}

}  // namespace

TEST(Normalize, ThreeFourFive) {
  const auto z = l2_normalize(rows({{3, 4}}));
  EXPECT_DOUBLE_EQ(z.data()(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(z.data()(0, 1), 0.8);
}

TEST(Normalize, AxisVectors) {
  const auto z = l2_normalize(rows({{1, 0}, {0, -2}}));
  EXPECT_EQ(z.data(), rows({{1, 0}, {0, -1}}));
}

TEST(Normalize, ZeroRowRejected) {
  try {
    l2_normalize(rows({{1, 0}, {0, 0}}));
    FAIL() << "expected ZeroVector";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroVector);
  }
}

TEST(Normalize, Idempotent) {
  Rng rng(3);
  Matrix x(50, 7);
  for (Index i = 0; i < x.rows(); ++i) x.row(i) = rng.normal_vector(7, 3.0).transpose();
  const Matrix once = l2_normalize(x).data();
  const Matrix twice = l2_normalize(once).data();
  EXPECT_LE((once - twice).cwiseAbs().maxCoeff(), 1e-12);
  for (Index i = 0; i < once.rows(); ++i) EXPECT_NEAR(once.row(i).norm(), 1.0, 1e-9);
}

TEST(ModalityBatch, RejectsNonUnitRowsAndTinyShapes) {
  EXPECT_THROW(ModalityBatch::from_unit_rows(rows({{1, 1}})), Error);
  EXPECT_THROW(ModalityBatch::from_unit_rows(rows({{1}})), Error);
  EXPECT_NO_THROW(ModalityBatch::from_unit_rows(rows({{1, 0}, {0, 1}})));
}

TEST(MultimodalBatch, ShapeChecks) {
  const Matrix a = rows({{1, 0}, {0, 1}});
  const Matrix b = rows({{1, 0, 0}, {0, 1, 0}});
  try {
    MultimodalBatch::from_matrices({a, b});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  EXPECT_THROW(MultimodalBatch::from_matrices({a}), Error);
  EXPECT_THROW(MultimodalBatch::from_matrices({a, a}, 2), Error);
  const auto batch = MultimodalBatch::from_matrices({a, a, a}, 1);
  EXPECT_EQ(batch.num_modalities(), 3);
  EXPECT_EQ(batch.anchor(), 1);
  EXPECT_EQ(batch.tuple(1), rows({{0, 1}, {0, 1}, {0, 1}}));
}

TEST(PairwiseDistance, OrthogonalPair) {
  const auto a = l2_normalize(rows({{1, 0}}));
  const auto b = l2_normalize(rows({{0, 1}}));
  EXPECT_DOUBLE_EQ(pairwise_sq_dist(a, b, Geometry::Euclidean)(0, 0), 2.0);
  EXPECT_NEAR(pairwise_sq_dist(a, b, Geometry::Geodesic)(0, 0), std::numbers::pi * std::numbers::pi / 4.0, 1e-15);
  EXPECT_NEAR(pairwise_sq_dist(a, b, Geometry::Geodesic)(0, 0), 2.4674, 1e-4);
}

TEST(PairwiseDistance, IdentityIsZero) {
  const auto a = l2_normalize(rows({{1, 0}}));
  EXPECT_EQ(pairwise_sq_dist(a, a, Geometry::Euclidean)(0, 0), 0.0);
  EXPECT_EQ(pairwise_sq_dist(a, a, Geometry::Geodesic)(0, 0), 0.0);
}

TEST(PairwiseDistance, SelfDiagonalExactlyZeroForRandomRows) {
  Rng rng(11);
  const auto a = l2_normalize(random_unit_rows(rng, 40, 9));
  const Matrix g = pairwise_sq_dist(a, a, Geometry::Geodesic);
  for (Index i = 0; i < g.rows(); ++i) EXPECT_EQ(g(i, i), 0.0);
}

TEST(PairwiseDistance, DimensionMismatch) {
  try {
    pairwise_sq_dist<double>(rows({{1, 0}}), rows({{1, 0, 0}}), Geometry::Euclidean);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(PairwiseDistance, ChordNeverExceedsArc) {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto a = l2_normalize(random_unit_rows(rng, 12, 5));
    const auto b = l2_normalize(random_unit_rows(rng, 12, 5));
    const Matrix e = pairwise_sq_dist(a, b, Geometry::Euclidean);
    const Matrix g = pairwise_sq_dist(a, b, Geometry::Geodesic);
    for (Index i = 0; i < e.rows(); ++i)
      for (Index j = 0; j < e.cols(); ++j) {
        EXPECT_LE(e(i, j), g(i, j) + 1e-15);
        if (g(i, j) > 1e-6) {
          EXPECT_LT(e(i, j), g(i, j));
        }
      }
  }
}

TEST(Kernel, ZeroDistanceIsOne) {
  Matrix d = Matrix::Zero(2, 2);
  for (double tau : {0.07, 1.0, 5.0}) EXPECT_EQ(gaussian_kernel(d, {Geometry::Euclidean, tau})(1, 1), 1.0);
}

TEST(Kernel, UnitBandwidth) {
  Matrix d(1, 1);
  d << 2.0;
  EXPECT_NEAR(gaussian_kernel(d, {Geometry::Euclidean, 1.0})(0, 0), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(gaussian_kernel(d, {Geometry::Euclidean, 1.0})(0, 0), 0.367879, 1e-6);
}

TEST(Kernel, SmallBandwidthMatchesExtendedPrecision) {
  Matrix d(1, 1);
  d << 2.0;
  const double k = gaussian_kernel(d, {Geometry::Euclidean, 0.07})(0, 0);
  const long double oracle = std::exp(-2.0L / (2.0L * 0.07L * 0.07L));
  EXPECT_GT(k, 0.0);
  EXPECT_NEAR(k / static_cast<double>(oracle), 1.0, 1e-12);
  EXPECT_NEAR(k, 2.336e-89, 0.001e-89);
}

TEST(Kernel, RejectsNonPositiveTau) {
  Matrix d = Matrix::Zero(1, 1);
  EXPECT_THROW(gaussian_kernel(d, {Geometry::Euclidean, 0.0}), Error);
}

TEST(Kernel, SymmetricWithUnitDiagonal) {
  Rng rng(8);
  const auto a = l2_normalize(random_unit_rows(rng, 30, 6));
  for (Geometry g : {Geometry::Euclidean, Geometry::Geodesic}) {
    const Matrix k = gaussian_kernel(pairwise_sq_dist(a, a, g), {g, 0.5});
    for (Index i = 0; i < k.rows(); ++i) {
      EXPECT_EQ(k(i, i), 1.0);
      for (Index j = 0; j < k.cols(); ++j) {
        EXPECT_EQ(k(i, j), k(j, i));
        EXPECT_GT(k(i, j), 0.0);
        EXPECT_LE(k(i, j), 1.0);
      }
    }
  }
}

TEST(Centroid, IdenticalInputs) {
  const std::vector<double> w{0.5, 0.5};
  const Vector c = centroid(rows({{1, 0}, {1, 0}}), w);
  EXPECT_DOUBLE_EQ(c(0), 1.0);
  EXPECT_DOUBLE_EQ(c(1), 0.0);
}

TEST(Centroid, Symmetric) {
  const std::vector<double> w{0.5, 0.5};
  const Vector c = centroid(rows({{1, 0}, {0, 1}}), w);
  EXPECT_NEAR(c(0), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(c(1), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(c.norm(), 1.0, 1e-9);
}

TEST(Centroid, AntipodalIsDegenerate) {
  const std::vector<double> w{0.5, 0.5};
  try {
    centroid(rows({{1, 0}, {-1, 0}}), w);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateCentroid);
  }
}

TEST(Centroid, WeightValidation) {
  const Matrix t = rows({{1, 0}, {0, 1}});
  const std::vector<double> not_simplex{0.7, 0.7};
  const std::vector<double> negative{1.5, -0.5};
  const std::vector<double> short_w{1.0};
  EXPECT_THROW(centroid(t, not_simplex), Error);
  EXPECT_THROW(centroid(t, negative), Error);
  EXPECT_THROW(centroid(t, short_w), Error);
}

TEST(Gram, Examples) {
  EXPECT_EQ(gram_matrix<double>(rows({{1, 0}, {0, 1}})), Matrix::Identity(2, 2));
  EXPECT_EQ(gram_matrix<double>(rows({{1, 0}, {1, 0}})), Matrix::Ones(2, 2));
  const double s = std::sqrt(3.0) / 2.0;
  const Matrix g = gram_matrix<double>(rows({{1, 0}, {0.5, s}}));
  EXPECT_NEAR(g(0, 1), 0.5, 1e-15);
  EXPECT_NEAR(g(1, 0), 0.5, 1e-15);
  EXPECT_NEAR(g(1, 1), 1.0, 1e-15);
}

TEST(Gram, VectorListDimensionMismatch) {
  std::vector<Vector> t{Vector::Unit(2, 0), Vector::Unit(3, 0)};
  try {
    gram_matrix(t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Gram, PositiveSemidefiniteOverRandomTuples) {
  Rng rng(2024);
  for (int rep = 0; rep < 1200; ++rep) {
    const int m = 2 + rep % 6;
    const Index d = 2 + rep % 9;
    const Matrix t = random_unit_rows(rng, m, d);
    const Matrix g = gram_matrix<double>(t);
    EXPECT_LE((g - g.transpose()).cwiseAbs().maxCoeff(), 0.0);
    for (Index k = 0; k < g.rows(); ++k) EXPECT_NEAR(g(k, k), 1.0, 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-9);
  }
}

TEST(ArcRatio, LimitsAndValues) {
  EXPECT_EQ(arc_ratio(1.0), 1.0);
  EXPECT_EQ(arc_ratio(-1.0), 0.0);
  EXPECT_NEAR(arc_ratio(0.0), std::numbers::pi / 2.0, 1e-15);
  EXPECT_NEAR(arc_ratio(1.0 - 1e-10), 1.0, 1e-5);
}
