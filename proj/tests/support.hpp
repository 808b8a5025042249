#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "unialign/geometry.hpp"
#include "unialign/random.hpp"

namespace testing_support {

using namespace unialign;

inline Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(static_cast<Index>(r.size()), static_cast<Index>(r.begin()->size()));
  Index i = 0;
  for (const auto& row : r) {
    Index k = 0;
    for (double v : row) m(i, k++) = v;
    ++i;
  }
  return m;
}

inline Matrix unit_rows(Rng& rng, Index b, Index d) {
  Matrix m(b, d);
  for (Index i = 0; i < b; ++i) m.row(i) = rng.unit_vector(d).transpose();
  return m;
}

inline MultimodalBatch unit_batch(Rng& rng, Index b, int num_modalities, Index d, int anchor = 0) {
  std::vector<Matrix> z;
  for (int m = 0; m < num_modalities; ++m) z.push_back(unit_rows(rng, b, d));
  return MultimodalBatch::from_matrices(z, anchor);
}

/// Haar-ish random orthogonal matrix from a QR factorization.
inline Matrix random_rotation(Rng& rng, Index d) {
  Eigen::MatrixXd g(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index k = 0; k < d; ++k) g(i, k) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return Matrix(qr.householderQ());
}

using Wide = long double;
using WideBatches = std::vector<MatrixT<Wide>>;

/// Central differences of f at z in extended precision, compared with
/// `analytic` coordinate by coordinate. Returns the largest
/// |a - n| / max(|a|, |n|, 1e-12).
inline double max_rel_error(const std::vector<Matrix>& z, const std::vector<Matrix>& analytic,
                            const std::function<Wide(const WideBatches&)>& f, double h = 1e-5) {
  WideBatches w;
  for (const auto& m : z) w.push_back(m.cast<Wide>());
  double worst = 0.0;
  for (std::size_t m = 0; m < w.size(); ++m)
    for (Index i = 0; i < w[m].rows(); ++i)
      for (Index k = 0; k < w[m].cols(); ++k) {
        const Wide x = w[m](i, k);
        w[m](i, k) = x + h;
        const Wide up = f(w);
        w[m](i, k) = x - h;
        const Wide down = f(w);
        w[m](i, k) = x;
        const double n = static_cast<double>((up - down) / (2 * Wide(h)));
        const double a = analytic[m](i, k);
        worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-12}));
      }
  return worst;
}

}  // namespace testing_support
