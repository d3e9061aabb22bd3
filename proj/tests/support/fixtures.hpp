#pragma once

#include "msv/givens.hpp"
#include "msv/random.hpp"

#include <Eigen/Dense>

#include <numbers>

namespace testing_support {

inline Eigen::VectorXd normal_vector(int n, msv::Rng& rng, double scale = 1.0) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * msv::standard_normal(rng);
  return v;
}

/// Random spectral covariance: h ~ N(0, 0.5^2), angles uniform on (-1.4, 1.4).
inline msv::SpectralCov random_cov(int dim, msv::Rng& rng) {
  Eigen::VectorXd h = normal_vector(dim, rng, 0.5);
  Eigen::VectorXd w(msv::pair_count(dim));
  for (Eigen::Index k = 0; k < w.size(); ++k) w[k] = 1.4 * (2.0 * msv::uniform01(rng) - 1.0);
  return msv::SpectralCov(h, w);
}

}  // namespace testing_support
