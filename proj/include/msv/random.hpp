#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace msv {

using Rng = std::mt19937_64;

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

/// log(U), U ~ Uniform(0,1]; compared against log acceptance ratios.
inline double log_uniform(Rng& rng) {
  return std::log1p(-uniform01(rng));
}

/// Gamma(shape, rate) draw.
inline double gamma_rate(Rng& rng, double shape, double rate) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

/// Inverse-gamma(shape, rate) draw.
inline double inverse_gamma(Rng& rng, double shape, double rate) {
  return 1.0 / gamma_rate(rng, shape, rate);
}

}  // namespace msv
