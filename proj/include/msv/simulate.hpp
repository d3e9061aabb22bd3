#pragma once

// Forward simulation of synthetic panels from the generative model.

#include "msv/latent_prior.hpp"
#include "msv/model.hpp"
#include "msv/panel.hpp"
#include "msv/random.hpp"

#include <Eigen/Dense>

#include <optional>

namespace msv {

struct SimulationSpec {
  int assets = 3;
  int factors = 3;
  int horizon = 1000;
  ModelMode mode = ModelMode::basic;
  double sigma2 = 1e-4;           // idiosyncratic variance of r_t given f_t
  double missing_fraction = 0.0;  // probability that a cell is masked
  double angle_level = 0.8;       // |delta_0| of the angle paths, signs alternate
  double log_variance_level = 0.0;
  bool zero_angles = false;
  std::optional<PathParams> params;  // overrides the default truth
};

struct SyntheticData {
  ReturnsPanel panel;
  LatentPaths x;
  PathParams params;
  Eigen::MatrixXd loadings;  // N x K
  Eigen::MatrixXd factors;   // K x T
  double sigma2 = 0.0;
};

/// Default true AR(1) parameters: a spread of persistences in [0.9, 0.98]
/// with moderate innovation scales.
PathParams default_truth(const SimulationSpec& spec);

/// Throws ConfigError on an inconsistent spec.
SyntheticData simulate(const SimulationSpec& spec, Rng& rng);

/// Settings of the bundled synthetic dataset produced by tools/make_bundle.sh.
SimulationSpec bundle_spec();
inline constexpr std::uint64_t kBundleSeed = 20240601;

}  // namespace msv
