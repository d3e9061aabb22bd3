#include "msv/simulate.hpp"

#include "msv/errors.hpp"

#include <cmath>

namespace msv {

PathParams default_truth(const SimulationSpec& spec) {
  const int dim = spec.factors;
  PathParams out(static_cast<std::size_t>(path_count(dim)));
  const double h_phi[] = {0.95, 0.9, 0.97};
  const double d_phi[] = {0.98, 0.93, 0.96};
  for (int i = 0; i < dim; ++i) {
    ArParams& p = out[i];
    p.phi_tilde = transformed_from_persistence(h_phi[i % 3]);
    p.level = spec.log_variance_level - 0.3 * (i % 3);
    p.sigma = 0.2;
  }
  for (int k = 0; k < pair_count(dim); ++k) {
    ArParams& p = out[dim + k];
    p.phi_tilde = transformed_from_persistence(d_phi[k % 3]);
    p.level = (k % 2 == 0 ? 1.0 : -1.0) * spec.angle_level;
    p.sigma = 0.15;
  }
  if (spec.zero_angles) {
    for (int k = 0; k < pair_count(dim); ++k) {
      out[dim + k].level = 0.0;
    }
  }
  return out;
}

SyntheticData simulate(const SimulationSpec& spec, Rng& rng) {
  const int dim = spec.factors;
  if (dim < 1 || spec.assets < dim) throw ConfigError("simulate: need 1 <= factors <= assets");
  if (spec.horizon < 1) throw ConfigError("simulate: horizon must be >= 1");
  if (spec.mode == ModelMode::basic && spec.assets != dim) {
    throw ConfigError("simulate: basic mode requires assets == factors");
  }
  if (!(spec.sigma2 >= 0.0)) throw ConfigError("simulate: sigma2 must be >= 0");
  if (!(spec.missing_fraction >= 0.0 && spec.missing_fraction < 1.0)) {
    throw ConfigError("simulate: missing_fraction must lie in [0, 1)");
  }

  SyntheticData out;
  out.params = spec.params ? *spec.params : default_truth(spec);
  if (static_cast<int>(out.params.size()) != path_count(dim)) {
    throw ConfigError("simulate: parameter count does not match K(K+1)/2");
  }
  out.x = LatentPaths(dim, sample_prior(out.params, spec.horizon, rng));
  if (spec.zero_angles) out.x.values.bottomRows(pair_count(dim)).setZero();

  out.loadings = Eigen::MatrixXd::Zero(spec.assets, dim);
  for (int n = 0; n < spec.assets; ++n) {
    for (int k = 0; k < dim; ++k) {
      if (n == k) {
        out.loadings(n, k) = 1.0;
      } else if (!loading_is_fixed(n, k) && spec.mode == ModelMode::factor) {
        out.loadings(n, k) = 0.5 + 0.5 * standard_normal(rng);
      }
    }
  }
  out.sigma2 = spec.sigma2;

  out.factors.resize(dim, spec.horizon);
  ReturnsPanel::Values values(spec.horizon, spec.assets);
  Eigen::VectorXd z(dim);
  for (int t = 0; t < spec.horizon; ++t) {
    const SpectralCov cov = out.x.slice(t);
    for (int k = 0; k < dim; ++k) z[k] = std::exp(0.5 * cov.log_eigenvalues[k]) * standard_normal(rng);
    rotate({cov.angles.data(), static_cast<std::size_t>(cov.angles.size())},
           {z.data(), static_cast<std::size_t>(dim)});
    out.factors.col(t) = z;
    const double sd = std::sqrt(spec.sigma2);
    for (int n = 0; n < spec.assets; ++n) {
      values(t, n) = out.loadings.row(n).dot(z) + sd * standard_normal(rng);
    }
  }

  ReturnsPanel::Mask mask = ReturnsPanel::Mask::Ones(spec.horizon, spec.assets);
  if (spec.missing_fraction > 0.0) {
    for (int t = 0; t < spec.horizon; ++t) {
      for (int n = 0; n < spec.assets; ++n) {
        if (uniform01(rng) < spec.missing_fraction) mask(t, n) = 0;
      }
    }
    // keep every column usable
    for (int n = 0; n < spec.assets; ++n) {
      if (mask.col(n).cast<int>().sum() == 0) mask(0, n) = 1;
    }
  }
  out.panel = ReturnsPanel(std::move(values), std::move(mask));
  return out;
}

SimulationSpec bundle_spec() {
  SimulationSpec s;
  s.assets = 6;
  s.factors = 2;
  s.horizon = 500;
  s.mode = ModelMode::factor;
  s.sigma2 = 0.05;
  s.missing_fraction = 0.02;
  return s;
}

}  // namespace msv
