#pragma once

// Covariance forecasts, particle-filter predictive likelihoods and the
// portfolio / discrepancy utilities built on top of them.

#include "msv/latent_prior.hpp"
#include "msv/model.hpp"
#include "msv/panel.hpp"
#include "msv/random.hpp"

#include <Eigen/Dense>

#include <vector>

namespace msv {

/// One AR(1) step of every path: x0 + phi (x - x0) + sigma z.
Eigen::VectorXd propagate_state(const PathParams& params, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& normals);

struct PredictiveDraws {
  int steps_ahead = 1;
  std::vector<Eigen::VectorXd> states;               // x_{T+h} per posterior draw
  std::vector<Eigen::MatrixXd> factor_covariances;   // Sigma_{T+h}, K x K
  std::vector<Eigen::MatrixXd> return_covariances;   // B Sigma B^T + sigma^2 I, N x N
  Eigen::MatrixXd mean_factor_covariance;
  Eigen::MatrixXd mean_return_covariance;            // the forecast Sigma-hat
};

/// Simulates x_{T+1} (steps_ahead 1) or x_{T+2} (steps_ahead 2) from every
/// retained draw and averages the implied covariances.
PredictiveDraws predict_sigma(const PosteriorDraws& draws, int steps_ahead, Rng& rng);

/// Static parameters held fixed while filtering.
struct StaticParams {
  int dim = 0;
  PathParams params;
  Eigen::MatrixXd loadings;  // N x K
  double sigma2 = 0.0;
  bool zero_angles = false;  // angle paths pinned at 0
};

/// Posterior sample mean; persistence is averaged on the phi_tilde scale.
StaticParams posterior_mean_params(const PosteriorDraws& draws);

struct ParticleCloud {
  int dim = 0;
  Eigen::MatrixXd particles;    // n_paths x n, one particle per column
  std::vector<double> weights;  // normalised

  int size() const { return static_cast<int>(particles.cols()); }
  double effective_sample_size() const;
  /// Throws std::invalid_argument unless the weights are a probability vector.
  void validate() const;

  /// n particles drawn uniformly with replacement from the posterior x_T draws.
  static ParticleCloud from_draws(const PosteriorDraws& draws, int n, Rng& rng);
  /// Equally weighted cloud from explicit states.
  static ParticleCloud from_states(int dim, Eigen::MatrixXd particles);
};

/// log N(r_o | 0, (B Sigma(x) B^T + sigma^2 I)_oo) over the observed indices.
double observation_log_density(const StaticParams& theta, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& r, const std::vector<int>& observed);

enum class FilterVariant { bootstrap, auxiliary };

struct FilterOptions {
  int n_particles = 10000;
  FilterVariant variant = FilterVariant::auxiliary;
  double resample_fraction = 0.5;  // resample when ESS < fraction * n
};

struct PredictiveLogLik {
  std::vector<double> per_step;
  std::vector<double> ess;  // effective sample size after each update
  double cumulative = 0.0;
};

/// One-step-ahead predictive log-likelihoods of each row of `future`.
/// The cloud is consumed. Throws NumericalError("forecast", ...) on weight
/// collapse.
PredictiveLogLik predictive_loglik(const ReturnsPanel& future, const StaticParams& theta,
                                   ParticleCloud cloud, const FilterOptions& options, Rng& rng);

inline double log_bayes_factor(double cumulative_a, double cumulative_b) {
  return cumulative_a - cumulative_b;
}

struct Discrepancy {
  double mad = 0.0;
  double rmse = 0.0;
};

/// Mean absolute deviation and root mean square error over all N^2 cells.
/// Throws std::invalid_argument on a shape mismatch.
Discrepancy discrepancies(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& proxy);

/// Sigma^{-1} 1 / (1^T Sigma^{-1} 1), adjusted in the last bits so that the
/// left-to-right sum of the weights is exactly 1. Throws
/// std::invalid_argument unless the input is symmetric positive definite.
Eigen::VectorXd min_variance_weights(const Eigen::MatrixXd& sigma);

/// Systematic resampling: n ancestor indices from normalised weights.
std::vector<int> systematic_resample(const std::vector<double>& weights, int n, double u);

}  // namespace msv
