#pragma once

// Full factor MSV model r_t = B f_t + sigma eps_t, f_t ~ N(0, Sigma_t(x_t)),
// and its Metropolis-within-Gibbs driver. The basic model is the special
// case N = K, B = I with a small free sigma^2 (or sigma^2 = 0 when the panel
// has no missing cells and fix_sigma2_zero is set).

#include "msv/latent_prior.hpp"
#include "msv/panel.hpp"
#include "msv/random.hpp"
#include "msv/samplers.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace msv {

enum class ModelMode { basic, factor };
enum class FactorSampler { metropolis, gibbs };

struct ModelConfig {
  int factors = 1;
  ModelMode mode = ModelMode::factor;
  HyperPrior hyper_prior;
  bool zero_angles = false;  // independent-factor model: all angles pinned at 0

  int burn_in = 10000;
  int sampling = 10000;
  int thinning = 10;
  std::uint64_t seed = 1;

  bool x_use_gradient = true;
  double langevin_target = kLangevinTarget;
  double random_walk_target = kRandomWalkTarget;
  double persistence_target = 0.25;
  double adapt_exponent = 0.6;
  double x_initial_step = 0.01;
  double factor_initial_step = 0.1;
  double persistence_initial_sd = 0.5;
  FactorSampler factor_sampler = FactorSampler::metropolis;

  double loadings_prior_variance = 10.0;
  // sigma^2 ~ IG(shape, rate_scale * s2), s2 = mean square of observed returns.
  // Negative values select the mode default (factor: 2.5 / 0.5, basic: 10 / 0.009).
  double sigma2_shape = -1.0;
  double sigma2_rate_scale = -1.0;
  bool fix_sigma2_zero = false;

  bool store_full_x = false;
  bool track_sigma_path = true;
  int tail_window = 2000;  // burn-in iterations summarised as the post-adaptation rate

  double effective_sigma2_shape() const;
  double effective_sigma2_rate_scale() const;
  int active_paths() const;

  /// Throws ConfigError.
  void validate(int assets) const;
};

struct AcceptanceSummary {
  double x_burn_in_tail = 0.0;
  double x_sampling = 0.0;
  double factor_burn_in_tail = 0.0;
  double factor_sampling = 0.0;
  double persistence_burn_in_tail = 0.0;
  double persistence_sampling = 0.0;
  double x_final_step = 0.0;
  double factor_mean_final_step = 0.0;
};

/// One retained posterior draw.
struct Draw {
  PathParams params;
  HyperParams hyper;
  Eigen::MatrixXd loadings;
  double sigma2 = 0.0;
  Eigen::VectorXd last_state;   // x_T
  Eigen::VectorXd last_factor;  // f_T
  double log_likelihood = 0.0;  // log p(R | B, F, sigma^2) + log p(F | X)
  std::optional<PathMatrix> full_x;
};

struct PosteriorDraws {
  int factors = 0;
  int assets = 0;
  int horizon = 0;
  ModelMode mode = ModelMode::factor;
  bool zero_angles = false;
  std::vector<Draw> draws;
  AcceptanceSummary acceptance;
  std::map<std::string, double> block_seconds;

  // Sums over retained draws of Sigma_t and of its correlation matrix.
  std::vector<Eigen::MatrixXd> sigma_sum;
  std::vector<Eigen::MatrixXd> correlation_sum;

  bool empty() const { return draws.empty(); }
};

/// Sum over observed cells of log N(r_tn | (B f_t)_n, sigma^2).
double log_factor_likelihood(const ReturnsPanel& panel, const Eigen::MatrixXd& loadings,
                             double sigma2, const Eigen::MatrixXd& factors);

/// Complete sampler state; exposed so tests can drive single sweeps.
struct ChainState {
  LatentPaths x;
  PathParams params;
  HyperParams hyper;
  Eigen::MatrixXd loadings;  // N x K
  Eigen::MatrixXd factors;   // K x T
  double sigma2 = 1.0;

  AuxLangevinState x_sampler;
  std::vector<StepTuner> factor_tuners;
  std::vector<StepTuner> persistence_tuners;
  AcceptanceWindow factor_window;
  AcceptanceWindow persistence_window;
};

class MsvSampler {
 public:
  MsvSampler(const ReturnsPanel& panel, ModelConfig config);

  const ChainState& state() const { return state_; }
  ChainState& state() { return state_; }
  const ModelConfig& config() const { return config_; }

  /// One full Metropolis-within-Gibbs sweep.
  void sweep(Rng& rng);
  /// Stop all step-size adaptation.
  void freeze_adaptation();

  void update_loadings_and_variance(Rng& rng);
  void update_factors(Rng& rng);
  void update_latent_paths(Rng& rng);
  void update_path_parameters(Rng& rng);

  double log_joint_likelihood() const;
  const std::map<std::string, double>& block_seconds() const { return block_seconds_; }

 private:
  void initialise();
  void check_finite(const char* block) const;

  const ReturnsPanel& panel_;
  ModelConfig config_;
  ChainState state_;
  std::vector<std::vector<int>> observed_;
  double data_scale_ = 1.0;
  double sigma2_rate_ = 1.0;
  std::map<std::string, double> block_seconds_;
};

/// Full run: burn-in with adaptation, then frozen sampling with thinning.
PosteriorDraws mcmc_run(const ReturnsPanel& panel, const ModelConfig& config);

struct VolatilitySummary {
  Eigen::MatrixXd mean_covariance;
  Eigen::MatrixXd correlation_of_mean;   // correlation of the averaged Sigma_t
  Eigen::MatrixXd mean_correlation;      // average of per-draw correlations
  Eigen::VectorXd volatilities;          // sqrt(diag(mean_covariance))
};

VolatilitySummary volatility_path_summary(const PosteriorDraws& draws, int t);

Eigen::MatrixXd correlation_from_covariance(const Eigen::MatrixXd& cov);

}  // namespace msv
