#pragma once

// MCMC transition kernels.
//
// The latent-path and factor updates are auxiliary Langevin moves: an
// auxiliary U ~ N(x + (zeta/2) D(x), (zeta/2) I) is drawn, then a proposal
// from N(U, (zeta/2) I) multiplied by the Gaussian prior. Because the prior
// is folded into the proposal, the acceptance ratio only involves the
// likelihood and its gradients.

#include "msv/givens.hpp"
#include "msv/latent_prior.hpp"
#include "msv/likelihood.hpp"
#include "msv/panel.hpp"
#include "msv/random.hpp"

#include <Eigen/Dense>

#include <span>
#include <utility>
#include <vector>

namespace msv {

/// Robbins-Monro tuner on log(step): log step += n^{-exponent} (accept - target).
struct StepTuner {
  double step = 0.1;
  double target = 0.55;
  double exponent = 0.6;
  long updates = 0;

  void update(bool accepted);
};

/// Running acceptance counts.
struct AcceptanceWindow {
  long proposals = 0;
  long accepted = 0;

  void record(bool a) {
    ++proposals;
    accepted += a ? 1 : 0;
  }
  double rate() const {
    return proposals > 0 ? static_cast<double>(accepted) / static_cast<double>(proposals) : 0.0;
  }
  void reset() { proposals = accepted = 0; }
};

inline constexpr double kLangevinTarget = 0.55;
inline constexpr double kRandomWalkTarget = 0.25;

struct AuxLangevinState {
  StepTuner tuner;
  bool use_gradient = true;
  bool adapting = true;
  AcceptanceWindow window;

  double step_size() const { return tuner.step; }

  static AuxLangevinState langevin(double step, double target = kLangevinTarget);
  static AuxLangevinState random_walk(double step, double target = kRandomWalkTarget);
};

/// Records the decision and, while adapting, moves the step size.
AuxLangevinState adapt_step_size(AuxLangevinState state, bool accepted);

/// Likelihood value and gradient at the current latent state.
struct LikelihoodEval {
  double value = 0.0;
  PathMatrix gradient;
};

LikelihoodEval evaluate_likelihood(const LikelihoodInterface& lik, const LatentPaths& x,
                                   bool with_gradient);

/// One auxiliary Langevin (or auxiliary random-walk) update of the first
/// active_paths rows of x (all rows when negative). `current` must hold the
/// likelihood at x and is replaced on acceptance. Exactly one likelihood
/// evaluation is made, at the proposal. The prior density is never evaluated.
bool aux_langevin_step(LatentPaths& x, LikelihoodEval& current, const LikelihoodInterface& lik,
                       const PathParams& prior, const AuxLangevinState& state, Rng& rng,
                       int active_paths = -1);

/// Observed part of one return vector r_t under loadings B.
struct FactorObservation {
  const Eigen::MatrixXd& loadings;    // N x K
  std::span<const double> returns;    // length N, unobserved entries ignored
  std::span<const int> observed;      // observed column indices
  double sigma2 = 1.0;
};

/// Pre-drawn randomness for one factor update.
struct FactorNoise {
  Eigen::VectorXd aux;       // K standard normals for U
  Eigen::VectorXd proposal;  // K standard normals for y
  double log_uniform = 0.0;

  static FactorNoise draw(int dim, Rng& rng);
};

/// Auxiliary Langevin update of f_t with likelihood N(r_t | B f, sigma2 I)
/// and prior N(0, Sigma_t). The proposal covariance
/// ((2/zeta) I + Sigma^{-1})^{-1} = P ((2/zeta) I + Lambda^{-1})^{-1} P^T is
/// applied with Givens rotations only. O(NK + K^2).
bool factor_step_metropolis(Eigen::Ref<Eigen::VectorXd> f, const FactorObservation& obs,
                            const SpectralCov& cov, double zeta, const FactorNoise& noise);
bool factor_step_metropolis(Eigen::Ref<Eigen::VectorXd> f, const FactorObservation& obs,
                            const SpectralCov& cov, double zeta, Rng& rng);

/// Mean and covariance of p(f_t | rest) with precision
/// M = sigma^{-2} B^T B + Sigma^{-1}. Dense, O(K^3).
struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};
GaussianMoments factor_conditional(const FactorObservation& obs, const SpectralCov& cov);

/// Exact draw from p(f_t | rest) via dense Cholesky. Oracle / small-K fallback.
Eigen::VectorXd factor_step_gibbs(const FactorObservation& obs, const SpectralCov& cov,
                                  const Eigen::VectorXd& normals);
Eigen::VectorXd factor_step_gibbs(const FactorObservation& obs, const SpectralCov& cov,
                                  Rng& rng);

/// True when loading (n, k) is fixed by identification: b_nk = 0 for k > n
/// and b_nn = 1, for rows n < K.
inline bool loading_is_fixed(int n, int k) { return n < k || n == k; }

/// Row-wise conjugate Gaussian draw of the free loadings given factors
/// (K x T) and the observed cells. Fixed entries are written as 0 / 1.
Eigen::MatrixXd gibbs_loadings(const Eigen::MatrixXd& factors, const ReturnsPanel& panel,
                               double sigma2, double prior_variance, Rng& rng);

/// Inverse-gamma draw of sigma^2 with shape a + n/2, rate b + ss/2.
double gibbs_sigma2(double sum_sq_residuals, long n_obs, double prior_shape, double prior_rate,
                    Rng& rng);

/// Conditional precision and mean of the level x0 under a flat prior.
struct LevelConditional {
  double mean = 0.0;
  double precision = 0.0;
};
LevelConditional level_conditional(std::span<const double> path, const ArParams& p);

/// Gibbs draws of x0 then sigma_p^2 for one path. Updates p in place.
void gibbs_path_level_and_variance(std::span<const double> path, ArParams& p, double shape,
                                   double rate, Rng& rng);

/// Random-walk Metropolis on phi_tilde with AR(1) likelihood (stationary start)
/// and normal prior. Updates p in place and returns the decision.
bool mh_persistence(std::span<const double> path, ArParams& p, const PhiPrior& prior,
                    double proposal_sd, Rng& rng);
/// Log acceptance ratio of moving phi_tilde to `proposed`.
double persistence_log_ratio(std::span<const double> path, const ArParams& p,
                             const PhiPrior& prior, double proposed);

/// Normal-Gamma conjugate draw of (mu, lambda) given phi_tilde values.
struct NormalGammaPosterior {
  double mean = 0.0;
  double kappa = 0.0;
  double shape = 0.0;
  double rate = 0.0;
};
NormalGammaPosterior normal_gamma_posterior(std::span<const double> phi_tilde,
                                            const HyperPrior& constants);
std::pair<double, double> gibbs_hyper(std::span<const double> phi_tilde,
                                      const HyperPrior& constants, Rng& rng);

}  // namespace msv
