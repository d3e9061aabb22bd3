#include "msv/model.hpp"

#include "msv/errors.hpp"
#include "msv/likelihood.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

namespace msv {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454836;

class BlockTimer {
 public:
  BlockTimer(std::map<std::string, double>& sink, const char* name)
      : sink_(sink), name_(name), start_(std::chrono::steady_clock::now()) {}
  ~BlockTimer() {
    sink_[name_] +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::map<std::string, double>& sink_;
  const char* name_;
  std::chrono::steady_clock::time_point start_;
};
}  // namespace

// ---------------------------------------------------------------- panel

ReturnsPanel::ReturnsPanel(Values v, Mask m, std::vector<std::string> n)
    : values(std::move(v)), observed(std::move(m)), names(std::move(n)) {}

ReturnsPanel ReturnsPanel::complete(Values v) {
  Mask m = Mask::Ones(v.rows(), v.cols());
  return ReturnsPanel(std::move(v), std::move(m));
}

long ReturnsPanel::observed_count() const {
  long n = 0;
  for (Eigen::Index t = 0; t < observed.rows(); ++t) {
    for (Eigen::Index j = 0; j < observed.cols(); ++j) n += observed(t, j) ? 1 : 0;
  }
  return n;
}

bool ReturnsPanel::has_missing() const {
  return observed_count() != static_cast<long>(observed.size());
}

std::vector<int> ReturnsPanel::observed_indices(int t) const {
  std::vector<int> out;
  for (int n = 0; n < assets(); ++n) {
    if (is_observed(t, n)) out.push_back(n);
  }
  return out;
}

void ReturnsPanel::validate() const {
  if (observed.rows() != values.rows() || observed.cols() != values.cols()) {
    throw DataError("panel: mask shape does not match values");
  }
  if (!names.empty() && static_cast<int>(names.size()) != assets()) {
    throw DataError("panel: asset name count does not match column count");
  }
  for (int n = 0; n < assets(); ++n) {
    bool any = false;
    for (int t = 0; t < horizon(); ++t) {
      if (!is_observed(t, n)) continue;
      any = true;
      if (!std::isfinite(values(t, n))) {
        throw DataError("panel: non-finite value at row " + std::to_string(t + 1) +
                        ", column " + std::to_string(n + 1));
      }
    }
    if (!any) throw DataError("panel: column " + std::to_string(n + 1) + " has no observations");
  }
}

// ---------------------------------------------------------------- config

double ModelConfig::effective_sigma2_shape() const {
  if (sigma2_shape > 0.0) return sigma2_shape;
  return mode == ModelMode::basic ? 10.0 : 2.5;
}

double ModelConfig::effective_sigma2_rate_scale() const {
  if (sigma2_rate_scale > 0.0) return sigma2_rate_scale;
  return mode == ModelMode::basic ? 0.009 : 0.5;
}

int ModelConfig::active_paths() const { return zero_angles ? factors : path_count(factors); }

void ModelConfig::validate(int assets) const {
  if (factors < 1) throw ConfigError("factors must be >= 1");
  if (factors > assets) throw ConfigError("factors must not exceed the number of assets");
  if (mode == ModelMode::basic && factors != assets) {
    throw ConfigError("basic mode requires factors == number of assets");
  }
  if (burn_in < 1) throw ConfigError("burn_in must be >= 1");
  if (sampling < 0) throw ConfigError("sampling must be >= 0");
  if (thinning < 1) throw ConfigError("thinning must be >= 1");
  if (fix_sigma2_zero && mode != ModelMode::basic) {
    throw ConfigError("fix_sigma2_zero is only available in basic mode");
  }
  auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!in_unit(langevin_target) || !in_unit(random_walk_target) || !in_unit(persistence_target)) {
    throw ConfigError("acceptance targets must lie in (0, 1)");
  }
  if (!(adapt_exponent > 0.5 && adapt_exponent <= 1.0)) {
    throw ConfigError("adapt_exponent must lie in (0.5, 1]");
  }
  if (!(x_initial_step > 0.0) || !(factor_initial_step > 0.0) || !(persistence_initial_sd > 0.0)) {
    throw ConfigError("initial step sizes must be positive");
  }
  if (!(loadings_prior_variance > 0.0)) throw ConfigError("loadings_prior_variance must be positive");
  const HyperPrior& h = hyper_prior;
  if (!(h.k0 > 0.0 && h.alpha0 > 0.0 && h.beta0 > 0.0 && h.variance_shape > 0.0 &&
        h.variance_rate > 0.0 && h.independent_variance > 0.0 && std::isfinite(h.mu0))) {
    throw ConfigError("hyperprior constants must be finite and positive");
  }
  if (tail_window < 1) throw ConfigError("tail_window must be >= 1");
}

// ---------------------------------------------------------------- likelihood

double log_factor_likelihood(const ReturnsPanel& panel, const Eigen::MatrixXd& loadings,
                             double sigma2, const Eigen::MatrixXd& factors) {
  double total = 0.0;
  const double log_norm = -0.5 * (kLogTwoPi + std::log(sigma2));
  for (int t = 0; t < panel.horizon(); ++t) {
    for (int n = 0; n < panel.assets(); ++n) {
      if (!panel.is_observed(t, n)) continue;
      const double e = panel.values(t, n) - loadings.row(n).dot(factors.col(t));
      total += log_norm - 0.5 * e * e / sigma2;
    }
  }
  return total;
}

// ---------------------------------------------------------------- sampler

MsvSampler::MsvSampler(const ReturnsPanel& panel, ModelConfig config)
    : panel_(panel), config_(std::move(config)) {
  panel_.validate();
  config_.validate(panel_.assets());
  if (config_.fix_sigma2_zero && panel_.has_missing()) {
    throw ConfigError("fix_sigma2_zero requires a panel without missing cells");
  }
  observed_.resize(static_cast<std::size_t>(panel_.horizon()));
  for (int t = 0; t < panel_.horizon(); ++t) observed_[t] = panel_.observed_indices(t);
  initialise();
}

void MsvSampler::initialise() {
  const int dim = config_.factors;
  const int horizon = panel_.horizon();
  const int assets = panel_.assets();

  double ss = 0.0;
  for (int t = 0; t < horizon; ++t) {
    for (int n : observed_[t]) ss += panel_.values(t, n) * panel_.values(t, n);
  }
  data_scale_ = std::max(ss / static_cast<double>(panel_.observed_count()), 1e-300);
  sigma2_rate_ = config_.effective_sigma2_rate_scale() * data_scale_;

  ChainState& s = state_;
  // factors start at the first K return columns (missing cells at zero)
  s.factors = Eigen::MatrixXd::Zero(dim, horizon);
  for (int t = 0; t < horizon; ++t) {
    for (int k = 0; k < dim; ++k) {
      if (panel_.is_observed(t, k)) s.factors(k, t) = panel_.values(t, k);
    }
  }
  s.loadings = Eigen::MatrixXd::Zero(assets, dim);
  s.loadings.topRows(dim).setIdentity();
  if (config_.mode == ModelMode::factor && assets > dim) {
    // least-squares loadings for the unconstrained rows
    Eigen::MatrixXd gram = 1e-8 * Eigen::MatrixXd::Identity(dim, dim);
    for (int n = dim; n < assets; ++n) {
      Eigen::MatrixXd g = gram;
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
      for (int t = 0; t < horizon; ++t) {
        if (!panel_.is_observed(t, n)) continue;
        g.noalias() += s.factors.col(t) * s.factors.col(t).transpose();
        rhs.noalias() += panel_.values(t, n) * s.factors.col(t);
      }
      s.loadings.row(n) = g.ldlt().solve(rhs).transpose();
    }
  }

  const double shape = config_.effective_sigma2_shape();
  if (config_.fix_sigma2_zero) {
    s.sigma2 = 0.0;
  } else if (config_.mode == ModelMode::basic) {
    s.sigma2 = sigma2_rate_ / (shape - 1.0 > 0.0 ? shape - 1.0 : 1.0);
  } else {
    double res = 0.0;
    for (int t = 0; t < horizon; ++t) {
      for (int n : observed_[t]) {
        const double e = panel_.values(t, n) - s.loadings.row(n).dot(s.factors.col(t));
        res += e * e;
      }
    }
    s.sigma2 = std::max(res / static_cast<double>(panel_.observed_count()), 0.1 * data_scale_);
  }

  s.x = LatentPaths(dim, horizon);
  s.params.assign(static_cast<std::size_t>(path_count(dim)), ArParams{});
  const HyperPrior& hp = config_.hyper_prior;
  for (int i = 0; i < dim; ++i) {
    double v = 0.0;
    int cnt = 0;
    for (int t = 0; t < horizon; ++t) {
      if (panel_.is_observed(t, i) || config_.mode == ModelMode::factor) {
        v += s.factors(i, t) * s.factors(i, t);
        ++cnt;
      }
    }
    const double h0 = std::log(std::max(v / std::max(cnt, 1), 1e-12 * data_scale_));
    s.x.values.row(i).setConstant(h0);
    s.params[i].level = h0;
  }
  for (auto& p : s.params) {
    p.phi_tilde = hp.mode == PriorMode::exchangeable ? hp.mu0 : 3.0;
    p.sigma = 0.1;
  }
  s.hyper = HyperParams{hp.mu0, hp.alpha0 / hp.beta0, hp.mu0, hp.alpha0 / hp.beta0};

  s.x_sampler = config_.x_use_gradient
                    ? AuxLangevinState::langevin(config_.x_initial_step, config_.langevin_target)
                    : AuxLangevinState::random_walk(config_.x_initial_step,
                                                    config_.random_walk_target);
  s.x_sampler.tuner.exponent = config_.adapt_exponent;

  StepTuner ft;
  ft.step = config_.mode == ModelMode::basic ? std::min(config_.factor_initial_step, s.sigma2)
                                             : config_.factor_initial_step;
  ft.target = config_.langevin_target;
  ft.exponent = config_.adapt_exponent;
  s.factor_tuners.assign(static_cast<std::size_t>(horizon), ft);

  StepTuner pt;
  pt.step = config_.persistence_initial_sd;
  pt.target = config_.persistence_target;
  pt.exponent = config_.adapt_exponent;
  s.persistence_tuners.assign(s.params.size(), pt);
}

void MsvSampler::freeze_adaptation() { state_.x_sampler.adapting = false; }

void MsvSampler::check_finite(const char* block) const {
  const ChainState& s = state_;
  if (!s.x.values.allFinite()) throw NumericalError(block, "non-finite latent path value");
  if (!s.factors.allFinite()) throw NumericalError(block, "non-finite factor value");
  if (!s.loadings.allFinite()) throw NumericalError(block, "non-finite loading");
  if (!std::isfinite(s.sigma2)) throw NumericalError(block, "non-finite sigma^2");
  for (const ArParams& p : s.params) {
    if (!std::isfinite(p.phi_tilde) || !std::isfinite(p.level) || !std::isfinite(p.sigma) ||
        !(p.sigma > 0.0)) {
      throw NumericalError(block, "non-finite path parameter");
    }
  }
}

void MsvSampler::update_loadings_and_variance(Rng& rng) {
  ChainState& s = state_;
  if (config_.mode == ModelMode::factor) {
    BlockTimer timer(block_seconds_, "loadings");
    s.loadings = gibbs_loadings(s.factors, panel_, s.sigma2, config_.loadings_prior_variance, rng);
  }
  if (config_.fix_sigma2_zero) return;
  BlockTimer timer(block_seconds_, "sigma2");
  double ss = 0.0;
  for (int t = 0; t < panel_.horizon(); ++t) {
    for (int n : observed_[t]) {
      const double e = panel_.values(t, n) - s.loadings.row(n).dot(s.factors.col(t));
      ss += e * e;
    }
  }
  s.sigma2 = gibbs_sigma2(ss, panel_.observed_count(), config_.effective_sigma2_shape(),
                          sigma2_rate_, rng);
}

void MsvSampler::update_factors(Rng& rng) {
  ChainState& s = state_;
  const int dim = config_.factors;
  const int horizon = panel_.horizon();
  if (config_.fix_sigma2_zero) {
    for (int t = 0; t < horizon; ++t) {
      for (int k = 0; k < dim; ++k) s.factors(k, t) = panel_.values(t, k);
    }
    return;
  }
  BlockTimer timer(block_seconds_, "factors");

  // all randomness is drawn up front so the parallel loop is deterministic
  const bool gibbs = config_.factor_sampler == FactorSampler::gibbs;
  std::vector<FactorNoise> noise(static_cast<std::size_t>(horizon));
  for (auto& n : noise) n = FactorNoise::draw(dim, rng);

  std::vector<unsigned char> accepted(static_cast<std::size_t>(horizon), 0);
  const bool adapting = s.x_sampler.adapting;
#pragma omp parallel for schedule(static)
  for (int t = 0; t < horizon; ++t) {
    const SpectralCov cov = s.x.slice(t);
    const FactorObservation obs{
        s.loadings,
        {panel_.values.row(t).data(), static_cast<std::size_t>(panel_.assets())},
        observed_[t],
        s.sigma2};
    if (gibbs) {
      s.factors.col(t) = factor_step_gibbs(obs, cov, noise[t].proposal);
      accepted[t] = 1;
    } else {
      accepted[t] = factor_step_metropolis(s.factors.col(t), obs, cov,
                                           s.factor_tuners[t].step, noise[t]) ? 1 : 0;
      if (adapting) s.factor_tuners[t].update(accepted[t] != 0);
    }
  }
  for (unsigned char a : accepted) s.factor_window.record(a != 0);
}

void MsvSampler::update_latent_paths(Rng& rng) {
  BlockTimer timer(block_seconds_, "latent_paths");
  ChainState& s = state_;
  const FactorLikelihood lik(s.factors);
  // factors changed since the last X update, so the cached value is stale
  LikelihoodEval current = evaluate_likelihood(lik, s.x, s.x_sampler.use_gradient);
  const bool acc = aux_langevin_step(s.x, current, lik, s.params, s.x_sampler, rng,
                                     config_.active_paths());
  s.x_sampler = adapt_step_size(std::move(s.x_sampler), acc);
}

void MsvSampler::update_path_parameters(Rng& rng) {
  ChainState& s = state_;
  const int dim = config_.factors;
  const int active = config_.active_paths();
  const auto horizon = static_cast<std::size_t>(panel_.horizon());
  const HyperPrior& hp = config_.hyper_prior;
  {
    BlockTimer timer(block_seconds_, "path_parameters");
    for (int p = 0; p < active; ++p) {
      const std::span<const double> path(s.x.values.row(p).data(), horizon);
      gibbs_path_level_and_variance(path, s.params[p], hp.variance_shape, hp.variance_rate, rng);
      const PhiPrior prior = phi_prior_for_path(p, dim, s.hyper, hp);
      const bool acc =
          mh_persistence(path, s.params[p], prior, s.persistence_tuners[p].step, rng);
      s.persistence_window.record(acc);
      if (s.x_sampler.adapting) s.persistence_tuners[p].update(acc);
    }
  }
  if (hp.mode != PriorMode::exchangeable) return;
  BlockTimer timer(block_seconds_, "hyper");
  std::vector<double> phi_h;
  std::vector<double> phi_d;
  for (int p = 0; p < active; ++p) (p < dim ? phi_h : phi_d).push_back(s.params[p].phi_tilde);
  std::tie(s.hyper.mu_h, s.hyper.lambda_h) = gibbs_hyper(phi_h, hp, rng);
  if (!phi_d.empty()) std::tie(s.hyper.mu_delta, s.hyper.lambda_delta) = gibbs_hyper(phi_d, hp, rng);
}

void MsvSampler::sweep(Rng& rng) {
  update_loadings_and_variance(rng);
  check_finite("loadings/sigma2");
  update_factors(rng);
  check_finite("factors");
  update_latent_paths(rng);
  check_finite("latent_paths");
  update_path_parameters(rng);
  check_finite("path_parameters");
}

double MsvSampler::log_joint_likelihood() const {
  const ChainState& s = state_;
  const FactorLikelihood lik(s.factors);
  double out = lik.evaluate(s.x, nullptr);
  if (!config_.fix_sigma2_zero) out += log_factor_likelihood(panel_, s.loadings, s.sigma2, s.factors);
  return out;
}

// ---------------------------------------------------------------- run

Eigen::MatrixXd correlation_from_covariance(const Eigen::MatrixXd& cov) {
  const Eigen::VectorXd inv_sd = cov.diagonal().array().rsqrt().matrix();
  Eigen::MatrixXd corr = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
  corr.diagonal().setOnes();
  return corr;
}

namespace {

double mean_factor_step(const ChainState& s) {
  if (s.factor_tuners.empty()) return 0.0;
  double total = 0.0;
  for (const StepTuner& t : s.factor_tuners) total += t.step;
  return total / static_cast<double>(s.factor_tuners.size());
}

void reset_windows(ChainState& s) {
  s.x_sampler.window.reset();
  s.factor_window.reset();
  s.persistence_window.reset();
}

}  // namespace

PosteriorDraws mcmc_run(const ReturnsPanel& panel, const ModelConfig& config) {
  MsvSampler sampler(panel, config);
  Rng rng(config.seed);

  PosteriorDraws out;
  out.factors = config.factors;
  out.assets = panel.assets();
  out.horizon = panel.horizon();
  out.mode = config.mode;
  out.zero_angles = config.zero_angles;
  if (config.sampling == 0) return out;

  ChainState& s = sampler.state();
  const int tail_start = std::max(0, config.burn_in - config.tail_window);
  for (int it = 0; it < config.burn_in; ++it) {
    if (it == tail_start) reset_windows(s);
    sampler.sweep(rng);
  }
  out.acceptance.x_burn_in_tail = s.x_sampler.window.rate();
  out.acceptance.factor_burn_in_tail = s.factor_window.rate();
  out.acceptance.persistence_burn_in_tail = s.persistence_window.rate();
  sampler.freeze_adaptation();
  reset_windows(s);

  const int horizon = panel.horizon();
  const int dim = config.factors;
  if (config.track_sigma_path) {
    out.sigma_sum.assign(static_cast<std::size_t>(horizon), Eigen::MatrixXd::Zero(dim, dim));
    out.correlation_sum.assign(static_cast<std::size_t>(horizon), Eigen::MatrixXd::Zero(dim, dim));
  }

  auto summaries_start = std::chrono::steady_clock::now();
  double summary_seconds = 0.0;
  for (int it = 0; it < config.sampling; ++it) {
    sampler.sweep(rng);
    if ((it + 1) % config.thinning != 0) continue;
    summaries_start = std::chrono::steady_clock::now();
    Draw d;
    d.params = s.params;
    d.hyper = s.hyper;
    d.loadings = s.loadings;
    d.sigma2 = s.sigma2;
    d.last_state = s.x.values.col(horizon - 1);
    d.last_factor = s.factors.col(horizon - 1);
    d.log_likelihood = sampler.log_joint_likelihood();
    if (config.store_full_x) d.full_x = s.x.values;
    out.draws.push_back(std::move(d));
    if (config.track_sigma_path) {
#pragma omp parallel for schedule(static)
      for (int t = 0; t < horizon; ++t) {
        const Eigen::MatrixXd sigma = reconstruct(s.x.slice(t));
        out.sigma_sum[t] += sigma;
        out.correlation_sum[t] += correlation_from_covariance(sigma);
      }
    }
    summary_seconds +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - summaries_start).count();
  }
  out.acceptance.x_sampling = s.x_sampler.window.rate();
  out.acceptance.factor_sampling = s.factor_window.rate();
  out.acceptance.persistence_sampling = s.persistence_window.rate();
  out.acceptance.x_final_step = s.x_sampler.step_size();
  out.acceptance.factor_mean_final_step = mean_factor_step(s);
  out.block_seconds = sampler.block_seconds();
  out.block_seconds["summaries"] = summary_seconds;
  return out;
}

VolatilitySummary volatility_path_summary(const PosteriorDraws& draws, int t) {
  if (draws.empty()) throw std::invalid_argument("volatility_path_summary: no draws");
  if (t < 0 || t >= draws.horizon) throw std::invalid_argument("volatility_path_summary: t out of range");
  const auto n = static_cast<double>(draws.draws.size());
  VolatilitySummary out;
  if (!draws.sigma_sum.empty()) {
    out.mean_covariance = draws.sigma_sum[t] / n;
    out.mean_correlation = draws.correlation_sum[t] / n;
  } else if (draws.draws.front().full_x) {
    const int dim = draws.factors;
    out.mean_covariance = Eigen::MatrixXd::Zero(dim, dim);
    out.mean_correlation = Eigen::MatrixXd::Zero(dim, dim);
    for (const Draw& d : draws.draws) {
      const LatentPaths x(dim, *d.full_x);
      const Eigen::MatrixXd sigma = reconstruct(x.slice(t));
      out.mean_covariance += sigma / n;
      out.mean_correlation += correlation_from_covariance(sigma) / n;
    }
  } else {
    throw std::invalid_argument(
        "volatility_path_summary: run kept neither Sigma_t sums nor full latent draws");
  }
  out.correlation_of_mean = correlation_from_covariance(out.mean_covariance);
  out.volatilities = out.mean_covariance.diagonal().array().sqrt().matrix();
  return out;
}

}  // namespace msv
