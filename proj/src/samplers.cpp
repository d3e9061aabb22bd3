#include "msv/samplers.hpp"

#include "msv/errors.hpp"
#include "msv/instrumentation.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace msv {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454836;

double normal_log_density(double x, double mean, double precision) {
  const double d = x - mean;
  return 0.5 * (std::log(precision) - kLogTwoPi) - 0.5 * precision * d * d;
}
}  // namespace

void StepTuner::update(bool accepted) {
  ++updates;
  const double gain = std::pow(static_cast<double>(updates), -exponent);
  step *= std::exp(gain * ((accepted ? 1.0 : 0.0) - target));
}

AuxLangevinState AuxLangevinState::langevin(double step, double target) {
  AuxLangevinState s;
  s.tuner.step = step;
  s.tuner.target = target;
  s.use_gradient = true;
  return s;
}

AuxLangevinState AuxLangevinState::random_walk(double step, double target) {
  AuxLangevinState s;
  s.tuner.step = step;
  s.tuner.target = target;
  s.use_gradient = false;
  return s;
}

AuxLangevinState adapt_step_size(AuxLangevinState state, bool accepted) {
  state.window.record(accepted);
  if (state.adapting) state.tuner.update(accepted);
  return state;
}

LikelihoodEval evaluate_likelihood(const LikelihoodInterface& lik, const LatentPaths& x,
                                   bool with_gradient) {
  LikelihoodEval out;
  if (with_gradient) {
    out.value = lik.evaluate(x, &out.gradient);
  } else {
    out.value = lik.evaluate(x, nullptr);
    out.gradient = PathMatrix::Zero(x.n_paths(), x.horizon());
  }
  return out;
}

bool aux_langevin_step(LatentPaths& x, LikelihoodEval& current, const LikelihoodInterface& lik,
                       const PathParams& prior, const AuxLangevinState& state, Rng& rng,
                       int active_paths) {
  const int rows = active_paths < 0 ? x.n_paths() : active_paths;
  if (rows > x.n_paths() || static_cast<int>(prior.size()) < rows) {
    throw std::invalid_argument("aux_langevin_step: active path count out of range");
  }
  if (rows == 0) return true;
  const int horizon = x.horizon();
  const double zeta = state.step_size();
  const double half = 0.5 * zeta;
  const double noise_sd = std::sqrt(half);

  // (i) auxiliary variable
  PathMatrix u(rows, horizon);
  for (int p = 0; p < rows; ++p) {
    for (int t = 0; t < horizon; ++t) {
      const double drift = state.use_gradient ? half * current.gradient(p, t) : 0.0;
      u(p, t) = x.values(p, t) + drift + noise_sd * standard_normal(rng);
    }
  }

  // (ii) prior-invariant proposal
  const PathParams active_prior(prior.begin(), prior.begin() + rows);
  LatentPaths proposal = x;
  proposal.values.topRows(rows) = solve_and_sample(active_prior, zeta, u, rng);

  LikelihoodEval candidate;
  if (state.use_gradient) {
    candidate.value = lik.evaluate(proposal, &candidate.gradient);
  } else {
    candidate.value = lik.evaluate(proposal, nullptr);
    candidate.gradient = PathMatrix::Zero(x.n_paths(), horizon);
  }
  const double log_u = log_uniform(rng);
  if (!std::isfinite(candidate.value)) return false;

  double log_ratio = candidate.value - current.value;
  if (state.use_gradient) {
    double cross_current = 0.0;
    double cross_proposal = 0.0;
    double norm_current = 0.0;
    double norm_proposal = 0.0;
    for (int p = 0; p < rows; ++p) {
      for (int t = 0; t < horizon; ++t) {
        const double dt = current.gradient(p, t);
        const double dy = candidate.gradient(p, t);
        cross_current += (u(p, t) - x.values(p, t)) * dt;
        cross_proposal += (u(p, t) - proposal.values(p, t)) * dy;
        norm_current += dt * dt;
        norm_proposal += dy * dy;
      }
    }
    log_ratio += -cross_current + cross_proposal - 0.25 * zeta * (norm_proposal - norm_current);
  }
  if (!std::isfinite(log_ratio) || !(log_u < log_ratio)) return false;

  x = std::move(proposal);
  current = std::move(candidate);
  return true;
}

FactorNoise FactorNoise::draw(int dim, Rng& rng) {
  FactorNoise n;
  n.aux.resize(dim);
  n.proposal.resize(dim);
  for (int i = 0; i < dim; ++i) n.aux[i] = standard_normal(rng);
  for (int i = 0; i < dim; ++i) n.proposal[i] = standard_normal(rng);
  n.log_uniform = msv::log_uniform(rng);
  return n;
}

namespace {

// -0.5 sigma^{-2} ||r_o - B_o f||^2 and its gradient sigma^{-2} B_o^T (r_o - B_o f).
double factor_loglik(const FactorObservation& obs, const Eigen::VectorXd& f,
                     Eigen::VectorXd& grad) {
  const double inv_s2 = 1.0 / obs.sigma2;
  grad.setZero(f.size());
  double ss = 0.0;
  for (int n : obs.observed) {
    const double e = obs.returns[n] - obs.loadings.row(n).dot(f);
    ss += e * e;
    grad.noalias() += (e * inv_s2) * obs.loadings.row(n).transpose();
  }
  return -0.5 * inv_s2 * ss;
}

}  // namespace

bool factor_step_metropolis(Eigen::Ref<Eigen::VectorXd> f, const FactorObservation& obs,
                            const SpectralCov& cov, double zeta, const FactorNoise& noise) {
  const int dim = cov.dim();
  const double half = 0.5 * zeta;
  const Eigen::VectorXd current = f;

  Eigen::VectorXd grad_current;
  const double ll_current = factor_loglik(obs, current, grad_current);

  const Eigen::VectorXd u = current + half * grad_current + std::sqrt(half) * noise.aux;

  // y ~ N(C (2/zeta) u, C), C = P diag(1 / (2/zeta + e^{-h})) P^T
  Eigen::VectorXd y = (2.0 / zeta) * u;
  const std::span<const double> angles(cov.angles.data(),
                                        static_cast<std::size_t>(cov.angles.size()));
  const std::span<double> ys(y.data(), static_cast<std::size_t>(dim));
  rotate_transpose(angles, ys);
  for (int i = 0; i < dim; ++i) {
    const double a = 1.0 / (2.0 / zeta + std::exp(-cov.log_eigenvalues[i]));
    y[i] = a * y[i] + std::sqrt(a) * noise.proposal[i];
  }
  rotate(angles, ys);

  Eigen::VectorXd grad_proposal;
  const double ll_proposal = factor_loglik(obs, y, grad_proposal);
  if (!std::isfinite(ll_proposal)) return false;

  const double log_ratio = ll_proposal - ll_current - (u - current).dot(grad_current) +
                           (u - y).dot(grad_proposal) -
                           0.25 * zeta * (grad_proposal.squaredNorm() - grad_current.squaredNorm());
  if (!std::isfinite(log_ratio) || !(noise.log_uniform < log_ratio)) return false;
  f = y;
  return true;
}

bool factor_step_metropolis(Eigen::Ref<Eigen::VectorXd> f, const FactorObservation& obs,
                            const SpectralCov& cov, double zeta, Rng& rng) {
  return factor_step_metropolis(f, obs, cov, zeta, FactorNoise::draw(cov.dim(), rng));
}

namespace {

struct FactorPrecision {
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::VectorXd linear;  // sigma^{-2} B_o^T r_o
};

FactorPrecision factor_precision(const FactorObservation& obs, const SpectralCov& cov) {
  const int dim = cov.dim();
  const Eigen::MatrixXd p = eigenvectors(cov);
  const Eigen::VectorXd inv_lambda = (-cov.log_eigenvalues.array()).exp().matrix();
  Eigen::MatrixXd precision = p * inv_lambda.asDiagonal() * p.transpose();
  Eigen::VectorXd linear = Eigen::VectorXd::Zero(dim);
  const double inv_s2 = 1.0 / obs.sigma2;
  for (int n : obs.observed) {
    const auto row = obs.loadings.row(n);
    precision.noalias() += inv_s2 * row.transpose() * row;
    linear.noalias() += (inv_s2 * obs.returns[n]) * row.transpose();
  }
  instrumentation::count_dense_factorization();
  FactorPrecision out{Eigen::LLT<Eigen::MatrixXd>(precision), linear};
  if (out.llt.info() != Eigen::Success) {
    throw NumericalError("factor_step_gibbs", "conditional precision is not positive definite");
  }
  return out;
}

}  // namespace

GaussianMoments factor_conditional(const FactorObservation& obs, const SpectralCov& cov) {
  const FactorPrecision fp = factor_precision(obs, cov);
  GaussianMoments m;
  m.mean = fp.llt.solve(fp.linear);
  m.covariance = fp.llt.solve(Eigen::MatrixXd::Identity(cov.dim(), cov.dim()));
  return m;
}

Eigen::VectorXd factor_step_gibbs(const FactorObservation& obs, const SpectralCov& cov,
                                  const Eigen::VectorXd& normals) {
  const FactorPrecision fp = factor_precision(obs, cov);
  Eigen::VectorXd draw = fp.llt.solve(fp.linear);
  draw += fp.llt.matrixU().solve(normals);
  return draw;
}

Eigen::VectorXd factor_step_gibbs(const FactorObservation& obs, const SpectralCov& cov,
                                  Rng& rng) {
  Eigen::VectorXd z(cov.dim());
  for (int i = 0; i < cov.dim(); ++i) z[i] = standard_normal(rng);
  return factor_step_gibbs(obs, cov, z);
}

Eigen::MatrixXd gibbs_loadings(const Eigen::MatrixXd& factors, const ReturnsPanel& panel,
                               double sigma2, double prior_variance, Rng& rng) {
  const int dim = static_cast<int>(factors.rows());
  const int assets = panel.assets();
  const int horizon = panel.horizon();
  if (factors.cols() != horizon) throw std::invalid_argument("gibbs_loadings: factors must be K x T");

  Eigen::MatrixXd normals(assets, dim);
  for (int n = 0; n < assets; ++n) {
    for (int k = 0; k < dim; ++k) normals(n, k) = standard_normal(rng);
  }

  Eigen::MatrixXd loadings = Eigen::MatrixXd::Zero(assets, dim);
  const double inv_s2 = 1.0 / sigma2;
  bool failed = false;
#pragma omp parallel for schedule(dynamic)
  for (int n = 0; n < assets; ++n) {
    const int free = n < dim ? n : dim;
    if (n < dim) loadings(n, n) = 1.0;
    if (free == 0) continue;
    Eigen::MatrixXd precision = Eigen::MatrixXd::Identity(free, free) / prior_variance;
    Eigen::VectorXd linear = Eigen::VectorXd::Zero(free);
    for (int t = 0; t < horizon; ++t) {
      if (!panel.is_observed(t, n)) continue;
      const auto x = factors.col(t).head(free);
      const double target = panel.values(t, n) - (n < dim ? factors(n, t) : 0.0);
      precision.noalias() += inv_s2 * x * x.transpose();
      linear.noalias() += (inv_s2 * target) * x;
    }
    instrumentation::count_dense_factorization();
    Eigen::LLT<Eigen::MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success) {
#pragma omp atomic write
      failed = true;
      continue;
    }
    Eigen::VectorXd b = llt.solve(linear);
    b += llt.matrixU().solve(normals.row(n).head(free).transpose());
    loadings.row(n).head(free) = b.transpose();
  }
  if (failed) throw NumericalError("gibbs_loadings", "posterior precision is not positive definite");
  return loadings;
}

double gibbs_sigma2(double sum_sq_residuals, long n_obs, double prior_shape, double prior_rate,
                    Rng& rng) {
  const double shape = prior_shape + 0.5 * static_cast<double>(n_obs);
  const double rate = prior_rate + 0.5 * sum_sq_residuals;
  return inverse_gamma(rng, shape, rate);
}

LevelConditional level_conditional(std::span<const double> path, const ArParams& p) {
  const double phi = p.phi();
  const double a = p.one_minus_phi_sq();
  const double b = p.one_minus_phi();
  const auto n = path.size();
  double weight = a;
  double weighted = a * path[0];
  for (std::size_t t = 1; t < n; ++t) {
    weight += b * b;
    weighted += b * (path[t] - phi * path[t - 1]);
  }
  return {weighted / weight, weight / (p.sigma * p.sigma)};
}

void gibbs_path_level_and_variance(std::span<const double> path, ArParams& p, double shape,
                                   double rate, Rng& rng) {
  if (path.empty()) return;
  const LevelConditional lc = level_conditional(path, p);
  if (lc.precision > 0.0 && std::isfinite(lc.mean)) {
    p.level = lc.mean + standard_normal(rng) / std::sqrt(lc.precision);
  }
  const double phi = p.phi();
  const double d0 = path[0] - p.level;
  double ss = p.one_minus_phi_sq() * d0 * d0;
  for (std::size_t t = 1; t < path.size(); ++t) {
    const double e = path[t] - p.level - phi * (path[t - 1] - p.level);
    ss += e * e;
  }
  const double var = gibbs_sigma2(ss, static_cast<long>(path.size()), shape, rate, rng);
  p.sigma = std::sqrt(var);
}

double persistence_log_ratio(std::span<const double> path, const ArParams& p,
                             const PhiPrior& prior, double proposed) {
  ArParams q = p;
  q.phi_tilde = proposed;
  return ar1_log_density(path, q) - ar1_log_density(path, p) +
         normal_log_density(proposed, prior.mean, prior.precision) -
         normal_log_density(p.phi_tilde, prior.mean, prior.precision);
}

bool mh_persistence(std::span<const double> path, ArParams& p, const PhiPrior& prior,
                    double proposal_sd, Rng& rng) {
  const double proposed = p.phi_tilde + proposal_sd * standard_normal(rng);
  const double log_u = log_uniform(rng);
  const double log_ratio = persistence_log_ratio(path, p, prior, proposed);
  if (!std::isfinite(log_ratio) || !(log_u < log_ratio)) return false;
  p.phi_tilde = proposed;
  return true;
}

NormalGammaPosterior normal_gamma_posterior(std::span<const double> phi_tilde,
                                            const HyperPrior& c) {
  const auto n = static_cast<double>(phi_tilde.size());
  double mean = 0.0;
  for (double v : phi_tilde) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : phi_tilde) ss += (v - mean) * (v - mean);
  NormalGammaPosterior post;
  post.kappa = c.k0 + n;
  post.mean = (c.k0 * c.mu0 + n * mean) / post.kappa;
  post.shape = c.alpha0 + 0.5 * n;
  post.rate = c.beta0 + 0.5 * ss + 0.5 * c.k0 * n * (mean - c.mu0) * (mean - c.mu0) / post.kappa;
  return post;
}

std::pair<double, double> gibbs_hyper(std::span<const double> phi_tilde,
                                      const HyperPrior& constants, Rng& rng) {
  if (phi_tilde.empty()) throw std::invalid_argument("gibbs_hyper: need at least one path");
  const NormalGammaPosterior post = normal_gamma_posterior(phi_tilde, constants);
  const double lambda = gamma_rate(rng, post.shape, post.rate);
  const double mu = post.mean + standard_normal(rng) / std::sqrt(post.kappa * lambda);
  return {mu, lambda};
}

}  // namespace msv
