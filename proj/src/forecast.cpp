#include "msv/forecast.hpp"

#include "msv/errors.hpp"
#include "msv/givens.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace msv {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454836;

double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

Eigen::MatrixXd return_covariance(const Eigen::MatrixXd& factor_cov, const Eigen::MatrixXd& b,
                                  double sigma2) {
  Eigen::MatrixXd out = b * factor_cov * b.transpose();
  out.diagonal().array() += sigma2;
  return 0.5 * (out + out.transpose());
}

void pin_angles(Eigen::Ref<Eigen::VectorXd> x, int dim) {
  x.tail(x.size() - dim).setZero();
}

double sequential_sum(const Eigen::VectorXd& w) {
  return std::accumulate(w.data(), w.data() + w.size(), 0.0);
}

// Nudges w until its left-to-right floating-point sum is exactly 1.
void normalise_exactly(Eigen::VectorXd& w) {
  Eigen::Index big = 0;
  w.cwiseAbs().maxCoeff(&big);
  for (int pass = 0; pass < 4 && sequential_sum(w) != 1.0; ++pass) w[big] += 1.0 - sequential_sum(w);
  if (sequential_sum(w) == 1.0) return;
  // one-ulp moves, finest entries first
  std::vector<Eigen::Index> order(static_cast<std::size_t>(w.size()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return std::abs(w[a]) < std::abs(w[b]); });
  for (int pass = 0; pass < 64; ++pass) {
    const bool up = sequential_sum(w) < 1.0;
    for (Eigen::Index i : order) {
      const double old = w[i];
      w[i] = std::nextafter(old, up ? std::numeric_limits<double>::infinity()
                                    : -std::numeric_limits<double>::infinity());
      const double s = sequential_sum(w);
      if (s == 1.0) return;
      if (up != (s < 1.0)) w[i] = old;  // overshot
    }
  }
  const Eigen::Index last = w.size() - 1;
  w[last] = 1.0 - std::accumulate(w.data(), w.data() + last, 0.0);
}
}  // namespace

Eigen::VectorXd propagate_state(const PathParams& params, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& normals) {
  Eigen::VectorXd out(x.size());
  for (Eigen::Index p = 0; p < x.size(); ++p) {
    const ArParams& a = params[static_cast<std::size_t>(p)];
    out[p] = a.level + a.phi() * (x[p] - a.level) + a.sigma * normals[p];
  }
  return out;
}

PredictiveDraws predict_sigma(const PosteriorDraws& draws, int steps_ahead, Rng& rng) {
  if (draws.empty()) throw std::invalid_argument("predict_sigma: no posterior draws");
  if (steps_ahead != 1 && steps_ahead != 2) {
    throw std::invalid_argument("predict_sigma: steps_ahead must be 1 or 2");
  }
  const int dim = draws.factors;
  const int n_paths = path_count(dim);
  const int n = static_cast<int>(draws.draws.size());

  std::vector<Eigen::MatrixXd> noise(static_cast<std::size_t>(n));
  for (auto& z : noise) {
    z.resize(n_paths, steps_ahead);
    for (int s = 0; s < steps_ahead; ++s) {
      for (int p = 0; p < n_paths; ++p) z(p, s) = standard_normal(rng);
    }
  }

  PredictiveDraws out;
  out.steps_ahead = steps_ahead;
  out.states.resize(static_cast<std::size_t>(n));
  out.factor_covariances.resize(static_cast<std::size_t>(n));
  out.return_covariances.resize(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (int d = 0; d < n; ++d) {
    const Draw& draw = draws.draws[static_cast<std::size_t>(d)];
    Eigen::VectorXd x = draw.last_state;
    for (int s = 0; s < steps_ahead; ++s) {
      x = propagate_state(draw.params, x, noise[d].col(s));
      if (draws.zero_angles) pin_angles(x, dim);
    }
    const Eigen::MatrixXd sigma = reconstruct(spectral_from_state(dim, x));
    out.states[d] = x;
    out.factor_covariances[d] = sigma;
    out.return_covariances[d] = return_covariance(sigma, draw.loadings, draw.sigma2);
  }
  out.mean_factor_covariance = Eigen::MatrixXd::Zero(dim, dim);
  out.mean_return_covariance = Eigen::MatrixXd::Zero(draws.assets, draws.assets);
  for (int d = 0; d < n; ++d) {
    out.mean_factor_covariance += out.factor_covariances[d];
    out.mean_return_covariance += out.return_covariances[d];
  }
  out.mean_factor_covariance /= n;
  out.mean_return_covariance /= n;
  return out;
}

StaticParams posterior_mean_params(const PosteriorDraws& draws) {
  if (draws.empty()) throw std::invalid_argument("posterior_mean_params: no posterior draws");
  const auto n = static_cast<double>(draws.draws.size());
  StaticParams out;
  out.dim = draws.factors;
  out.zero_angles = draws.zero_angles;
  out.params.assign(draws.draws.front().params.size(), ArParams{0.0, 0.0, 0.0});
  out.loadings = Eigen::MatrixXd::Zero(draws.assets, draws.factors);
  for (const Draw& d : draws.draws) {
    for (std::size_t p = 0; p < out.params.size(); ++p) {
      out.params[p].phi_tilde += d.params[p].phi_tilde / n;
      out.params[p].level += d.params[p].level / n;
      out.params[p].sigma += d.params[p].sigma / n;
    }
    out.loadings += d.loadings / n;
    out.sigma2 += d.sigma2 / n;
  }
  return out;
}

double ParticleCloud::effective_sample_size() const {
  double s2 = 0.0;
  for (double w : weights) s2 += w * w;
  return s2 > 0.0 ? 1.0 / s2 : 0.0;
}

void ParticleCloud::validate() const {
  if (static_cast<int>(weights.size()) != size()) {
    throw std::invalid_argument("ParticleCloud: weight count does not match particle count");
  }
  if (particles.rows() != path_count(dim)) {
    throw std::invalid_argument("ParticleCloud: state length does not match K(K+1)/2");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("ParticleCloud: negative or NaN weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("ParticleCloud: weights do not sum to 1");
}

ParticleCloud ParticleCloud::from_draws(const PosteriorDraws& draws, int n, Rng& rng) {
  if (draws.empty()) throw std::invalid_argument("ParticleCloud::from_draws: no posterior draws");
  if (n < 1) throw std::invalid_argument("ParticleCloud::from_draws: need at least one particle");
  const int dim = draws.factors;
  Eigen::MatrixXd particles(path_count(dim), n);
  std::uniform_int_distribution<std::size_t> pick(0, draws.draws.size() - 1);
  for (int i = 0; i < n; ++i) particles.col(i) = draws.draws[pick(rng)].last_state;
  return from_states(dim, std::move(particles));
}

ParticleCloud ParticleCloud::from_states(int dim, Eigen::MatrixXd particles) {
  ParticleCloud c;
  c.dim = dim;
  const auto n = static_cast<std::size_t>(particles.cols());
  c.particles = std::move(particles);
  c.weights.assign(n, 1.0 / static_cast<double>(n));
  return c;
}

double observation_log_density(const StaticParams& theta, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& r, const std::vector<int>& observed) {
  if (observed.empty()) return 0.0;
  const int dim = theta.dim;
  const SpectralCov cov = spectral_from_state(dim, x);
  const int assets = static_cast<int>(theta.loadings.rows());
  const bool identity = assets == dim && theta.sigma2 == 0.0 &&
                        static_cast<int>(observed.size()) == assets &&
                        theta.loadings.isIdentity(0.0);
  if (identity) return log_density(cov, r);

  const Eigen::MatrixXd full = return_covariance(reconstruct(cov), theta.loadings, theta.sigma2);
  const auto m = static_cast<Eigen::Index>(observed.size());
  Eigen::MatrixXd sub(m, m);
  Eigen::VectorXd ro(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    ro[a] = r[observed[a]];
    for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = full(observed[a], observed[b]);
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(sub);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const Eigen::VectorXd z = llt.matrixL().solve(ro);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(m) * kLogTwoPi + log_det + z.squaredNorm());
}

std::vector<int> systematic_resample(const std::vector<double>& weights, int n, double u) {
  std::vector<int> out(static_cast<std::size_t>(n));
  const int m = static_cast<int>(weights.size());
  double cumulative = weights[0];
  int j = 0;
  for (int i = 0; i < n; ++i) {
    const double point = (static_cast<double>(i) + u) / static_cast<double>(n);
    while (point >= cumulative && j < m - 1) cumulative += weights[static_cast<std::size_t>(++j)];
    out[static_cast<std::size_t>(i)] = j;
  }
  return out;
}

PredictiveLogLik predictive_loglik(const ReturnsPanel& future, const StaticParams& theta,
                                   ParticleCloud cloud, const FilterOptions& options, Rng& rng) {
  PredictiveLogLik out;
  if (future.horizon() == 0) return out;
  cloud.validate();
  if (cloud.dim != theta.dim) throw std::invalid_argument("predictive_loglik: dimension mismatch");
  if (future.assets() != theta.loadings.rows()) {
    throw std::invalid_argument("predictive_loglik: asset count does not match the loadings");
  }
  const int n = cloud.size();
  const int n_paths = path_count(theta.dim);
  const bool auxiliary = options.variant == FilterVariant::auxiliary;

  Eigen::MatrixXd means(n_paths, n);
  Eigen::MatrixXd next(n_paths, n);
  Eigen::MatrixXd noise(n_paths, n);
  std::vector<double> first(static_cast<std::size_t>(n));
  std::vector<double> look_ahead(static_cast<std::size_t>(n), 0.0);
  std::vector<double> second(static_cast<std::size_t>(n));
  std::vector<double> incoming(static_cast<std::size_t>(n));
  std::vector<int> ancestors(static_cast<std::size_t>(n));

  for (int t = 0; t < future.horizon(); ++t) {
    const std::vector<int> observed = future.observed_indices(t);
    Eigen::VectorXd r(future.assets());
    for (int a = 0; a < future.assets(); ++a) r[a] = future.is_observed(t, a) ? future.values(t, a) : 0.0;

#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd m = propagate_state(theta.params, cloud.particles.col(i),
                                          Eigen::VectorXd::Zero(n_paths));
      if (theta.zero_angles) pin_angles(m, theta.dim);
      means.col(i) = m;
      if (auxiliary) look_ahead[i] = observation_log_density(theta, m, r, observed);
    }

    // first stage: log w_i + log p(r | mu_i)
    for (int i = 0; i < n; ++i) {
      first[i] = std::log(cloud.weights[i]) + look_ahead[i];
    }
    const double log_first = log_sum_exp(first);
    if (!std::isfinite(log_first)) {
      throw NumericalError("forecast", "particle weights collapsed at step " + std::to_string(t + 1));
    }
    for (int i = 0; i < n; ++i) first[i] = std::exp(first[i] - log_first);

    double ess = 0.0;
    for (double w : first) ess += w * w;
    ess = 1.0 / ess;
    if (ess < options.resample_fraction * n) {
      ancestors = systematic_resample(first, n, uniform01(rng));
      std::fill(incoming.begin(), incoming.end(), 1.0 / n);
    } else {
      std::iota(ancestors.begin(), ancestors.end(), 0);
      incoming = first;
    }

    for (int i = 0; i < n; ++i) {
      for (int p = 0; p < n_paths; ++p) noise(p, i) = standard_normal(rng);
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      const int a = ancestors[i];
      Eigen::VectorXd x = means.col(a);
      for (int p = 0; p < n_paths; ++p) x[p] += theta.params[p].sigma * noise(p, i);
      if (theta.zero_angles) pin_angles(x, theta.dim);
      next.col(i) = x;
      second[i] = std::log(incoming[i]) + observation_log_density(theta, x, r, observed) -
                  look_ahead[a];
    }
    const double log_second = log_sum_exp(second);
    if (!std::isfinite(log_second)) {
      throw NumericalError("forecast", "particle weights collapsed at step " + std::to_string(t + 1));
    }
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      cloud.weights[i] = std::exp(second[i] - log_second);
      total += cloud.weights[i];
    }
    for (double& w : cloud.weights) w /= total;
    std::swap(cloud.particles, next);

    const double step = log_first + log_second;
    out.per_step.push_back(step);
    out.ess.push_back(cloud.effective_sample_size());
    out.cumulative += step;
  }
  return out;
}

Discrepancy discrepancies(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& proxy) {
  if (predicted.rows() != proxy.rows() || predicted.cols() != proxy.cols() ||
      predicted.rows() != predicted.cols()) {
    throw std::invalid_argument("discrepancies: matrices must be square with equal shape");
  }
  const double cells = static_cast<double>(predicted.size());
  const Eigen::ArrayXXd diff = (proxy - predicted).array();
  return {diff.abs().sum() / cells, std::sqrt(diff.square().sum() / cells)};
}

Eigen::VectorXd min_variance_weights(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() == 0) {
    throw std::invalid_argument("min_variance_weights: matrix must be square and non-empty");
  }
  if (!sigma.allFinite()) throw std::invalid_argument("min_variance_weights: non-finite entry");
  const double scale = sigma.cwiseAbs().maxCoeff();
  if (!(sigma - sigma.transpose()).isZero(1e-12 * scale)) {
    throw std::invalid_argument("min_variance_weights: matrix is not symmetric");
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("min_variance_weights: matrix is not positive definite");
  }
  Eigen::VectorXd w = llt.solve(Eigen::VectorXd::Ones(sigma.rows()));
  w /= w.sum();
  normalise_exactly(w);
  return w;
}

}  // namespace msv
