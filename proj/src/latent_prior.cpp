#include "msv/latent_prior.hpp"

#include "msv/errors.hpp"
#include "msv/instrumentation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace msv {

namespace {
constexpr double kHalfPi = std::numbers::pi / 2;
constexpr double kLogTwoPi = 1.8378770664093454836;
constexpr double kDeltaClamp = 700.0;
}  // namespace

int dim_from_path_count(int n_paths) {
  int dim = 0;
  while (path_count(dim) < n_paths) ++dim;
  if (path_count(dim) != n_paths) {
    throw std::invalid_argument("path count " + std::to_string(n_paths) +
                                " is not K(K+1)/2 for any K");
  }
  return dim;
}

double angle_from_delta(double delta) {
  const double d = std::clamp(delta, -kDeltaClamp, kDeltaClamp);
  // (e^d - 1)/(e^d + 1) == tanh(d/2); kept strictly inside the open interval
  const double bound = std::nextafter(kHalfPi, 0.0);
  return std::clamp(kHalfPi * std::tanh(0.5 * d), -bound, bound);
}

double delta_from_angle(double omega) {
  return std::log(kHalfPi + omega) - std::log(kHalfPi - omega);
}

double dangle_ddelta(double delta) {
  const double e = std::exp(-std::min(std::abs(delta), kDeltaClamp));
  // (pi/2) 2 e^d / (e^d + 1)^2, written in terms of e^{-|d|}
  return kHalfPi * 2.0 * e / ((1.0 + e) * (1.0 + e));
}

double persistence_from_transformed(double phi_tilde) { return std::tanh(0.5 * phi_tilde); }

double transformed_from_persistence(double phi) { return std::log1p(phi) - std::log1p(-phi); }

double ArParams::one_minus_phi_sq() const {
  const double e = std::exp(-std::abs(phi_tilde));
  return 4.0 * e / ((1.0 + e) * (1.0 + e));
}

double ArParams::one_minus_phi() const {
  if (phi_tilde <= 0.0) return 1.0 - phi();
  const double e = std::exp(-phi_tilde);
  return 2.0 * e / (1.0 + e);
}

LatentPaths::LatentPaths(int dim_, int horizon)
    : dim(dim_), values(PathMatrix::Zero(path_count(dim_), horizon)) {}

LatentPaths::LatentPaths(int dim_, PathMatrix v) : dim(dim_), values(std::move(v)) {
  if (values.rows() != path_count(dim)) {
    throw std::invalid_argument("LatentPaths: row count does not match K(K+1)/2");
  }
}

SpectralCov LatentPaths::slice(int t) const {
  SpectralCov cov(Eigen::VectorXd(dim), Eigen::VectorXd(pair_count(dim)));
  slice_into(t, {cov.log_eigenvalues.data(), static_cast<std::size_t>(dim)},
             {cov.angles.data(), static_cast<std::size_t>(cov.angles.size())});
  return cov;
}

void LatentPaths::slice_into(int t, std::span<double> h, std::span<double> omega) const {
  for (int i = 0; i < dim; ++i) h[i] = values(i, t);
  const int m = pair_count(dim);
  for (int k = 0; k < m; ++k) omega[k] = angle_from_delta(values(dim + k, t));
}

SpectralCov spectral_from_state(int dim, const Eigen::VectorXd& x) {
  if (x.size() != path_count(dim)) {
    throw std::invalid_argument("spectral_from_state: state length mismatch");
  }
  SpectralCov cov(x.head(dim), Eigen::VectorXd(pair_count(dim)));
  for (int k = 0; k < pair_count(dim); ++k) cov.angles[k] = angle_from_delta(x[dim + k]);
  return cov;
}

PhiPrior phi_prior_for_path(int path, int dim, const HyperParams& hyper,
                            const HyperPrior& constants) {
  if (constants.mode == PriorMode::independent) {
    return {0.0, 1.0 / constants.independent_variance};
  }
  if (path < dim) return {hyper.mu_h, hyper.lambda_h};
  return {hyper.mu_delta, hyper.lambda_delta};
}

TridiagonalGaussian TridiagonalGaussian::from_params(const ArParams& p, int horizon) {
  TridiagonalGaussian g;
  const double phi = p.phi();
  const double inv_var = 1.0 / (p.sigma * p.sigma);
  g.mean = Eigen::VectorXd::Constant(horizon, p.level);
  g.diagonal = Eigen::VectorXd::Constant(horizon, (1.0 + phi * phi) * inv_var);
  g.off_diagonal = Eigen::VectorXd::Constant(std::max(horizon - 1, 0), -phi * inv_var);
  if (horizon == 1) {
    g.diagonal[0] = p.one_minus_phi_sq() * inv_var;
  } else if (horizon > 1) {
    g.diagonal[0] = inv_var;
    g.diagonal[horizon - 1] = inv_var;
  }
  return g;
}

Eigen::MatrixXd TridiagonalGaussian::dense_precision() const {
  const Eigen::Index n = diagonal.size();
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index t = 0; t < n; ++t) q(t, t) = diagonal[t];
  for (Eigen::Index t = 0; t + 1 < n; ++t) {
    q(t, t + 1) = off_diagonal[t];
    q(t + 1, t) = off_diagonal[t];
  }
  return q;
}

double ar1_log_density(std::span<const double> path, const ArParams& p) {
  if (path.empty()) return 0.0;
  const double phi = p.phi();
  const double var0 = p.stationary_variance();
  const double d0 = path[0] - p.level;
  double out = -0.5 * (kLogTwoPi + std::log(var0)) - 0.5 * d0 * d0 / var0;
  const double inv_var = 1.0 / (p.sigma * p.sigma);
  double ss = 0.0;
  for (std::size_t t = 1; t < path.size(); ++t) {
    const double e = path[t] - p.level - phi * (path[t - 1] - p.level);
    ss += e * e;
  }
  const auto n = static_cast<double>(path.size() - 1);
  out += -0.5 * n * (kLogTwoPi + 2.0 * std::log(p.sigma)) - 0.5 * ss * inv_var;
  return out;
}

double prior_log_density(const LatentPaths& paths, const PathParams& params) {
  instrumentation::count_prior_density_call();
  if (static_cast<int>(params.size()) != paths.n_paths()) {
    throw std::invalid_argument("prior_log_density: params/path count mismatch");
  }
  double total = 0.0;
  const auto horizon = static_cast<std::size_t>(paths.horizon());
  for (int p = 0; p < paths.n_paths(); ++p) {
    total += ar1_log_density({paths.values.row(p).data(), horizon}, params[p]);
  }
  return total;
}

void solve_with_noise(const ArParams& p, double zeta, std::span<const double> u,
                      std::span<const double> z, std::span<double> out,
                      std::vector<double>& scratch) {
  const std::size_t n = u.size();
  if (n == 0) return;
  scratch.resize(2 * n);
  double* chol_diag = scratch.data();
  double* chol_sub = scratch.data() + n;

  const double phi = p.phi();
  const double inv_var = 1.0 / (p.sigma * p.sigma);
  const double scale = 2.0 / zeta;
  const double off = -phi * inv_var;

  auto q_diag = [&](std::size_t t) {
    if (n == 1) return p.one_minus_phi_sq() * inv_var;
    if (t == 0 || t + 1 == n) return inv_var;
    return (1.0 + phi * phi) * inv_var;
  };
  // row sums of Q times the constant mean
  auto q_mean = [&](std::size_t t) {
    if (n == 1) return p.level * p.one_minus_phi_sq() * inv_var;
    const double omp = p.one_minus_phi();
    if (t == 0 || t + 1 == n) return p.level * omp * inv_var;
    return p.level * omp * omp * inv_var;
  };

  // L L^T = (2/zeta) I + Q, L lower bidiagonal; forward solve fused in.
  double prev = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    double d = scale + q_diag(t);
    double rhs = scale * u[t] + q_mean(t);
    if (t > 0) {
      chol_sub[t] = off / chol_diag[t - 1];
      d -= chol_sub[t] * chol_sub[t];
      rhs -= chol_sub[t] * prev;
    }
    if (!(d > 0.0)) {
      throw NumericalError("latent_prior", "banded Cholesky pivot is not positive");
    }
    chol_diag[t] = std::sqrt(d);
    prev = rhs / chol_diag[t];
    out[t] = prev + z[t];
  }
  // back substitution L^T y = out
  out[n - 1] /= chol_diag[n - 1];
  for (std::size_t t = n - 1; t-- > 0;) {
    out[t] = (out[t] - chol_sub[t + 1] * out[t + 1]) / chol_diag[t];
  }
}

namespace {
void check_shapes(const PathParams& params, const PathMatrix& u, const PathMatrix& noise) {
  if (static_cast<Eigen::Index>(params.size()) != u.rows() || noise.rows() != u.rows() ||
      noise.cols() != u.cols()) {
    throw std::invalid_argument("solve_and_sample: shape mismatch");
  }
}
}  // namespace

PathMatrix solve_and_sample_serial(const PathParams& params, double zeta, const PathMatrix& u,
                                   const PathMatrix& noise) {
  check_shapes(params, u, noise);
  PathMatrix out(u.rows(), u.cols());
  const auto horizon = static_cast<std::size_t>(u.cols());
  std::vector<double> scratch;
  for (Eigen::Index p = 0; p < u.rows(); ++p) {
    solve_with_noise(params[p], zeta, {u.row(p).data(), horizon},
                     {noise.row(p).data(), horizon}, {out.row(p).data(), horizon}, scratch);
  }
  return out;
}

PathMatrix solve_and_sample(const PathParams& params, double zeta, const PathMatrix& u,
                            const PathMatrix& noise) {
  check_shapes(params, u, noise);
  PathMatrix out(u.rows(), u.cols());
  const auto horizon = static_cast<std::size_t>(u.cols());
  const auto rows = static_cast<int>(u.rows());
  bool failed = false;
#pragma omp parallel
  {
    std::vector<double> scratch;
#pragma omp for schedule(static)
    for (int p = 0; p < rows; ++p) {
      try {
        solve_with_noise(params[p], zeta, {u.row(p).data(), horizon},
                         {noise.row(p).data(), horizon}, {out.row(p).data(), horizon},
                         scratch);
      } catch (const NumericalError&) {
#pragma omp atomic write
        failed = true;
      }
    }
  }
  if (failed) throw NumericalError("latent_prior", "banded Cholesky pivot is not positive");
  return out;
}

PathMatrix solve_and_sample(const PathParams& params, double zeta, const PathMatrix& u,
                            Rng& rng) {
  PathMatrix noise(u.rows(), u.cols());
  for (Eigen::Index p = 0; p < noise.rows(); ++p) {
    for (Eigen::Index t = 0; t < noise.cols(); ++t) noise(p, t) = standard_normal(rng);
  }
  return solve_and_sample(params, zeta, u, noise);
}

PathMatrix sample_prior(const PathParams& params, int horizon, Rng& rng) {
  PathMatrix out(static_cast<Eigen::Index>(params.size()), horizon);
  for (std::size_t p = 0; p < params.size(); ++p) {
    const ArParams& ar = params[p];
    const double phi = ar.phi();
    if (horizon == 0) continue;
    double x = ar.level + std::sqrt(ar.stationary_variance()) * standard_normal(rng);
    out(static_cast<Eigen::Index>(p), 0) = x;
    for (int t = 1; t < horizon; ++t) {
      x = ar.level + phi * (x - ar.level) + ar.sigma * standard_normal(rng);
      out(static_cast<Eigen::Index>(p), t) = x;
    }
  }
  return out;
}

}  // namespace msv
