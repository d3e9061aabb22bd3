#pragma once

// Gaussian AR(1) prior over the K(K+1)/2 latent paths.
//
// Path layout: rows 0..K-1 hold log-eigenvalue paths h_i, rows K.. hold the
// transformed angle paths delta_ij in lexicographic pair order. Each path
//   x_1 ~ N(x0, sigma^2 / (1 - phi^2)),  x_{t+1} = x0 + phi (x_t - x0) + sigma eta_t,
// so its precision matrix is tridiagonal.

#include "msv/givens.hpp"
#include "msv/random.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace msv {

using PathMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr int path_count(int dim) { return dim * (dim + 1) / 2; }

/// Inverse of path_count; throws if n is not triangular.
int dim_from_path_count(int n_paths);

/// omega = (pi/2) (e^delta - 1) / (e^delta + 1). |delta| clamped to 700.
double angle_from_delta(double delta);
/// delta = log(pi/2 + omega) - log(pi/2 - omega).
double delta_from_angle(double omega);
/// d omega / d delta.
double dangle_ddelta(double delta);

/// phi = (e^phi_tilde - 1) / (e^phi_tilde + 1).
double persistence_from_transformed(double phi_tilde);
double transformed_from_persistence(double phi);

struct LatentPaths {
  int dim = 0;
  PathMatrix values;  // path_count(dim) x T

  LatentPaths() = default;
  LatentPaths(int dim, int horizon);
  LatentPaths(int dim, PathMatrix values);

  int n_paths() const { return static_cast<int>(values.rows()); }
  int horizon() const { return static_cast<int>(values.cols()); }

  /// Spectral form of time slice t (angles mapped back from delta).
  SpectralCov slice(int t) const;
  /// Allocation-free variant of slice(): writes h and omega.
  void slice_into(int t, std::span<double> h, std::span<double> omega) const;
};

/// Spectral form of a single state vector x (length K(K+1)/2).
SpectralCov spectral_from_state(int dim, const Eigen::VectorXd& x);

struct ArParams {
  double phi_tilde = 0.0;  // unconstrained persistence
  double level = 0.0;      // x0
  double sigma = 1.0;      // innovation standard deviation

  double phi() const { return persistence_from_transformed(phi_tilde); }
  /// 1 - phi^2 and 1 - phi computed without cancellation.
  double one_minus_phi_sq() const;
  double one_minus_phi() const;
  double stationary_variance() const { return sigma * sigma / one_minus_phi_sq(); }
};

using PathParams = std::vector<ArParams>;

enum class PriorMode { exchangeable, independent };

/// Fixed constants of the hierarchical prior.
struct HyperPrior {
  double mu0 = 3.0;
  double k0 = 0.01;
  double alpha0 = 2.0;
  double beta0 = 0.5;
  double variance_shape = 2.5;  // inverse-gamma on sigma_p^2
  double variance_rate = 0.025;
  double independent_variance = 1e3;  // N(0, v) on phi_tilde in independent mode
  PriorMode mode = PriorMode::exchangeable;
};

/// Exchangeable-prior mean/precision of phi_tilde for each path group.
struct HyperParams {
  double mu_h = 3.0;
  double lambda_h = 1.0;
  double mu_delta = 3.0;
  double lambda_delta = 1.0;
};

/// Prior N(mean, 1/precision) on phi_tilde of path p (dim gives the group).
struct PhiPrior {
  double mean = 0.0;
  double precision = 1.0;
};
PhiPrior phi_prior_for_path(int path, int dim, const HyperParams& hyper,
                            const HyperPrior& constants);

/// Banded form of one path's prior.
struct TridiagonalGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd diagonal;
  Eigen::VectorXd off_diagonal;  // length T-1, entry t couples t and t+1

  static TridiagonalGaussian from_params(const ArParams& p, int horizon);
  Eigen::MatrixXd dense_precision() const;
};

/// Exact AR(1) log-density of one path with stationary start.
double ar1_log_density(std::span<const double> path, const ArParams& p);

/// Sum of ar1_log_density over all paths. Instrumented.
double prior_log_density(const LatentPaths& paths, const PathParams& params);

/// Draw from N(A^{-1}((2/zeta) u + Q M), A^{-1}), A = (2/zeta) I + Q, for one
/// path using the supplied standard-normal vector z. O(T).
void solve_with_noise(const ArParams& p, double zeta, std::span<const double> u,
                      std::span<const double> z, std::span<double> out,
                      std::vector<double>& scratch);

/// Proposal step of the auxiliary sampler for every row of u; row p uses
/// params[p]. Normals are drawn serially from rng, the solves run in parallel.
PathMatrix solve_and_sample(const PathParams& params, double zeta, const PathMatrix& u,
                            Rng& rng);
/// Same with caller-supplied noise; deterministic.
PathMatrix solve_and_sample(const PathParams& params, double zeta, const PathMatrix& u,
                            const PathMatrix& noise);
/// Serial reference of the above.
PathMatrix solve_and_sample_serial(const PathParams& params, double zeta, const PathMatrix& u,
                                   const PathMatrix& noise);

/// Forward simulation of every path (one row per entry of params).
PathMatrix sample_prior(const PathParams& params, int horizon, Rng& rng);

}  // namespace msv
