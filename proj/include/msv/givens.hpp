#pragma once

// Spectral covariance parametrization: Sigma = P diag(exp(h)) P^T with the
// eigenvector matrix factored into Givens rotations
//
//   P = G(0,1) G(0,2) ... G(0,K-1) G(1,2) ... G(K-2,K-1)
//
// (lexicographic pair order, leftmost G(0,1)). All pair indices are
// zero-based. Every kernel here is O(K^2) except reconstruct().

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace msv {

/// Number of rotation angles for a K-dimensional covariance.
constexpr int pair_count(int dim) { return dim * (dim - 1) / 2; }

/// Rotation plane (i, j), i < j, and its position in lexicographic order.
struct PairIndex {
  int i = 0;
  int j = 1;
  int flat = 0;
};

int pair_flat(int dim, int i, int j);
PairIndex pair_at(int dim, int flat);

/// Enumerates all pairs of a K-dimensional problem in lexicographic order.
std::vector<PairIndex> all_pairs(int dim);

struct SpectralCov {
  Eigen::VectorXd log_eigenvalues;  // h, length K
  Eigen::VectorXd angles;           // omega, length K(K-1)/2, in (-pi/2, pi/2)

  SpectralCov() = default;
  SpectralCov(Eigen::VectorXd h, Eigen::VectorXd omega);

  static SpectralCov identity(int dim);

  int dim() const { return static_cast<int>(log_eigenvalues.size()); }

  /// Throws std::invalid_argument on shape mismatch or an angle outside
  /// the open interval (-pi/2, pi/2).
  void validate() const;
};

/// Single rotation v <- G(i,j)(angle)^T v. Only v[i] and v[j] change.
Eigen::VectorXd givens_apply_transpose(const Eigen::VectorXd& v, PairIndex pair,
                                       double angle);

/// v <- P^T v, rotations applied in lexicographic order.
void rotate_transpose(std::span<const double> angles, std::span<double> v);
/// v <- P v, rotations applied in reverse lexicographic order.
void rotate(std::span<const double> angles, std::span<double> v);

/// Whitened vector Lambda^{-1/2} P^T r.
Eigen::VectorXd whiten(const SpectralCov& cov, const Eigen::VectorXd& r);

double log_density(const SpectralCov& cov, const Eigen::VectorXd& r);
Eigen::VectorXd grad_log_eigenvalues(const SpectralCov& cov, const Eigen::VectorXd& r);
Eigen::VectorXd grad_angles(const SpectralCov& cov, const Eigen::VectorXd& r);

/// Reusable buffers for the fused density/gradient kernel.
struct KernelScratch {
  std::vector<double> cos_angle;
  std::vector<double> sin_angle;
  std::vector<double> w;
  std::vector<double> adj;

  void resize(int dim);
};

/// Fused kernel: returns log N(r | 0, Sigma) and writes d/dh into grad_h and
/// d/domega into grad_omega. One forward rotation sweep followed by one
/// backward sweep that undoes the forward rotations while propagating the
/// adjoint, so memory stays O(K) beyond the cached cos/sin values.
/// Either gradient span may be empty to skip it (grad_h costs O(K) anyway).
double log_density_and_gradients(std::span<const double> log_eigenvalues,
                                 std::span<const double> angles, std::span<const double> r,
                                 std::span<double> grad_h, std::span<double> grad_omega,
                                 KernelScratch& scratch);

struct DensityEval {
  double log_density = 0.0;
  Eigen::VectorXd grad_log_eigenvalues;
  Eigen::VectorXd grad_angles;
};

DensityEval evaluate(const SpectralCov& cov, const Eigen::VectorXd& r);

/// Dense Sigma. Reporting, forecasting and test oracles only.
Eigen::MatrixXd reconstruct(const SpectralCov& cov);

/// Dense eigenvector matrix P.
Eigen::MatrixXd eigenvectors(const SpectralCov& cov);

}  // namespace msv
