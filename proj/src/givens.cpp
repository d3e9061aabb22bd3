#include "msv/givens.hpp"

#include "msv/instrumentation.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace msv {

namespace instrumentation {
Counters& counters() {
  static Counters c;
  return c;
}
}  // namespace instrumentation

int pair_flat(int dim, int i, int j) {
  if (i < 0 || j <= i || j >= dim) {
    throw std::invalid_argument("pair_flat: need 0 <= i < j < dim");
  }
  return i * dim - i * (i + 1) / 2 + (j - i - 1);
}

PairIndex pair_at(int dim, int flat) {
  if (flat < 0 || flat >= pair_count(dim)) {
    throw std::invalid_argument("pair_at: flat index out of range");
  }
  int i = 0;
  int row_len = dim - 1;
  int rest = flat;
  while (rest >= row_len) {
    rest -= row_len;
    ++i;
    --row_len;
  }
  return PairIndex{i, i + 1 + rest, flat};
}

std::vector<PairIndex> all_pairs(int dim) {
  std::vector<PairIndex> out;
  out.reserve(static_cast<std::size_t>(pair_count(dim)));
  int flat = 0;
  for (int i = 0; i + 1 < dim; ++i) {
    for (int j = i + 1; j < dim; ++j) out.push_back({i, j, flat++});
  }
  return out;
}

SpectralCov::SpectralCov(Eigen::VectorXd h, Eigen::VectorXd omega)
    : log_eigenvalues(std::move(h)), angles(std::move(omega)) {}

SpectralCov SpectralCov::identity(int dim) {
  return SpectralCov(Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Zero(pair_count(dim)));
}

void SpectralCov::validate() const {
  if (dim() < 1) throw std::invalid_argument("SpectralCov: dimension must be >= 1");
  if (angles.size() != pair_count(dim())) {
    throw std::invalid_argument("SpectralCov: expected " + std::to_string(pair_count(dim())) +
                                " angles, got " + std::to_string(angles.size()));
  }
  constexpr double half_pi = std::numbers::pi / 2;
  for (Eigen::Index k = 0; k < angles.size(); ++k) {
    if (!(std::abs(angles[k]) < half_pi)) {
      throw std::invalid_argument("SpectralCov: angle " + std::to_string(k) +
                                  " outside (-pi/2, pi/2)");
    }
  }
  if (!log_eigenvalues.allFinite()) {
    throw std::invalid_argument("SpectralCov: non-finite log-eigenvalue");
  }
}

Eigen::VectorXd givens_apply_transpose(const Eigen::VectorXd& v, PairIndex pair,
                                       double angle) {
  Eigen::VectorXd out = v;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double vi = v[pair.i];
  const double vj = v[pair.j];
  out[pair.i] = c * vi - s * vj;
  out[pair.j] = s * vi + c * vj;
  return out;
}

void rotate_transpose(std::span<const double> angles, std::span<double> v) {
  const int dim = static_cast<int>(v.size());
  std::size_t k = 0;
  for (int i = 0; i + 1 < dim; ++i) {
    for (int j = i + 1; j < dim; ++j, ++k) {
      const double c = std::cos(angles[k]);
      const double s = std::sin(angles[k]);
      const double vi = v[i];
      const double vj = v[j];
      v[i] = c * vi - s * vj;
      v[j] = s * vi + c * vj;
    }
  }
}

void rotate(std::span<const double> angles, std::span<double> v) {
  const int dim = static_cast<int>(v.size());
  std::size_t k = angles.size();
  for (int i = dim - 2; i >= 0; --i) {
    for (int j = dim - 1; j > i; --j) {
      --k;
      const double c = std::cos(angles[k]);
      const double s = std::sin(angles[k]);
      const double vi = v[i];
      const double vj = v[j];
      v[i] = c * vi + s * vj;
      v[j] = -s * vi + c * vj;
    }
  }
}

Eigen::VectorXd whiten(const SpectralCov& cov, const Eigen::VectorXd& r) {
  Eigen::VectorXd v = r;
  rotate_transpose({cov.angles.data(), static_cast<std::size_t>(cov.angles.size())},
                   {v.data(), static_cast<std::size_t>(v.size())});
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] *= std::exp(-0.5 * cov.log_eigenvalues[i]);
  return v;
}

void KernelScratch::resize(int dim) {
  const auto m = static_cast<std::size_t>(pair_count(dim));
  cos_angle.resize(m);
  sin_angle.resize(m);
  w.resize(static_cast<std::size_t>(dim));
  adj.resize(static_cast<std::size_t>(dim));
}

double log_density_and_gradients(std::span<const double> log_eigenvalues,
                                 std::span<const double> angles, std::span<const double> r,
                                 std::span<double> grad_h, std::span<double> grad_omega,
                                 KernelScratch& scratch) {
  const int dim = static_cast<int>(r.size());
  scratch.resize(dim);
  double* w = scratch.w.data();
  double* a = scratch.adj.data();
  double* cs = scratch.cos_angle.data();
  double* sn = scratch.sin_angle.data();

  for (int i = 0; i < dim; ++i) w[i] = r[i];

  // forward: w <- P^T r
  std::size_t k = 0;
  for (int i = 0; i + 1 < dim; ++i) {
    for (int j = i + 1; j < dim; ++j, ++k) {
      const double c = std::cos(angles[k]);
      const double s = std::sin(angles[k]);
      cs[k] = c;
      sn[k] = s;
      const double wi = w[i];
      const double wj = w[j];
      w[i] = c * wi - s * wj;
      w[j] = s * wi + c * wj;
    }
  }

  double sum_h = 0.0;
  double quad = 0.0;
  for (int i = 0; i < dim; ++i) {
    const double inv_lambda = std::exp(-log_eigenvalues[i]);
    const double vsq = w[i] * w[i] * inv_lambda;
    sum_h += log_eigenvalues[i];
    quad += vsq;
    a[i] = w[i] * inv_lambda;  // Lambda^{-1/2} v
    if (!grad_h.empty()) grad_h[i] = -0.5 + 0.5 * vsq;
  }
  const double value =
      -0.5 * dim * std::log(2.0 * std::numbers::pi) - 0.5 * sum_h - 0.5 * quad;

  if (grad_omega.empty()) return value;

  // backward: undo each rotation to recover the prefix vector it acted on,
  // and carry the adjoint a = G(k+1) ... G(m) Lambda^{-1/2} v.
  for (int i = dim - 2; i >= 0; --i) {
    for (int j = dim - 1; j > i; --j) {
      --k;
      const double c = cs[k];
      const double s = sn[k];
      const double wi = c * w[i] + s * w[j];
      const double wj = -s * w[i] + c * w[j];
      w[i] = wi;
      w[j] = wj;
      // (dG^T/domega) w touches rows i and j only
      const double di = -s * wi - c * wj;
      const double dj = c * wi - s * wj;
      grad_omega[k] = -(a[i] * di + a[j] * dj);
      const double ai = a[i];
      const double aj = a[j];
      a[i] = c * ai + s * aj;
      a[j] = -s * ai + c * aj;
    }
  }
  return value;
}

namespace {
std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}
std::span<double> as_span(Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}
}  // namespace

DensityEval evaluate(const SpectralCov& cov, const Eigen::VectorXd& r) {
  DensityEval out;
  out.grad_log_eigenvalues.resize(cov.dim());
  out.grad_angles.resize(cov.angles.size());
  KernelScratch scratch;
  out.log_density =
      log_density_and_gradients(as_span(cov.log_eigenvalues), as_span(cov.angles), as_span(r),
                                as_span(out.grad_log_eigenvalues), as_span(out.grad_angles),
                                scratch);
  return out;
}

double log_density(const SpectralCov& cov, const Eigen::VectorXd& r) {
  KernelScratch scratch;
  return log_density_and_gradients(as_span(cov.log_eigenvalues), as_span(cov.angles),
                                   as_span(r), {}, {}, scratch);
}

Eigen::VectorXd grad_log_eigenvalues(const SpectralCov& cov, const Eigen::VectorXd& r) {
  const Eigen::VectorXd v = whiten(cov, r);
  return (-0.5 + 0.5 * v.array().square()).matrix();
}

Eigen::VectorXd grad_angles(const SpectralCov& cov, const Eigen::VectorXd& r) {
  return evaluate(cov, r).grad_angles;
}

Eigen::MatrixXd eigenvectors(const SpectralCov& cov) {
  const int dim = cov.dim();
  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(dim, dim);
  for (const PairIndex& pr : all_pairs(dim)) {
    const double c = std::cos(cov.angles[pr.flat]);
    const double s = std::sin(cov.angles[pr.flat]);
    // P <- P G(i,j): mixes columns i and j
    const Eigen::VectorXd ci = p.col(pr.i);
    const Eigen::VectorXd cj = p.col(pr.j);
    p.col(pr.i) = c * ci - s * cj;
    p.col(pr.j) = s * ci + c * cj;
  }
  return p;
}

Eigen::MatrixXd reconstruct(const SpectralCov& cov) {
  instrumentation::count_dense_reconstruction();
  const Eigen::MatrixXd p = eigenvectors(cov);
  const Eigen::VectorXd lambda = cov.log_eigenvalues.array().exp().matrix();
  Eigen::MatrixXd sigma = p * lambda.asDiagonal() * p.transpose();
  // exact symmetry
  return 0.5 * (sigma + sigma.transpose());
}

}  // namespace msv
