#include "msv/likelihood.hpp"

#include <stdexcept>
#include <vector>

namespace msv {

double ConstantLikelihood::evaluate(const LatentPaths& x, PathMatrix* gradient) const {
  if (gradient) *gradient = PathMatrix::Zero(x.n_paths(), x.horizon());
  return value_;
}

namespace {

struct SliceBuffers {
  std::vector<double> h, omega, f, grad_h, grad_omega;
  KernelScratch scratch;

  explicit SliceBuffers(int dim) {
    const auto k = static_cast<std::size_t>(dim);
    const auto m = static_cast<std::size_t>(pair_count(dim));
    h.resize(k);
    f.resize(k);
    grad_h.resize(k);
    omega.resize(m);
    grad_omega.resize(m);
    scratch.resize(dim);
  }
};

double eval_slice(const LatentPaths& x, const Eigen::MatrixXd& factors, int t,
                  PathMatrix* gradient, SliceBuffers& buf) {
  const int dim = x.dim;
  const int m = pair_count(dim);
  x.slice_into(t, buf.h, buf.omega);
  for (int i = 0; i < dim; ++i) buf.f[i] = factors(i, t);
  if (!gradient) {
    return log_density_and_gradients(buf.h, buf.omega, buf.f, {}, {}, buf.scratch);
  }
  const double value =
      log_density_and_gradients(buf.h, buf.omega, buf.f, buf.grad_h, buf.grad_omega, buf.scratch);
  for (int i = 0; i < dim; ++i) (*gradient)(i, t) = buf.grad_h[i];
  for (int k = 0; k < m; ++k) {
    (*gradient)(dim + k, t) = buf.grad_omega[k] * dangle_ddelta(x.values(dim + k, t));
  }
  return value;
}

void check_shape(const LatentPaths& x, const Eigen::MatrixXd& factors) {
  if (factors.rows() != x.dim || factors.cols() != x.horizon()) {
    throw std::invalid_argument("FactorLikelihood: factors must be K x T");
  }
}

}  // namespace

double FactorLikelihood::evaluate(const LatentPaths& x, PathMatrix* gradient) const {
  check_shape(x, factors_);
  const int horizon = x.horizon();
  if (gradient) gradient->resize(x.n_paths(), horizon);
  std::vector<double> values(static_cast<std::size_t>(horizon));
#pragma omp parallel
  {
    SliceBuffers buf(x.dim);
#pragma omp for schedule(static)
    for (int t = 0; t < horizon; ++t) values[t] = eval_slice(x, factors_, t, gradient, buf);
  }
  // fixed-order reduction keeps the result independent of the thread count
  double total = 0.0;
  for (double v : values) total += v;
  return total;
}

double FactorLikelihood::evaluate_serial(const LatentPaths& x, PathMatrix* gradient) const {
  check_shape(x, factors_);
  if (gradient) gradient->resize(x.n_paths(), x.horizon());
  SliceBuffers buf(x.dim);
  double total = 0.0;
  for (int t = 0; t < x.horizon(); ++t) total += eval_slice(x, factors_, t, gradient, buf);
  return total;
}

Eigen::VectorXd FactorLikelihood::slice_values(const LatentPaths& x) const {
  check_shape(x, factors_);
  Eigen::VectorXd out(x.horizon());
  SliceBuffers buf(x.dim);
  for (int t = 0; t < x.horizon(); ++t) out[t] = eval_slice(x, factors_, t, nullptr, buf);
  return out;
}

}  // namespace msv
