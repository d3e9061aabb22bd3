#pragma once

// p(F | X) = prod_t N(f_t | 0, Sigma_t(x_t)): the likelihood seen by the
// latent-path sampler. Gradients are with respect to the stored path values,
// i.e. log-eigenvalues and transformed angles delta.

#include "msv/latent_prior.hpp"

#include <Eigen/Dense>

namespace msv {

class LikelihoodInterface {
 public:
  virtual ~LikelihoodInterface() = default;

  /// log p(F | X). When gradient is non-null it is resized to the shape of
  /// x.values and filled with d log p / d X.
  virtual double evaluate(const LatentPaths& x, PathMatrix* gradient) const = 0;
};

/// log p(F | X) == value for every X; zero gradient.
class ConstantLikelihood final : public LikelihoodInterface {
 public:
  explicit ConstantLikelihood(double value = 0.0) : value_(value) {}
  double evaluate(const LatentPaths& x, PathMatrix* gradient) const override;

 private:
  double value_;
};

/// Factor likelihood over time slices. Slices are evaluated in parallel with
/// OpenMP; evaluate_serial() is the single-threaded reference and produces
/// bit-identical results.
class FactorLikelihood final : public LikelihoodInterface {
 public:
  /// factors is K x T with column t holding f_t. Not copied.
  explicit FactorLikelihood(const Eigen::MatrixXd& factors) : factors_(factors) {}

  double evaluate(const LatentPaths& x, PathMatrix* gradient) const override;
  double evaluate_serial(const LatentPaths& x, PathMatrix* gradient) const;

  /// Per-slice log-densities, no gradient.
  Eigen::VectorXd slice_values(const LatentPaths& x) const;

 private:
  const Eigen::MatrixXd& factors_;
};

}  // namespace msv
