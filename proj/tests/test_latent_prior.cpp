#include "msv/errors.hpp"
#include "msv/latent_prior.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

using namespace msv;

namespace {
constexpr double kHalfPi = std::numbers::pi / 2;

ArParams make_params(double phi, double level, double sigma) {
  return {transformed_from_persistence(phi), level, sigma};
}

Eigen::VectorXd row(const PathMatrix& m, int p) { return m.row(p).transpose(); }
}  // namespace

TEST(AngleTransform, ZeroMapsToZero) { EXPECT_EQ(angle_from_delta(0.0), 0.0); }

TEST(AngleTransform, SaturatesBelowHalfPi) {
  EXPECT_LT(angle_from_delta(50.0), kHalfPi);
  EXPECT_NEAR(angle_from_delta(50.0), kHalfPi, 1e-15);
  EXPECT_TRUE(std::isfinite(angle_from_delta(1e6)));
  EXPECT_TRUE(std::isfinite(angle_from_delta(-1e6)));
}

TEST(AngleTransform, ValueAtOne) {
  // (pi/2) (e - 1) / (e + 1)
  const double e = std::exp(1.0);
  EXPECT_NEAR(angle_from_delta(1.0), kHalfPi * (e - 1) / (e + 1), 1e-15);
  EXPECT_NEAR(angle_from_delta(1.0), 0.7258919, 1e-7);
  EXPECT_NEAR(delta_from_angle(angle_from_delta(1.0)), 1.0, 1e-14);
}

TEST(AngleTransform, RoundTripAcrossTheInterval) {
  for (double w = -kHalfPi + 1e-6; w < kHalfPi - 1e-6; w += 1e-3) {
    EXPECT_NEAR(angle_from_delta(delta_from_angle(w)), w, 1e-12);
  }
}

TEST(AngleDerivative, Values) {
  EXPECT_NEAR(dangle_ddelta(0.0), std::numbers::pi / 4, 1e-16);
  EXPECT_LT(dangle_ddelta(50.0), 1e-20);
  EXPECT_LT(dangle_ddelta(-50.0), 1e-20);
  const double h = 1e-5;
  EXPECT_NEAR(dangle_ddelta(1.0), (angle_from_delta(1.0 + h) - angle_from_delta(1.0 - h)) / (2 * h), 1e-8);
}

TEST(PersistenceTransform, Properties) {
  EXPECT_EQ(persistence_from_transformed(0.0), 0.0);
  double prev = -1.0;
  for (double x = -30; x <= 30; x += 0.25) {
    const double phi = persistence_from_transformed(x);
    const double e = std::exp(x);
    EXPECT_NEAR(phi, (e - 1) / (e + 1), 1e-15);
    EXPECT_GE(phi, prev);
    EXPECT_LE(std::abs(phi), 1.0);
    prev = phi;
  }
  for (double x : {-40.0, -3.0, 0.5, 3.0, 12.0, 30.0}) {
    ArParams p{x, 0.0, 1.0};
    // 1 - tanh^2(x/2) = 1 / cosh^2(x/2) and 1 - tanh(x/2) = 2 / (1 + e^x)
    const double c = std::cosh(x / 2);
    EXPECT_NEAR(p.one_minus_phi_sq() * c * c, 1.0, 1e-13);
    EXPECT_NEAR(p.one_minus_phi() * (1 + std::exp(x)) / 2, 1.0, 1e-13);
  }
}

TEST(PriorLogDensity, SinglePointStandardNormal) {
  LatentPaths x(1, 1);  // one h path
  x.values.setZero();
  EXPECT_NEAR(prior_log_density(x, {ArParams{0.0, 0.0, 1.0}}), -0.5 * std::log(2 * std::numbers::pi), 1e-15);
}

TEST(PriorLogDensity, IndependentAtZeroPersistence) {
  const Eigen::Vector3d path(0.3, -1.2, 0.7);
  const ArParams p{0.0, 0.1, 1.3};
  double want = 0.0;
  for (double v : path) want += oracle::normal_log_density(v, 0.1, 1.69);
  EXPECT_NEAR(ar1_log_density({path.data(), 3}, p), want, 1e-13);
}

TEST(PriorLogDensity, MatchesDenseGaussian) {
  Rng rng(3);
  for (int horizon : {2, 10, 25, 50}) {
    const ArParams p = make_params(0.8, -0.4, 0.3);
    const PathMatrix m = sample_prior({p}, horizon, rng);
    const double want = oracle::ar1_log_density(row(m, 0), p.phi(), p.level, p.sigma);
    EXPECT_NEAR(ar1_log_density({m.row(0).data(), static_cast<std::size_t>(horizon)}, p), want,
                1e-10 * std::abs(want));
  }
}

TEST(PriorLogDensity, SumsOverPaths) {
  Rng rng(4);
  const PathParams params = {make_params(0.9, 0, 0.2), make_params(0.5, 1, 0.4), make_params(-0.3, 0, 1)};
  const LatentPaths x(2, sample_prior(params, 20, rng));
  double want = 0.0;
  for (int p = 0; p < 3; ++p) {
    want += oracle::ar1_log_density(row(x.values, p), params[p].phi(), params[p].level, params[p].sigma);
  }
  EXPECT_NEAR(prior_log_density(x, params), want, 1e-10 * std::abs(want));
}

TEST(TridiagonalGaussian, PrecisionInvertsStationaryCovariance) {
  for (int horizon : {1, 2, 7}) {
    const ArParams p = make_params(0.7, 0.5, 0.4);
    const TridiagonalGaussian g = TridiagonalGaussian::from_params(p, horizon);
    const Eigen::MatrixXd prod = g.dense_precision() * oracle::ar1_covariance(horizon, p.phi(), p.sigma);
    EXPECT_LT((prod - Eigen::MatrixXd::Identity(horizon, horizon)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_TRUE(g.mean.isConstant(0.5));
  }
}

namespace {
// Dense version of the proposal draw, with the same normals.
Eigen::VectorXd dense_proposal(const ArParams& p, double zeta, const Eigen::VectorXd& u,
                               const Eigen::VectorXd& z) {
  const int n = static_cast<int>(u.size());
  const Eigen::MatrixXd q = oracle::ar1_covariance(n, p.phi(), p.sigma).inverse();
  const Eigen::MatrixXd a = (2.0 / zeta) * Eigen::MatrixXd::Identity(n, n) + q;
  const Eigen::LLT<Eigen::MatrixXd> llt(a);
  const Eigen::VectorXd mean =
      llt.solve((2.0 / zeta) * u + q * Eigen::VectorXd::Constant(n, p.level));
  const Eigen::MatrixXd l = llt.matrixL();
  return mean + l.transpose().triangularView<Eigen::Upper>().solve(z);
}
}  // namespace

TEST(SolveAndSample, MatchesDenseComputationWithSameNormals) {
  Rng rng(21);
  for (int horizon : {1, 2, 6}) {
    const ArParams p = make_params(0.85, 0.3, 0.25);
    PathMatrix u(1, horizon), z(1, horizon);
    for (int t = 0; t < horizon; ++t) {
      u(0, t) = standard_normal(rng);
      z(0, t) = standard_normal(rng);
    }
    const PathMatrix got = solve_and_sample({p}, 0.7, u, z);
    const Eigen::VectorXd want = dense_proposal(p, 0.7, row(u, 0), row(z, 0));
    EXPECT_LT((row(got, 0) - want).cwiseAbs().maxCoeff(), 1e-10) << horizon;
  }
}

TEST(SolveAndSample, FlatPriorLimitCentresOnU) {
  const ArParams p = make_params(0.5, 0.0, 1e6);
  PathMatrix u(1, 5);
  u << 1, 2, 3, 4, 5;
  const PathMatrix zero = PathMatrix::Zero(1, 5);
  const PathMatrix mean = solve_and_sample({p}, 0.4, u, zero);
  EXPECT_LT((mean - u).cwiseAbs().maxCoeff(), 1e-9);
  PathMatrix e = PathMatrix::Zero(1, 5);
  e(0, 2) = 1.0;
  const PathMatrix shifted = solve_and_sample({p}, 0.4, u, e);
  // covariance (zeta/2) I: a unit normal moves the draw by sqrt(zeta/2)
  EXPECT_NEAR(shifted(0, 2) - mean(0, 2), std::sqrt(0.2), 1e-9);
}

TEST(SolveAndSample, SmallStepReturnsU) {
  const ArParams p = make_params(0.9, 1.0, 0.3);
  Rng rng(1);
  PathMatrix u(1, 8);
  for (int t = 0; t < 8; ++t) u(0, t) = standard_normal(rng);
  const PathMatrix zero = PathMatrix::Zero(1, 8);
  for (double zeta : {1e-2, 1e-4, 1e-6}) {
    const PathMatrix y = solve_and_sample({p}, zeta, u, zero);
    EXPECT_LT((y - u).cwiseAbs().maxCoeff(), 50 * zeta);
  }
}

TEST(SolveAndSample, ParallelMatchesSerialBitwise) {
  Rng rng(2);
  PathParams params;
  for (int p = 0; p < 21; ++p) params.push_back(make_params(0.5 + 0.02 * p, 0.1 * p, 0.1 + 0.01 * p));
  PathMatrix u(21, 300), z(21, 300);
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    u.data()[i] = standard_normal(rng);
    z.data()[i] = standard_normal(rng);
  }
  const int saved = omp_get_max_threads();
  omp_set_num_threads(4);
  const PathMatrix par = solve_and_sample(params, 0.3, u, z);
  omp_set_num_threads(saved);
  const PathMatrix ser = solve_and_sample_serial(params, 0.3, u, z);
  EXPECT_TRUE((par.array() == ser.array()).all());
}

TEST(SolveAndSample, InvalidParametersRaiseNumericalError) {
  PathMatrix u = PathMatrix::Zero(1, 4);
  const ArParams bad{0.0, 0.0, std::nan("")};
  EXPECT_THROW(solve_and_sample({bad}, 0.1, u, u), NumericalError);
}

TEST(SolveAndSample, RuntimeGrowsLinearlyInLength) {
  const PathParams params(6, make_params(0.9, 0.0, 0.2));
  auto time_for = [&](int horizon) -> double {
    PathMatrix u = PathMatrix::Zero(6, horizon);
    std::vector<double> samples;
    for (int rep = 0; rep < 7; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int k = 0; k < 20; ++k) {
        const PathMatrix y = solve_and_sample_serial(params, 0.5, u, u);
        EXPECT_TRUE(std::isfinite(y(0, 0)));
      }
      samples.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::nth_element(samples.begin(), samples.begin() + 3, samples.end());
    return samples[3];
  };
  const double ratio = time_for(10000) / time_for(1000);
  EXPECT_LE(ratio, 12.0);
}

TEST(SamplePrior, WhiteNoiseMoments) {
  Rng rng(30);
  const PathMatrix m = sample_prior({ArParams{0.0, 0.0, 1.0}}, 100000, rng);
  const Eigen::VectorXd x = row(m, 0);
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  EXPECT_NEAR(mean, 0.0, 3 * std::sqrt(1.0 / 1e5));
  EXPECT_NEAR(var, 1.0, 3 * std::sqrt(2.0 / 1e5));
}

TEST(SamplePrior, PersistentPathAutocorrelationAndVariance) {
  Rng rng(31);
  const ArParams p = make_params(0.95, 0.0, 0.2);
  const int n = 400000;
  const Eigen::VectorXd x = row(sample_prior({p}, n, rng), 0);
  const double mean = x.mean();
  const Eigen::ArrayXd c = x.array() - mean;
  const double var = c.square().mean();
  const double lag1 = (c.head(n - 1) * c.tail(n - 1)).mean() / var;
  // Bartlett: se(rho_1) ~ sqrt((1 - rho^2) / n)
  EXPECT_NEAR(lag1, 0.95, 3 * std::sqrt((1 - 0.95 * 0.95) / n));
  const double stationary = 0.04 / (1 - 0.95 * 0.95);
  // variance of the sample variance of an AR(1): 2 v^2 (1 + phi^2) / (n (1 - phi^2))
  EXPECT_NEAR(var, stationary, 3 * stationary * std::sqrt(2 * (1 + 0.9025) / (n * (1 - 0.9025))));
}
