#include "msv/errors.hpp"
#include "msv/instrumentation.hpp"
#include "msv/model.hpp"
#include "msv/simulate.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>
#include <omp.h>
#include <sys/resource.h>

#include <cmath>
#include <numbers>

using namespace msv;

namespace {

ReturnsPanel small_panel(int horizon, int assets, std::uint64_t seed) {
  SimulationSpec spec;
  spec.assets = assets;
  spec.factors = assets;
  spec.horizon = horizon;
  spec.mode = ModelMode::basic;
  Rng rng(seed);
  return simulate(spec, rng).panel;
}

ModelConfig short_config(int factors, ModelMode mode) {
  ModelConfig c;
  c.factors = factors;
  c.mode = mode;
  c.burn_in = 50;
  c.sampling = 40;
  c.thinning = 2;
  c.tail_window = 20;
  return c;
}

}  // namespace

TEST(ReturnsPanel, ValidateRejectsBadPanels) {
  ReturnsPanel::Values v(2, 2);
  v << 1, 2, 3, 4;
  ReturnsPanel::Mask m(2, 2);
  m << 1, 0, 1, 0;
  EXPECT_THROW(ReturnsPanel(v, m).validate(), DataError);
  m << 1, 1, 1, 1;
  v(0, 1) = std::nan("");
  EXPECT_THROW(ReturnsPanel(v, m).validate(), DataError);
  m(0, 1) = 0;  // NaN under a cleared mask bit is never read
  EXPECT_NO_THROW(ReturnsPanel(v, m).validate());
  EXPECT_EQ(ReturnsPanel(v, m).observed_count(), 3);
  EXPECT_TRUE(ReturnsPanel(v, m).has_missing());
  EXPECT_EQ(ReturnsPanel(v, m).observed_indices(0), std::vector<int>{0});
}

TEST(LogFactorLikelihood, AllMissingIsZero) {
  ReturnsPanel p(ReturnsPanel::Values::Constant(3, 2, 5.0), ReturnsPanel::Mask::Zero(3, 2));
  EXPECT_EQ(log_factor_likelihood(p, Eigen::MatrixXd::Ones(2, 1), 0.3, Eigen::MatrixXd::Ones(1, 3)), 0.0);
}

TEST(LogFactorLikelihood, SingleCellWithZeroLoadings) {
  ReturnsPanel::Mask m = ReturnsPanel::Mask::Zero(2, 2);
  m(1, 0) = 1;
  ReturnsPanel p(ReturnsPanel::Values::Zero(2, 2), m);
  EXPECT_NEAR(log_factor_likelihood(p, Eigen::MatrixXd::Zero(2, 1), 1.0, Eigen::MatrixXd::Ones(1, 2)),
              -0.5 * std::log(2 * std::numbers::pi), 1e-15);
}

TEST(LogFactorLikelihood, MatchesDenseMultivariateNormal) {
  Rng rng(1);
  const int assets = 4, dim = 2, horizon = 6;
  Eigen::MatrixXd b(assets, dim), f(dim, horizon);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = standard_normal(rng);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = standard_normal(rng);
  ReturnsPanel::Values r(horizon, assets);
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = standard_normal(rng);
  const ReturnsPanel panel = ReturnsPanel::complete(r);
  double want = 0.0;
  const Eigen::MatrixXd cov = 0.7 * Eigen::MatrixXd::Identity(assets, assets);
  for (int t = 0; t < horizon; ++t) {
    want += oracle::mvn_log_density(cov, r.row(t).transpose(), b * f.col(t));
  }
  EXPECT_NEAR(log_factor_likelihood(panel, b, 0.7, f), want, 1e-12 * std::abs(want));
}

TEST(ModelConfig, ValidationErrors) {
  ModelConfig c = short_config(2, ModelMode::factor);
  EXPECT_NO_THROW(c.validate(4));
  EXPECT_THROW(c.validate(1), ConfigError);
  c.burn_in = 0;
  EXPECT_THROW(c.validate(4), ConfigError);
  c = short_config(2, ModelMode::basic);
  EXPECT_THROW(c.validate(3), ConfigError);
  c = short_config(2, ModelMode::factor);
  c.thinning = 0;
  EXPECT_THROW(c.validate(4), ConfigError);
  c = short_config(2, ModelMode::factor);
  c.fix_sigma2_zero = true;
  EXPECT_THROW(c.validate(4), ConfigError);
  c = short_config(2, ModelMode::factor);
  c.langevin_target = 1.2;
  EXPECT_THROW(c.validate(4), ConfigError);
}

TEST(McmcRun, ZeroSamplingReturnsNoDraws) {
  const ReturnsPanel panel = small_panel(30, 2, 1);
  ModelConfig c = short_config(2, ModelMode::basic);
  c.sampling = 0;
  const PosteriorDraws d = mcmc_run(panel, c);
  EXPECT_TRUE(d.empty());
}

TEST(McmcRun, DrawCountAndFiniteness) {
  const ReturnsPanel panel = small_panel(40, 3, 2);
  const ModelConfig c = short_config(3, ModelMode::basic);
  const PosteriorDraws d = mcmc_run(panel, c);
  ASSERT_EQ(d.draws.size(), 20u);
  for (const Draw& draw : d.draws) {
    EXPECT_TRUE(draw.last_state.allFinite());
    EXPECT_TRUE(draw.last_factor.allFinite());
    EXPECT_TRUE(std::isfinite(draw.log_likelihood));
    EXPECT_GT(draw.sigma2, 0.0);
    for (const ArParams& p : draw.params) EXPECT_GT(p.sigma, 0.0);
  }
  EXPECT_GT(d.block_seconds.at("latent_paths"), 0.0);
  for (int t : {0, 39}) {
    const VolatilitySummary s = volatility_path_summary(d, t);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.mean_covariance);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(McmcRun, ThreadCountDoesNotChangeDraws) {
  SimulationSpec spec = bundle_spec();
  spec.horizon = 60;
  Rng rng(3);
  const ReturnsPanel panel = simulate(spec, rng).panel;
  ModelConfig c = short_config(2, ModelMode::factor);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const PosteriorDraws a = mcmc_run(panel, c);
  omp_set_num_threads(4);
  const PosteriorDraws b = mcmc_run(panel, c);
  omp_set_num_threads(saved);
  ASSERT_EQ(a.draws.size(), b.draws.size());
  for (std::size_t i = 0; i < a.draws.size(); ++i) {
    EXPECT_TRUE((a.draws[i].last_state.array() == b.draws[i].last_state.array()).all());
    EXPECT_TRUE((a.draws[i].loadings.array() == b.draws[i].loadings.array()).all());
    EXPECT_EQ(a.draws[i].sigma2, b.draws[i].sigma2);
  }
}

TEST(McmcRun, ZeroAngleModelKeepsAnglesAtZero) {
  const ReturnsPanel panel = small_panel(40, 3, 4);
  ModelConfig c = short_config(3, ModelMode::basic);
  c.zero_angles = true;
  const PosteriorDraws d = mcmc_run(panel, c);
  for (const Draw& draw : d.draws) EXPECT_TRUE(draw.last_state.tail(3).isZero(0.0));
  const VolatilitySummary s = volatility_path_summary(d, 10);
  EXPECT_EQ(s.mean_covariance(0, 1), 0.0);
}

TEST(McmcRun, FixedZeroNoisePinsFactorsToData) {
  const ReturnsPanel panel = small_panel(30, 2, 5);
  ModelConfig c = short_config(2, ModelMode::basic);
  c.fix_sigma2_zero = true;
  MsvSampler sampler(panel, c);
  Rng rng(1);
  sampler.sweep(rng);
  for (int t = 0; t < 30; ++t) {
    for (int k = 0; k < 2; ++k) EXPECT_EQ(sampler.state().factors(k, t), panel.values(t, k));
  }
  EXPECT_EQ(sampler.state().sigma2, 0.0);
}

TEST(MsvSampler, MaskedValuesAreNeverRead) {
  ReturnsPanel a = small_panel(40, 3, 6);
  for (int t : {3, 7, 8}) {
    for (int n = 0; n < 3; ++n) a.observed(t, n) = 0;  // whole rows missing
  }
  a.observed(12, 1) = 0;
  ReturnsPanel b = a;
  for (int t : {3, 7, 8}) b.values.row(t).setConstant(1e6);
  b.values(12, 1) = std::nan("");
  const ModelConfig c = short_config(3, ModelMode::basic);
  MsvSampler sa(a, c), sb(b, c);
  Rng ra(9), rb(9);
  for (int i = 0; i < 10; ++i) {
    sa.sweep(ra);
    sb.sweep(rb);
  }
  EXPECT_TRUE((sa.state().x.values.array() == sb.state().x.values.array()).all());
  EXPECT_TRUE((sa.state().factors.array() == sb.state().factors.array()).all());
  EXPECT_EQ(sa.state().sigma2, sb.state().sigma2);
}

TEST(MsvSampler, MetropolisSweepsUseNoDenseFactorisation) {
  const ReturnsPanel panel = small_panel(50, 3, 7);
  ModelConfig c = short_config(3, ModelMode::basic);
  MsvSampler s(panel, c);
  Rng rng(2);
  const long f0 = instrumentation::counters().dense_factorizations.load();
  const long r0 = instrumentation::counters().dense_reconstructions.load();
  for (int i = 0; i < 5; ++i) s.sweep(rng);
  EXPECT_EQ(instrumentation::counters().dense_factorizations.load(), f0);
  EXPECT_EQ(instrumentation::counters().dense_reconstructions.load(), r0);
}

TEST(MsvSampler, LargeStateSweepStaysWithinLinearMemory) {
  // K = 50, T = 2000: X holds 1275 x 2000 = 2.55 million entries.
  const int dim = 50, horizon = 2000;
  Rng rng(8);
  ReturnsPanel::Values v(horizon, dim);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = standard_normal(rng);
  const ReturnsPanel panel = ReturnsPanel::complete(v);
  ModelConfig c;
  c.factors = dim;
  c.mode = ModelMode::basic;
  c.track_sigma_path = false;
  MsvSampler s(panel, c);
  ASSERT_EQ(s.state().x.values.size(), 2550000);

  rusage before{};
  getrusage(RUSAGE_SELF, &before);
  const long f0 = instrumentation::counters().dense_factorizations.load();
  const long r0 = instrumentation::counters().dense_reconstructions.load();
  s.sweep(rng);
  rusage after{};
  getrusage(RUSAGE_SELF, &after);
  EXPECT_EQ(instrumentation::counters().dense_factorizations.load(), f0);
  EXPECT_EQ(instrumentation::counters().dense_reconstructions.load(), r0);
  // peak growth bounded by a handful of X-sized buffers (an O(T K^3) or
  // dense T K(K+1)/2-square object would be orders of magnitude larger)
  const double x_bytes = 2550000.0 * sizeof(double);
  const double grown = static_cast<double>(after.ru_maxrss - before.ru_maxrss) * 1024.0;
  EXPECT_LT(grown, 12 * x_bytes);
  EXPECT_TRUE(s.state().x.values.allFinite());
}

TEST(VolatilitySummary, SingleZeroAngleDraw) {
  PosteriorDraws d;
  d.factors = 3;
  d.assets = 3;
  d.horizon = 2;
  Draw draw;
  PathMatrix x = PathMatrix::Zero(6, 2);
  x(0, 1) = 0.4;
  x(1, 1) = -1.0;
  x(2, 1) = 0.2;
  draw.full_x = x;
  d.draws.push_back(draw);
  const VolatilitySummary s = volatility_path_summary(d, 1);
  EXPECT_NEAR(s.volatilities[0], std::exp(0.2), 1e-15);
  EXPECT_NEAR(s.volatilities[1], std::exp(-0.5), 1e-15);
  EXPECT_NEAR(s.volatilities[2], std::exp(0.1), 1e-15);
  EXPECT_TRUE(s.mean_correlation.isIdentity(0.0));
  EXPECT_TRUE(s.correlation_of_mean.isIdentity(0.0));
}

TEST(VolatilitySummary, TwoIdenticalDrawsEqualOne) {
  Rng rng(10);
  PosteriorDraws one;
  one.factors = 2;
  one.assets = 2;
  one.horizon = 3;
  Draw draw;
  PathMatrix x(3, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = standard_normal(rng);
  draw.full_x = x;
  one.draws.push_back(draw);
  PosteriorDraws two = one;
  two.draws.push_back(draw);
  for (int t = 0; t < 3; ++t) {
    const VolatilitySummary a = volatility_path_summary(one, t);
    const VolatilitySummary b = volatility_path_summary(two, t);
    EXPECT_LT((a.mean_covariance - b.mean_covariance).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((a.mean_correlation - b.mean_correlation).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(VolatilitySummary, MeanMatchesQuadratureForGaussianToy) {
  // K = 2 with x_t ~ N(m, s^2 I) draws; E[Sigma] by Gauss-Hermite quadrature.
  const Eigen::Vector3d m(0.3, -0.6, 0.8);
  const double sd = 0.4;
  std::vector<double> nodes, weights;
  oracle::gauss_hermite(40, nodes, weights);
  Eigen::Matrix2d want = Eigen::Matrix2d::Zero();
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    for (std::size_t b = 0; b < nodes.size(); ++b) {
      for (std::size_t c = 0; c < nodes.size(); ++c) {
        const Eigen::Vector3d x = m + sd * Eigen::Vector3d(nodes[a], nodes[b], nodes[c]);
        const double w = angle_from_delta(x[2]);
        want += weights[a] * weights[b] * weights[c] *
                oracle::covariance(x.head(2), Eigen::VectorXd::Constant(1, w));
      }
    }
  }
  PosteriorDraws d;
  d.factors = 2;
  d.assets = 2;
  d.horizon = 1;
  Rng rng(11);
  const int n = 20000;
  std::vector<double> c00, c01;
  for (int i = 0; i < n; ++i) {
    Draw draw;
    PathMatrix x(3, 1);
    for (int p = 0; p < 3; ++p) x(p, 0) = m[p] + sd * standard_normal(rng);
    draw.full_x = x;
    const Eigen::MatrixXd cov =
        oracle::covariance(x.col(0).head(2), Eigen::VectorXd::Constant(1, angle_from_delta(x(2, 0))));
    c00.push_back(cov(0, 0));
    c01.push_back(cov(0, 1));
    d.draws.push_back(std::move(draw));
  }
  const VolatilitySummary s = volatility_path_summary(d, 0);
  EXPECT_NEAR(s.mean_covariance(0, 1), want(0, 1), 4 * oracle::batch_means(c01).se);
  EXPECT_NEAR(s.mean_covariance(0, 0), want(0, 0), 4 * oracle::batch_means(c00).se);
}

TEST(VolatilitySummary, EmptyDrawsRejected) {
  PosteriorDraws d;
  EXPECT_THROW(volatility_path_summary(d, 0), std::invalid_argument);
}
