// Serial references vs the OpenMP paths, and the fused O(K^2) kernel vs the
// dense O(K^3) oracle. Thread count follows OMP_NUM_THREADS.

#include "msv/givens.hpp"
#include "msv/latent_prior.hpp"
#include "msv/likelihood.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <benchmark/benchmark.h>

using namespace msv;

namespace {

struct LikelihoodCase {
  LatentPaths x;
  Eigen::MatrixXd factors;

  LikelihoodCase(int dim, int horizon) : x(dim, horizon), factors(dim, horizon) {
    Rng rng(11);
    for (Eigen::Index i = 0; i < x.values.size(); ++i) x.values.data()[i] = 0.3 * standard_normal(rng);
    for (Eigen::Index i = 0; i < factors.size(); ++i) factors.data()[i] = standard_normal(rng);
  }
};

void BM_LikelihoodSerial(benchmark::State& state) {
  const LikelihoodCase c(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const FactorLikelihood lik(c.factors);
  PathMatrix grad;
  for (auto _ : state) benchmark::DoNotOptimize(lik.evaluate_serial(c.x, &grad));
}

void BM_LikelihoodParallel(benchmark::State& state) {
  const LikelihoodCase c(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const FactorLikelihood lik(c.factors);
  PathMatrix grad;
  for (auto _ : state) benchmark::DoNotOptimize(lik.evaluate(c.x, &grad));
}

struct SolveCase {
  PathParams params;
  PathMatrix u, noise;

  SolveCase(int dim, int horizon) {
    Rng rng(12);
    const int n = path_count(dim);
    params.assign(static_cast<std::size_t>(n), ArParams{transformed_from_persistence(0.95), 0.0, 0.2});
    u.resize(n, horizon);
    noise.resize(n, horizon);
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      u.data()[i] = standard_normal(rng);
      noise.data()[i] = standard_normal(rng);
    }
  }
};

void BM_SolveSerial(benchmark::State& state) {
  const SolveCase c(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(solve_and_sample_serial(c.params, 0.5, c.u, c.noise));
}

void BM_SolveParallel(benchmark::State& state) {
  const SolveCase c(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(solve_and_sample(c.params, 0.5, c.u, c.noise));
}

void BM_FusedKernel(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  Rng rng(13);
  const SpectralCov cov = testing_support::random_cov(dim, rng);
  const Eigen::VectorXd r = testing_support::normal_vector(dim, rng);
  KernelScratch scratch;
  std::vector<double> gh(static_cast<std::size_t>(dim));
  std::vector<double> ga(static_cast<std::size_t>(pair_count(dim)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(log_density_and_gradients(
        {cov.log_eigenvalues.data(), static_cast<std::size_t>(dim)},
        {cov.angles.data(), static_cast<std::size_t>(cov.angles.size())},
        {r.data(), static_cast<std::size_t>(dim)}, gh, ga, scratch));
  }
}

void BM_DenseOracle(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  Rng rng(13);
  const SpectralCov cov = testing_support::random_cov(dim, rng);
  const Eigen::VectorXd r = testing_support::normal_vector(dim, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(oracle::density_and_gradient(cov.log_eigenvalues, cov.angles, r).value);
  }
}

}  // namespace

BENCHMARK(BM_LikelihoodSerial)->Args({5, 2000})->Args({20, 2000})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LikelihoodParallel)->Args({5, 2000})->Args({20, 2000})->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_SolveSerial)->Args({5, 2000})->Args({20, 2000})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SolveParallel)->Args({5, 2000})->Args({20, 2000})->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_FusedKernel)->Arg(5)->Arg(10)->Arg(20)->Arg(40)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DenseOracle)->Arg(5)->Arg(10)->Arg(20)->Arg(40)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
