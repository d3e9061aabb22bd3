#include "msv/diagnostics.hpp"

#include "msv/errors.hpp"
#include "msv/givens.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace msv {

EssEstimate effective_sample_size(std::span<const double> chain) {
  const std::size_t n = chain.size();
  if (n < 2) return {static_cast<double>(n), true};
  double mean = 0.0;
  for (double v : chain) mean += v;
  mean /= static_cast<double>(n);

  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) s += (chain[t] - mean) * (chain[t + lag] - mean);
    return s / static_cast<double>(n);
  };
  const auto [lo, hi] = std::minmax_element(chain.begin(), chain.end());
  const double gamma0 = autocov(0);
  // spread at the level of rounding error counts as a constant chain
  const double scale = std::max(std::abs(*lo), std::abs(*hi));
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * scale;
  if (*hi - *lo <= floor || !(gamma0 > floor * floor)) return {0.0, true};

  // sums of adjacent autocovariance pairs, truncated at the first
  // non-positive pair and forced to be non-increasing
  double sum = 0.0;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    double pair = autocov(2 * m) + autocov(2 * m + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev);
    prev = pair;
    sum += pair;
  }
  const double tau = std::max((-gamma0 + 2.0 * sum) / gamma0, 1.0 / static_cast<double>(n));
  return {static_cast<double>(n) / tau, false};
}

std::vector<std::pair<std::string, std::vector<double>>> monitored_traces(
    const PosteriorDraws& draws) {
  std::vector<std::pair<std::string, std::vector<double>>> out;
  const int dim = draws.factors;
  const std::size_t n = draws.draws.size();
  auto add = [&](std::string name) -> std::vector<double>& {
    out.emplace_back(std::move(name), std::vector<double>());
    out.back().second.reserve(n);
    return out.back().second;
  };

  std::vector<Eigen::MatrixXd> sigma_last(n);
  for (std::size_t d = 0; d < n; ++d) {
    sigma_last[d] = reconstruct(spectral_from_state(dim, draws.draws[d].last_state));
  }
  for (int i = 0; i < dim; ++i) {
    for (int j = i; j < dim; ++j) {
      auto& trace = add("sigma_T[" + std::to_string(i) + "," + std::to_string(j) + "]");
      for (std::size_t d = 0; d < n; ++d) trace.push_back(sigma_last[d](i, j));
    }
  }
  const int active = draws.zero_angles ? dim : path_count(dim);
  for (int p = 0; p < active; ++p) {
    const std::string tag = "[" + std::to_string(p) + "]";
    auto& phi = add("phi" + tag);
    for (const Draw& d : draws.draws) phi.push_back(d.params[p].phi());
    auto& level = add("level" + tag);
    for (const Draw& d : draws.draws) level.push_back(d.params[p].level);
    auto& sd = add("sigma_path" + tag);
    for (const Draw& d : draws.draws) sd.push_back(d.params[p].sigma);
  }
  auto& s2 = add("sigma2");
  for (const Draw& d : draws.draws) s2.push_back(d.sigma2);
  if (draws.mode == ModelMode::factor) {
    for (int r = 0; r < draws.assets; ++r) {
      for (int k = 0; k < dim; ++k) {
        if (loading_is_fixed(r, k)) continue;
        auto& b = add("loading[" + std::to_string(r) + "," + std::to_string(k) + "]");
        for (const Draw& d : draws.draws) b.push_back(d.loadings(r, k));
      }
    }
  }
  return out;
}

EssTable ess_table(const PosteriorDraws& draws, double seconds) {
  if (draws.draws.size() < kMinDiagnosticDraws) {
    throw ConfigError("diagnostics need at least " + std::to_string(kMinDiagnosticDraws) +
                      " draws, got " + std::to_string(draws.draws.size()));
  }
  EssTable table;
  table.seconds = seconds;
  table.min_ess = std::numeric_limits<double>::infinity();
  for (auto& [name, trace] : monitored_traces(draws)) {
    const EssEstimate e = effective_sample_size(trace);
    if (!e.degenerate) {
      if (e.ess < table.min_ess) {
        table.min_ess = e.ess;
        table.min_name = name;
      }
      table.max_ess = std::max(table.max_ess, e.ess);
    }
    table.rows.push_back({name, e});
  }
  if (!std::isfinite(table.min_ess)) table.min_ess = 0.0;
  table.seconds_per_min_ess = table.min_ess > 0.0 ? seconds / table.min_ess : 0.0;
  return table;
}

}  // namespace msv
