#pragma once

// Effective sample sizes of posterior draws.

#include "msv/model.hpp"

#include <span>
#include <string>
#include <vector>

namespace msv {

struct EssEstimate {
  double ess = 0.0;
  bool degenerate = false;  // zero-variance chain; ess is left at 0
};

/// Geyer's initial monotone sequence estimator.
EssEstimate effective_sample_size(std::span<const double> chain);

struct EssRow {
  std::string name;
  EssEstimate estimate;
};

struct EssTable {
  std::vector<EssRow> rows;
  double min_ess = 0.0;
  double max_ess = 0.0;
  std::string min_name;
  double seconds = 0.0;
  double seconds_per_min_ess = 0.0;
};

inline constexpr std::size_t kMinDiagnosticDraws = 100;

/// Named scalar traces monitored by ess_table(): the upper triangle of
/// Sigma_T, then persistence, level and innovation sd of every path, the
/// idiosyncratic variance and the free loadings.
std::vector<std::pair<std::string, std::vector<double>>> monitored_traces(
    const PosteriorDraws& draws);

/// Throws ConfigError with fewer than kMinDiagnosticDraws draws.
EssTable ess_table(const PosteriorDraws& draws, double seconds);

}  // namespace msv
