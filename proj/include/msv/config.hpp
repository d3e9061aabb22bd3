#pragma once

// Flat key=value run configuration. Every tunable default is a key; unknown
// keys are rejected.

#include "msv/forecast.hpp"
#include "msv/model.hpp"
#include "msv/simulate.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace msv {

struct RunConfig {
  ModelConfig model;
  SimulationSpec simulation;

  std::string data;        // input returns CSV
  std::string output_dir = "out";
  std::string proxy;       // optional proxy covariance CSV
  int holdout = 0;         // trailing rows kept out of the fit for predictive likelihoods
  int forecast_horizon = 1;
  int n_particles = 10000;
  FilterVariant filter = FilterVariant::auxiliary;
  double resample_fraction = 0.5;
  bool emit_daily_summaries = true;
  int chains = 1;
};

/// Applies one setting. Throws ConfigError on an unknown key or bad value.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Applies "key=value" (used for command-line overrides).
void apply_assignment(RunConfig& config, const std::string& assignment);

/// Reads a config file: one key=value per line, '#' starts a comment.
void parse_config(std::istream& in, RunConfig& config, const std::string& source = "<stream>");
void load_config(const std::filesystem::path& path, RunConfig& config);

/// Every key with its current value, in a fixed order.
std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& config);

/// Throws ConfigError when the run-level settings are inconsistent.
void validate_run(const RunConfig& config);

}  // namespace msv
