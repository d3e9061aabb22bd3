#include "msv/config.hpp"

#include "msv/errors.hpp"
#include "msv/io.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>

namespace msv {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const DataError&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

long long to_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  const long long x = to_integer(key, v);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
    throw ConfigError(key + ": value out of range");
  }
  return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

struct Key {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Member>
Key double_key(Member m) {
  return {[m](RunConfig& c, const std::string& k, const std::string& v) { m(c) = to_double(k, v); },
          [m](const RunConfig& c) { return format_double(m(const_cast<RunConfig&>(c))); }};
}

template <typename Member>
Key int_key(Member m) {
  return {[m](RunConfig& c, const std::string& k, const std::string& v) { m(c) = to_int(k, v); },
          [m](const RunConfig& c) { return std::to_string(m(const_cast<RunConfig&>(c))); }};
}

template <typename Member>
Key bool_key(Member m) {
  return {[m](RunConfig& c, const std::string& k, const std::string& v) { m(c) = to_bool(k, v); },
          [m](const RunConfig& c) { return bool_text(m(const_cast<RunConfig&>(c))); }};
}

template <typename Member>
Key string_key(Member m) {
  return {[m](RunConfig& c, const std::string&, const std::string& v) { m(c) = v; },
          [m](const RunConfig& c) { return m(const_cast<RunConfig&>(c)); }};
}

#define MEMBER(expr) [](RunConfig& c) -> auto& { return expr; }

const std::vector<std::pair<std::string, Key>>& keys() {
  static const std::vector<std::pair<std::string, Key>> table = {
      {"data", string_key(MEMBER(c.data))},
      {"output_dir", string_key(MEMBER(c.output_dir))},
      {"proxy", string_key(MEMBER(c.proxy))},
      {"factors", int_key(MEMBER(c.model.factors))},
      {"mode",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "basic") c.model.mode = ModelMode::basic;
          else if (v == "factor") c.model.mode = ModelMode::factor;
          else throw ConfigError(k + ": expected basic or factor, got '" + v + "'");
        },
        [](const RunConfig& c) {
          return std::string(c.model.mode == ModelMode::basic ? "basic" : "factor");
        }}},
      {"zero_angles", bool_key(MEMBER(c.model.zero_angles))},
      {"burn_in", int_key(MEMBER(c.model.burn_in))},
      {"sampling", int_key(MEMBER(c.model.sampling))},
      {"thinning", int_key(MEMBER(c.model.thinning))},
      {"seed",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          const long long s = to_integer(k, v);
          if (s < 0) throw ConfigError(k + ": must be non-negative");
          c.model.seed = static_cast<std::uint64_t>(s);
        },
        [](const RunConfig& c) { return std::to_string(c.model.seed); }}},
      {"x_use_gradient", bool_key(MEMBER(c.model.x_use_gradient))},
      {"langevin_target", double_key(MEMBER(c.model.langevin_target))},
      {"random_walk_target", double_key(MEMBER(c.model.random_walk_target))},
      {"persistence_target", double_key(MEMBER(c.model.persistence_target))},
      {"adapt_exponent", double_key(MEMBER(c.model.adapt_exponent))},
      {"x_initial_step", double_key(MEMBER(c.model.x_initial_step))},
      {"factor_initial_step", double_key(MEMBER(c.model.factor_initial_step))},
      {"persistence_initial_sd", double_key(MEMBER(c.model.persistence_initial_sd))},
      {"factor_sampler",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "metropolis") c.model.factor_sampler = FactorSampler::metropolis;
          else if (v == "gibbs") c.model.factor_sampler = FactorSampler::gibbs;
          else throw ConfigError(k + ": expected metropolis or gibbs, got '" + v + "'");
        },
        [](const RunConfig& c) {
          return std::string(c.model.factor_sampler == FactorSampler::gibbs ? "gibbs"
                                                                            : "metropolis");
        }}},
      {"loadings_prior_variance", double_key(MEMBER(c.model.loadings_prior_variance))},
      {"sigma2_shape", double_key(MEMBER(c.model.sigma2_shape))},
      {"sigma2_rate_scale", double_key(MEMBER(c.model.sigma2_rate_scale))},
      {"fix_sigma2_zero", bool_key(MEMBER(c.model.fix_sigma2_zero))},
      {"store_full_x", bool_key(MEMBER(c.model.store_full_x))},
      {"tail_window", int_key(MEMBER(c.model.tail_window))},
      {"prior_mode",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "exchangeable") c.model.hyper_prior.mode = PriorMode::exchangeable;
          else if (v == "independent") c.model.hyper_prior.mode = PriorMode::independent;
          else throw ConfigError(k + ": expected exchangeable or independent, got '" + v + "'");
        },
        [](const RunConfig& c) {
          return std::string(c.model.hyper_prior.mode == PriorMode::independent ? "independent"
                                                                               : "exchangeable");
        }}},
      {"hyper_mu0", double_key(MEMBER(c.model.hyper_prior.mu0))},
      {"hyper_k0", double_key(MEMBER(c.model.hyper_prior.k0))},
      {"hyper_alpha0", double_key(MEMBER(c.model.hyper_prior.alpha0))},
      {"hyper_beta0", double_key(MEMBER(c.model.hyper_prior.beta0))},
      {"path_variance_shape", double_key(MEMBER(c.model.hyper_prior.variance_shape))},
      {"path_variance_rate", double_key(MEMBER(c.model.hyper_prior.variance_rate))},
      {"independent_phi_variance", double_key(MEMBER(c.model.hyper_prior.independent_variance))},
      {"holdout", int_key(MEMBER(c.holdout))},
      {"forecast_horizon", int_key(MEMBER(c.forecast_horizon))},
      {"n_particles", int_key(MEMBER(c.n_particles))},
      {"filter",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "auxiliary") c.filter = FilterVariant::auxiliary;
          else if (v == "bootstrap") c.filter = FilterVariant::bootstrap;
          else throw ConfigError(k + ": expected auxiliary or bootstrap, got '" + v + "'");
        },
        [](const RunConfig& c) {
          return std::string(c.filter == FilterVariant::bootstrap ? "bootstrap" : "auxiliary");
        }}},
      {"resample_fraction", double_key(MEMBER(c.resample_fraction))},
      {"emit_daily_summaries", bool_key(MEMBER(c.emit_daily_summaries))},
      {"chains", int_key(MEMBER(c.chains))},
      {"sim_assets", int_key(MEMBER(c.simulation.assets))},
      {"sim_factors", int_key(MEMBER(c.simulation.factors))},
      {"sim_horizon", int_key(MEMBER(c.simulation.horizon))},
      {"sim_mode",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "basic") c.simulation.mode = ModelMode::basic;
          else if (v == "factor") c.simulation.mode = ModelMode::factor;
          else throw ConfigError(k + ": expected basic or factor, got '" + v + "'");
        },
        [](const RunConfig& c) {
          return std::string(c.simulation.mode == ModelMode::basic ? "basic" : "factor");
        }}},
      {"sim_sigma2", double_key(MEMBER(c.simulation.sigma2))},
      {"sim_missing_fraction", double_key(MEMBER(c.simulation.missing_fraction))},
      {"sim_angle_level", double_key(MEMBER(c.simulation.angle_level))},
      {"sim_log_variance_level", double_key(MEMBER(c.simulation.log_variance_level))},
      {"sim_zero_angles", bool_key(MEMBER(c.simulation.zero_angles))},
  };
  return table;
}

#undef MEMBER

const Key& find_key(const std::string& key) {
  for (const auto& [name, k] : keys()) {
    if (name == key) return k;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  find_key(key).set(config, key, value);
}

void apply_assignment(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  apply_setting(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void parse_config(std::istream& in, RunConfig& config, const std::string& source) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_assignment(config, line);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void load_config(const std::filesystem::path& path, RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  parse_config(in, config, path.string());
}

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [name, k] : keys()) out.emplace_back(name, k.get(config));
  return out;
}

void validate_run(const RunConfig& config) {
  if (config.holdout < 0) throw ConfigError("holdout must be >= 0");
  if (config.forecast_horizon != 1 && config.forecast_horizon != 2) {
    throw ConfigError("forecast_horizon must be 1 or 2");
  }
  if (config.n_particles < 1) throw ConfigError("n_particles must be >= 1");
  if (!(config.resample_fraction > 0.0 && config.resample_fraction <= 1.0)) {
    throw ConfigError("resample_fraction must lie in (0, 1]");
  }
  if (config.chains < 1) throw ConfigError("chains must be >= 1");
}

}  // namespace msv
