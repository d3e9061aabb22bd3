#include "msv/cli.hpp"

#include "msv/config.hpp"
#include "msv/diagnostics.hpp"
#include "msv/errors.hpp"
#include "msv/forecast.hpp"
#include "msv/io.hpp"
#include "msv/model.hpp"
#include "msv/simulate.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <thread>

namespace msv {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kManifestVersion = 1;

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> overrides;
};

RunConfig build_config(const CommonOptions& opts, RunConfig config = {}) {
  if (!opts.config_file.empty()) load_config(opts.config_file, config);
  for (const std::string& s : opts.overrides) apply_assignment(config, s);
  validate_run(config);
  return config;
}

void apply_thread_env() {
  const char* env = std::getenv("MSV_NUM_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError("MSV_NUM_THREADS must be a positive integer");
  omp_set_num_threads(static_cast<int>(n));
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

json config_json(const RunConfig& config) {
  json j = json::object();
  for (const auto& [k, v] : config_entries(config)) j[k] = v;
  return j;
}

json acceptance_json(const AcceptanceSummary& a) {
  return {{"x_burn_in_tail", a.x_burn_in_tail},
          {"x_sampling", a.x_sampling},
          {"factor_burn_in_tail", a.factor_burn_in_tail},
          {"factor_sampling", a.factor_sampling},
          {"persistence_burn_in_tail", a.persistence_burn_in_tail},
          {"persistence_sampling", a.persistence_sampling},
          {"x_final_step", a.x_final_step},
          {"factor_mean_final_step", a.factor_mean_final_step}};
}

json ess_json(const EssTable& t) {
  json per = json::object();
  for (const EssRow& r : t.rows) {
    per[r.name] = r.estimate.degenerate ? json("degenerate") : json(r.estimate.ess);
  }
  return {{"min", t.min_ess},
          {"min_parameter", t.min_name},
          {"max", t.max_ess},
          {"seconds", t.seconds},
          {"seconds_per_min_ess", t.seconds_per_min_ess},
          {"per_parameter", per}};
}

void write_ess_csv(const fs::path& path, const EssTable& t) {
  auto out = open_out(path);
  out << "parameter,ess,degenerate\n";
  for (const EssRow& r : t.rows) {
    out << r.name << ',' << format_double(r.estimate.ess) << ','
        << (r.estimate.degenerate ? "true" : "false") << '\n';
  }
}

double total_seconds(const PosteriorDraws& d) {
  double s = 0.0;
  for (const auto& [k, v] : d.block_seconds) s += v;
  return s;
}

ReturnsPanel slice_rows(const ReturnsPanel& p, int begin, int count) {
  ReturnsPanel out(p.values.middleRows(begin, count), p.observed.middleRows(begin, count), p.names);
  return out;
}

void write_weights(const fs::path& path, const Eigen::VectorXd& w, const std::vector<std::string>& names) {
  auto out = open_out(path);
  out << "asset,weight\n";
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    out << (names.empty() ? "a" + std::to_string(i + 1) : names[static_cast<std::size_t>(i)]) << ','
        << format_double(w[i]) << '\n';
  }
}

void write_daily(const fs::path& dir, const PosteriorDraws& draws) {
  auto vol = open_out(dir / "daily_volatility.csv");
  auto corr = open_out(dir / "daily_correlation.csv");
  vol << "day,i,j,value\n";
  corr << "day,i,j,value\n";
  for (int t = 0; t < draws.horizon; ++t) {
    const VolatilitySummary s = volatility_path_summary(draws, t);
    for (int i = 0; i < draws.factors; ++i) {
      vol << t + 1 << ',' << i + 1 << ',' << i + 1 << ',' << format_double(s.volatilities[i]) << '\n';
      for (int j = i + 1; j < draws.factors; ++j) {
        corr << t + 1 << ',' << i + 1 << ',' << j + 1 << ','
             << format_double(s.mean_correlation(i, j)) << '\n';
      }
    }
  }
}

/// Predicted covariance, weights and (optionally) discrepancies; returns the
/// manifest fragment.
json write_forecast(const fs::path& dir, const PosteriorDraws& draws, const RunConfig& config,
                    const std::vector<std::string>& names) {
  Rng rng(config.model.seed ^ 0x5deece66dULL);
  const PredictiveDraws pred = predict_sigma(draws, config.forecast_horizon, rng);
  write_matrix(dir / "sigma_forecast.csv", pred.mean_return_covariance);
  const Eigen::VectorXd w = min_variance_weights(pred.mean_return_covariance);
  write_weights(dir / "weights.csv", w, names);
  json j = {{"steps_ahead", config.forecast_horizon},
            {"files", {"sigma_forecast.csv", "weights.csv"}}};
  if (!config.proxy.empty()) {
    const Eigen::MatrixXd proxy = read_matrix(config.proxy);
    const Discrepancy d = discrepancies(pred.mean_return_covariance, proxy);
    auto out = open_out(dir / "discrepancies.csv");
    out << "mad,rmse\n" << format_double(d.mad) << ',' << format_double(d.rmse) << '\n';
    j["discrepancies"] = {{"mad", d.mad}, {"rmse", d.rmse}};
    j["files"].push_back("discrepancies.csv");
  }
  return j;
}

PredictiveLogLik filter_model(const PosteriorDraws& draws, const ReturnsPanel& future,
                              const RunConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  const StaticParams theta = posterior_mean_params(draws);
  ParticleCloud cloud = ParticleCloud::from_draws(draws, config.n_particles, rng);
  FilterOptions opts;
  opts.n_particles = config.n_particles;
  opts.variant = config.filter;
  opts.resample_fraction = config.resample_fraction;
  return predictive_loglik(future, theta, std::move(cloud), opts, rng);
}

void fit_chain(const ReturnsPanel& full, RunConfig config, const fs::path& dir) {
  const auto started = std::chrono::steady_clock::now();
  fs::create_directories(dir);
  const int train_rows = full.horizon() - config.holdout;
  if (train_rows < 2) throw ConfigError("holdout leaves fewer than two rows to fit");
  const ReturnsPanel train = slice_rows(full, 0, train_rows);
  train.validate();

  json manifest;
  manifest["schema_version"] = kManifestVersion;
  manifest["command"] = "fit";
  manifest["config"] = config_json(config);
  manifest["data"] = {{"rows", full.horizon()},
                      {"fitted_rows", train_rows},
                      {"assets", full.assets()},
                      {"observed_cells", train.observed_count()}};

  const PosteriorDraws draws = mcmc_run(train, config.model);
  manifest["draws"] = draws.draws.size();
  manifest["acceptance"] = acceptance_json(draws.acceptance);
  json outputs = json::array();

  if (!draws.empty()) {
    save_draws(dir / "draws.json", draws);
    outputs.push_back("draws.json");
    manifest["forecast"] = write_forecast(dir, draws, config, full.names);
    for (const auto& f : manifest["forecast"]["files"]) outputs.push_back(f);
    if (config.emit_daily_summaries && !draws.sigma_sum.empty()) {
      write_daily(dir, draws);
      outputs.push_back("daily_volatility.csv");
      outputs.push_back("daily_correlation.csv");
    }
    if (config.holdout > 0) {
      const ReturnsPanel future = slice_rows(full, train_rows, config.holdout);
      const PredictiveLogLik pl = filter_model(draws, future, config, config.model.seed + 7919);
      auto out = open_out(dir / "predictive_loglik.csv");
      out << "step,loglik,cumulative\n";
      double cum = 0.0;
      for (std::size_t s = 0; s < pl.per_step.size(); ++s) {
        cum += pl.per_step[s];
        out << s + 1 << ',' << format_double(pl.per_step[s]) << ',' << format_double(cum) << '\n';
      }
      manifest["predictive_loglik"] = {{"steps", pl.per_step.size()}, {"cumulative", pl.cumulative}};
      outputs.push_back("predictive_loglik.csv");
    }
    if (draws.draws.size() >= kMinDiagnosticDraws) {
      const EssTable table = ess_table(draws, total_seconds(draws));
      write_ess_csv(dir / "ess.csv", table);
      manifest["ess"] = ess_json(table);
      outputs.push_back("ess.csv");
    } else {
      manifest["ess"] = nullptr;
    }
  }
  json timings = json::object();
  for (const auto& [k, v] : draws.block_seconds) timings[k] = v;
  timings["total"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  manifest["seconds"] = timings;
  manifest["outputs"] = outputs;
  write_json(dir / "manifest.json", manifest);
}

int cmd_fit(const CommonOptions& common, const std::string& data, const std::string& out_dir,
            int chains, std::ostream& out) {
  RunConfig config = build_config(common);
  if (!data.empty()) config.data = data;
  if (!out_dir.empty()) config.output_dir = out_dir;
  if (chains > 0) config.chains = chains;
  validate_run(config);
  if (config.data.empty()) throw ConfigError("no input data (use --data or the data key)");
  const ReturnsPanel panel = ingest(config.data);
  config.model.validate(panel.assets());

  if (config.chains == 1) {
    fit_chain(panel, config, config.output_dir);
  } else {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> failures(static_cast<std::size_t>(config.chains));
    for (int c = 0; c < config.chains; ++c) {
      RunConfig chain = config;
      chain.model.seed = config.model.seed + static_cast<std::uint64_t>(c);
      const fs::path dir = fs::path(config.output_dir) / ("chain_" + std::to_string(c + 1));
      workers.emplace_back([&panel, chain, dir, &failures, c] {
        try {
          fit_chain(panel, chain, dir);
        } catch (...) {
          failures[static_cast<std::size_t>(c)] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& f : failures) {
      if (f) std::rethrow_exception(f);
    }
  }
  out << "wrote " << config.output_dir << '\n';
  return kExitOk;
}

int cmd_forecast(const CommonOptions& common, const std::string& draws_path,
                 const std::string& proxy, const std::string& out_dir, std::ostream& out) {
  RunConfig config = build_config(common);
  if (!proxy.empty()) config.proxy = proxy;
  if (!out_dir.empty()) config.output_dir = out_dir;
  const PosteriorDraws draws = load_draws(draws_path);
  if (draws.empty()) throw DataError(draws_path + ": no draws");
  fs::create_directories(config.output_dir);
  json manifest;
  manifest["schema_version"] = kManifestVersion;
  manifest["command"] = "forecast";
  manifest["config"] = config_json(config);
  manifest["forecast"] = write_forecast(config.output_dir, draws, config, {});
  write_json(fs::path(config.output_dir) / "manifest.json", manifest);
  if (manifest["forecast"].contains("discrepancies")) {
    out << "mad " << manifest["forecast"]["discrepancies"]["mad"].get<double>() << " rmse "
        << manifest["forecast"]["discrepancies"]["rmse"].get<double>() << '\n';
  }
  out << "wrote " << config.output_dir << '\n';
  return kExitOk;
}

int cmd_predlik(const CommonOptions& common, const std::string& model_a, const std::string& model_b,
                const std::string& future_path, const std::string& out_dir, std::ostream& out) {
  RunConfig config = build_config(common);
  if (!out_dir.empty()) config.output_dir = out_dir;
  const ReturnsPanel future = ingest(future_path);
  const PosteriorDraws a = load_draws(model_a);
  const PosteriorDraws b = load_draws(model_b);
  const PredictiveLogLik la = filter_model(a, future, config, config.model.seed);
  const PredictiveLogLik lb = filter_model(b, future, config, config.model.seed);
  fs::create_directories(config.output_dir);
  auto csv = open_out(fs::path(config.output_dir) / "predictive_loglik.csv");
  csv << "step,loglik_a,loglik_b,cumulative_log_bayes_factor\n";
  double ca = 0.0;
  double cb = 0.0;
  for (std::size_t s = 0; s < la.per_step.size(); ++s) {
    ca += la.per_step[s];
    cb += lb.per_step[s];
    csv << s + 1 << ',' << format_double(la.per_step[s]) << ',' << format_double(lb.per_step[s])
        << ',' << format_double(log_bayes_factor(ca, cb)) << '\n';
  }
  json manifest;
  manifest["schema_version"] = kManifestVersion;
  manifest["command"] = "predlik";
  manifest["config"] = config_json(config);
  manifest["cumulative_a"] = la.cumulative;
  manifest["cumulative_b"] = lb.cumulative;
  manifest["log_bayes_factor"] = log_bayes_factor(la.cumulative, lb.cumulative);
  write_json(fs::path(config.output_dir) / "manifest.json", manifest);
  out << "log Bayes factor (a vs b): " << log_bayes_factor(la.cumulative, lb.cumulative) << '\n';
  return kExitOk;
}

json params_json(const PathParams& params) {
  json j = json::array();
  for (const ArParams& p : params) {
    j.push_back({{"phi", p.phi()}, {"phi_tilde", p.phi_tilde}, {"level", p.level}, {"sigma", p.sigma}});
  }
  return j;
}

int cmd_simulate(const CommonOptions& common, bool bundle, const std::string& out_dir,
                 std::ostream& out) {
  // the bundle settings are a base that --config and --set still override
  RunConfig base;
  if (bundle) {
    base.simulation = bundle_spec();
    base.model.seed = kBundleSeed;
  }
  RunConfig config = build_config(common, base);
  if (!out_dir.empty()) config.output_dir = out_dir;
  const SimulationSpec& spec = config.simulation;
  Rng rng(config.model.seed);
  const SyntheticData data = simulate(spec, rng);
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  export_panel(dir / "returns.csv", data.panel);
  json truth;
  truth["factors"] = spec.factors;
  truth["assets"] = spec.assets;
  truth["horizon"] = spec.horizon;
  truth["params"] = params_json(data.params);
  truth["sigma2"] = data.sigma2;
  json b = json::array();
  for (Eigen::Index r = 0; r < data.loadings.rows(); ++r) {
    b.push_back(std::vector<double>(data.loadings.cols()));
    for (Eigen::Index c = 0; c < data.loadings.cols(); ++c) b.back()[c] = data.loadings(r, c);
  }
  truth["loadings"] = b;
  write_json(dir / "truth.json", truth);
  write_matrix(dir / "true_sigma_last.csv", reconstruct(data.x.slice(spec.horizon - 1)));
  out << "wrote " << dir.string() << '\n';
  return kExitOk;
}

int cmd_diagnose(const std::string& draws_path, const std::string& out_dir, std::ostream& out) {
  const PosteriorDraws draws = load_draws(draws_path);
  const EssTable table = ess_table(draws, total_seconds(draws));
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_ess_csv(fs::path(out_dir) / "ess.csv", table);
  }
  out << "parameter,ess\n";
  for (const EssRow& r : table.rows) {
    out << r.name << ',' << (r.estimate.degenerate ? "degenerate" : format_double(r.estimate.ess)) << '\n';
  }
  out << "min ESS " << table.min_ess << " (" << table.min_name << "), max ESS " << table.max_ess
      << ", seconds " << table.seconds << ", seconds per min ESS " << table.seconds_per_min_ess << '\n';
  return kExitOk;
}

void add_common(CLI::App* sub, CommonOptions& opts) {
  sub->add_option("--config", opts.config_file, "key=value config file")->check(CLI::ExistingFile);
  sub->add_option("--set", opts.overrides, "override a config key (key=value)");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multivariate stochastic volatility: fit, forecast, predictive likelihoods"};
  app.require_subcommand(1);

  CommonOptions fit_opts, fc_opts, pl_opts, sim_opts;
  std::string data, out_dir, draws_path, proxy, model_a, model_b, future;
  int chains = 0;
  bool bundle = false;

  auto* fit = app.add_subcommand("fit", "run the sampler and write summaries and forecasts");
  add_common(fit, fit_opts);
  fit->add_option("--data", data, "returns CSV");
  fit->add_option("--out", out_dir, "output directory");
  fit->add_option("--chains", chains, "independent chains run concurrently");

  auto* fc = app.add_subcommand("forecast", "predict Sigma and portfolio weights from saved draws");
  add_common(fc, fc_opts);
  fc->add_option("--draws", draws_path, "draws.json from fit")->required();
  fc->add_option("--proxy", proxy, "header-free N x N proxy covariance CSV");
  fc->add_option("--out", out_dir, "output directory");

  auto* pl = app.add_subcommand("predlik", "particle-filter predictive likelihoods of two models");
  add_common(pl, pl_opts);
  pl->add_option("--model-a", model_a, "draws.json of model a")->required();
  pl->add_option("--model-b", model_b, "draws.json of model b")->required();
  pl->add_option("--future", future, "returns CSV of the evaluation window")->required();
  pl->add_option("--out", out_dir, "output directory");

  auto* sim = app.add_subcommand("simulate", "generate a synthetic panel");
  add_common(sim, sim_opts);
  sim->add_flag("--bundle", bundle, "use the settings of the bundled dataset");
  sim->add_option("--out", out_dir, "output directory");

  auto* diag = app.add_subcommand("diagnose", "effective sample sizes of saved draws");
  diag->add_option("--draws", draws_path, "draws.json from fit")->required();
  diag->add_option("--out", out_dir, "directory for ess.csv");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    apply_thread_env();
    if (*fit) return cmd_fit(fit_opts, data, out_dir, chains, out);
    if (*fc) return cmd_forecast(fc_opts, draws_path, proxy, out_dir, out);
    if (*pl) return cmd_predlik(pl_opts, model_a, model_b, future, out_dir, out);
    if (*sim) return cmd_simulate(sim_opts, bundle, out_dir, out);
    if (*diag) return cmd_diagnose(draws_path, out_dir, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    err << "numerical failure in block " << e.block() << ": " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    err << "invalid argument: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitConfig;
}

}  // namespace msv
