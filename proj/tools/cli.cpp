#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "depotcast/config.hpp"
#include "depotcast/depot_data.hpp"
#include "depotcast/experiment.hpp"
#include "depotcast/features.hpp"
#include "depotcast/metrics.hpp"
#include "depotcast/prob_forecast.hpp"

namespace depotcast::cli {

namespace fs = std::filesystem;
using exp::RunConfig;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Seed for this command's random streams");
  cmd->add_option("--config", c.config, "INI config file, or manifest.json of an earlier run");
  cmd->add_option("--out", c.out, "Output directory (default: $DEPOTCAST_OUT, else ./out)");
  cmd->add_option("--set", c.overrides, "Config override section.key=value (repeatable)");
}

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : exp::load_config(c.config);
  if (c.overrides.empty()) return cfg;
  auto kv = exp::to_key_values(cfg);
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw UsageError(fmt::format("--set '{}' is not key=value", o));
    kv[o.substr(0, eq)] = o.substr(eq + 1);
  }
  return exp::config_from_key_values(kv);
}

fs::path resolve_out(const Common& c) {
  if (!c.out.empty()) return c.out;
  if (const char* env = std::getenv("DEPOTCAST_OUT"); env != nullptr && *env != '\0') return env;
  return "out";
}

Date date_arg(const std::string& name, const std::string& text) {
  auto d = parse_date(text);
  if (!d) throw UsageError(fmt::format("{}: expected YYYY-MM-DD, got '{}'", name, text));
  return *d;
}

std::vector<fs::path> data_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const char* name : {"events.csv", "appointments.csv", "cax.csv", "sailings.csv"}) {
    if (fs::exists(dir / name)) files.push_back(dir / name);
  }
  return files;
}

std::string fingerprint_generated(const data::GeneratedData& g) {
  std::string s;
  s.reserve(g.events.size() * 48);
  for (const auto& e : g.events) {
    s += fmt::format("{},{},{},{},{},{},{},{}\n", format_timestamp(e.gate_in_time),
                     format_timestamp(e.gate_out_time), format_timestamp(e.loading_time),
                     format_timestamp(e.dispatch_time), e.customer_id, e.is_20_feet, e.is_inbound,
                     e.depot_move_id);
  }
  for (const auto& a : g.appointments) {
    s += fmt::format("{},{}\n", format_timestamp(a.booked_at), format_timestamp(a.expected_arrival));
  }
  for (const auto& c : g.cax) s += fmt::format("{},{}\n", to_string(c.iso_week), c.value);
  for (const auto& v : g.sailings) s += fmt::format("{},{}\n", format_timestamp(v.arrival_time), v.teu);
  return exp::sha256_hex(s);
}

/// Bookkeeping shared by every command: output directory and manifest.
class Run {
 public:
  Run(std::string command, const std::vector<std::string>& args, RunConfig cfg, fs::path out)
      : cfg(std::move(cfg)), out_(std::move(out)), started_(std::chrono::steady_clock::now()) {
    manifest_.command = std::move(command);
    manifest_.arguments = args;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    manifest_.started_at = fmt::format("{:%Y-%m-%dT%H:%M:%S}", fmt::localtime(now));
    fs::create_directories(out_);
  }

  fs::path output(const std::string& name) {
    manifest_.outputs.push_back(name);
    return out_ / name;
  }

  void fingerprint(std::string hash) { manifest_.data_fingerprint = std::move(hash); }

  void finish() {
    manifest_.config = exp::to_key_values(cfg);
    manifest_.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    exp::write_manifest(manifest_, out_ / "manifest.json");
  }

  RunConfig cfg;

 private:
  fs::path out_;
  std::chrono::steady_clock::time_point started_;
  exp::RunManifest manifest_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
}

features::Dataset filter_dates(features::Dataset ds, std::optional<Date> from,
                               std::optional<Date> to) {
  using std::chrono::local_days;
  std::erase_if(ds.rows, [&](const features::HourlyRow& r) {
    const auto day = local_days{date_of(r.stamp)};
    return (from && day < local_days{*from}) || (to && day > local_days{*to});
  });
  return ds;
}

exp::SourceData ablation_source(Run& run, const std::string& data_dir) {
  if (!data_dir.empty()) {
    run.fingerprint(exp::fingerprint_files(data_files(data_dir)));
    return exp::load_source(data_dir, run.cfg.calendar, run.cfg.road_lag_hours);
  }
  const auto generated = data::generate_events(run.cfg.sim);
  run.fingerprint(fingerprint_generated(generated));
  return exp::make_source(generated, run.cfg.calendar, run.cfg.road_lag_hours,
                          features::DateSpan{run.cfg.sim.start_date, run.cfg.sim.end_date});
}

void write_ablation(Run& run, const exp::AblationResult& result, const std::string& stem,
                    std::ostream& out, std::ostream& err) {
  const auto reports = result.reports();
  {
    std::ofstream f(run.output(stem + ".csv"), std::ios::binary | std::ios::trunc);
    eval::write_reports_csv(f, reports);
  }
  {
    std::ofstream f(run.output(stem + "_series.csv"), std::ios::binary | std::ios::trunc);
    exp::write_series_csv(f, result);
  }
  const auto table = eval::format_table(reports);
  write_text(run.output(stem + ".txt"), table);
  out << table;
  for (const auto& r : reports) {
    if (r.failed) err << fmt::format("cell {}/{}/{} failed: {}\n", r.window, r.model, r.dataset, r.failure);
  }
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hourly workload forecasting for an empty container depot", "depotcast"};
  app.require_subcommand(1);
  app.fallthrough(false);
  Common common;

  auto* generate = app.add_subcommand("generate", "Simulate gate events and exogenous series");
  add_common(generate, common);

  std::string data_dir;
  std::string feature_label = "base";
  auto* prepare = app.add_subcommand("prepare", "Aggregate events into an hourly dataset CSV");
  add_common(prepare, common);
  prepare->add_option("--data", data_dir, "Directory with events.csv and companion files")->required();
  prepare->add_option("--features", feature_label, "Feature set, e.g. base or appointments+cax");

  std::string dataset_path;
  std::string model_kind = "bayesian";
  std::string from_text;
  std::string to_text;
  auto* train = app.add_subcommand("train", "Train a model on an hourly dataset");
  add_common(train, common);
  train->add_option("--dataset", dataset_path, "Hourly dataset CSV")->required();
  train->add_option("--model", model_kind, "bayesian or baseline")
      ->check(CLI::IsMember({"bayesian", "baseline"}));
  train->add_option("--from", from_text, "First training date (inclusive)");
  train->add_option("--to", to_text, "Last training date (inclusive)");

  std::string model_path;
  int days = 5;
  auto* forecast = app.add_subcommand("forecast", "Forecast the next working days");
  add_common(forecast, common);
  forecast->add_option("--model", model_path, "Bayesian model checkpoint")->required();
  forecast->add_option("--from", from_text, "Issue date; the forecast starts on the next working day")
      ->required();
  forecast->add_option("--days", days, "Working days to forecast")->check(CLI::PositiveNumber);
  forecast->add_option("--data", data_dir, "Directory with exogenous series for the model's features");

  bool exclude_empty = false;
  auto* evaluate = app.add_subcommand("evaluate", "Score a model on an hourly dataset");
  add_common(evaluate, common);
  evaluate->add_option("--model", model_path, "Model checkpoint")->required();
  evaluate->add_option("--dataset", dataset_path, "Hourly dataset CSV")->required();
  evaluate->add_option("--from", from_text, "First evaluated date (inclusive)");
  evaluate->add_option("--to", to_text, "Last evaluated date (inclusive)");
  evaluate->add_flag("--exclude-empty-hours", exclude_empty, "Drop hours with no trucks");

  std::optional<int> jobs;
  auto* ablate_windows =
      app.add_subcommand("ablate-windows", "Bayesian vs baseline over the training windows");
  auto* ablate_features =
      app.add_subcommand("ablate-features", "Bayesian model over the feature sets");
  for (auto* cmd : {ablate_windows, ablate_features}) {
    add_common(cmd, common);
    cmd->add_option("--data", data_dir, "Data directory (default: simulate from config)");
    cmd->add_option("--jobs", jobs, "Cells trained concurrently")->check(CLI::PositiveNumber);
    cmd->add_flag("--exclude-empty-hours", exclude_empty, "Drop hours with no trucks when scoring");
  }

  if (!args.empty() && !args.front().starts_with('-')) {
    try {
      (void)app.get_subcommand(args.front());
    } catch (const CLI::OptionNotFound&) {
      err << "depotcast: unknown subcommand '" << args.front() << "'\n\n" << app.help();
      return 2;
    }
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "depotcast: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  CLI::App* chosen = app.get_subcommands().front();
  try {
    auto cfg = resolve_config(common);
    const std::optional<Date> from = from_text.empty() ? std::nullopt
                                                       : std::optional(date_arg("--from", from_text));
    const std::optional<Date> to = to_text.empty() ? std::nullopt
                                                   : std::optional(date_arg("--to", to_text));
    if (exclude_empty) cfg.experiment.exclude_empty_hours = true;
    if (jobs) cfg.experiment.jobs = *jobs;

    Run run(chosen->get_name(), args, std::move(cfg), resolve_out(common));
    auto& c = run.cfg;

    if (chosen == generate) {
      if (common.seed) c.sim.rng_seed = *common.seed;
      const auto g = data::generate_events(c.sim);
      data::write_events(g.events, run.output("events.csv"));
      data::write_appointments(g.appointments, run.output("appointments.csv"));
      data::write_cax(g.cax, run.output("cax.csv"));
      data::write_sailings(g.sailings, run.output("sailings.csv"));
      run.fingerprint(exp::fingerprint_files(data_files(resolve_out(common))));
      out << fmt::format("generated {} truck visits, {} appointments, {} CAx weeks, {} sailings\n",
                         g.events.size(), g.appointments.size(), g.cax.size(), g.sailings.size());
    } else if (chosen == prepare) {
      const auto fs_wanted = features::FeatureSet::parse(feature_label);
      run.fingerprint(exp::fingerprint_files(data_files(data_dir)));
      const auto source = exp::load_source(data_dir, c.calendar, c.road_lag_hours);
      const auto ds = exp::build_dataset(source, fs_wanted);
      features::write_dataset(ds, run.output("dataset.csv"));
      out << fmt::format("{} hourly rows, features: {}\n", ds.rows.size(),
                         fmt::join(ds.feature_names(), ", "));
    } else if (chosen == train) {
      if (common.seed) c.train.rng_seed = *common.seed;
      run.fingerprint(exp::fingerprint_files({dataset_path}));
      const auto ds = filter_dates(features::read_dataset(dataset_path), from, to);
      if (ds.empty()) throw std::runtime_error("no training rows in the selected dates");
      auto [fit, valid] = features::holdout_tail(ds, c.train.validation_fraction);
      prob::TrainLog log;
      if (model_kind == "bayesian") {
        auto [m, l] = prob::train_bayesian(fit, valid, c.train);
        prob::save_model(m, run.output("model.json"));
        log = std::move(l);
      } else {
        auto [m, l] = prob::train_baseline_mlp(fit, valid, c.train);
        prob::save_model(m, run.output("model.json"));
        log = std::move(l);
      }
      std::string csv = "Epoch,TrainObjective,TrainMetric,ValidMetric\n";
      for (const auto& e : log.epochs) {
        csv += fmt::format("{},{:.8f},{:.8f},{:.8f}\n", e.epoch, e.train_objective, e.train_metric,
                           e.valid_metric);
      }
      write_text(run.output("training_log.csv"), csv);
      out << fmt::format("trained {} model on {} rows ({} validation), best epoch {} of {}\n",
                         model_kind, fit.rows.size(), valid.rows.size(), log.best_epoch,
                         log.epochs.size());
    } else if (chosen == forecast) {
      const auto seed = common.seed.value_or(c.train.rng_seed);
      c.train.rng_seed = seed;
      std::vector<fs::path> inputs{model_path};
      prob::ExogenousSource source;
      source.road_lag_hours = c.road_lag_hours;
      if (!data_dir.empty()) {
        const auto files = data_files(data_dir);
        inputs.insert(inputs.end(), files.begin(), files.end());
        if (fs::exists(fs::path(data_dir) / "appointments.csv")) {
          source.appointments = data::read_appointments(fs::path(data_dir) / "appointments.csv");
        }
        if (fs::exists(fs::path(data_dir) / "cax.csv")) source.cax = data::read_cax(fs::path(data_dir) / "cax.csv");
        if (fs::exists(fs::path(data_dir) / "sailings.csv")) {
          source.sailings = data::read_sailings(fs::path(data_dir) / "sailings.csv");
        }
      }
      run.fingerprint(exp::fingerprint_files(inputs));
      const auto model = prob::load_model(model_path);
      const auto* bayes = std::get_if<prob::BayesianForecaster>(&model);
      if (bayes == nullptr) throw std::runtime_error("forecast needs a bayesian model checkpoint");
      const auto rows =
          prob::forecast_week(*bayes, *from, days, c.calendar, source, c.train.mc_samples, seed);
      prob::write_forecast(rows, run.output("forecast.csv"));
      out << fmt::format("{} forecast rows from {} to {}\n", rows.size(),
                         format_timestamp(rows.front().stamp), format_timestamp(rows.back().stamp));
    } else if (chosen == evaluate) {
      const auto seed = common.seed.value_or(c.train.rng_seed);
      c.train.rng_seed = seed;
      run.fingerprint(exp::fingerprint_files({model_path, dataset_path}));
      const auto model = prob::load_model(model_path);
      const auto ds = filter_dates(features::read_dataset(dataset_path), from, to);
      if (ds.empty()) throw std::runtime_error("no rows to evaluate in the selected dates");
      Eigen::MatrixXd pred;
      std::string kind;
      if (const auto* b = std::get_if<prob::BayesianForecaster>(&model)) {
        pred = prob::point_forecasts(*b, ds, c.train.mc_samples, seed);
        kind = "bayesian";
      } else {
        pred = prob::point_forecasts(std::get<prob::MlpBaseline>(model), ds);
        kind = "baseline";
      }
      const auto series = eval::series_from(ds, pred, c.experiment.exclude_empty_hours);
      const auto window = format_date(date_of(ds.rows.front().stamp));
      const std::vector<eval::EvalReport> reports{
          eval::build_report(kind, ds.features.label(), window, series[0], series[1])};
      {
        std::ofstream f(run.output("report.csv"), std::ios::binary | std::ios::trunc);
        eval::write_reports_csv(f, reports);
      }
      out << eval::format_table(reports);
    } else if (chosen == ablate_windows) {
      if (common.seed) c.experiment.master_seed = *common.seed;
      c.validate();
      const auto source = ablation_source(run, data_dir);
      const auto result = exp::run_window_ablation(source, c);
      write_ablation(run, result, "window_ablation", out, err);
      out << "nested training sets: " << (result.nested_training_sets ? "yes" : "no") << '\n';
      if (!result.nested_training_sets) err << "warning: training windows are not nested\n";
    } else if (chosen == ablate_features) {
      if (common.seed) c.experiment.master_seed = *common.seed;
      c.validate();
      const auto source = ablation_source(run, data_dir);
      const auto result = exp::run_feature_ablation(source, c);
      write_ablation(run, result, "feature_ablation", out, err);
    }
    run.finish();
  } catch (const UsageError& e) {
    err << "depotcast: " << e.what() << "\n\n" << chosen->help();
    return 2;
  } catch (const std::exception& e) {
    err << "depotcast " << chosen->get_name() << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace depotcast::cli
