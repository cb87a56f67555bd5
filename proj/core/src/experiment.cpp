#include "depotcast/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "depotcast/seed.hpp"

#ifndef DEPOTCAST_VERSION
#define DEPOTCAST_VERSION "0.0.0"
#endif

namespace depotcast::exp {

namespace fs = std::filesystem;

SourceData make_source(const data::GeneratedData& generated, const WorkCalendar& calendar,
                       int road_lag_hours, std::optional<features::DateSpan> span) {
  SourceData s;
  s.base = features::aggregate_hourly(generated.events, calendar, span);
  s.exogenous.appointments = generated.appointments;
  s.exogenous.cax = generated.cax;
  s.exogenous.sailings = generated.sailings;
  s.exogenous.road_lag_hours = road_lag_hours;
  return s;
}

SourceData load_source(const fs::path& dir, const WorkCalendar& calendar, int road_lag_hours) {
  SourceData s;
  s.base = features::aggregate_hourly(data::read_events(dir / "events.csv").records, calendar);
  if (fs::exists(dir / "appointments.csv")) {
    s.exogenous.appointments = data::read_appointments(dir / "appointments.csv");
  }
  if (fs::exists(dir / "cax.csv")) s.exogenous.cax = data::read_cax(dir / "cax.csv");
  if (fs::exists(dir / "sailings.csv")) s.exogenous.sailings = data::read_sailings(dir / "sailings.csv");
  s.exogenous.road_lag_hours = road_lag_hours;
  return s;
}

features::Dataset build_dataset(const SourceData& source, const features::FeatureSet& fs) {
  return prob::attach_features(source.base, fs, source.exogenous);
}

std::uint64_t cell_seed(std::uint64_t master, std::string_view window, std::string_view model,
                        std::string_view feature_set) {
  std::uint64_t h = mix64(master);
  for (auto part : {window, model, feature_set}) h = mix64(h ^ fnv1a(part));
  return h;
}

CellResult run_cell(const features::Dataset& ds, const features::SplitSpec& window,
                    const std::string& model, const RunConfig& cfg) {
  CellResult out;
  const auto window_label = window.label();
  const auto dataset_label = ds.features.label();
  try {
    auto [train, test] = features::split(ds, window);
    out.training_rows = train.rows.size();
    out.observed.resize(2, static_cast<Eigen::Index>(test.rows.size()));
    for (std::size_t i = 0; i < test.rows.size(); ++i) {
      out.stamps.push_back(test.rows[i].stamp);
      out.observed(0, static_cast<Eigen::Index>(i)) = test.rows[i].truck_rate;
      out.observed(1, static_cast<Eigen::Index>(i)) = test.rows[i].handling_time;
    }
    auto [fit, valid] = features::holdout_tail(train, cfg.train.validation_fraction);
    auto tc = cfg.train;
    tc.rng_seed = cell_seed(cfg.experiment.master_seed, window_label, model, dataset_label);

    Eigen::MatrixXd pred;
    if (model == "bayesian") {
      auto [m, log] = prob::train_bayesian(fit, valid, tc);
      pred = prob::point_forecasts(m, test, tc.mc_samples, derive_seed(tc.rng_seed, 0x6d63));
    } else if (model == "baseline") {
      auto [m, log] = prob::train_baseline_mlp(fit, valid, tc);
      pred = prob::point_forecasts(m, test);
    } else {
      throw ConfigError(fmt::format("unknown model '{}'", model));
    }
    const auto series = eval::series_from(test, pred, cfg.experiment.exclude_empty_hours);
    out.report = eval::build_report(model, dataset_label, window_label, series[0], series[1]);
    out.predicted = std::move(pred);
  } catch (const std::exception& e) {
    out.report = eval::failed_report(model, dataset_label, window_label, e.what());
    out.predicted.resize(0, 0);
  }
  return out;
}

std::vector<eval::EvalReport> AblationResult::reports() const {
  std::vector<eval::EvalReport> r;
  r.reserve(cells.size());
  for (const auto& c : cells) r.push_back(c.report);
  return r;
}

namespace {

template <class Fn>
void for_each_index(std::size_t n, int jobs, Fn fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  for (std::size_t w = 0; w < count; ++w) {
    workers.emplace_back([&] {
      for (auto i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

std::vector<features::SplitSpec> by_start(std::vector<features::SplitSpec> windows) {
  std::stable_sort(windows.begin(), windows.end(), [](const auto& a, const auto& b) {
    return std::chrono::local_days{a.train_start} < std::chrono::local_days{b.train_start};
  });
  return windows;
}

struct Cell {
  features::SplitSpec window;
  std::string model;
  const features::Dataset* ds;
};

AblationResult run_cells(const std::vector<Cell>& plan, const RunConfig& cfg) {
  AblationResult result;
  result.cells.resize(plan.size());
  for_each_index(plan.size(), cfg.experiment.jobs, [&](std::size_t i) {
    result.cells[i] = run_cell(*plan[i].ds, plan[i].window, plan[i].model, cfg);
  });
  return result;
}

}  // namespace

bool training_sets_nested(const features::Dataset& ds, std::vector<features::SplitSpec> windows) {
  windows = by_start(std::move(windows));
  std::vector<Timestamp> previous;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    std::vector<Timestamp> stamps;
    for (const auto& row : ds.rows) {
      const auto day = std::chrono::local_days{date_of(row.stamp)};
      const auto& s = windows[w];
      if (day >= std::chrono::local_days{s.train_start} &&
          day <= std::chrono::local_days{s.train_end} &&
          day < std::chrono::local_days{s.test_start}) {
        stamps.push_back(row.stamp);
      }
    }
    if (w > 0 && !std::includes(previous.begin(), previous.end(), stamps.begin(), stamps.end())) {
      return false;
    }
    previous = std::move(stamps);
  }
  return true;
}

AblationResult run_window_ablation(const SourceData& source, const RunConfig& cfg,
                                   const features::FeatureSet& fs) {
  cfg.validate();
  const auto ds = build_dataset(source, fs);
  const auto windows = by_start(cfg.experiment.windows);
  std::vector<Cell> plan;
  for (const auto& w : windows) {
    for (const auto& m : cfg.experiment.models) plan.push_back({w, m, &ds});
  }
  auto result = run_cells(plan, cfg);
  result.nested_training_sets = training_sets_nested(ds, windows);
  return result;
}

AblationResult run_feature_ablation(const SourceData& source, const RunConfig& cfg) {
  cfg.validate();
  const auto window = by_start(cfg.experiment.windows).back();
  std::vector<features::Dataset> datasets;
  datasets.reserve(cfg.experiment.feature_sets.size());
  for (const auto& f : cfg.experiment.feature_sets) datasets.push_back(build_dataset(source, f));
  std::vector<Cell> plan;
  for (const auto& ds : datasets) plan.push_back({window, "bayesian", &ds});
  return run_cells(plan, cfg);
}

void write_series_csv(std::ostream& out, const AblationResult& result) {
  out << "Window,Model,Dataset,Date,Hour,TruckRate,TruckRatePred,HandlingTime,HandlingTimePred\n";
  for (const auto& c : result.cells) {
    if (c.predicted.size() == 0) continue;
    for (std::size_t i = 0; i < c.stamps.size(); ++i) {
      const auto j = static_cast<Eigen::Index>(i);
      out << fmt::format("{},{},{},{},{},{},{:.6f},{},{:.6f}\n", c.report.window, c.report.model,
                         c.report.dataset, format_date(date_of(c.stamps[i])), hour_of(c.stamps[i]),
                         c.observed(0, j), c.predicted(0, j), c.observed(1, j), c.predicted(1, j));
    }
  }
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string fingerprint_files(const std::vector<fs::path>& files) {
  std::string all;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("cannot read '{}'", f.string()));
    all += f.filename().string();
    all += '\0';
    all.append(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    all += '\0';
  }
  return sha256_hex(all);
}

std::string software_version() { return DEPOTCAST_VERSION; }

void write_manifest(const RunManifest& m, const fs::path& path) {
  nlohmann::json j;
  j["format"] = "depotcast.manifest";
  j["command"] = m.command;
  j["arguments"] = m.arguments;
  j["config"] = m.config;
  j["data_fingerprint"] = m.data_fingerprint;
  j["software_version"] = m.software_version;
  j["started_at"] = m.started_at;
  j["wall_seconds"] = m.wall_seconds;
  j["outputs"] = m.outputs;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
}

RunManifest read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
  try {
    const auto j = nlohmann::json::parse(in);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.arguments = j.at("arguments").get<std::vector<std::string>>();
    m.config = j.at("config").get<KeyValues>();
    m.data_fingerprint = j.at("data_fingerprint").get<std::string>();
    m.software_version = j.at("software_version").get<std::string>();
    m.started_at = j.at("started_at").get<std::string>();
    m.wall_seconds = j.at("wall_seconds").get<double>();
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(fmt::format("'{}': malformed manifest ({})", path.string(), e.what()));
  }
}

}  // namespace depotcast::exp
