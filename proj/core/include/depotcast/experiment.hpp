#pragma once

// Ablation harness over training windows and feature sets, and the run
// manifest written next to every output.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "depotcast/config.hpp"
#include "depotcast/depot_data.hpp"
#include "depotcast/features.hpp"
#include "depotcast/metrics.hpp"
#include "depotcast/prob_forecast.hpp"

namespace depotcast::exp {

/// Hourly base dataset plus every exogenous series the harness may join.
struct SourceData {
  features::Dataset base;
  prob::ExogenousSource exogenous;
};

/// From simulator output; `span` defaults to the days covered by the events.
SourceData make_source(const data::GeneratedData& generated, const WorkCalendar& calendar,
                       int road_lag_hours, std::optional<features::DateSpan> span = std::nullopt);

/// From a directory holding events.csv and, optionally, appointments.csv,
/// cax.csv and sailings.csv.
SourceData load_source(const std::filesystem::path& dir, const WorkCalendar& calendar,
                       int road_lag_hours);

/// base plus the requested exogenous columns, using observed values throughout.
features::Dataset build_dataset(const SourceData& source, const features::FeatureSet& fs);

/// Stable per-cell seed: hash of (window label, model, feature-set label) mixed into master.
std::uint64_t cell_seed(std::uint64_t master, std::string_view window, std::string_view model,
                        std::string_view feature_set);

struct CellResult {
  eval::EvalReport report;
  std::vector<Timestamp> stamps;  // test rows
  Eigen::MatrixXd observed;       // 2 x n
  Eigen::MatrixXd predicted;      // 2 x n, empty for failed cells
  std::size_t training_rows = 0;
};

/// Train one model on `window` of `ds`, predict its test period, score it.
/// Any failure is captured in the report instead of thrown.
CellResult run_cell(const features::Dataset& ds, const features::SplitSpec& window,
                    const std::string& model, const RunConfig& cfg);

struct AblationResult {
  std::vector<CellResult> cells;  // plan order
  bool nested_training_sets = true;

  [[nodiscard]] std::vector<eval::EvalReport> reports() const;
};

/// Every window x every model on `fs` (base by default), rows ordered by
/// window start then model.
AblationResult run_window_ablation(const SourceData& source, const RunConfig& cfg,
                                   const features::FeatureSet& fs = {});

/// Bayesian model on the most recent window, one row per configured feature set.
AblationResult run_feature_ablation(const SourceData& source, const RunConfig& cfg);

/// True when every later window's training stamps are a subset of each earlier one's.
bool training_sets_nested(const features::Dataset& ds, std::vector<features::SplitSpec> windows);

// Plot series CSV: Window,Model,Dataset,Date,Hour,TruckRate,TruckRatePred,HandlingTime,HandlingTimePred
void write_series_csv(std::ostream& out, const AblationResult& result);

std::string sha256_hex(std::string_view bytes);
/// Hash over file names and contents, in the given order.
std::string fingerprint_files(const std::vector<std::filesystem::path>& files);

std::string software_version();

struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  KeyValues config;
  std::string data_fingerprint;
  std::string software_version = exp::software_version();
  std::string started_at;  // local wall-clock time
  double wall_seconds = 0.0;
  std::vector<std::string> outputs;
};

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace depotcast::exp
