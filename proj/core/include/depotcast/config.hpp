#pragma once

// Run configuration: flat key-value text with one section per module
// ([sim], [calendar], [pipeline], [train], [experiment]). Every resolved
// value can be echoed back as "section.key" pairs for run manifests.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "depotcast/calendar.hpp"
#include "depotcast/depot_data.hpp"
#include "depotcast/features.hpp"
#include "depotcast/prob_forecast.hpp"

namespace depotcast::exp {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentSettings {
  std::vector<features::SplitSpec> windows = default_windows();
  std::vector<features::FeatureSet> feature_sets = default_feature_sets();
  std::vector<std::string> models{"bayesian", "baseline"};
  std::uint64_t master_seed = 2021;
  bool exclude_empty_hours = false;
  int jobs = 1;

  /// Five training windows starting each January 2017..2021, all ending
  /// 2021-07-31, tested on the four weeks from Monday 2021-08-02.
  static std::vector<features::SplitSpec> default_windows();
  /// base, +appointments, +cax, +teu.
  static std::vector<features::FeatureSet> default_feature_sets();
};

struct RunConfig {
  data::SimConfig sim;
  // Intensity = hourly_profile[h] * day_factors[d]; written into sim.base_intensity.
  std::array<double, 24> hourly_profile{};
  std::array<double, 7> day_factors{};
  WorkCalendar calendar;
  int road_lag_hours = 2;
  prob::TrainConfig train;
  ExperimentSettings experiment;

  RunConfig();
  /// Rebuilds sim.base_intensity and sim.calendar from the profile fields.
  void sync();
  void validate() const;
};

using KeyValues = std::map<std::string, std::string>;

/// Applies "section.key" overrides on top of the defaults. Unknown keys and
/// malformed values throw ConfigError.
RunConfig config_from_key_values(const KeyValues& kv);
KeyValues to_key_values(const RunConfig& cfg);

/// Reads an INI-style config file, or a run manifest (*.json) whose "config"
/// object holds the resolved key-value pairs of an earlier run.
RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace depotcast::exp
