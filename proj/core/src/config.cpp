#include "depotcast/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "csv.hpp"

namespace depotcast::exp {

using namespace std::chrono;

std::vector<features::SplitSpec> ExperimentSettings::default_windows() {
  std::vector<features::SplitSpec> w;
  for (int y = 2017; y <= 2021; ++y) {
    w.push_back({year{y} / January / 1, 2021y / July / 31, 2021y / August / 2, 4});
  }
  return w;
}

std::vector<features::FeatureSet> ExperimentSettings::default_feature_sets() {
  return {{}, {true, false, false}, {false, true, false}, {false, false, true}};
}

RunConfig::RunConfig() {
  const std::array<double, 16> profile{8, 18, 26, 28, 24, 20, 18, 17, 19, 24, 26, 22, 16, 12, 7, 3};
  for (std::size_t i = 0; i < profile.size(); ++i) hourly_profile[5 + i] = profile[i];
  day_factors = {1.15, 1.05, 1.0, 0.95, 0.85, 0.5, 0.2};
  sync();
}

void RunConfig::sync() {
  for (std::size_t d = 0; d < 7; ++d) {
    for (std::size_t h = 0; h < 24; ++h) sim.base_intensity[d][h] = hourly_profile[h] * day_factors[d];
  }
  sim.calendar = calendar;
}

void RunConfig::validate() const {
  sim.validate();
  calendar.validate();
  if (road_lag_hours < 0) throw ConfigError("pipeline.road_lag_hours must be >= 0");
  train.validate();
  if (experiment.windows.empty() || experiment.feature_sets.empty() || experiment.models.empty()) {
    throw ConfigError("experiment needs at least one window, feature set and model");
  }
  for (const auto& w : experiment.windows) w.validate();
  for (const auto& m : experiment.models) {
    if (m != "bayesian" && m != "baseline") throw ConfigError(fmt::format("unknown model '{}'", m));
  }
  if (experiment.jobs < 1) throw ConfigError("experiment.jobs must be >= 1");
}

namespace {

constexpr std::array<const char*, 7> kDayNames{"Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"};

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  auto d = csv::to_double(v);
  if (!d) throw ConfigError(fmt::format("{}: expected a number, got '{}'", key, v));
  return *d;
}

long long to_integer(const std::string& key, const std::string& v) {
  auto i = csv::to_int(v);
  if (!i) throw ConfigError(fmt::format("{}: expected an integer, got '{}'", key, v));
  return *i;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ConfigError(fmt::format("{}: expected an unsigned integer, got '{}'", key, v));
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(fmt::format("{}: expected true/false, got '{}'", key, v));
}

Date to_date(const std::string& key, const std::string& v) {
  auto d = parse_date(v);
  if (!d) throw ConfigError(fmt::format("{}: expected YYYY-MM-DD, got '{}'", key, v));
  return *d;
}

template <std::size_t N>
std::array<double, N> to_array(const std::string& key, const std::string& v) {
  const auto items = split_list(v, ',');
  if (items.size() != N) {
    throw ConfigError(fmt::format("{}: expected {} comma-separated values, got {}", key, N,
                                  items.size()));
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = to_real(key, items[i]);
  return out;
}

std::string real(double v) { return fmt::format("{}", v); }

std::string window_text(const features::SplitSpec& s) {
  return fmt::format("{}:{}:{}:{}", format_date(s.train_start), format_date(s.train_end),
                     format_date(s.test_start), s.test_weeks);
}

features::SplitSpec parse_window(const std::string& key, const std::string& text) {
  const auto parts = split_list(text, ':');
  if (parts.size() != 4) {
    throw ConfigError(fmt::format(
        "{}: window '{}' must be train_start:train_end:test_start:test_weeks", key, text));
  }
  features::SplitSpec s{to_date(key, parts[0]), to_date(key, parts[1]), to_date(key, parts[2]),
                        static_cast<int>(to_integer(key, parts[3]))};
  try {
    s.validate();
  } catch (const features::FeatureError& e) {
    throw ConfigError(fmt::format("{}: {}", key, e.what()));
  }
  return s;
}

}  // namespace

RunConfig config_from_key_values(const KeyValues& kv) {
  RunConfig c;
  auto& s = c.sim;
  auto& t = c.train;
  auto& e = c.experiment;
  for (const auto& [key, v] : kv) {
    // [sim]
    if (key == "sim.start_date") s.start_date = to_date(key, v);
    else if (key == "sim.end_date") s.end_date = to_date(key, v);
    else if (key == "sim.hourly_profile") c.hourly_profile = to_array<24>(key, v);
    else if (key == "sim.day_factors") c.day_factors = to_array<7>(key, v);
    else if (key == "sim.constant_intensity") {
      c.hourly_profile.fill(to_real(key, v));
      c.day_factors.fill(1.0);
    }
    else if (key == "sim.handling_base_minutes") s.handling_base_minutes = to_real(key, v);
    else if (key == "sim.congestion_coefficient") s.congestion_coefficient = to_real(key, v);
    else if (key == "sim.handling_noise_minutes") s.handling_noise_minutes = to_real(key, v);
    else if (key == "sim.handling_noise_shape") s.handling_noise_shape = to_real(key, v);
    else if (key == "sim.appointment_coverage") s.appointment_coverage = to_real(key, v);
    else if (key == "sim.max_booking_lead_days") s.max_booking_lead_days = static_cast<int>(to_integer(key, v));
    else if (key == "sim.cax_coupling") s.cax_coupling = to_real(key, v);
    else if (key == "sim.teu_coupling") s.teu_coupling = to_real(key, v);
    else if (key == "sim.teu_reference") s.teu_reference = to_real(key, v);
    else if (key == "sim.road_lag_hours") s.road_lag_hours = static_cast<int>(to_integer(key, v));
    else if (key == "sim.cax_persistence") s.cax_persistence = to_real(key, v);
    else if (key == "sim.cax_innovation_sd") s.cax_innovation_sd = to_real(key, v);
    else if (key == "sim.ships_per_day") s.ships_per_day = to_real(key, v);
    else if (key == "sim.teu_min") s.teu_min = to_real(key, v);
    else if (key == "sim.teu_max") s.teu_max = to_real(key, v);
    else if (key == "sim.customer_count") s.customer_count = static_cast<int>(to_integer(key, v));
    else if (key == "sim.rng_seed") s.rng_seed = to_u64(key, v);
    // [calendar]
    else if (key == "calendar.first_hour") c.calendar.first_hour = static_cast<int>(to_integer(key, v));
    else if (key == "calendar.last_hour") c.calendar.last_hour = static_cast<int>(to_integer(key, v));
    else if (key == "calendar.working_days") {
      c.calendar.working_days.fill(false);
      for (const auto& name : split_list(v, ',')) {
        auto it = std::find(kDayNames.begin(), kDayNames.end(), name);
        if (it == kDayNames.end()) throw ConfigError(fmt::format("{}: unknown day '{}'", key, name));
        c.calendar.working_days[static_cast<std::size_t>(it - kDayNames.begin())] = true;
      }
    }
    // [pipeline]
    else if (key == "pipeline.road_lag_hours") c.road_lag_hours = static_cast<int>(to_integer(key, v));
    // [train]
    else if (key == "train.hidden_widths") {
      t.hidden_widths.clear();
      for (const auto& w : split_list(v, ',')) t.hidden_widths.push_back(static_cast<int>(to_integer(key, w)));
    }
    else if (key == "train.activation") {
      try {
        t.activation = nn::parse_activation(v);
      } catch (const std::invalid_argument& err) {
        throw ConfigError(fmt::format("{}: {}", key, err.what()));
      }
    }
    else if (key == "train.epochs") t.epochs = static_cast<int>(to_integer(key, v));
    else if (key == "train.batch_size") t.batch_size = static_cast<int>(to_integer(key, v));
    else if (key == "train.learning_rate") t.learning_rate = to_real(key, v);
    else if (key == "train.lr_decay") t.lr_decay = to_real(key, v);
    else if (key == "train.beta1") t.beta1 = to_real(key, v);
    else if (key == "train.beta2") t.beta2 = to_real(key, v);
    else if (key == "train.epsilon") t.epsilon = to_real(key, v);
    else if (key == "train.kl_weight") t.kl_weight = to_real(key, v);
    else if (key == "train.sigma_min") t.sigma_min = to_real(key, v);
    else if (key == "train.mc_samples") t.mc_samples = static_cast<int>(to_integer(key, v));
    else if (key == "train.rng_seed") t.rng_seed = to_u64(key, v);
    else if (key == "train.patience") t.patience = static_cast<int>(to_integer(key, v));
    else if (key == "train.validation_fraction") t.validation_fraction = to_real(key, v);
    // [experiment]
    else if (key == "experiment.windows") {
      e.windows.clear();
      for (const auto& w : split_list(v, ';')) e.windows.push_back(parse_window(key, w));
    }
    else if (key == "experiment.feature_sets") {
      e.feature_sets.clear();
      for (const auto& f : split_list(v, ',')) {
        try {
          e.feature_sets.push_back(features::FeatureSet::parse(f));
        } catch (const features::FeatureError& err) {
          throw ConfigError(fmt::format("{}: {}", key, err.what()));
        }
      }
    }
    else if (key == "experiment.models") e.models = split_list(v, ',');
    else if (key == "experiment.master_seed") e.master_seed = to_u64(key, v);
    else if (key == "experiment.exclude_empty_hours") e.exclude_empty_hours = to_bool(key, v);
    else if (key == "experiment.jobs") e.jobs = static_cast<int>(to_integer(key, v));
    else throw ConfigError(fmt::format("unknown configuration key '{}'", key));
  }
  c.sync();
  try {
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& err) {
    throw ConfigError(err.what());
  }
  return c;
}

KeyValues to_key_values(const RunConfig& c) {
  const auto& s = c.sim;
  const auto& t = c.train;
  const auto& e = c.experiment;
  KeyValues kv;
  kv["sim.start_date"] = format_date(s.start_date);
  kv["sim.end_date"] = format_date(s.end_date);
  kv["sim.hourly_profile"] = fmt::format("{}", fmt::join(c.hourly_profile, ","));
  kv["sim.day_factors"] = fmt::format("{}", fmt::join(c.day_factors, ","));
  kv["sim.handling_base_minutes"] = real(s.handling_base_minutes);
  kv["sim.congestion_coefficient"] = real(s.congestion_coefficient);
  kv["sim.handling_noise_minutes"] = real(s.handling_noise_minutes);
  kv["sim.handling_noise_shape"] = real(s.handling_noise_shape);
  kv["sim.appointment_coverage"] = real(s.appointment_coverage);
  kv["sim.max_booking_lead_days"] = std::to_string(s.max_booking_lead_days);
  kv["sim.cax_coupling"] = real(s.cax_coupling);
  kv["sim.teu_coupling"] = real(s.teu_coupling);
  kv["sim.teu_reference"] = real(s.teu_reference);
  kv["sim.road_lag_hours"] = std::to_string(s.road_lag_hours);
  kv["sim.cax_persistence"] = real(s.cax_persistence);
  kv["sim.cax_innovation_sd"] = real(s.cax_innovation_sd);
  kv["sim.ships_per_day"] = real(s.ships_per_day);
  kv["sim.teu_min"] = real(s.teu_min);
  kv["sim.teu_max"] = real(s.teu_max);
  kv["sim.customer_count"] = std::to_string(s.customer_count);
  kv["sim.rng_seed"] = std::to_string(s.rng_seed);

  kv["calendar.first_hour"] = std::to_string(c.calendar.first_hour);
  kv["calendar.last_hour"] = std::to_string(c.calendar.last_hour);
  std::vector<std::string> days;
  for (std::size_t d = 0; d < 7; ++d) {
    if (c.calendar.working_days[d]) days.emplace_back(kDayNames[d]);
  }
  kv["calendar.working_days"] = fmt::format("{}", fmt::join(days, ","));
  kv["pipeline.road_lag_hours"] = std::to_string(c.road_lag_hours);

  kv["train.hidden_widths"] = fmt::format("{}", fmt::join(t.hidden_widths, ","));
  kv["train.activation"] = std::string(nn::to_string(t.activation));
  kv["train.epochs"] = std::to_string(t.epochs);
  kv["train.batch_size"] = std::to_string(t.batch_size);
  kv["train.learning_rate"] = real(t.learning_rate);
  kv["train.lr_decay"] = real(t.lr_decay);
  kv["train.beta1"] = real(t.beta1);
  kv["train.beta2"] = real(t.beta2);
  kv["train.epsilon"] = real(t.epsilon);
  kv["train.kl_weight"] = real(t.kl_weight);
  kv["train.sigma_min"] = real(t.sigma_min);
  kv["train.mc_samples"] = std::to_string(t.mc_samples);
  kv["train.rng_seed"] = std::to_string(t.rng_seed);
  kv["train.patience"] = std::to_string(t.patience);
  kv["train.validation_fraction"] = real(t.validation_fraction);

  std::vector<std::string> windows;
  for (const auto& w : e.windows) windows.push_back(window_text(w));
  kv["experiment.windows"] = fmt::format("{}", fmt::join(windows, ";"));
  std::vector<std::string> sets;
  for (const auto& f : e.feature_sets) sets.push_back(f.label());
  kv["experiment.feature_sets"] = fmt::format("{}", fmt::join(sets, ","));
  kv["experiment.models"] = fmt::format("{}", fmt::join(e.models, ","));
  kv["experiment.master_seed"] = std::to_string(e.master_seed);
  kv["experiment.exclude_empty_hours"] = e.exclude_empty_hours ? "true" : "false";
  kv["experiment.jobs"] = std::to_string(e.jobs);
  return kv;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  KeyValues kv;
  if (path.extension() == ".json") {
    try {
      const auto j = nlohmann::json::parse(in);
      for (const auto& [k, v] : j.at("config").items()) kv[k] = v.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(fmt::format("'{}': not a run manifest ({})", path.string(), e.what()));
    }
  } else {
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(fmt::format("'{}': {}", path.string(), e.message()));
    }
    for (const auto& [section, body] : tree) {
      if (body.empty()) {
        throw ConfigError(fmt::format("'{}': key '{}' outside any section", path.string(), section));
      }
      for (const auto& [key, value] : body) kv[section + "." + key] = value.data();
    }
  }
  return config_from_key_values(kv);
}

void save_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  std::string section;
  for (const auto& [key, value] : to_key_values(cfg)) {
    const auto dot = key.find('.');
    const auto sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    out << key.substr(dot + 1) << " = " << value << '\n';
  }
  if (!out) throw ConfigError(fmt::format("cannot write '{}'", path.string()));
}

}  // namespace depotcast::exp
