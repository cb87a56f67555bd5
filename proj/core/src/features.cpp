#include "depotcast/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "csv.hpp"

namespace depotcast::features {

using namespace std::chrono;

std::string FeatureSet::label() const {
  std::vector<std::string> parts;
  if (appointments) parts.emplace_back("appointments");
  if (cax) parts.emplace_back("cax");
  if (teu) parts.emplace_back("teu");
  if (parts.empty()) return "base";
  return fmt::format("{}", fmt::join(parts, "+"));
}

FeatureSet FeatureSet::parse(const std::string& label) {
  FeatureSet fs;
  if (label == "base" || label.empty()) return fs;
  std::size_t start = 0;
  while (start <= label.size()) {
    auto end = label.find('+', start);
    if (end == std::string::npos) end = label.size();
    const auto part = label.substr(start, end - start);
    if (part == "appointments") {
      fs.appointments = true;
    } else if (part == "cax") {
      fs.cax = true;
    } else if (part == "teu") {
      fs.teu = true;
    } else if (part != "base") {
      throw FeatureError(fmt::format("unknown feature '{}' in set '{}'", part, label));
    }
    start = end + 1;
  }
  return fs;
}

std::vector<std::string> Dataset::feature_names() const {
  std::vector<std::string> names{"hour", "day_of_week"};
  if (features.appointments) names.emplace_back("expected_truck_rate");
  if (features.cax) names.emplace_back("cax");
  if (features.teu) names.emplace_back("teu");
  return names;
}

void Dataset::validate() const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (i > 0 && !(rows[i - 1].stamp < r.stamp)) {
      throw FeatureError(fmt::format("rows not strictly increasing at {}", format_timestamp(r.stamp)));
    }
    if (r.expected_truck_rate.has_value() != features.appointments ||
        r.cax.has_value() != features.cax || r.teu.has_value() != features.teu) {
      throw FeatureError(
          fmt::format("row {} does not match the declared feature columns", format_timestamp(r.stamp)));
    }
  }
}

Eigen::VectorXd feature_vector(const Dataset& ds, const HourlyRow& row) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(ds.feature_count()));
  Eigen::Index i = 0;
  x[i++] = row.hour;
  x[i++] = row.day_of_week;
  if (ds.features.appointments) x[i++] = row.expected_truck_rate.value_or(0);
  if (ds.features.cax) x[i++] = row.cax.value_or(0.0);
  if (ds.features.teu) x[i++] = row.teu.value_or(0.0);
  return x;
}

Samples to_samples(const Dataset& ds) {
  const auto n = static_cast<Eigen::Index>(ds.rows.size());
  Samples s;
  s.inputs.resize(static_cast<Eigen::Index>(ds.feature_count()), n);
  s.targets.resize(kTargetCount, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& r = ds.rows[static_cast<std::size_t>(j)];
    s.inputs.col(j) = feature_vector(ds, r);
    s.targets(0, j) = r.truck_rate;
    s.targets(1, j) = r.handling_time;
  }
  return s;
}

namespace {

HourlyRow grid_row(const Date& d, int h) {
  HourlyRow r;
  r.stamp = make_timestamp(d, h);
  r.hour = h;
  r.day_of_week = day_of_week(d);
  return r;
}

}  // namespace

Dataset aggregate_hourly(const std::vector<data::TruckVisitRecord>& events,
                         const WorkCalendar& calendar, std::optional<DateSpan> span) {
  calendar.validate();
  Dataset ds;
  if (!span) {
    if (events.empty()) return ds;
    auto [lo, hi] = std::minmax_element(
        events.begin(), events.end(),
        [](const auto& a, const auto& b) { return a.gate_in_time < b.gate_in_time; });
    span = DateSpan{date_of(lo->gate_in_time), date_of(hi->gate_in_time)};
  }

  struct Bucket {
    int count = 0;
    double minutes = 0.0;
  };
  std::unordered_map<std::int64_t, Bucket> buckets;
  for (const auto& e : events) {
    if (!calendar.is_working_hour(e.gate_in_time)) continue;
    auto& b = buckets[hour_index(e.gate_in_time)];
    ++b.count;
    b.minutes += e.handling_minutes();
  }

  for (Date d = span->first; local_days{d} <= local_days{span->last}; d = add_days(d, 1)) {
    if (!calendar.is_working_day(d)) continue;
    for (int h = calendar.first_hour; h <= calendar.last_hour; ++h) {
      auto row = grid_row(d, h);
      if (auto it = buckets.find(hour_index(row.stamp)); it != buckets.end()) {
        row.truck_rate = it->second.count;
        row.handling_time = it->second.minutes / it->second.count;
      }
      ds.rows.push_back(row);
    }
  }
  return ds;
}

Dataset working_grid(const std::vector<Date>& days, const WorkCalendar& calendar) {
  calendar.validate();
  Dataset ds;
  for (const auto& d : days) {
    for (int h = calendar.first_hour; h <= calendar.last_hour; ++h) ds.rows.push_back(grid_row(d, h));
  }
  return ds;
}

Dataset join_appointments(Dataset ds, const std::vector<data::AppointmentRecord>& appts) {
  if (ds.features.appointments) {
    throw FeatureError("dataset already has an expected_truck_rate column");
  }
  std::unordered_map<std::int64_t, int> counts;
  for (const auto& a : appts) {
    const auto arrival_hour = floor_hour(a.expected_arrival);
    if (local_days{date_of(a.booked_at)} < local_days{date_of(arrival_hour)}) {
      ++counts[hour_index(arrival_hour)];
    }
  }
  for (auto& r : ds.rows) {
    auto it = counts.find(hour_index(r.stamp));
    r.expected_truck_rate = it == counts.end() ? 0 : it->second;
  }
  ds.features.appointments = true;
  return ds;
}

Dataset join_cax(Dataset ds, const std::vector<data::CaxWeekValue>& cax) {
  if (ds.features.cax) throw FeatureError("dataset already has a cax column");
  std::map<IsoWeek, double> by_week;
  for (const auto& c : cax) by_week[c.iso_week] = c.value;
  for (auto& r : ds.rows) {
    const auto week = iso_week(date_of(r.stamp));
    auto it = by_week.find(week);
    if (it == by_week.end()) {
      throw FeatureError(fmt::format("no CAx value for ISO week {}", to_string(week)));
    }
    r.cax = it->second;
  }
  ds.features.cax = true;
  return ds;
}

Dataset join_teu(Dataset ds, const std::vector<data::SailingEntry>& sailings,
                 int road_lag_hours) {
  if (ds.features.teu) throw FeatureError("dataset already has a teu column");
  if (road_lag_hours < 0) throw FeatureError("road_lag_hours must be non-negative");
  std::unordered_map<std::int64_t, double> by_hour;
  for (const auto& s : sailings) by_hour[hour_index(s.arrival_time) + road_lag_hours] += s.teu;
  for (auto& r : ds.rows) {
    auto it = by_hour.find(hour_index(r.stamp));
    r.teu = it == by_hour.end() ? 0.0 : it->second;
  }
  ds.features.teu = true;
  return ds;
}

void SplitSpec::validate() const {
  if (!(local_days{train_start} < local_days{train_end}) ||
      !(local_days{train_end} <= local_days{test_start})) {
    throw FeatureError(fmt::format("invalid split: need train_start < train_end <= test_start "
                                   "(got {}, {}, {})",
                                   format_date(train_start), format_date(train_end),
                                   format_date(test_start)));
  }
  if (test_weeks < 1) throw FeatureError("test_weeks must be positive");
}

Date SplitSpec::test_end_exclusive() const { return add_days(test_start, 7 * test_weeks); }

std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
  spec.validate();
  Dataset train{ds.features, {}};
  Dataset test{ds.features, {}};
  const local_days train_lo{spec.train_start};
  const local_days train_hi{spec.train_end};
  const local_days test_lo{spec.test_start};
  const local_days test_hi{spec.test_end_exclusive()};
  for (const auto& r : ds.rows) {
    const local_days d = floor<days>(r.stamp);
    if (d >= train_lo && d <= train_hi && d < test_lo) {
      train.rows.push_back(r);
    } else if (d >= test_lo && d < test_hi) {
      test.rows.push_back(r);
    }
  }
  if (train.empty()) {
    throw FeatureError(fmt::format("split {}: no training rows", spec.label()));
  }
  if (test.empty()) throw FeatureError(fmt::format("split {}: no test rows", spec.label()));
  return {std::move(train), std::move(test)};
}

std::pair<Dataset, Dataset> holdout_tail(const Dataset& ds, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw FeatureError("holdout fraction must lie in [0, 1)");
  }
  const auto n = ds.rows.size();
  auto n_valid = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction));
  if (n_valid == 0 && fraction > 0.0 && n > 1) n_valid = 1;
  const auto cut = static_cast<std::ptrdiff_t>(n - n_valid);
  Dataset fit{ds.features, {ds.rows.begin(), ds.rows.begin() + cut}};
  Dataset valid{ds.features, {ds.rows.begin() + cut, ds.rows.end()}};
  return {std::move(fit), std::move(valid)};
}

// ---------------------------------------------------------------------------

namespace {

void column_moments(const Eigen::MatrixXd& m, Eigen::VectorXd& mean, Eigen::VectorXd& sd) {
  const double n = static_cast<double>(m.cols());
  mean = m.rowwise().sum() / n;
  sd = ((m.colwise() - mean).array().square().rowwise().sum() / n).sqrt().matrix();
  for (Eigen::Index i = 0; i < sd.size(); ++i) {
    if (!(sd[i] > 0.0)) sd[i] = 1.0;
  }
}

}  // namespace

Standardizer fit_standardizer(const Samples& train) {
  if (train.size() == 0) throw FeatureError("cannot fit a standardizer on an empty dataset");
  Standardizer s;
  column_moments(train.inputs, s.feature_mean, s.feature_sd);
  column_moments(train.targets, s.target_mean, s.target_sd);
  return s;
}

Standardizer fit_standardizer(const Dataset& train) { return fit_standardizer(to_samples(train)); }

Eigen::MatrixXd Standardizer::apply_features(const Eigen::MatrixXd& x) const {
  return (x.colwise() - feature_mean).array().colwise() / feature_sd.array();
}

Eigen::MatrixXd Standardizer::invert_features(const Eigen::MatrixXd& z) const {
  return (z.array().colwise() * feature_sd.array()).matrix().colwise() + feature_mean;
}

Eigen::MatrixXd Standardizer::apply_targets(const Eigen::MatrixXd& y) const {
  return (y.colwise() - target_mean).array().colwise() / target_sd.array();
}

Eigen::MatrixXd Standardizer::invert_targets(const Eigen::MatrixXd& z) const {
  return (z.array().colwise() * target_sd.array()).matrix().colwise() + target_mean;
}

Samples Standardizer::apply(const Samples& s) const {
  return {apply_features(s.inputs), apply_targets(s.targets)};
}

// ---------------------------------------------------------------------------

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  auto out = csv::open_for_write<FeatureError>(path);
  out << "Date,Hour,DayOfWeek";
  if (ds.features.appointments) out << ",ExpectedTruckRate";
  if (ds.features.cax) out << ",Cax";
  if (ds.features.teu) out << ",Teu";
  out << ",TruckRate,HandlingTime\n";
  for (const auto& r : ds.rows) {
    out << format_timestamp(r.stamp) << ',' << r.hour << ',' << r.day_of_week;
    if (ds.features.appointments) out << ',' << r.expected_truck_rate.value_or(0);
    if (ds.features.cax) out << ',' << fmt::format("{}", r.cax.value_or(0.0));
    if (ds.features.teu) out << ',' << fmt::format("{}", r.teu.value_or(0.0));
    out << ',' << r.truck_rate << ',' << fmt::format("{}", r.handling_time) << '\n';
  }
  csv::finish<FeatureError>(out, path);
}

Dataset read_dataset(const std::filesystem::path& path) {
  const auto table = csv::Table::load<FeatureError>(path);
  Dataset ds;
  ds.features.appointments = table.has_column("ExpectedTruckRate");
  ds.features.cax = table.has_column("Cax");
  ds.features.teu = table.has_column("Teu");
  const auto c_date = table.column<FeatureError>("Date");
  const auto c_hour = table.column<FeatureError>("Hour");
  const auto c_dow = table.column<FeatureError>("DayOfWeek");
  const auto c_rate = table.column<FeatureError>("TruckRate");
  const auto c_ht = table.column<FeatureError>("HandlingTime");

  auto fail = [&](std::size_t i, std::string_view what) {
    return FeatureError(fmt::format("'{}' row {}: {}", table.path(), i + 1, what));
  };
  auto integer = [&](std::string_view s, std::size_t i, std::string_view col) {
    auto v = csv::to_int(s);
    if (!v) throw fail(i, fmt::format("bad {} '{}'", col, s));
    return static_cast<int>(*v);
  };
  auto real = [&](std::string_view s, std::size_t i, std::string_view col) {
    auto v = csv::to_double(s);
    if (!v) throw fail(i, fmt::format("bad {} '{}'", col, s));
    return *v;
  };

  ds.rows.reserve(table.rows());
  for (std::size_t i = 0; i < table.rows(); ++i) {
    const auto f = table.row<FeatureError>(i);
    HourlyRow r;
    auto stamp = parse_timestamp(f[c_date]);
    if (!stamp) throw fail(i, fmt::format("unparseable Date '{}'", f[c_date]));
    r.stamp = *stamp;
    r.hour = integer(f[c_hour], i, "Hour");
    r.day_of_week = integer(f[c_dow], i, "DayOfWeek");
    if (r.stamp != floor_hour(r.stamp) || r.hour != hour_of(r.stamp) ||
        r.day_of_week != day_of_week(date_of(r.stamp))) {
      throw fail(i, "Hour/DayOfWeek inconsistent with Date");
    }
    if (ds.features.appointments) {
      r.expected_truck_rate =
          integer(f[table.column<FeatureError>("ExpectedTruckRate")], i, "ExpectedTruckRate");
    }
    if (ds.features.cax) r.cax = real(f[table.column<FeatureError>("Cax")], i, "Cax");
    if (ds.features.teu) r.teu = real(f[table.column<FeatureError>("Teu")], i, "Teu");
    r.truck_rate = integer(f[c_rate], i, "TruckRate");
    r.handling_time = real(f[c_ht], i, "HandlingTime");
    ds.rows.push_back(r);
  }
  ds.validate();
  return ds;
}

}  // namespace depotcast::features
