#pragma once

// Hourly working-grid dataset built from gate events, the optional exogenous
// feature joins, chronological splits, and feature/target standardization.

#include <array>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "depotcast/calendar.hpp"
#include "depotcast/depot_data.hpp"

namespace depotcast::features {

class FeatureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HourlyRow {
  Timestamp stamp;  // hour resolution
  int hour = 0;
  int day_of_week = 0;  // Monday = 0
  std::optional<int> expected_truck_rate;
  std::optional<double> cax;
  std::optional<double> teu;
  int truck_rate = 0;
  double handling_time = 0.0;  // minutes

  bool operator==(const HourlyRow&) const = default;
};

/// Which optional columns a dataset carries. Columns always appear in the
/// canonical order hour, day_of_week, expected_truck_rate, cax, teu.
struct FeatureSet {
  bool appointments = false;
  bool cax = false;
  bool teu = false;

  [[nodiscard]] std::string label() const;  // "base", "appointments", "cax+teu", ...
  static FeatureSet parse(const std::string& label);
  bool operator==(const FeatureSet&) const = default;
};

inline constexpr std::size_t kTargetCount = 2;
inline constexpr std::array<const char*, kTargetCount> kTargetNames{"truck_rate",
                                                                    "handling_time"};

struct Dataset {
  FeatureSet features;
  std::vector<HourlyRow> rows;

  [[nodiscard]] std::vector<std::string> feature_names() const;
  [[nodiscard]] std::size_t feature_count() const { return feature_names().size(); }
  [[nodiscard]] bool empty() const { return rows.empty(); }
  /// Throws FeatureError unless rows are strictly increasing and every row
  /// carries exactly the declared optional columns.
  void validate() const;
};

/// Feature values of one row in canonical column order.
Eigen::VectorXd feature_vector(const Dataset& ds, const HourlyRow& row);

/// Natural-unit design matrices, one sample per column.
struct Samples {
  Eigen::MatrixXd inputs;   // features x n
  Eigen::MatrixXd targets;  // 2 x n
  [[nodiscard]] Eigen::Index size() const { return inputs.cols(); }
};

Samples to_samples(const Dataset& ds);

/// Full working-hour grid for the calendar days spanned by the events (or by
/// `span` when given). A truck counts in the hour of its gate-in; empty hours
/// get truck_rate 0 and handling_time 0.
struct DateSpan {
  Date first;
  Date last;  // inclusive
};
Dataset aggregate_hourly(const std::vector<data::TruckVisitRecord>& events,
                         const WorkCalendar& calendar,
                         std::optional<DateSpan> span = std::nullopt);

/// Working-hour rows with zero targets, for forecasting.
Dataset working_grid(const std::vector<Date>& days, const WorkCalendar& calendar);

/// Counts appointments per hour, keeping only bookings made on an earlier
/// calendar date than the arrival hour's date.
Dataset join_appointments(Dataset ds, const std::vector<data::AppointmentRecord>& appts);

/// Appends each row's ISO-week CAx value. Throws FeatureError naming the
/// first week without a value.
Dataset join_cax(Dataset ds, const std::vector<data::CaxWeekValue>& cax);

/// TEU at hour t is the total of sailings arriving in hour t - road_lag_hours.
Dataset join_teu(Dataset ds, const std::vector<data::SailingEntry>& sailings,
                 int road_lag_hours);

struct SplitSpec {
  Date train_start;
  Date train_end;  // inclusive
  Date test_start;
  int test_weeks = 4;

  void validate() const;
  [[nodiscard]] Date test_end_exclusive() const;
  [[nodiscard]] std::string label() const { return format_date(train_start); }
};

/// Training rows have train_start <= date <= train_end and date < test_start;
/// test rows fall in [test_start, test_start + 7 * test_weeks days).
std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec);

/// Chronological tail split: the last `fraction` of rows become validation.
std::pair<Dataset, Dataset> holdout_tail(const Dataset& ds, double fraction);

/// Affine scaling fitted on training data: population mean and SD per column,
/// with zero-variance columns stored as SD 1.
struct Standardizer {
  Eigen::VectorXd feature_mean;
  Eigen::VectorXd feature_sd;
  Eigen::VectorXd target_mean;
  Eigen::VectorXd target_sd;

  [[nodiscard]] Eigen::MatrixXd apply_features(const Eigen::MatrixXd& x) const;
  [[nodiscard]] Eigen::MatrixXd invert_features(const Eigen::MatrixXd& z) const;
  [[nodiscard]] Eigen::MatrixXd apply_targets(const Eigen::MatrixXd& y) const;
  [[nodiscard]] Eigen::MatrixXd invert_targets(const Eigen::MatrixXd& z) const;
  [[nodiscard]] Samples apply(const Samples& s) const;
};

Standardizer fit_standardizer(const Samples& train);
Standardizer fit_standardizer(const Dataset& train);

// Hourly dataset CSV: Date,Hour,DayOfWeek[,ExpectedTruckRate][,Cax][,Teu],TruckRate,HandlingTime
void write_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace depotcast::features
