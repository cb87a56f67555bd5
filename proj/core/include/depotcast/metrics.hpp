#pragma once

// Residuals, sums of squares, coefficient of determination and mean squared
// error, plus the per-target evaluation report used by the ablation tables.

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "depotcast/calendar.hpp"
#include "depotcast/features.hpp"

namespace depotcast::eval {

/// Observed values y and predictions f for one target.
struct PredictionSeries {
  std::vector<Timestamp> stamps;  // optional; empty or same length as y_true
  std::vector<double> y_true;
  std::vector<double> y_pred;

  [[nodiscard]] std::size_t size() const { return y_true.size(); }
  /// Throws std::invalid_argument unless lengths agree and n >= 1.
  void validate() const;
};

/// e_i = y_i - f_i
std::vector<double> residuals(const PredictionSeries& s);
/// (1/n) sum y_i
double mean_observed(const PredictionSeries& s);
/// sum (y_i - f_i)^2
double ss_res(const PredictionSeries& s);
/// sum (y_i - mean(y))^2
double ss_total(const PredictionSeries& s);
/// (1/n) sum (y_i - f_i)^2, evaluated as ss_res / n.
double mse(const PredictionSeries& s);

struct RSquared {
  double value = 0.0;
  // Set when ss_total == 0: value is 1 for an exact fit, -infinity otherwise.
  bool degenerate = false;
};

/// 1 - ss_res / ss_total.
RSquared r_squared(const PredictionSeries& s);

struct EvalReport {
  std::string model;
  std::string dataset;
  std::string window;
  std::array<double, features::kTargetCount> mse{};
  std::array<double, features::kTargetCount> r2{};
  std::array<bool, features::kTargetCount> r2_degenerate{};
  std::size_t samples = 0;
  bool failed = false;
  std::string failure;  // diagnostic of a failed cell
};

/// One report row from the truck-rate and handling-time series.
EvalReport build_report(const std::string& model, const std::string& dataset,
                        const std::string& window, const PredictionSeries& truck_rate,
                        const PredictionSeries& handling_time);

EvalReport failed_report(const std::string& model, const std::string& dataset,
                         const std::string& window, const std::string& reason);

/// Splits 2 x n natural-unit predictions against a dataset's targets.
/// With `exclude_empty_hours`, rows whose observed truck rate is 0 are dropped.
std::array<PredictionSeries, features::kTargetCount> series_from(const features::Dataset& ds,
                                                                  const Eigen::MatrixXd& predictions,
                                                                  bool exclude_empty_hours = false);

/// Per-(weekday, hour) training means of each target, predicted for every test row.
Eigen::MatrixXd hourly_climatology(const features::Dataset& train, const features::Dataset& test);

// CSV: Window,Model,Dataset,Samples,TruckRateMSE,HandlingTimeMSE,TruckRateR2,HandlingTimeR2,Status
void write_reports_csv(std::ostream& out, std::span<const EvalReport> reports);
/// Aligned text table: one row per report, MSE and R^2 column pairs per target.
std::string format_table(std::span<const EvalReport> reports);

}  // namespace depotcast::eval
