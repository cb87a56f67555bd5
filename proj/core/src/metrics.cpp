#include "depotcast/metrics.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

namespace depotcast::eval {

void PredictionSeries::validate() const {
  if (y_true.empty()) throw std::invalid_argument("prediction series is empty");
  if (y_true.size() != y_pred.size()) {
    throw std::invalid_argument(fmt::format("series length mismatch: {} observed, {} predicted",
                                            y_true.size(), y_pred.size()));
  }
  if (!stamps.empty() && stamps.size() != y_true.size()) {
    throw std::invalid_argument("series stamps do not match values");
  }
}

std::vector<double> residuals(const PredictionSeries& s) {
  s.validate();
  std::vector<double> e(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) e[i] = s.y_true[i] - s.y_pred[i];
  return e;
}

double mean_observed(const PredictionSeries& s) {
  s.validate();
  double sum = 0.0;
  for (double y : s.y_true) sum += y;
  return sum / static_cast<double>(s.size());
}

double ss_res(const PredictionSeries& s) {
  s.validate();
  double sum = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double e = s.y_true[i] - s.y_pred[i];
    sum += e * e;
  }
  return sum;
}

double ss_total(const PredictionSeries& s) {
  const double ybar = mean_observed(s);
  double sum = 0.0;
  for (double y : s.y_true) sum += (y - ybar) * (y - ybar);
  return sum;
}

double mse(const PredictionSeries& s) { return ss_res(s) / static_cast<double>(s.size()); }

RSquared r_squared(const PredictionSeries& s) {
  const double res = ss_res(s);
  const double tot = ss_total(s);
  if (tot == 0.0) {
    return {res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity(), true};
  }
  return {1.0 - res / tot, false};
}

EvalReport build_report(const std::string& model, const std::string& dataset,
                        const std::string& window, const PredictionSeries& truck_rate,
                        const PredictionSeries& handling_time) {
  truck_rate.validate();
  handling_time.validate();
  if (truck_rate.size() != handling_time.size()) {
    throw std::invalid_argument("truck-rate and handling-time series differ in length");
  }
  EvalReport r;
  r.model = model;
  r.dataset = dataset;
  r.window = window;
  r.samples = truck_rate.size();
  const std::array<const PredictionSeries*, 2> series{&truck_rate, &handling_time};
  for (std::size_t t = 0; t < series.size(); ++t) {
    r.mse[t] = mse(*series[t]);
    const auto r2 = r_squared(*series[t]);
    r.r2[t] = r2.value;
    r.r2_degenerate[t] = r2.degenerate;
  }
  return r;
}

EvalReport failed_report(const std::string& model, const std::string& dataset,
                         const std::string& window, const std::string& reason) {
  EvalReport r;
  r.model = model;
  r.dataset = dataset;
  r.window = window;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.mse = {nan, nan};
  r.r2 = {nan, nan};
  r.failed = true;
  r.failure = reason;
  return r;
}

std::array<PredictionSeries, features::kTargetCount> series_from(const features::Dataset& ds,
                                                                  const Eigen::MatrixXd& predictions,
                                                                  bool exclude_empty_hours) {
  if (predictions.rows() != static_cast<Eigen::Index>(features::kTargetCount) ||
      predictions.cols() != static_cast<Eigen::Index>(ds.rows.size())) {
    throw std::invalid_argument("prediction matrix does not match the dataset");
  }
  std::array<PredictionSeries, features::kTargetCount> out;
  for (std::size_t i = 0; i < ds.rows.size(); ++i) {
    const auto& row = ds.rows[i];
    if (exclude_empty_hours && row.truck_rate == 0) continue;
    const auto col = static_cast<Eigen::Index>(i);
    for (auto& s : out) s.stamps.push_back(row.stamp);
    out[0].y_true.push_back(row.truck_rate);
    out[0].y_pred.push_back(predictions(0, col));
    out[1].y_true.push_back(row.handling_time);
    out[1].y_pred.push_back(predictions(1, col));
  }
  return out;
}

Eigen::MatrixXd hourly_climatology(const features::Dataset& train, const features::Dataset& test) {
  struct Acc {
    double rate = 0.0;
    double handling = 0.0;
    int n = 0;
  };
  std::map<std::pair<int, int>, Acc> cells;
  Acc overall;
  for (const auto& r : train.rows) {
    auto& c = cells[{r.day_of_week, r.hour}];
    c.rate += r.truck_rate;
    c.handling += r.handling_time;
    ++c.n;
    overall.rate += r.truck_rate;
    overall.handling += r.handling_time;
    ++overall.n;
  }
  if (overall.n == 0) throw std::invalid_argument("climatology needs training rows");
  Eigen::MatrixXd out(2, static_cast<Eigen::Index>(test.rows.size()));
  for (std::size_t i = 0; i < test.rows.size(); ++i) {
    const auto& r = test.rows[i];
    auto it = cells.find({r.day_of_week, r.hour});
    const Acc& c = it == cells.end() ? overall : it->second;
    out(0, static_cast<Eigen::Index>(i)) = c.rate / c.n;
    out(1, static_cast<Eigen::Index>(i)) = c.handling / c.n;
  }
  return out;
}

namespace {

std::string number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.6f}", v);
}

}  // namespace

void write_reports_csv(std::ostream& out, std::span<const EvalReport> reports) {
  out << "Window,Model,Dataset,Samples,TruckRateMSE,HandlingTimeMSE,TruckRateR2,HandlingTimeR2,"
         "Status\n";
  for (const auto& r : reports) {
    out << fmt::format("{},{},{},{},{},{},{},{},{}\n", r.window, r.model, r.dataset, r.samples,
                       number(r.mse[0]), number(r.mse[1]), number(r.r2[0]), number(r.r2[1]),
                       r.failed ? "failed" : "ok");
  }
}

std::string format_table(std::span<const EvalReport> reports) {
  std::string s = fmt::format("{:<12} {:<10} {:<22} | {:>10} {:>10} | {:>10} {:>10}\n", "", "",
                              "", "MSE", "", "R^2", "");
  s += fmt::format("{:<12} {:<10} {:<22} | {:>10} {:>10} | {:>10} {:>10}\n", "Window", "Model",
                   "Dataset", "TruckRate", "Handling", "TruckRate", "Handling");
  s += std::string(12 + 1 + 10 + 1 + 22 + 3 + 21 + 3 + 21, '-') + '\n';
  auto cell = [](double v) {
    if (std::isnan(v)) return std::string("failed");
    if (std::isinf(v)) return std::string(v > 0 ? "inf" : "-inf");
    return fmt::format("{:.4f}", v);
  };
  for (const auto& r : reports) {
    s += fmt::format("{:<12} {:<10} {:<22} | {:>10} {:>10} | {:>10} {:>10}\n", r.window, r.model,
                     r.dataset, cell(r.mse[0]), cell(r.mse[1]), cell(r.r2[0]), cell(r.r2[1]));
  }
  return s;
}

}  // namespace depotcast::eval
