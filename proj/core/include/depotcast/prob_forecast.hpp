#pragma once

// The two workload forecasters.
//
// BayesianForecaster: dense trunk whose 5-unit linear output parameterizes a
// bivariate Gaussian over (truck_rate, handling_time) as a mean and a lower
// Cholesky factor. Trained on Gaussian negative log-likelihood plus a KL
// penalty toward N(0, I) in standardized target space; point forecasts are
// Monte Carlo averages of draws from the predicted distribution.
//
// MlpBaseline: the same trunk with a 2-unit linear output trained on squared
// error. Deterministic.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "depotcast/calendar.hpp"
#include "depotcast/depot_data.hpp"
#include "depotcast/features.hpp"
#include "depotcast/nn.hpp"

namespace depotcast::prob {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ForecastError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kHeadWidth = 5;
using RawHead = Eigen::Matrix<double, kHeadWidth, 1>;

struct GaussianPrediction {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d chol = Eigen::Matrix2d::Identity();  // lower triangular, positive diagonal

  [[nodiscard]] Eigen::Matrix2d covariance() const { return chol * chol.transpose(); }
  [[nodiscard]] bool valid() const;
};

/// softplus(x) = log(1 + e^x), computed without overflow.
double positivity_map(double x);
/// d softplus / dx = logistic(x).
double positivity_map_derivative(double x);

/// raw = (mean0, mean1, diag0, diag1, offdiag); chol diagonal is
/// softplus(raw) + sigma_min, chol(1, 0) = raw[4].
GaussianPrediction head_transform(const RawHead& raw, double sigma_min);

/// -log N(y; mean, chol chol^T), via triangular solves.
double gaussian_nll(const GaussianPrediction& pred, const Eigen::Vector2d& y);

/// KL(N(mean, Sigma) || N(0, I)).
double kl_penalty(const GaussianPrediction& pred);

/// gaussian_nll + kl_weight * kl_penalty of head_transform(raw), and its
/// gradient with respect to raw when `grad` is non-null.
double head_loss(const RawHead& raw, const Eigen::Vector2d& y, double sigma_min, double kl_weight,
                 RawHead* grad);

/// Batch-mean of head_loss over columns; usable with nn::grad_check.
nn::LossFn bayesian_loss(double sigma_min, double kl_weight);
/// Batch-mean of the per-sample squared error.
nn::LossFn mean_squared_loss();

struct TrainConfig {
  std::vector<int> hidden_widths{64, 64};
  nn::Activation activation = nn::Activation::Relu;
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 3e-3;
  double lr_decay = 1.0;  // per-epoch multiplicative factor
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double kl_weight = 1e-3;
  double sigma_min = 1e-3;
  int mc_samples = 100;
  std::uint64_t rng_seed = 1;
  int patience = 15;  // epochs without validation improvement before stopping
  double validation_fraction = 0.1;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_objective = 0.0;  // minimized loss, batch-weighted over the epoch
  double train_metric = 0.0;     // NLL (Bayesian) or MSE (baseline), standardized units
  double valid_metric = 0.0;     // same metric on the validation set; NaN without one
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  bool early_stopped = false;
};

struct FitResult {
  nn::NetworkParams params;
  TrainLog log;
};

/// Matrix-level trainers on standardized samples (one sample per column).
FitResult fit_gaussian_network(const features::Samples& train, const features::Samples& valid,
                               const TrainConfig& cfg);
FitResult fit_mse_network(const features::Samples& train, const features::Samples& valid,
                          const TrainConfig& cfg);

struct BayesianForecaster {
  nn::NetworkParams network;
  features::Standardizer scaler;
  features::FeatureSet features;
  double sigma_min = 1e-3;

  [[nodiscard]] GaussianPrediction predict_standardized(const Eigen::VectorXd& x_std) const;
  /// Predicted distribution in natural target units for natural-unit features.
  [[nodiscard]] GaussianPrediction predict_distribution(const Eigen::VectorXd& x) const;
};

struct MlpBaseline {
  nn::NetworkParams network;
  features::Standardizer scaler;
  features::FeatureSet features;
};

/// Affine map back to natural units: mean' = D mean + m, chol' = D chol, so
/// Sigma' = D Sigma D with D = diag(target SDs).
GaussianPrediction destandardize(const GaussianPrediction& pred,
                                 const features::Standardizer& scaler);

/// Fits the standardizer on `train`, then trains. `valid` may be empty.
std::pair<BayesianForecaster, TrainLog> train_bayesian(const features::Dataset& train,
                                                       const features::Dataset& valid,
                                                       const TrainConfig& cfg);
std::pair<MlpBaseline, TrainLog> train_baseline_mlp(const features::Dataset& train,
                                                    const features::Dataset& valid,
                                                    const TrainConfig& cfg);

Eigen::Vector2d predict_baseline(const MlpBaseline& model, const Eigen::VectorXd& x);

struct McForecast {
  Eigen::Vector2d point;   // average of the draws
  Eigen::Vector2d spread;  // per-target sample SD of the draws (0 when K = 1)
  GaussianPrediction dist;
};

/// K draws from dist, averaged.
McForecast sample_mc(const GaussianPrediction& dist, int samples, std::uint64_t seed);
McForecast predict_mc(const BayesianForecaster& model, const Eigen::VectorXd& x, int samples,
                      std::uint64_t seed);

/// Published point forecasts for every row of ds (natural units, 2 x n).
/// Row seeds derive from `seed` and the row's hour stamp; truck rate is
/// clamped at zero.
Eigen::MatrixXd point_forecasts(const BayesianForecaster& model, const features::Dataset& ds,
                                int samples, std::uint64_t seed);
Eigen::MatrixXd point_forecasts(const MlpBaseline& model, const features::Dataset& ds);

/// Exogenous series available when a forecast is issued.
struct ExogenousSource {
  std::optional<std::vector<data::AppointmentRecord>> appointments;
  std::optional<std::vector<data::CaxWeekValue>> cax;
  std::optional<std::vector<data::SailingEntry>> sailings;
  int road_lag_hours = 2;
};

/// Adds the optional columns `wanted` to ds from `source`. Appointments
/// booked after `known_by` (when given) are ignored.
features::Dataset attach_features(features::Dataset ds, const features::FeatureSet& wanted,
                                  const ExogenousSource& source,
                                  std::optional<Date> known_by = std::nullopt);

struct ForecastRow {
  Timestamp stamp;
  Eigen::Vector2d point;
  Eigen::Vector2d spread;
};

/// One forecast per working hour over the `horizon_days` working days that
/// follow `from_date`, in natural units. Only appointments booked on or
/// before `from_date` are used.
std::vector<ForecastRow> forecast_week(const BayesianForecaster& model, const Date& from_date,
                                       int horizon_days, const WorkCalendar& calendar,
                                       const ExogenousSource& source, int samples,
                                       std::uint64_t seed);

// Forecast CSV: Date,Hour,TruckRatePred,TruckRateStd,HandlingTimePred,HandlingTimeStd
void write_forecast(const std::vector<ForecastRow>& rows, const std::filesystem::path& path);

using Model = std::variant<BayesianForecaster, MlpBaseline>;

// Model checkpoint: JSON with kind, feature manifest, standardizer and the
// network checkpoint (see nn::serialize_network).
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace depotcast::prob
