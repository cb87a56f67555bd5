#include "depotcast/prob_forecast.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "csv.hpp"
#include "depotcast/seed.hpp"
#include "network_json.hpp"

namespace depotcast::prob {

using features::Dataset;
using features::Samples;
using features::Standardizer;

namespace {
const double kLogTwoPi = std::log(2.0 * std::numbers::pi);
}

bool GaussianPrediction::valid() const {
  return mean.allFinite() && chol.allFinite() && chol(0, 0) > 0.0 && chol(1, 1) > 0.0 &&
         chol(0, 1) == 0.0;
}

double positivity_map(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double positivity_map_derivative(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

GaussianPrediction head_transform(const RawHead& raw, double sigma_min) {
  GaussianPrediction p;
  p.mean = raw.head<2>();
  p.chol.setZero();
  p.chol(0, 0) = positivity_map(raw[2]) + sigma_min;
  p.chol(1, 1) = positivity_map(raw[3]) + sigma_min;
  p.chol(1, 0) = raw[4];
  return p;
}

double gaussian_nll(const GaussianPrediction& pred, const Eigen::Vector2d& y) {
  const Eigen::Vector2d z = pred.chol.triangularView<Eigen::Lower>().solve(y - pred.mean);
  const double log_det = 2.0 * (std::log(pred.chol(0, 0)) + std::log(pred.chol(1, 1)));
  return 0.5 * z.squaredNorm() + 0.5 * log_det + kLogTwoPi;
}

double kl_penalty(const GaussianPrediction& pred) {
  const double trace = pred.chol.squaredNorm();
  const double log_det = 2.0 * (std::log(pred.chol(0, 0)) + std::log(pred.chol(1, 1)));
  return 0.5 * (trace + pred.mean.squaredNorm() - 2.0 - log_det);
}

double head_loss(const RawHead& raw, const Eigen::Vector2d& y, double sigma_min, double kl_weight,
                 RawHead* grad) {
  const double d0 = positivity_map(raw[2]) + sigma_min;
  const double d1 = positivity_map(raw[3]) + sigma_min;
  const double c = raw[4];
  const double m0 = raw[0];
  const double m1 = raw[1];

  // Forward substitution against L = [[d0, 0], [c, d1]].
  const double r0 = y[0] - m0;
  const double r1 = y[1] - m1;
  const double z0 = r0 / d0;
  const double z1 = (r1 - c * z0) / d1;
  const double log_d = std::log(d0) + std::log(d1);

  const double nll = 0.5 * (z0 * z0 + z1 * z1) + log_d + kLogTwoPi;
  const double kl = 0.5 * (d0 * d0 + c * c + d1 * d1 + m0 * m0 + m1 * m1 - 2.0 - 2.0 * log_d);

  if (grad) {
    const double g0 = z0 - z1 * c / d1;  // total derivative through z1
    const double dm0 = -g0 / d0 + kl_weight * m0;
    const double dm1 = -z1 / d1 + kl_weight * m1;
    const double dd0 = (1.0 - g0 * z0) / d0 + kl_weight * (d0 - 1.0 / d0);
    const double dd1 = (1.0 - z1 * z1) / d1 + kl_weight * (d1 - 1.0 / d1);
    const double dc = -z1 * z0 / d1 + kl_weight * c;
    (*grad) << dm0, dm1, dd0 * positivity_map_derivative(raw[2]),
        dd1 * positivity_map_derivative(raw[3]), dc;
  }
  return nll + kl_weight * kl;
}

nn::LossFn bayesian_loss(double sigma_min, double kl_weight) {
  return [sigma_min, kl_weight](const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& targets,
                                Eigen::MatrixXd* d_outputs) {
    const auto n = outputs.cols();
    if (d_outputs) d_outputs->resize(kHeadWidth, n);
    double total = 0.0;
    RawHead g;
    for (Eigen::Index j = 0; j < n; ++j) {
      const RawHead raw = outputs.col(j);
      total += head_loss(raw, targets.col(j), sigma_min, kl_weight, d_outputs ? &g : nullptr);
      if (d_outputs) d_outputs->col(j) = g / static_cast<double>(n);
    }
    return total / static_cast<double>(n);
  };
}

nn::LossFn mean_squared_loss() {
  return [](const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& targets,
            Eigen::MatrixXd* d_outputs) {
    const double n = static_cast<double>(outputs.cols());
    const double loss = nn::sum_squared_error(outputs, targets, d_outputs);
    if (d_outputs) *d_outputs /= n;
    return loss / n;
  };
}

void TrainConfig::validate() const {
  if (hidden_widths.empty()) throw std::invalid_argument("at least one hidden layer is required");
  for (int w : hidden_widths) {
    if (w < 1) throw std::invalid_argument("hidden widths must be positive");
  }
  if (epochs < 1 || batch_size < 1 || mc_samples < 1 || patience < 1) {
    throw std::invalid_argument("epochs, batch_size, mc_samples and patience must be positive");
  }
  if (!(learning_rate > 0.0) || !(lr_decay > 0.0)) {
    throw std::invalid_argument("learning_rate and lr_decay must be positive");
  }
  if (!(kl_weight >= 0.0)) throw std::invalid_argument("kl_weight must be >= 0");
  if (!(sigma_min > 0.0)) throw std::invalid_argument("sigma_min must be > 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("validation_fraction must lie in [0, 1)");
  }
  nn::AdamConfig{learning_rate, beta1, beta2, epsilon}.validate();
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Objective {
  nn::LossFn train_loss;   // minimized
  nn::LossFn metric;       // reported and used for early stopping
  int output_width = 0;
};

FitResult fit_network(const Samples& train, const Samples& valid, const TrainConfig& cfg,
                      const Objective& objective) {
  cfg.validate();
  if (train.size() == 0) throw std::invalid_argument("training set is empty");
  if (valid.size() > 0 && valid.inputs.rows() != train.inputs.rows()) {
    throw std::invalid_argument("training and validation feature columns differ");
  }

  nn::Architecture arch;
  arch.input_width = static_cast<int>(train.inputs.rows());
  arch.hidden_widths = cfg.hidden_widths;
  arch.hidden_activation = cfg.activation;
  arch.output_width = objective.output_width;
  nn::NetworkParams params = nn::NetworkParams::initialize(arch, cfg.rng_seed);
  nn::OptimizerState opt(params, {cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon});

  std::mt19937_64 shuffle_rng(derive_seed(cfg.rng_seed, 0x5eed));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  FitResult result;
  nn::NetworkParams best = params;
  double best_metric = std::numeric_limits<double>::infinity();
  int since_best = 0;
  const bool has_valid = valid.size() > 0;

  Eigen::MatrixXd xb, yb, upstream;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    opt.set_learning_rate(cfg.learning_rate * std::pow(cfg.lr_decay, epoch - 1));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double objective_sum = 0.0;
    double metric_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const auto stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto b = static_cast<Eigen::Index>(stop - start);
      xb.resize(train.inputs.rows(), b);
      yb.resize(train.targets.rows(), b);
      for (Eigen::Index j = 0; j < b; ++j) {
        const auto src = order[start + static_cast<std::size_t>(j)];
        xb.col(j) = train.inputs.col(src);
        yb.col(j) = train.targets.col(src);
      }
      const auto trace = nn::forward_trace(params, xb);
      const double loss = objective.train_loss(trace.output(), yb, &upstream);
      if (!std::isfinite(loss)) {
        throw TrainingDiverged(fmt::format(
            "non-finite training loss at epoch {}, batch starting at sample {} (lr {})", epoch,
            start, opt.config().learning_rate));
      }
      objective_sum += loss * static_cast<double>(b);
      metric_sum += objective.metric(trace.output(), yb, nullptr) * static_cast<double>(b);
      try {
        nn::optimizer_step(opt, params, nn::backward(params, trace, upstream));
      } catch (const nn::NonFiniteGradient& e) {
        throw TrainingDiverged(fmt::format("epoch {}: {}", epoch, e.what()));
      }
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_objective = objective_sum / static_cast<double>(order.size());
    entry.train_metric = metric_sum / static_cast<double>(order.size());
    entry.valid_metric = std::numeric_limits<double>::quiet_NaN();
    if (has_valid) {
      entry.valid_metric =
          objective.metric(nn::forward_batch(params, valid.inputs), valid.targets, nullptr);
      if (!std::isfinite(entry.valid_metric)) {
        throw TrainingDiverged(fmt::format("non-finite validation metric at epoch {}", epoch));
      }
    }
    result.log.epochs.push_back(entry);

    if (!has_valid) {
      result.log.best_epoch = epoch;
      best = params;
      continue;
    }
    if (entry.valid_metric < best_metric) {
      best_metric = entry.valid_metric;
      best = params;
      result.log.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.log.early_stopped = true;
      break;
    }
  }
  result.params = std::move(best);
  return result;
}

Samples standardized(const Dataset& ds, const Standardizer& scaler) {
  return scaler.apply(features::to_samples(ds));
}

void check_same_columns(const Dataset& train, const Dataset& valid) {
  if (!valid.empty() && !(train.features == valid.features)) {
    throw std::invalid_argument("training and validation datasets have different feature columns");
  }
}

}  // namespace

FitResult fit_gaussian_network(const Samples& train, const Samples& valid, const TrainConfig& cfg) {
  return fit_network(train, valid, cfg,
                     {bayesian_loss(cfg.sigma_min, cfg.kl_weight), bayesian_loss(cfg.sigma_min, 0.0),
                      kHeadWidth});
}

FitResult fit_mse_network(const Samples& train, const Samples& valid, const TrainConfig& cfg) {
  return fit_network(train, valid, cfg,
                     {mean_squared_loss(), mean_squared_loss(),
                      static_cast<int>(features::kTargetCount)});
}

std::pair<BayesianForecaster, TrainLog> train_bayesian(const Dataset& train, const Dataset& valid,
                                                       const TrainConfig& cfg) {
  check_same_columns(train, valid);
  BayesianForecaster model;
  model.scaler = features::fit_standardizer(train);
  model.features = train.features;
  model.sigma_min = cfg.sigma_min;
  auto fit = fit_gaussian_network(standardized(train, model.scaler),
                                  valid.empty() ? Samples{} : standardized(valid, model.scaler), cfg);
  model.network = std::move(fit.params);
  return {std::move(model), std::move(fit.log)};
}

std::pair<MlpBaseline, TrainLog> train_baseline_mlp(const Dataset& train, const Dataset& valid,
                                                    const TrainConfig& cfg) {
  check_same_columns(train, valid);
  MlpBaseline model;
  model.scaler = features::fit_standardizer(train);
  model.features = train.features;
  auto fit = fit_mse_network(standardized(train, model.scaler),
                             valid.empty() ? Samples{} : standardized(valid, model.scaler), cfg);
  model.network = std::move(fit.params);
  return {std::move(model), std::move(fit.log)};
}

// ---------------------------------------------------------------------------
// Prediction

GaussianPrediction destandardize(const GaussianPrediction& pred, const Standardizer& scaler) {
  GaussianPrediction out;
  out.mean = pred.mean.cwiseProduct(scaler.target_sd) + scaler.target_mean;
  out.chol = scaler.target_sd.asDiagonal() * pred.chol;
  return out;
}

GaussianPrediction BayesianForecaster::predict_standardized(const Eigen::VectorXd& x_std) const {
  const RawHead raw = nn::forward(network, x_std);
  return head_transform(raw, sigma_min);
}

GaussianPrediction BayesianForecaster::predict_distribution(const Eigen::VectorXd& x) const {
  return destandardize(predict_standardized(scaler.apply_features(x)), scaler);
}

Eigen::Vector2d predict_baseline(const MlpBaseline& model, const Eigen::VectorXd& x) {
  const Eigen::VectorXd out = nn::forward(model.network, model.scaler.apply_features(x));
  return model.scaler.invert_targets(out);
}

McForecast sample_mc(const GaussianPrediction& dist, int samples, std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("at least one Monte Carlo sample is required");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Vector2d m2 = Eigen::Vector2d::Zero();
  for (int k = 1; k <= samples; ++k) {
    const Eigen::Vector2d z(normal(rng), normal(rng));
    const Eigen::Vector2d draw = dist.mean + dist.chol * z;
    const Eigen::Vector2d delta = draw - mean;
    mean += delta / static_cast<double>(k);
    m2 += delta.cwiseProduct(draw - mean);
  }
  McForecast out;
  out.point = mean;
  out.spread = samples > 1 ? (m2 / static_cast<double>(samples - 1)).cwiseSqrt().eval()
                           : Eigen::Vector2d::Zero().eval();
  out.dist = dist;
  return out;
}

McForecast predict_mc(const BayesianForecaster& model, const Eigen::VectorXd& x, int samples,
                      std::uint64_t seed) {
  return sample_mc(model.predict_distribution(x), samples, seed);
}

namespace {

void check_columns(const features::FeatureSet& model, const Dataset& ds) {
  if (!(model == ds.features)) {
    throw ForecastError(fmt::format("model expects feature set '{}' but data has '{}'",
                                    model.label(), ds.features.label()));
  }
}

}  // namespace

Eigen::MatrixXd point_forecasts(const BayesianForecaster& model, const Dataset& ds, int samples,
                                std::uint64_t seed) {
  check_columns(model.features, ds);
  const auto x = model.scaler.apply_features(features::to_samples(ds).inputs);
  const Eigen::MatrixXd raw = nn::forward_batch(model.network, x);
  Eigen::MatrixXd out(2, raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    const auto dist =
        destandardize(head_transform(raw.col(j), model.sigma_min), model.scaler);
    const auto stamp = ds.rows[static_cast<std::size_t>(j)].stamp;
    auto mc = sample_mc(dist, samples, derive_seed(seed, static_cast<std::uint64_t>(hour_index(stamp))));
    out.col(j) = mc.point;
    out(0, j) = std::max(0.0, out(0, j));
  }
  return out;
}

Eigen::MatrixXd point_forecasts(const MlpBaseline& model, const Dataset& ds) {
  check_columns(model.features, ds);
  const auto x = model.scaler.apply_features(features::to_samples(ds).inputs);
  Eigen::MatrixXd out = model.scaler.invert_targets(nn::forward_batch(model.network, x));
  out.row(0) = out.row(0).cwiseMax(0.0);
  return out;
}

Dataset attach_features(Dataset ds, const features::FeatureSet& wanted,
                        const ExogenousSource& source, std::optional<Date> known_by) {
  if (wanted.appointments && !ds.features.appointments) {
    if (!source.appointments) throw ForecastError("model requires appointments but none supplied");
    if (known_by) {
      std::vector<data::AppointmentRecord> known;
      for (const auto& a : *source.appointments) {
        if (std::chrono::local_days{date_of(a.booked_at)} <= std::chrono::local_days{*known_by}) {
          known.push_back(a);
        }
      }
      ds = features::join_appointments(std::move(ds), known);
    } else {
      ds = features::join_appointments(std::move(ds), *source.appointments);
    }
  }
  if (wanted.cax && !ds.features.cax) {
    if (!source.cax) throw ForecastError("model requires CAx values but none supplied");
    try {
      ds = features::join_cax(std::move(ds), *source.cax);
    } catch (const features::FeatureError& e) {
      throw ForecastError(e.what());
    }
  }
  if (wanted.teu && !ds.features.teu) {
    if (!source.sailings) throw ForecastError("model requires a sailing list but none supplied");
    ds = features::join_teu(std::move(ds), *source.sailings, source.road_lag_hours);
  }
  return ds;
}

std::vector<ForecastRow> forecast_week(const BayesianForecaster& model, const Date& from_date,
                                       int horizon_days, const WorkCalendar& calendar,
                                       const ExogenousSource& source, int samples,
                                       std::uint64_t seed) {
  if (horizon_days < 1) throw ForecastError("horizon must cover at least one working day");
  calendar.validate();
  std::vector<Date> days;
  Date d = from_date;
  for (int i = 0; i < horizon_days; ++i) {
    d = calendar.next_working_day(d);
    days.push_back(d);
  }
  auto grid = attach_features(features::working_grid(days, calendar), model.features, source,
                              from_date);

  const auto x = model.scaler.apply_features(features::to_samples(grid).inputs);
  const Eigen::MatrixXd raw = nn::forward_batch(model.network, x);
  std::vector<ForecastRow> rows;
  rows.reserve(grid.rows.size());
  for (std::size_t j = 0; j < grid.rows.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    const auto dist = destandardize(head_transform(raw.col(col), model.sigma_min), model.scaler);
    const auto stamp = grid.rows[j].stamp;
    auto mc = sample_mc(dist, samples, derive_seed(seed, static_cast<std::uint64_t>(hour_index(stamp))));
    mc.point[0] = std::max(0.0, mc.point[0]);
    rows.push_back({stamp, mc.point, mc.spread});
  }
  return rows;
}

void write_forecast(const std::vector<ForecastRow>& rows, const std::filesystem::path& path) {
  auto out = csv::open_for_write<ForecastError>(path);
  out << "Date,Hour,TruckRatePred,TruckRateStd,HandlingTimePred,HandlingTimeStd\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{:.6f},{:.6f},{:.6f},{:.6f}\n", format_timestamp(r.stamp),
                       hour_of(r.stamp), r.point[0], r.spread[0], r.point[1], r.spread[1]);
  }
  csv::finish<ForecastError>(out, path);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json scaler_json(const Standardizer& s) {
  return {{"feature_mean", to_vec(s.feature_mean)},
          {"feature_sd", to_vec(s.feature_sd)},
          {"target_mean", to_vec(s.target_mean)},
          {"target_sd", to_vec(s.target_sd)}};
}

Standardizer scaler_from_json(const nlohmann::json& j) {
  Standardizer s;
  s.feature_mean = from_vec(j.at("feature_mean").get<std::vector<double>>());
  s.feature_sd = from_vec(j.at("feature_sd").get<std::vector<double>>());
  s.target_mean = from_vec(j.at("target_mean").get<std::vector<double>>());
  s.target_sd = from_vec(j.at("target_sd").get<std::vector<double>>());
  return s;
}

std::vector<std::string> feature_names(const features::FeatureSet& fs) {
  return Dataset{fs, {}}.feature_names();
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& path) {
  nlohmann::json j{{"format", "depotcast.model"}, {"version", 1}};
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, BayesianForecaster>) {
          j["kind"] = "bayesian";
          j["sigma_min"] = m.sigma_min;
        } else {
          j["kind"] = "baseline";
        }
        j["feature_set"] = m.features.label();
        j["features"] = feature_names(m.features);
        j["targets"] = {features::kTargetNames[0], features::kTargetNames[1]};
        j["standardizer"] = scaler_json(m.scaler);
        j["network"] = nn::network_to_json(m.network);
      },
      model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << j.dump(1) << '\n';
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    const auto j = nlohmann::json::parse(ss.str());
    if (j.at("format").get<std::string>() != "depotcast.model" || j.at("version").get<int>() != 1) {
      throw std::runtime_error(fmt::format("'{}' is not a version-1 depotcast model", path.string()));
    }
    const auto fs = features::FeatureSet::parse(j.at("feature_set").get<std::string>());
    if (j.at("features").get<std::vector<std::string>>() != feature_names(fs)) {
      throw std::runtime_error(fmt::format("'{}': feature manifest mismatch", path.string()));
    }
    auto scaler = scaler_from_json(j.at("standardizer"));
    auto network = nn::network_from_json(j.at("network"));
    if (network.input_width() != scaler.feature_mean.size()) {
      throw std::runtime_error(fmt::format("'{}': network and standardizer disagree", path.string()));
    }
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "bayesian") {
      return BayesianForecaster{std::move(network), std::move(scaler), fs,
                                j.at("sigma_min").get<double>()};
    }
    if (kind == "baseline") return MlpBaseline{std::move(network), std::move(scaler), fs};
    throw std::runtime_error(fmt::format("'{}': unknown model kind '{}'", path.string(), kind));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(fmt::format("malformed model '{}': {}", path.string(), e.what()));
  }
}

}  // namespace depotcast::prob
