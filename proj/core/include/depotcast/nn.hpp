#pragma once

// A fixed-topology dense feed-forward network: parameters, batched forward
// pass, reverse-mode gradients, an Adam optimizer, and a finite-difference
// gradient checker. Samples are stored one per column.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace depotcast::nn {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Activation { Linear, Relu, Tanh };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

struct Architecture {
  int input_width = 2;
  std::vector<int> hidden_widths{64, 64};
  Activation hidden_activation = Activation::Relu;
  int output_width = 2;
  // Start the output layer at exactly zero instead of the fan-in scheme.
  bool zero_output_layer = false;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::Linear;
};

struct NetworkParams {
  std::vector<DenseLayer> layers;

  /// Fan-in scaled uniform initialization, U(-a, a) with a = sqrt(6 / fan_in)
  /// for ReLU layers and sqrt(3 / fan_in) otherwise; biases start at zero.
  static NetworkParams initialize(const Architecture& arch, std::uint64_t seed);

  [[nodiscard]] Eigen::Index input_width() const;
  [[nodiscard]] Eigen::Index output_width() const;
  [[nodiscard]] std::size_t parameter_count() const;

  /// Throws ShapeError if widths do not chain, the last layer is not linear,
  /// or any entry is non-finite.
  void validate() const;

  /// Flat layout: per layer, the weight in row-major order, then the bias.
  [[nodiscard]] std::vector<double> flatten() const;
  void assign_flat(std::span<const double> values);
  [[nodiscard]] std::string parameter_name(std::size_t flat_index) const;

  bool operator==(const NetworkParams& other) const;
};

struct LayerGradient {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

struct Gradients {
  std::vector<LayerGradient> layers;

  static Gradients zeros_like(const NetworkParams& params);
  [[nodiscard]] std::vector<double> flatten() const;
  [[nodiscard]] bool all_finite() const;
  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double s);
};

/// Intermediate values kept for the backward pass.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> pre_activations;  // one per layer
  std::vector<Eigen::MatrixXd> activations;      // input first, output last

  [[nodiscard]] const Eigen::MatrixXd& output() const { return activations.back(); }
};

Eigen::VectorXd forward(const NetworkParams& params, const Eigen::VectorXd& x);
Eigen::MatrixXd forward_batch(const NetworkParams& params, const Eigen::MatrixXd& inputs);
ForwardTrace forward_trace(const NetworkParams& params, const Eigen::MatrixXd& inputs);

/// Gradient of a scalar loss with respect to every parameter, given the
/// loss gradient with respect to the network outputs (out x batch).
/// Contributions of all columns are summed.
Gradients backward(const NetworkParams& params, const ForwardTrace& trace,
                   const Eigen::MatrixXd& upstream);
Gradients backward(const NetworkParams& params, const Eigen::MatrixXd& inputs,
                   const Eigen::MatrixXd& upstream);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

class OptimizerState {
 public:
  OptimizerState(const NetworkParams& params, AdamConfig config);

  [[nodiscard]] long step() const { return step_; }
  [[nodiscard]] const Gradients& first_moment() const { return first_; }
  [[nodiscard]] const Gradients& second_moment() const { return second_; }
  [[nodiscard]] const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr);

 private:
  friend void optimizer_step(OptimizerState&, NetworkParams&, const Gradients&);
  long step_ = 0;
  Gradients first_;
  Gradients second_;
  AdamConfig config_;
};

/// One bias-corrected Adam update. Throws NonFiniteGradient, leaving both
/// state and params untouched, if any gradient entry is NaN or infinite.
void optimizer_step(OptimizerState& state, NetworkParams& params, const Gradients& grads);

/// Scalar loss of a batch of network outputs. When `d_outputs` is non-null it
/// receives dLoss/dOutputs with the same shape as `outputs`.
using LossFn = std::function<double(const Eigen::MatrixXd& outputs,
                                    const Eigen::MatrixXd& targets, Eigen::MatrixXd* d_outputs)>;

/// Sum over the batch of ||output - target||^2.
double sum_squared_error(const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& targets,
                         Eigen::MatrixXd* d_outputs);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::string worst_parameter;
  std::vector<double> relative_errors;
  bool passed = false;
};

/// |a - b| / max(|a|, |b|, floor). The floor keeps round-off in gradients
/// that are zero in exact arithmetic from reading as a relative error of 1.
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Smallest |pre-activation| of any ReLU unit over the batch (infinity when
/// the network has none). Central differences are only meaningful when this
/// is well above h times the input scale; closer than that they straddle a kink.
double kink_margin(const NetworkParams& params, const Eigen::MatrixXd& inputs);

/// Compares backward() against central differences with step h.
GradCheckReport grad_check(const NetworkParams& params, const LossFn& loss,
                           const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                           double h = 1e-5, double tol = 1e-4);

/// Same, against caller-supplied analytic gradients.
GradCheckReport grad_check(const NetworkParams& params, const Gradients& analytic,
                           const LossFn& loss, const Eigen::MatrixXd& inputs,
                           const Eigen::MatrixXd& targets, double h = 1e-5, double tol = 1e-4);

// Checkpoint: JSON text {"format":"depotcast.network","version":1,
// "layers":[{"inputs":..,"outputs":..,"activation":".."}],"parameters":[flat]}.
std::string serialize_network(const NetworkParams& params);
NetworkParams deserialize_network(std::string_view text);
void save_network(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_network(const std::filesystem::path& path);

}  // namespace depotcast::nn
