#include "depotcast/nn.hpp"

#include <cmath>
#include <limits>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "network_json.hpp"

namespace depotcast::nn {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Linear:
      return "linear";
    case Activation::Relu:
      return "relu";
    case Activation::Tanh:
      return "tanh";
  }
  return "linear";
}

Activation parse_activation(std::string_view name) {
  if (name == "linear") return Activation::Linear;
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  throw std::invalid_argument(fmt::format("unknown activation '{}'", name));
}

namespace {

void activate(Activation a, const Eigen::MatrixXd& pre, Eigen::MatrixXd& out) {
  switch (a) {
    case Activation::Linear:
      out = pre;
      break;
    case Activation::Relu:
      out = pre.cwiseMax(0.0);
      break;
    case Activation::Tanh:
      out = pre.array().tanh().matrix();
      break;
  }
}

// Multiplies g in place by the activation derivative evaluated at pre.
void scale_by_derivative(Activation a, const Eigen::MatrixXd& pre, const Eigen::MatrixXd& post,
                         Eigen::MatrixXd& g) {
  switch (a) {
    case Activation::Linear:
      break;
    case Activation::Relu:
      g = (pre.array() > 0.0).select(g, 0.0);
      break;
    case Activation::Tanh:
      g.array() *= 1.0 - post.array().square();
      break;
  }
}

}  // namespace

NetworkParams NetworkParams::initialize(const Architecture& arch, std::uint64_t seed) {
  if (arch.input_width < 1 || arch.output_width < 1) {
    throw ShapeError("network input and output widths must be positive");
  }
  std::vector<int> widths{arch.input_width};
  for (int w : arch.hidden_widths) {
    if (w < 1) throw ShapeError("hidden widths must be positive");
    widths.push_back(w);
  }
  widths.push_back(arch.output_width);

  std::mt19937_64 rng(seed);
  NetworkParams p;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const bool is_output = l + 2 == widths.size();
    DenseLayer layer;
    layer.activation = is_output ? Activation::Linear : arch.hidden_activation;
    layer.weight.resize(widths[l + 1], widths[l]);
    layer.bias = Eigen::VectorXd::Zero(widths[l + 1]);
    if (is_output && arch.zero_output_layer) {
      layer.weight.setZero();
    } else {
      const double gain = layer.activation == Activation::Relu ? 6.0 : 3.0;
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      const double limit = std::sqrt(gain / widths[l]);
      // Row-major fill so the draw order matches the flat parameter layout.
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = limit * u(rng);
      }
    }
    p.layers.push_back(std::move(layer));
  }
  return p;
}

Eigen::Index NetworkParams::input_width() const {
  return layers.empty() ? 0 : layers.front().weight.cols();
}

Eigen::Index NetworkParams::output_width() const {
  return layers.empty() ? 0 : layers.back().weight.rows();
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void NetworkParams::validate() const {
  if (layers.empty()) throw ShapeError("network has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.bias.size() != layer.weight.rows()) {
      throw ShapeError(fmt::format("layer {}: bias size {} != weight rows {}", l,
                                   layer.bias.size(), layer.weight.rows()));
    }
    if (l > 0 && layer.weight.cols() != layers[l - 1].weight.rows()) {
      throw ShapeError(fmt::format("layer {}: input width {} != previous output width {}", l,
                                   layer.weight.cols(), layers[l - 1].weight.rows()));
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw ShapeError(fmt::format("layer {}: non-finite parameter", l));
    }
  }
  if (layers.back().activation != Activation::Linear) {
    throw ShapeError("the output layer must be linear");
  }
}

std::vector<double> NetworkParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) flat.push_back(l.weight(r, c));
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) flat.push_back(l.bias[i]);
  }
  return flat;
}

void NetworkParams::assign_flat(std::span<const double> values) {
  if (values.size() != parameter_count()) {
    throw ShapeError(fmt::format("expected {} parameters, got {}", parameter_count(), values.size()));
  }
  std::size_t k = 0;
  for (auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = values[k++];
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = values[k++];
  }
}

std::string NetworkParams::parameter_name(std::size_t flat_index) const {
  std::size_t k = flat_index;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const auto nw = static_cast<std::size_t>(layer.weight.size());
    if (k < nw) {
      const auto cols = static_cast<std::size_t>(layer.weight.cols());
      return fmt::format("layer{}.weight[{},{}]", l, k / cols, k % cols);
    }
    k -= nw;
    const auto nb = static_cast<std::size_t>(layer.bias.size());
    if (k < nb) return fmt::format("layer{}.bias[{}]", l, k);
    k -= nb;
  }
  throw std::out_of_range(fmt::format("parameter index {} out of range", flat_index));
}

bool NetworkParams::operator==(const NetworkParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& a = layers[l];
    const auto& b = other.layers[l];
    if (a.activation != b.activation || a.weight.rows() != b.weight.rows() ||
        a.weight.cols() != b.weight.cols() || a.weight != b.weight || a.bias != b.bias) {
      return false;
    }
  }
  return true;
}

Gradients Gradients::zeros_like(const NetworkParams& params) {
  Gradients g;
  for (const auto& l : params.layers) {
    g.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                        Eigen::VectorXd::Zero(l.bias.size())});
  }
  return g;
}

std::vector<double> Gradients::flatten() const {
  std::vector<double> flat;
  for (const auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) flat.push_back(l.weight(r, c));
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) flat.push_back(l.bias[i]);
  }
  return flat;
}

bool Gradients::all_finite() const {
  for (const auto& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (other.layers.size() != layers.size()) throw ShapeError("gradient layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weight += other.layers[l].weight;
    layers[l].bias += other.layers[l].bias;
  }
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  for (auto& l : layers) {
    l.weight *= s;
    l.bias *= s;
  }
  return *this;
}

// ---------------------------------------------------------------------------

ForwardTrace forward_trace(const NetworkParams& params, const Eigen::MatrixXd& inputs) {
  if (params.layers.empty()) throw ShapeError("network has no layers");
  if (inputs.rows() != params.input_width()) {
    throw ShapeError(fmt::format("input width {} does not match network input width {}",
                                 inputs.rows(), params.input_width()));
  }
  ForwardTrace t;
  t.pre_activations.reserve(params.layers.size());
  t.activations.reserve(params.layers.size() + 1);
  t.activations.push_back(inputs);
  for (const auto& layer : params.layers) {
    Eigen::MatrixXd pre = layer.weight * t.activations.back();
    pre.colwise() += layer.bias;
    Eigen::MatrixXd post;
    activate(layer.activation, pre, post);
    t.pre_activations.push_back(std::move(pre));
    t.activations.push_back(std::move(post));
  }
  return t;
}

Eigen::MatrixXd forward_batch(const NetworkParams& params, const Eigen::MatrixXd& inputs) {
  if (params.layers.empty()) throw ShapeError("network has no layers");
  if (inputs.rows() != params.input_width()) {
    throw ShapeError(fmt::format("input width {} does not match network input width {}",
                                 inputs.rows(), params.input_width()));
  }
  Eigen::MatrixXd current = inputs;
  Eigen::MatrixXd pre;
  for (const auto& layer : params.layers) {
    pre.noalias() = layer.weight * current;
    pre.colwise() += layer.bias;
    activate(layer.activation, pre, current);
  }
  return current;
}

Eigen::VectorXd forward(const NetworkParams& params, const Eigen::VectorXd& x) {
  return forward_batch(params, x);
}

Gradients backward(const NetworkParams& params, const ForwardTrace& trace,
                   const Eigen::MatrixXd& upstream) {
  const auto n_layers = params.layers.size();
  if (trace.pre_activations.size() != n_layers) throw ShapeError("trace does not match network");
  if (upstream.rows() != params.output_width() || upstream.cols() != trace.output().cols()) {
    throw ShapeError(fmt::format("upstream gradient is {}x{}, expected {}x{}", upstream.rows(),
                                 upstream.cols(), params.output_width(), trace.output().cols()));
  }
  Gradients g = Gradients::zeros_like(params);
  Eigen::MatrixXd delta = upstream;
  for (std::size_t k = n_layers; k-- > 0;) {
    const auto& layer = params.layers[k];
    scale_by_derivative(layer.activation, trace.pre_activations[k], trace.activations[k + 1],
                        delta);
    g.layers[k].weight.noalias() = delta * trace.activations[k].transpose();
    g.layers[k].bias = delta.rowwise().sum();
    if (k > 0) delta = layer.weight.transpose() * delta;
  }
  return g;
}

Gradients backward(const NetworkParams& params, const Eigen::MatrixXd& inputs,
                   const Eigen::MatrixXd& upstream) {
  return backward(params, forward_trace(params, inputs), upstream);
}

// ---------------------------------------------------------------------------

void AdamConfig::validate() const {
  if (!(learning_rate >= 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) ||
      !(epsilon > 0.0)) {
    throw std::invalid_argument("Adam needs learning_rate >= 0, beta1/beta2 in [0, 1), epsilon > 0");
  }
}

OptimizerState::OptimizerState(const NetworkParams& params, AdamConfig config)
    : first_(Gradients::zeros_like(params)),
      second_(Gradients::zeros_like(params)),
      config_(config) {
  config_.validate();
}

void OptimizerState::set_learning_rate(double lr) {
  config_.learning_rate = lr;
  config_.validate();
}

void optimizer_step(OptimizerState& state, NetworkParams& params, const Gradients& grads) {
  if (grads.layers.size() != params.layers.size() ||
      state.first_.layers.size() != params.layers.size()) {
    throw ShapeError("optimizer state, parameters and gradients are not congruent");
  }
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (grads.layers[l].weight.rows() != params.layers[l].weight.rows() ||
        grads.layers[l].weight.cols() != params.layers[l].weight.cols() ||
        grads.layers[l].bias.size() != params.layers[l].bias.size()) {
      throw ShapeError(fmt::format("gradient layer {} shape mismatch", l));
    }
  }
  if (!grads.all_finite()) {
    const auto flat = grads.flatten();
    for (std::size_t i = 0; i < flat.size(); ++i) {
      if (!std::isfinite(flat[i])) {
        throw NonFiniteGradient(fmt::format("non-finite gradient {} at {}; step {} aborted",
                                            flat[i], params.parameter_name(i), state.step_ + 1));
      }
    }
  }

  const auto& c = state.config_;
  ++state.step_;
  const double t = static_cast<double>(state.step_);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);

  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    param.array() -= c.learning_rate * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + c.epsilon);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    update(params.layers[l].weight, state.first_.layers[l].weight, state.second_.layers[l].weight,
           grads.layers[l].weight);
    update(params.layers[l].bias, state.first_.layers[l].bias, state.second_.layers[l].bias,
           grads.layers[l].bias);
  }
}

// ---------------------------------------------------------------------------

double sum_squared_error(const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& targets,
                         Eigen::MatrixXd* d_outputs) {
  const Eigen::MatrixXd diff = outputs - targets;
  if (d_outputs) *d_outputs = 2.0 * diff;
  return diff.squaredNorm();
}

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

double kink_margin(const NetworkParams& params, const Eigen::MatrixXd& inputs) {
  const auto trace = forward_trace(params, inputs);
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (params.layers[l].activation != Activation::Relu) continue;
    margin = std::min(margin, trace.pre_activations[l].cwiseAbs().minCoeff());
  }
  return margin;
}

GradCheckReport grad_check(const NetworkParams& params, const Gradients& analytic,
                           const LossFn& loss, const Eigen::MatrixXd& inputs,
                           const Eigen::MatrixXd& targets, double h, double tol) {
  if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  const auto base = params.flatten();
  const auto a = analytic.flatten();
  if (a.size() != base.size()) throw ShapeError("analytic gradient does not match parameters");

  NetworkParams probe = params;
  std::vector<double> shifted = base;
  auto eval = [&](std::size_t i, double value) {
    shifted[i] = value;
    probe.assign_flat(shifted);
    return loss(forward_batch(probe, inputs), targets, nullptr);
  };

  GradCheckReport report;
  report.relative_errors.resize(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double plus = eval(i, base[i] + h);
    const double minus = eval(i, base[i] - h);
    shifted[i] = base[i];
    const double numeric = (plus - minus) / (2.0 * h);
    const double err = relative_error(a[i], numeric);
    report.relative_errors[i] = err;
    if (err > report.max_relative_error || i == 0) {
      report.max_relative_error = err;
      report.worst_index = i;
    }
  }
  if (!base.empty()) report.worst_parameter = params.parameter_name(report.worst_index);
  report.passed = report.max_relative_error < tol;
  return report;
}

GradCheckReport grad_check(const NetworkParams& params, const LossFn& loss,
                           const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                           double h, double tol) {
  const auto trace = forward_trace(params, inputs);
  Eigen::MatrixXd upstream;
  loss(trace.output(), targets, &upstream);
  return grad_check(params, backward(params, trace, upstream), loss, inputs, targets, h, tol);
}

// ---------------------------------------------------------------------------

nlohmann::json network_to_json(const NetworkParams& params) {
  params.validate();
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : params.layers) {
    layers.push_back({{"inputs", l.weight.cols()},
                      {"outputs", l.weight.rows()},
                      {"activation", std::string(to_string(l.activation))}});
  }
  return {{"format", "depotcast.network"},
          {"version", 1},
          {"layers", std::move(layers)},
          {"parameters", params.flatten()}};
}

NetworkParams network_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "depotcast.network") {
      throw ShapeError("not a depotcast network checkpoint");
    }
    if (j.at("version").get<int>() != 1) {
      throw ShapeError(fmt::format("unsupported network checkpoint version {}",
                                   j.at("version").get<int>()));
    }
    NetworkParams p;
    for (const auto& l : j.at("layers")) {
      DenseLayer layer;
      const auto in = l.at("inputs").get<Eigen::Index>();
      const auto out = l.at("outputs").get<Eigen::Index>();
      if (in < 1 || out < 1) throw ShapeError("layer widths must be positive");
      layer.weight = Eigen::MatrixXd::Zero(out, in);
      layer.bias = Eigen::VectorXd::Zero(out);
      layer.activation = parse_activation(l.at("activation").get<std::string>());
      p.layers.push_back(std::move(layer));
    }
    p.assign_flat(j.at("parameters").get<std::vector<double>>());
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ShapeError(fmt::format("malformed network checkpoint: {}", e.what()));
  }
}

std::string serialize_network(const NetworkParams& params) {
  return network_to_json(params).dump(1);
}

NetworkParams deserialize_network(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ShapeError(fmt::format("malformed network checkpoint: {}", e.what()));
  }
  return network_from_json(j);
}

void save_network(const NetworkParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << serialize_network(params) << '\n';
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
}

NetworkParams load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_network(ss.str());
}

}  // namespace depotcast::nn
