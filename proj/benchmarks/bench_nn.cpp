#include <benchmark/benchmark.h>

#include "depotcast/nn.hpp"
#include "depotcast/prob_forecast.hpp"

using namespace depotcast;

namespace {

nn::NetworkParams network(int width) {
  nn::Architecture arch;
  arch.input_width = 12;
  arch.hidden_widths = {width, width};
  arch.output_width = prob::kHeadWidth;
  return nn::NetworkParams::initialize(arch, 1);
}

}  // namespace

static void BM_ForwardBatch(benchmark::State& state) {
  const auto params = network(static_cast<int>(state.range(0)));
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(12, 64);
  for (auto _ : state) benchmark::DoNotOptimize(nn::forward_batch(params, x));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_ForwardBatch)->Arg(16)->Arg(64)->Arg(256);

static void BM_LossAndBackward(benchmark::State& state) {
  const auto params = network(static_cast<int>(state.range(0)));
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(12, 64);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Random(2, 64);
  const auto loss = prob::bayesian_loss(1e-3, 1e-3);
  for (auto _ : state) {
    const auto trace = nn::forward_trace(params, x);
    Eigen::MatrixXd upstream;
    benchmark::DoNotOptimize(loss(trace.output(), y, &upstream));
    benchmark::DoNotOptimize(nn::backward(params, trace, upstream));
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_LossAndBackward)->Arg(16)->Arg(64)->Arg(256);

static void BM_HeadLoss(benchmark::State& state) {
  prob::RawHead raw;
  raw << 0.1, -0.2, 0.3, 0.4, 0.5;
  const Eigen::Vector2d y(0.7, -1.1);
  prob::RawHead grad;
  for (auto _ : state) benchmark::DoNotOptimize(prob::head_loss(raw, y, 1e-3, 1e-3, &grad));
}
BENCHMARK(BM_HeadLoss);
