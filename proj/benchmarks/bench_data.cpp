#include <benchmark/benchmark.h>

#include "depotcast/depot_data.hpp"
#include "depotcast/features.hpp"

using namespace depotcast;
using namespace std::chrono;

namespace {

data::SimConfig sim_config(int count) {
  data::SimConfig cfg;
  cfg.start_date = Date{year{2021}, January, day{1}};
  cfg.end_date = Date{sys_days{cfg.start_date} + days{30 * count - 1}};
  return cfg;
}

}  // namespace

static void BM_GenerateEvents(benchmark::State& state) {
  const auto cfg = sim_config(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(data::generate_events(cfg));
}
BENCHMARK(BM_GenerateEvents)->Arg(1)->Arg(12)->Unit(benchmark::kMillisecond);

static void BM_AggregateHourly(benchmark::State& state) {
  const auto cfg = sim_config(static_cast<int>(state.range(0)));
  const auto generated = data::generate_events(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(features::aggregate_hourly(generated.events, cfg.calendar));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(generated.events.size()));
}
BENCHMARK(BM_AggregateHourly)->Arg(1)->Arg(12)->Unit(benchmark::kMillisecond);
