#include "curbsense/engine.hpp"
#include "curbsense/experiments.hpp"
#include "curbsense/match.hpp"
#include "curbsense/synth.hpp"

#include <benchmark/benchmark.h>

using namespace curbsense;

namespace {

const synth::DetectCorpus& corpus()
{
  static const auto c = [] {
    synth::SynthConfig cfg;
    cfg.grid_rows = 10;
    cfg.grid_cols = 10;
    synth::DetectPreset p;
    p.nights = 10;
    return synth::gen_detect_corpus(cfg, p);
  }();
  return c;
}

void preprocess_serial(benchmark::State& state)
{
  const auto& c = corpus();
  for (auto _ : state)
    benchmark::DoNotOptimize(mapmatch::preprocess(c.trajectories, c.net, {}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c.trajectories.size()));
}
BENCHMARK(preprocess_serial)->Unit(benchmark::kMillisecond)->UseRealTime();

void preprocess_openmp(benchmark::State& state)
{
  const auto& c = corpus();
  for (auto _ : state)
    benchmark::DoNotOptimize(mapmatch::preprocess_parallel(c.trajectories, c.net, {}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c.trajectories.size()));
}
BENCHMARK(preprocess_openmp)->Unit(benchmark::kMillisecond)->UseRealTime();

struct Served
{
  store::RoadTimeIndex idx;
  detect::BaselineModel baseline;
  store::TimeRange request;
};

const Served& served()
{
  static const auto s = [] {
    const auto& c = corpus();
    Served out;
    out.idx = store::RoadTimeIndex::build(mapmatch::preprocess_parallel(c.trajectories, c.net, {}).matched);
    out.baseline = detect::build_night_baseline(out.idx, c.nights, {});
    out.request = {c.eval_windows.front(), c.eval_windows.back() + 3600};
    return out;
  }();
  return s;
}

void engine_service(benchmark::State& state)
{
  const auto& s = served();
  engine::Engine eng(s.baseline, s.idx, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(eng.service(s.request));
}
BENCHMARK(engine_service)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

} // namespace

BENCHMARK_MAIN();
