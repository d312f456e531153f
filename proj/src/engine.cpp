#include "curbsense/engine.hpp"

#include "curbsense/error.hpp"

#include <algorithm>
#include <spdlog/spdlog.h>

namespace curbsense::engine {

struct Engine::Worker
{
  BaselineModel slice;
  std::vector<DirectedSegment> rids;
  std::vector<DetectionResult> out;
};

EnginePlan make_plan(const BaselineModel& baseline, std::size_t workers)
{
  if (workers == 0)
    throw usage_error("engine needs at least one worker");
  EnginePlan plan;
  plan.workers = workers;
  plan.partitions.resize(workers);
  const auto rids = baseline.rids();
  for (std::size_t i = 0; i < rids.size(); ++i)
    plan.partitions[i % workers].push_back(rids[i]);
  return plan;
}

std::vector<TimeRange> hourly_windows(const TimeRange& range)
{
  if (range.end <= range.start)
    return {range};
  std::vector<TimeRange> out;
  for (std::int64_t t = range.start; t < range.end; t += 3600)
    out.push_back({t, std::min(t + 3600, range.end)});
  return out;
}

bool rank_before(const DetectionResult& a, const DetectionResult& b)
{
  const bool ia = a.decision == detect::Decision::illegal_parking;
  const bool ib = b.decision == detect::Decision::illegal_parking;
  if (ia != ib)
    return ia;
  if (a.d_stat != b.d_stat)
    return a.d_stat > b.d_stat;
  if (a.rid != b.rid)
    return a.rid < b.rid;
  if (a.chunk != b.chunk)
    return a.chunk < b.chunk;
  return a.range < b.range;
}

Engine::Engine(const BaselineModel& baseline, const RoadTimeIndex& idx, std::size_t workers, DetectConfig cfg)
  : idx_(idx), cfg_(cfg), plan_(make_plan(baseline, workers))
{
  cfg_.validate();
  for (std::size_t w = 0; w < workers; ++w) {
    auto s = std::make_unique<Worker>();
    s->rids = plan_.partitions[w];
    state_.push_back(std::move(s));
  }
  // Warm-up: each worker loads its own slice, then reports ready.
  for (std::size_t w = 0; w < workers; ++w)
    threads_.emplace_back([this, w, &baseline] {
      state_[w]->slice = baseline.slice(state_[w]->rids);
      {
        std::lock_guard lock(mu_);
        ++ready_;
      }
      done_.notify_all();
      run(w);
    });
  std::unique_lock lock(mu_);
  done_.wait(lock, [&] { return ready_ == plan_.workers; });
  spdlog::debug("engine ready: {} workers, {} rids", workers, baseline.rids().size());
}

Engine::~Engine()
{
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  wake_.notify_all();
  threads_.clear(); // join before the mutex and condition variables go away
}

void Engine::run(std::size_t id)
{
  std::uint64_t seen = 0;
  for (;;) {
    TimeRange request;
    {
      std::unique_lock lock(mu_);
      wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_)
        return;
      seen = generation_;
      request = request_;
    }
    auto& w = *state_[id];
    w.out.clear();
    for (const auto& window : hourly_windows(request))
      for (const auto& rid : w.rids) {
        auto part = detect::detect_window(w.slice, idx_, rid, window, cfg_);
        w.out.insert(w.out.end(), part.begin(), part.end());
      }
    {
      std::lock_guard lock(mu_);
      --pending_;
    }
    done_.notify_all();
  }
}

ServiceReport Engine::service(const TimeRange& request)
{
  const auto t0 = std::chrono::steady_clock::now();
  {
    std::lock_guard lock(mu_);
    request_ = request;
    pending_ = plan_.workers;
    ++generation_;
  }
  wake_.notify_all();
  {
    std::unique_lock lock(mu_);
    done_.wait(lock, [&] { return pending_ == 0; });
  }
  ServiceReport report;
  for (const auto& w : state_)
    report.results.insert(report.results.end(), w->out.begin(), w->out.end());
  std::sort(report.results.begin(), report.results.end(), rank_before);
  report.duration = std::chrono::steady_clock::now() - t0;
  return report;
}

} // namespace curbsense::engine
