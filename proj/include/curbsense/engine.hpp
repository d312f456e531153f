#pragma once

#include "curbsense/detect.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace curbsense::engine {

using detect::BaselineModel;
using detect::DetectConfig;
using detect::DetectionResult;
using geo::DirectedSegment;
using store::RoadTimeIndex;
using store::TimeRange;

struct EnginePlan
{
  std::size_t workers = 0;
  std::vector<std::vector<DirectedSegment>> partitions;
};

/// Round-robin over the baseline's sorted rids.
EnginePlan make_plan(const BaselineModel& baseline, std::size_t workers);

/// Hourly windows covering `range`; a non-positive range stays a single window.
std::vector<TimeRange> hourly_windows(const TimeRange& range);

/// Illegal first, then larger D, then rid, chunk, window start.
bool rank_before(const DetectionResult& a, const DetectionResult& b);

struct ServiceReport
{
  std::vector<DetectionResult> results;
  std::chrono::nanoseconds duration{0};
};

/// Persistent worker pool. Each worker owns a baseline slice; requests are broadcast.
class Engine
{
public:
  Engine(const BaselineModel& baseline, const RoadTimeIndex& idx, std::size_t workers, DetectConfig cfg = {});
  ~Engine();

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const EnginePlan& plan() const { return plan_; }
  std::size_t workers() const { return plan_.workers; }

  ServiceReport service(const TimeRange& request);

private:
  struct Worker;

  void run(std::size_t id);

  const RoadTimeIndex& idx_;
  DetectConfig cfg_;
  EnginePlan plan_;
  std::vector<std::unique_ptr<Worker>> state_;
  std::vector<std::jthread> threads_;

  std::mutex mu_;
  std::condition_variable wake_;
  std::condition_variable done_;
  std::uint64_t generation_ = 0;
  std::size_t ready_ = 0;
  std::size_t pending_ = 0;
  bool stop_ = false;
  TimeRange request_;
};

} // namespace curbsense::engine
