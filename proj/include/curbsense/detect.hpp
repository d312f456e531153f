#pragma once

#include "curbsense/geo.hpp"
#include "curbsense/match.hpp"
#include "curbsense/store.hpp"

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace curbsense::detect {

using geo::DirectedSegment;
using mapmatch::MatchedTrajectory;
using store::RoadTimeIndex;
using store::TimeRange;

enum class Provenance : std::uint8_t { baseline_naive, baseline_night, eval_avg, eval_top };

struct ShiftSample
{
  std::vector<double> values;
  Provenance provenance = Provenance::eval_top;

  bool operator==(const ShiftSample&) const = default;
};

struct ChunkKey
{
  DirectedSegment rid;
  int chunk = 0;

  auto operator<=>(const ChunkKey&) const = default;
};

/// Per (directed segment, chunk) reference shift samples.
class BaselineModel
{
public:
  explicit BaselineModel(double chunk_len = 50.0) : chunk_len_(chunk_len) {}

  double chunk_len() const { return chunk_len_; }
  const std::map<ChunkKey, ShiftSample>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const ShiftSample* find(const DirectedSegment& rid, int chunk) const;
  std::vector<int> chunks_of(const DirectedSegment& rid) const;
  std::vector<DirectedSegment> rids() const;

  void set(const ChunkKey& key, ShiftSample sample) { entries_[key] = std::move(sample); }
  /// Keeps only the entries whose rid is in `rids` (sorted).
  BaselineModel slice(std::span<const DirectedSegment> rids) const;

  bool operator==(const BaselineModel&) const = default;

private:
  double chunk_len_;
  std::map<ChunkKey, ShiftSample> entries_;
};

enum class Decision : std::uint8_t { illegal_parking, normal, insufficient_data };

const char* to_string(Decision d);
Decision parse_decision(const std::string& s);

enum class Extractor : std::uint8_t { top, avg };

struct DetectionResult
{
  DirectedSegment rid;
  int chunk = 0;
  TimeRange range;
  double d_stat = 0.0;
  std::size_t n = 0; // baseline sample size
  std::size_t m = 0; // evaluation sample size
  Decision decision = Decision::insufficient_data;

  bool operator==(const DetectionResult&) const = default;
};

struct DetectConfig
{
  double alpha = 0.71;
  double chunk_len = 50.0;      // meters
  double resample_step = 5.0;   // meters
  std::size_t top_k = 10;
  double bucket = 5.0;          // meters
  int night_start_hour = 23;    // night window [23:00, 07:00)
  int night_end_hour = 7;
  double naive_sigma = 5.0;     // meters
  std::size_t naive_draws = 200;
  std::size_t min_eval_trajs = 10;
  std::size_t min_baseline = 30;
  Extractor extractor = Extractor::top;

  void validate() const;
};

struct OffsetShift
{
  double offset = 0.0;
  double shift = 0.0;
};

/// Shifts linearly interpolated at o_min, o_min + step, ... (in offset order).
std::vector<OffsetShift> resample_uniform(const MatchedTrajectory& mt, double step);

/// Groups samples by floor(offset / chunk_len).
std::map<int, std::vector<OffsetShift>> chunk(std::span<const OffsetShift> samples, double chunk_len);

using TrajectoryRefs = std::vector<const MatchedTrajectory*>;
using ChunkSamples = std::map<int, ShiftSample>;

TrajectoryRefs refs(std::span<const store::IndexEntry> entries);
TrajectoryRefs refs(std::span<const MatchedTrajectory> trajs);

/// Per chunk: means of resampled shifts in each offset bucket, pooled across trajectories.
ChunkSamples extract_avg(std::span<const MatchedTrajectory* const> trajs, const DetectConfig& cfg);

/// Per chunk: each trajectory's top_k resampled shifts by |shift| (signed), concatenated.
ChunkSamples extract_top(std::span<const MatchedTrajectory* const> trajs, const DetectConfig& cfg);

ChunkSamples extract(std::span<const MatchedTrajectory* const> trajs, const DetectConfig& cfg);

/// Start of the night window belonging to `day_start` (midnight, seconds).
TimeRange night_window(std::int64_t day_start, const DetectConfig& cfg);

/// Night baseline pooled over `days` (each given by its midnight timestamp).
BaselineModel build_night_baseline(const RoadTimeIndex& idx, std::span<const std::int64_t> days,
                                   const DetectConfig& cfg);

/// Zero-mean Gaussian baseline, deterministic per (rid, chunk).
BaselineModel naive_baseline(const geo::RoadNetwork& net, const DetectConfig& cfg);

/// Two-sample KS statistic sup_x |F_a(x) - F_b(x)|; throws on empty input.
double ks_statistic(std::span<const double> a, std::span<const double> b);

/// c(alpha) = sqrt(-0.5 ln(alpha / 2)); alpha must lie in (0, 1).
double c_alpha(double alpha);

/// c(alpha) extended to alpha = 0 (infinite) and alpha = 1.
double critical_value(double alpha);

/// True when D > c(alpha) sqrt((n + m) / (n m)): the illegal-parking verdict.
bool ks_reject(double d, std::size_t n, std::size_t m, double alpha);

/// D rescaled so that ks_reject <=> score > c(alpha).
double normalized_statistic(double d, std::size_t n, std::size_t m);

/// Tests the given trajectories against every baseline chunk of `rid`.
std::vector<DetectionResult> detect_trajectories(const BaselineModel& baseline, const DirectedSegment& rid,
                                                 std::span<const MatchedTrajectory* const> trajs,
                                                 const TimeRange& range, const DetectConfig& cfg);

std::vector<DetectionResult> detect_window(const BaselineModel& baseline, const RoadTimeIndex& idx,
                                           const DirectedSegment& rid, const TimeRange& range,
                                           const DetectConfig& cfg);

struct RoadRank
{
  DirectedSegment rid;
  double hours_with_events = 0.0; // mean per day
};

/// Descending by mean daily illegal-parking hours; ties by rid.
std::vector<RoadRank> rank_roads(std::span<const DetectionResult> results, std::size_t days);

void write_results(std::ostream& out, std::span<const DetectionResult> results);
std::vector<DetectionResult> parse_results(std::istream& in, const std::string& source = "<results>");

void write_baseline(std::ostream& out, const BaselineModel& model);
BaselineModel read_baseline(std::istream& in, const std::string& source = "<baseline>");
void save_baseline(const BaselineModel& model, const std::filesystem::path& path);
BaselineModel load_baseline(const std::filesystem::path& path);

} // namespace curbsense::detect
