#pragma once

#include "curbsense/geo.hpp"
#include "curbsense/traj.hpp"

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace curbsense::mapmatch {

using geo::DirectedSegment;
using geo::Direction;

struct MatchedPoint
{
  std::int64_t t = 0;
  double offset = 0.0;
  double shift = 0.0;

  bool operator==(const MatchedPoint&) const = default;
};

/// Identifies one road-segment visit of one cleaned sub-trajectory.
struct TrajKey
{
  std::int64_t traj_id = 0;
  int sub_seq = 0;
  int visit = 0;

  auto operator<=>(const TrajKey&) const = default;
};

std::string to_string(const TrajKey& key);
TrajKey parse_key(const std::string& s);

/// Points of one visit, all expressed in the frame of `rid`.
struct MatchedTrajectory
{
  TrajKey key;
  DirectedSegment rid;
  std::vector<MatchedPoint> points;

  std::int64_t entry_time() const { return points.empty() ? 0 : points.front().t; }
  bool operator==(const MatchedTrajectory&) const = default;
};

struct MatchConfig
{
  double max_avg_shift = 20.0;                 // meters
  double max_deviation = geo::kPi / 3.0;       // radians
  double candidate_radius = 30.0;              // meters
  int window = 5;                              // voting window, points
  double continuity_bonus = 0.5;               // extra vote for the previous winner

  void validate() const;
};

/// Nearest-segment voting matcher. Highway segments are excluded, every segment is
/// considered in both directions, and points are returned in the FromNode frame
/// (rid.dir = forward) pending `travel_direction`.
std::vector<MatchedTrajectory> match(const prep::SubTrajectory& sub, const geo::RoadNetwork& net,
                                     const MatchConfig& cfg);

/// Distance filter: keep unless mean |shift| exceeds max_avg_shift.
bool refine_distance(const MatchedTrajectory& mt, const MatchConfig& cfg);

/// Angle in [0, pi] between the half-centroid displacement and the road direction
/// (in the trajectory's rid frame) at the mean offset. Degenerate input yields pi.
double deviation_angle(const MatchedTrajectory& mt, const geo::RoadNetwork& net);

/// Direction filter: keep unless deviation_angle > max_deviation.
bool refine_direction(const MatchedTrajectory& mt, const geo::RoadNetwork& net, const MatchConfig& cfg);

/// Absolute travel direction: offsets (in the trajectory's frame) growing from the
/// first half to the second half keep the frame's direction; ties keep it too.
Direction travel_direction(const MatchedTrajectory& mt);

/// Re-expresses the points in the `dir` frame of the same segment.
MatchedTrajectory orient(MatchedTrajectory mt, const geo::RoadNetwork& net, Direction dir);

/// Drops backward trajectories on unidirectional segments; point data is untouched.
std::vector<MatchedTrajectory> remove_reverse(std::vector<MatchedTrajectory> mts, const geo::RoadNetwork& net);

/// How travel direction is used after refinement.
enum class DirectionMode
{
  directed,   // orient to the travel direction, drop reverse riders on one-way roads
  undirected, // pool every visit on the segment's forward frame
};

struct PipelineCounts
{
  std::size_t raw_trajectories = 0;
  std::size_t raw_points = 0;
  std::size_t sub_trajectories = 0;
  std::size_t sub_points = 0;
  std::size_t matched = 0;
  std::size_t matched_points = 0;
  std::size_t after_distance = 0;
  std::size_t after_direction = 0;
  std::size_t reverse_removed = 0;
  std::size_t output = 0;
  std::size_t output_points = 0;

  PipelineCounts& operator+=(const PipelineCounts& o);
  bool operator==(const PipelineCounts&) const = default;
};

struct PreprocessResult
{
  std::vector<MatchedTrajectory> matched;
  PipelineCounts counts;
};

struct PreprocessConfig
{
  prep::CleaningConfig cleaning;
  MatchConfig matching;
  DirectionMode mode = DirectionMode::directed;
};

/// clean -> match -> orient -> refine -> remove_reverse for one raw trajectory.
PreprocessResult preprocess_one(const prep::RawTrajectory& tr, const geo::RoadNetwork& net,
                                const PreprocessConfig& cfg);

/// Serial reference pipeline over a batch; output order follows input order.
PreprocessResult preprocess(const std::vector<prep::RawTrajectory>& trajs, const geo::RoadNetwork& net,
                            const PreprocessConfig& cfg);

/// OpenMP version of `preprocess`; produces identical output.
PreprocessResult preprocess_parallel(const std::vector<prep::RawTrajectory>& trajs, const geo::RoadNetwork& net,
                                     const PreprocessConfig& cfg);

std::vector<MatchedTrajectory> parse_matched(std::istream& in, const std::string& source = "<matched>");
std::vector<MatchedTrajectory> load_matched(const std::filesystem::path& path);
void write_matched(std::ostream& out, const std::vector<MatchedTrajectory>& mts);
void save_matched(const std::vector<MatchedTrajectory>& mts, const std::filesystem::path& path);

} // namespace curbsense::mapmatch
