#pragma once

#include "curbsense/geo.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace curbsense::prep {

using geo::GpsPoint;

struct RawTrajectory
{
  std::int64_t traj_id = 0;
  std::int64_t bike_id = 0;
  std::int64_t user_id = 0;
  std::vector<GpsPoint> points;

  bool operator==(const RawTrajectory&) const = default;
};

/// A qualified run of a raw trajectory.
struct SubTrajectory
{
  std::int64_t parent_id = 0;
  int seq_no = 0;
  std::vector<GpsPoint> points;
};

struct CleaningConfig
{
  double v_max = 8.33;   // m/s, 30 km/h
  double v_min = 0.5;    // m/s
  double gap_max_s = 30; // seconds
  double gap_max_m = 50; // meters
  std::size_t min_points = 5;

  void validate() const;
};

/// Planar speed in m/s between two fixes; throws unless b.t > a.t.
double speed_between(const GpsPoint& a, const GpsPoint& b, geo::LatLng anchor);

/// True when the consecutive pair (a, b) passes every threshold of `cfg`.
bool pair_qualifies(const GpsPoint& a, const GpsPoint& b, geo::LatLng anchor, const CleaningConfig& cfg);

/// Splits `tr` into maximal qualified runs; runs shorter than min_points are dropped.
std::vector<SubTrajectory> clean(const RawTrajectory& tr, geo::LatLng anchor, const CleaningConfig& cfg);

/// Checks the time-ordering invariant (strictly increasing timestamps, at least one point).
void validate(const RawTrajectory& tr);

std::vector<RawTrajectory> parse_trajectories(std::istream& in, const std::string& source = "<trajectories>");
std::vector<RawTrajectory> load_trajectories(const std::filesystem::path& path);
void write_trajectories(std::ostream& out, const std::vector<RawTrajectory>& trajs);
void save_trajectories(const std::vector<RawTrajectory>& trajs, const std::filesystem::path& path);

} // namespace curbsense::prep
