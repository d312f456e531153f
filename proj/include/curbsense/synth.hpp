#pragma once

#include "curbsense/geo.hpp"
#include "curbsense/metrics.hpp"
#include "curbsense/patrol.hpp"
#include "curbsense/traj.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace curbsense::synth {

using geo::DirectedSegment;
using geo::RoadNetwork;
using prep::RawTrajectory;

/// Curb obstacle in the frame of the directed segment it blocks.
struct Obstacle
{
  double position = 0.0; // start offset, meters
  double length = 25.0;
  double push = 2.0;     // lateral displacement away from the curb
};

struct SynthConfig
{
  std::uint64_t seed = 1;
  int grid_rows = 6;
  int grid_cols = 6;
  double spacing_m = 150.0;
  geo::LatLng anchor{39.93, 116.45};

  double speed_min = 3.0; // m/s
  double speed_max = 5.0;
  double gps_sigma = 2.0;  // meters, isotropic
  std::int64_t sample_dt = 4;

  double lane_offset = -1.0;     // right of travel
  double preference_sigma = 0.3; // per-rider lane preference
  double wander_sigma = 0.5;     // stationary std of the OU wander
  double wander_tau = 20.0;      // seconds
  double ramp = 10.0;            // obstacle ramp length, meters
  double end_margin = 5.0;       // riders enter/leave up to this far inside the segment

  Obstacle obstacle;
  double reverse_rider_frac = 0.1; // on one-way segments
  double night_traffic_rate = 1.5; // mean trajectories per night per directed segment

  void validate() const;
};

struct TrajTruth
{
  std::int64_t traj_id = 0;
  DirectedSegment rid;           // the directed segment the trajectory was generated for
  geo::Direction travel = geo::Direction::forward;
  bool reverse = false;
  bool affected = false;
  int ordinal = 0;               // position within its generation batch
};

struct SynthTruth
{
  std::vector<TrajTruth> trajectories;
  std::vector<metrics::LabelRecord> labels;
};

/// rows x cols lattice; even segment index bidirectional, odd one-way.
RoadNetwork gen_network(const SynthConfig& cfg);

/// Lateral displacement of an obstacle at offset `o` (rid frame), with linear ramps.
double obstacle_displacement(const Obstacle& ob, double ramp, double o);

struct Batch
{
  std::vector<RawTrajectory> trajectories;
  std::vector<TrajTruth> truth;
};

/// n riders traversing `rid`, entering uniformly in [t0, t0 + span); ids first_id, first_id + 1, ...
Batch gen_trajectories(const RoadNetwork& net, const DirectedSegment& rid, int n, std::int64_t t0, std::int64_t span,
                       const SynthConfig& cfg, const std::optional<Obstacle>& obstacle, std::int64_t first_id);

/// A random obstacle placement that fits inside the segment.
Obstacle random_obstacle(const RoadNetwork& net, const DirectedSegment& rid, const SynthConfig& cfg, Rng& rng);

/// A ride with a subway-speed stretch and a long gap; the truth is the expected qualified runs.
struct DirtyRide
{
  RawTrajectory ride;
  std::vector<std::pair<std::size_t, std::size_t>> runs; // [first, last) point index ranges
};
DirtyRide gen_dirty_ride(const RoadNetwork& net, std::int64_t traj_id);

/// Midnight of day 0 of every generated corpus (UTC seconds).
constexpr std::int64_t kDayZero = 17361LL * 86400;

struct DetectPreset
{
  int nights = 30;
  int eval_day = 31;
  std::vector<int> eval_hours{9, 13, 18};
  int per_window = 50;
  double positive_prob = 0.3;
};

struct DetectCorpus
{
  RoadNetwork net;
  std::vector<RawTrajectory> trajectories; // night traffic first, then evaluation windows
  SynthTruth truth;
  std::vector<std::int64_t> nights;        // midnight of each baseline day
  std::vector<std::int64_t> eval_windows;  // hour starts
};

DetectCorpus gen_detect_corpus(const SynthConfig& cfg, const DetectPreset& preset = {});

struct EventConfig
{
  int hot_cells = 3;
  double p_hot = 0.5;         // per segment-hour inside hot cells
  double p_background = 0.0;
  double rush_multiplier = 3.0;
  std::vector<int> rush_hours{7, 8, 17, 18};
  int start_minute = 6 * 60 + 30; // first step of the episode window
};

struct PatrolPreset
{
  int nodes = 12;
  double spacing_m = 250.0;
  patrol::GridSpec grid{6, 6, 500.0, 102, 10, {}};
  EventConfig events;
};

struct PatrolWorld
{
  RoadNetwork net;
  patrol::GridSpec grid;
  patrol::SegmentCells cells;
  std::vector<int> hot; // hot cell indices
};

PatrolWorld gen_patrol_world(const SynthConfig& cfg, const PatrolPreset& preset = {});

/// One stream per day: per hour, Bernoulli activation per segment; active hours set eta = 1 for their steps.
std::vector<patrol::EtaStream> gen_event_stream(const PatrolWorld& world, int days, const EventConfig& ev,
                                                std::uint64_t seed);

/// Per-hour activation probability of a segment in `cell` at clock hour `hour`.
double event_probability(const PatrolWorld& world, const EventConfig& ev, int cell, int hour);

} // namespace curbsense::synth
