#include "curbsense/synth.hpp"

#include "curbsense/error.hpp"
#include "curbsense/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace curbsense::synth {

namespace {

// Stream tags keep the generators' random streams independent of each other.
constexpr std::uint64_t kTrajTag = 11;
constexpr std::uint64_t kNightTag = 12;
constexpr std::uint64_t kLabelTag = 13;
constexpr std::uint64_t kHotTag = 14;
constexpr std::uint64_t kEventTag = 15;

std::uint64_t rid_code(const DirectedSegment& rid)
{
  return static_cast<std::uint64_t>(rid.segment) * 2 + static_cast<std::uint64_t>(rid.dir);
}

} // namespace

void SynthConfig::validate() const
{
  if (grid_rows < 2 || grid_cols < 2)
    throw usage_error("synthetic grid needs at least 2 rows and 2 columns");
  if (!(spacing_m > 0.0) || !(speed_min > 0.0) || speed_max < speed_min || gps_sigma < 0.0 || sample_dt <= 0 ||
      preference_sigma < 0.0 || wander_sigma < 0.0 || !(wander_tau > 0.0) || ramp < 0.0 || end_margin < 0.0)
    throw usage_error("synthetic config values must be positive");
  if (reverse_rider_frac < 0.0 || reverse_rider_frac > 1.0)
    throw usage_error("reverse rider fraction must lie in [0, 1]");
  if (night_traffic_rate < 0.0)
    throw usage_error("night traffic rate must be non-negative");
}

RoadNetwork gen_network(const SynthConfig& cfg)
{
  cfg.validate();
  const double cx = (cfg.grid_cols - 1) * cfg.spacing_m / 2.0;
  const double cy = (cfg.grid_rows - 1) * cfg.spacing_m / 2.0;
  auto node_id = [&](int r, int c) { return static_cast<geo::NodeId>(r * cfg.grid_cols + c + 1); };

  std::vector<geo::NodeSpec> nodes;
  for (int r = 0; r < cfg.grid_rows; ++r)
    for (int c = 0; c < cfg.grid_cols; ++c)
      nodes.push_back({node_id(r, c), geo::from_local(cfg.anchor, {c * cfg.spacing_m - cx, r * cfg.spacing_m - cy})});

  std::vector<geo::SegmentSpec> segs;
  auto add = [&](geo::NodeId a, geo::NodeId b) {
    geo::SegmentSpec s;
    s.id = static_cast<geo::SegmentId>(segs.size() + 1);
    s.from = a;
    s.to = b;
    s.level = geo::RoadLevel::local;
    s.travel = segs.size() % 2 == 0 ? geo::Travel::bidirectional : geo::Travel::unidirectional;
    segs.push_back(std::move(s));
  };
  for (int r = 0; r < cfg.grid_rows; ++r)
    for (int c = 0; c + 1 < cfg.grid_cols; ++c)
      add(node_id(r, c), node_id(r, c + 1));
  for (int r = 0; r + 1 < cfg.grid_rows; ++r)
    for (int c = 0; c < cfg.grid_cols; ++c)
      add(node_id(r, c), node_id(r + 1, c));
  return RoadNetwork::build(std::move(nodes), std::move(segs));
}

double obstacle_displacement(const Obstacle& ob, double ramp, double o)
{
  const double a = ob.position;
  const double b = ob.position + ob.length;
  if (o >= a && o <= b)
    return ob.push;
  if (ramp <= 0.0)
    return 0.0;
  if (o < a && o > a - ramp)
    return ob.push * (o - (a - ramp)) / ramp;
  if (o > b && o < b + ramp)
    return ob.push * ((b + ramp) - o) / ramp;
  return 0.0;
}

Batch gen_trajectories(const RoadNetwork& net, const DirectedSegment& rid, int n, std::int64_t t0, std::int64_t span,
                       const SynthConfig& cfg, const std::optional<Obstacle>& obstacle, std::int64_t first_id)
{
  if (!net.contains(rid))
    throw usage_error("unknown directed segment " + geo::to_string(rid));
  const auto& seg = net.segment(rid.segment);
  const double len = seg.length();
  const double margin = std::min(cfg.end_margin, len / 4.0);

  Batch out;
  for (int i = 0; i < n; ++i) {
    const std::int64_t id = first_id + i;
    Rng rng = make_rng(cfg.seed, {kTrajTag, static_cast<std::uint64_t>(id)});
    std::normal_distribution<double> unit(0.0, 1.0);

    TrajTruth truth;
    truth.traj_id = id;
    truth.rid = rid;
    truth.ordinal = i;
    truth.reverse = !seg.bidirectional() && uniform01(rng) < cfg.reverse_rider_frac;
    truth.travel = truth.reverse ? geo::flip(rid.dir) : rid.dir;
    truth.affected = obstacle.has_value() && !truth.reverse;

    const double speed = cfg.speed_min + (cfg.speed_max - cfg.speed_min) * uniform01(rng);
    const double o_start = margin * uniform01(rng);
    const double o_end = len - margin * uniform01(rng);
    const std::int64_t entry = t0 + std::uniform_int_distribution<std::int64_t>(0, std::max<std::int64_t>(span, 1) - 1)(rng);
    const double pref = cfg.preference_sigma * unit(rng);
    double wander = cfg.wander_sigma * unit(rng);
    const double decay = std::exp(-static_cast<double>(cfg.sample_dt) / cfg.wander_tau);
    const double kick = cfg.wander_sigma * std::sqrt(1.0 - decay * decay);

    RawTrajectory tr;
    tr.traj_id = id;
    tr.bike_id = 100000 + id;
    tr.user_id = 500000 + id;
    for (int k = 0;; ++k) {
      const double o = o_start + speed * static_cast<double>(k * cfg.sample_dt);
      if (o > o_end)
        break;
      double lateral = cfg.lane_offset + pref + wander;
      if (truth.affected) {
        const double o_rid = truth.travel == rid.dir ? o : len - o;
        lateral += obstacle_displacement(*obstacle, cfg.ramp, o_rid);
      }
      auto p = geo::locate(seg, truth.travel, o, lateral);
      p.x += cfg.gps_sigma * unit(rng);
      p.y += cfg.gps_sigma * unit(rng);
      const auto ll = net.from_local(p);
      tr.points.push_back({ll.lat, ll.lng, entry + k * cfg.sample_dt});
      wander = wander * decay + kick * unit(rng);
    }
    out.trajectories.push_back(std::move(tr));
    out.truth.push_back(truth);
  }
  return out;
}

Obstacle random_obstacle(const RoadNetwork& net, const DirectedSegment& rid, const SynthConfig& cfg, Rng& rng)
{
  Obstacle ob = cfg.obstacle;
  const double len = net.segment(rid.segment).length();
  const double lo = cfg.ramp;
  const double hi = len - ob.length - cfg.ramp;
  ob.position = hi > lo ? lo + (hi - lo) * uniform01(rng) : std::max(0.0, (len - ob.length) / 2.0);
  return ob;
}

DirtyRide gen_dirty_ride(const RoadNetwork& net, std::int64_t traj_id)
{
  const auto& seg = net.segments().front();
  const auto origin = geo::locate(seg, geo::Direction::forward, 0.0);
  const auto dir = geo::tangent(seg, geo::Direction::forward, 0.0);
  DirtyRide out;
  out.ride.traj_id = traj_id;
  out.ride.bike_id = 100000 + traj_id;
  out.ride.user_id = 500000 + traj_id;
  double s = 0.0;
  std::int64_t t = 0;
  auto emit = [&] {
    const auto ll = net.from_local(origin + s * dir);
    out.ride.points.push_back({ll.lat, ll.lng, kDayZero + 12 * 3600 + t});
  };
  // 10 points at 4 m/s, 3 at subway speed, a 60 s gap, then 10 more at 4 m/s.
  for (int k = 0; k < 10; ++k, s += 16.0, t += 4)
    emit();
  s += 104.0;
  for (int k = 0; k < 3; ++k, s += 120.0, t += 4)
    emit();
  s -= 104.0;
  t += 56;
  for (int k = 0; k < 10; ++k, s += 16.0, t += 4)
    emit();
  out.runs = {{0, 10}, {13, 23}};
  return out;
}

DetectCorpus gen_detect_corpus(const SynthConfig& cfg, const DetectPreset& preset)
{
  DetectCorpus corpus;
  corpus.net = gen_network(cfg);
  const auto rids = geo::directed_segments(corpus.net);
  std::int64_t next_id = 1;

  for (int d = 0; d < preset.nights; ++d) {
    const std::int64_t midnight = kDayZero + d * 86400LL;
    corpus.nights.push_back(midnight);
    for (const auto& rid : rids) {
      Rng rng = make_rng(cfg.seed, {kNightTag, static_cast<std::uint64_t>(d), rid_code(rid)});
      const int count = cfg.night_traffic_rate > 0.0 ? std::poisson_distribution<int>(cfg.night_traffic_rate)(rng) : 0;
      auto batch = gen_trajectories(corpus.net, rid, count, midnight + 23 * 3600, 8 * 3600, cfg, std::nullopt, next_id);
      next_id += count;
      std::move(batch.trajectories.begin(), batch.trajectories.end(), std::back_inserter(corpus.trajectories));
      corpus.truth.trajectories.insert(corpus.truth.trajectories.end(), batch.truth.begin(), batch.truth.end());
    }
  }

  const std::int64_t eval_day = kDayZero + preset.eval_day * 86400LL;
  for (int h : preset.eval_hours) {
    const std::int64_t start = eval_day + h * 3600LL;
    corpus.eval_windows.push_back(start);
    for (const auto& rid : rids) {
      Rng rng = make_rng(cfg.seed, {kLabelTag, static_cast<std::uint64_t>(h), rid_code(rid)});
      const bool positive = uniform01(rng) < preset.positive_prob;
      std::optional<Obstacle> ob;
      if (positive)
        ob = random_obstacle(corpus.net, rid, cfg, rng);
      auto batch = gen_trajectories(corpus.net, rid, preset.per_window, start, 3600, cfg, ob, next_id);
      next_id += preset.per_window;
      std::move(batch.trajectories.begin(), batch.trajectories.end(), std::back_inserter(corpus.trajectories));
      corpus.truth.trajectories.insert(corpus.truth.trajectories.end(), batch.truth.begin(), batch.truth.end());
      corpus.truth.labels.push_back({{rid, start}, positive});
    }
  }
  return corpus;
}

PatrolWorld gen_patrol_world(const SynthConfig& cfg, const PatrolPreset& preset)
{
  SynthConfig c = cfg;
  c.grid_rows = preset.nodes;
  c.grid_cols = preset.nodes;
  c.spacing_m = preset.spacing_m;
  PatrolWorld w;
  w.net = gen_network(c);
  w.grid = preset.grid;
  w.grid.origin = w.net.min_corner() - geo::LocalPoint{preset.spacing_m / 2.0, preset.spacing_m / 2.0};
  w.grid.validate();
  w.cells = patrol::SegmentCells::build(w.net, w.grid);

  std::vector<int> order(static_cast<std::size_t>(w.grid.cells()));
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(cfg.seed, {kHotTag});
  std::shuffle(order.begin(), order.end(), rng);
  const auto k = static_cast<std::size_t>(std::clamp(preset.events.hot_cells, 0, w.grid.cells()));
  w.hot.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(w.hot.begin(), w.hot.end());
  return w;
}

double event_probability(const PatrolWorld& world, const EventConfig& ev, int cell, int hour)
{
  double p = std::binary_search(world.hot.begin(), world.hot.end(), cell) ? ev.p_hot : ev.p_background;
  if (std::find(ev.rush_hours.begin(), ev.rush_hours.end(), hour) != ev.rush_hours.end())
    p *= ev.rush_multiplier;
  return std::clamp(p, 0.0, 1.0);
}

std::vector<patrol::EtaStream> gen_event_stream(const PatrolWorld& world, int days, const EventConfig& ev,
                                                std::uint64_t seed)
{
  const auto& grid = world.grid;
  std::vector<int> hour_of(static_cast<std::size_t>(grid.t_steps));
  for (int t = 0; t < grid.t_steps; ++t)
    hour_of[static_cast<std::size_t>(t)] = ((ev.start_minute + t * grid.step_minutes) / 60) % 24;

  std::vector<patrol::EtaStream> out;
  for (int d = 0; d < days; ++d) {
    patrol::EtaStream eta;
    eta.active.resize(static_cast<std::size_t>(grid.t_steps));
    int prev_hour = -1;
    std::vector<geo::SegmentId> on;
    for (int t = 0; t < grid.t_steps; ++t) {
      const int hour = hour_of[static_cast<std::size_t>(t)];
      if (hour != prev_hour) {
        on.clear();
        for (const auto& [seg, cell] : world.cells.table()) {
          Rng rng = make_rng(seed, {kEventTag, static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(hour),
                                    static_cast<std::uint64_t>(seg)});
          if (uniform01(rng) < event_probability(world, ev, cell, hour))
            on.push_back(seg);
        }
        prev_hour = hour;
      }
      eta.active[static_cast<std::size_t>(t)] = on;
    }
    out.push_back(std::move(eta));
  }
  return out;
}

} // namespace curbsense::synth
