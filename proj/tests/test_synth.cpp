#include "support.hpp"

#include "curbsense/error.hpp"
#include "curbsense/synth.hpp"

#include <doctest.h>

#include <cmath>

using namespace curbsense;
using namespace curbsense::synth;
using geo::Direction;

namespace {

SynthConfig quiet()
{
  SynthConfig cfg;
  cfg.gps_sigma = 0.0;
  cfg.preference_sigma = 0.0;
  cfg.wander_sigma = 0.0;
  return cfg;
}

/// Shift and offset of every point in the frame of `rid`.
std::vector<geo::Projection> frame(const RoadNetwork& net, const DirectedSegment& rid, const RawTrajectory& tr)
{
  std::vector<geo::Projection> out;
  for (const auto& p : tr.points)
    out.push_back(geo::project(net.segment(rid.segment), rid.dir, net.to_local({p.lat, p.lng})));
  return out;
}

} // namespace

TEST_SUITE("synth")
{
  TEST_CASE("grid network shape")
  {
    SynthConfig cfg;
    cfg.grid_rows = 2;
    cfg.grid_cols = 2;
    cfg.spacing_m = 100.0;
    const auto net = gen_network(cfg);
    CHECK(net.nodes().size() == 4);
    REQUIRE(net.segments().size() == 4);
    for (const auto& s : net.segments()) {
      CHECK(s.length() == doctest::Approx(100.0).epsilon(1e-6));
      CHECK(s.level == geo::RoadLevel::local);
      CHECK(s.bidirectional() == (s.id % 2 == 1));
    }

    cfg.grid_rows = 5;
    cfg.grid_cols = 7;
    const auto big = gen_network(cfg);
    CHECK(big.nodes().size() == 35);
    CHECK(big.segments().size() == 5 * 6 + 4 * 7);

    cfg.grid_rows = 1;
    CHECK_THROWS_AS(gen_network(cfg), Error);
  }

  TEST_CASE("noise-free riders follow the lane offset")
  {
    auto cfg = quiet();
    cfg.reverse_rider_frac = 0.0;
    const auto net = gen_network(cfg);
    for (const DirectedSegment rid : {DirectedSegment{1, Direction::forward}, DirectedSegment{1, Direction::backward},
                                      DirectedSegment{2, Direction::forward}}) {
      const auto batch = gen_trajectories(net, rid, 5, 0, 3600, cfg, std::nullopt, 1);
      for (const auto& tr : batch.trajectories) {
        REQUIRE(tr.points.size() >= 5);
        double prev = -1.0;
        for (const auto& p : frame(net, rid, tr)) {
          CHECK(p.shift == doctest::Approx(cfg.lane_offset).epsilon(1e-6));
          CHECK(p.offset > prev);
          prev = p.offset;
        }
        for (std::size_t k = 1; k < tr.points.size(); ++k)
          CHECK(tr.points[k].t - tr.points[k - 1].t == cfg.sample_dt);
      }
    }
  }

  TEST_CASE("obstacle displacement shape")
  {
    const Obstacle ob{50.0, 20.0, 2.0};
    CHECK(obstacle_displacement(ob, 10.0, 60.0) == 2.0);
    CHECK(obstacle_displacement(ob, 10.0, 45.0) == doctest::Approx(1.0));
    CHECK(obstacle_displacement(ob, 10.0, 75.0) == doctest::Approx(1.0));
    CHECK(obstacle_displacement(ob, 10.0, 30.0) == 0.0);
    CHECK(obstacle_displacement(ob, 0.0, 49.0) == 0.0);
  }

  TEST_CASE("obstacle push is recovered from the sample mean")
  {
    SynthConfig cfg;
    cfg.reverse_rider_frac = 0.0;
    const auto net = gen_network(cfg);
    const DirectedSegment rid{3, Direction::forward};
    const Obstacle ob{60.0, 25.0, 2.0};
    const auto batch = gen_trajectories(net, rid, 80, 0, 3600, cfg, ob, 1);
    double in = 0.0, out = 0.0;
    int n_in = 0, n_out = 0;
    for (std::size_t i = 0; i < batch.trajectories.size(); ++i) {
      CHECK(batch.truth[i].affected);
      for (const auto& p : frame(net, rid, batch.trajectories[i])) {
        if (p.offset >= ob.position && p.offset <= ob.position + ob.length) {
          in += p.shift;
          ++n_in;
        } else if (p.offset < ob.position - cfg.ramp || p.offset > ob.position + ob.length + cfg.ramp) {
          out += p.shift;
          ++n_out;
        }
      }
    }
    REQUIRE(n_in > 100);
    CHECK(in / n_in - out / n_out == doctest::Approx(2.0).epsilon(0.15));
  }

  TEST_CASE("reverse riders on one-way segments")
  {
    SynthConfig cfg;
    cfg.gps_sigma = 0.5;
    const auto net = gen_network(cfg);
    const DirectedSegment rid{2, Direction::forward};
    REQUIRE_FALSE(net.segment(2).bidirectional());
    const int n = 2000;
    const auto batch = gen_trajectories(net, rid, n, 0, 3600, cfg, Obstacle{}, 1);
    int reverse = 0;
    for (std::size_t i = 0; i < batch.trajectories.size(); ++i) {
      const auto f = frame(net, rid, batch.trajectories[i]);
      const bool decreasing = f.back().offset < f.front().offset;
      CHECK(decreasing == batch.truth[i].reverse);
      CHECK(batch.truth[i].affected == !batch.truth[i].reverse);
      CHECK(batch.truth[i].travel == (batch.truth[i].reverse ? Direction::backward : Direction::forward));
      reverse += batch.truth[i].reverse;
    }
    const double sd = std::sqrt(n * 0.1 * 0.9);
    CHECK(std::abs(reverse - 0.1 * n) < 3 * sd);

    // Bidirectional segments never get reverse riders.
    for (const auto& t : gen_trajectories(net, {1, Direction::backward}, 200, 0, 3600, cfg, std::nullopt, 1).truth)
      CHECK_FALSE(t.reverse);
  }

  TEST_CASE("generation is reproducible and independent of batch order")
  {
    SynthConfig cfg;
    const auto net = gen_network(cfg);
    const DirectedSegment rid{5, Direction::forward};
    const auto a = gen_trajectories(net, rid, 6, 100, 3600, cfg, std::nullopt, 40);
    const auto b = gen_trajectories(net, rid, 6, 100, 3600, cfg, std::nullopt, 40);
    CHECK(a.trajectories == b.trajectories);
    // Trajectory 42 alone matches its twin from the batch.
    const auto single = gen_trajectories(net, rid, 1, 100, 3600, cfg, std::nullopt, 42);
    CHECK(single.trajectories[0] == a.trajectories[2]);
    cfg.seed = 2;
    CHECK_FALSE(gen_trajectories(net, rid, 6, 100, 3600, cfg, std::nullopt, 40).trajectories == a.trajectories);
  }

  TEST_CASE("detect corpus labels match the truth")
  {
    SynthConfig cfg;
    cfg.grid_rows = 3;
    cfg.grid_cols = 3;
    DetectPreset preset;
    preset.nights = 2;
    preset.per_window = 4;
    const auto corpus = gen_detect_corpus(cfg, preset);
    const auto rids = geo::directed_segments(corpus.net);
    CHECK(corpus.truth.labels.size() == rids.size() * preset.eval_hours.size());
    CHECK(corpus.nights.size() == 2);
    CHECK(corpus.trajectories.size() == corpus.truth.trajectories.size());
    for (const auto& l : corpus.truth.labels) {
      int affected = 0, forward = 0;
      for (const auto& t : corpus.truth.trajectories)
        if (t.rid == l.key.rid && corpus.trajectories[static_cast<std::size_t>(t.traj_id - 1)].points.front().t >=
                                      l.key.hour &&
            corpus.trajectories[static_cast<std::size_t>(t.traj_id - 1)].points.front().t < l.key.hour + 3600) {
          affected += t.affected;
          forward += !t.reverse;
        }
      CHECK(affected == (l.positive ? forward : 0));
    }
  }

  TEST_CASE("zero event probability gives an empty stream")
  {
    SynthConfig cfg;
    PatrolPreset preset;
    preset.events.p_hot = 0.0;
    preset.events.p_background = 0.0;
    const auto world = gen_patrol_world(cfg, preset);
    for (const auto& day : gen_event_stream(world, 3, preset.events, 1))
      CHECK(day.events() == 0);
  }

  TEST_CASE("hot-spot and background frequencies")
  {
    SynthConfig cfg;
    PatrolPreset preset;
    preset.events.p_hot = 0.8;
    preset.events.p_background = 0.05;
    preset.events.rush_hours.clear();
    const auto world = gen_patrol_world(cfg, preset);
    REQUIRE(world.hot.size() == 3);
    const auto days = gen_event_stream(world, 30, preset.events, 9);

    // One hot and one background segment, sampled once per clock hour.
    geo::SegmentId hot_seg = 0, cold_seg = 0;
    for (const auto& [seg, cell] : world.cells.table()) {
      const bool hot = std::binary_search(world.hot.begin(), world.hot.end(), cell);
      if (hot && !hot_seg)
        hot_seg = seg;
      if (!hot && !cold_seg)
        cold_seg = seg;
    }
    int hours = 0, hot_on = 0, cold_on = 0;
    for (const auto& day : days)
      for (int t = 0; t < world.grid.t_steps; t += 6) {
        const auto a = day.at(t);
        ++hours;
        hot_on += std::binary_search(a.begin(), a.end(), hot_seg);
        cold_on += std::binary_search(a.begin(), a.end(), cold_seg);
      }
    REQUIRE(hours >= 500);
    CHECK(std::abs(static_cast<double>(hot_on) / hours - 0.8) < 0.05);
    CHECK(std::abs(static_cast<double>(cold_on) / hours - 0.05) < 0.05);
  }

  TEST_CASE("rush-hour multiplier shapes the diurnal profile")
  {
    SynthConfig cfg;
    PatrolPreset preset;
    preset.events.hot_cells = 0;
    preset.events.p_background = 0.05;
    const auto world = gen_patrol_world(cfg, preset);
    const auto days = gen_event_stream(world, 40, preset.events, 3);
    const auto& rush = preset.events.rush_hours;
    double peak = 0.0, off = 0.0;
    int peak_steps = 0, off_steps = 0;
    for (const auto& day : days)
      for (int t = 0; t < world.grid.t_steps; ++t) {
        const int hour = ((preset.events.start_minute + t * world.grid.step_minutes) / 60) % 24;
        const bool is_peak = std::find(rush.begin(), rush.end(), hour) != rush.end();
        (is_peak ? peak : off) += static_cast<double>(day.at(t).size());
        ++(is_peak ? peak_steps : off_steps);
      }
    const double ratio = (peak / peak_steps) / (off / off_steps);
    CHECK(ratio == doctest::Approx(3.0).epsilon(0.1));
    CHECK(event_probability(world, preset.events, 0, 8) == doctest::Approx(0.15));
  }
}
