#include "support.hpp"

#include "curbsense/error.hpp"
#include "curbsense/metrics.hpp"
#include "curbsense/patrol.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace curbsense;
using namespace curbsense::patrol;

namespace {

/// n1 x n2 cells of 100 m with `per_cell` short segments near each cell centre.
/// Segment id 1 + cell * per_cell + r lies in cell `cell`.
struct Town
{
  geo::RoadNetwork net;
  GridSpec grid;
  SegmentCells cells;
  int per_cell;

  geo::SegmentId seg(int cell, int r = 0) const { return 1 + cell * per_cell + r; }
};

Town make_town(int n1, int n2, int per_cell, int t_steps = 102)
{
  std::vector<testing::LocalSeg> segs;
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j)
      for (int r = 0; r < per_cell; ++r) {
        const double y = i * 100.0 + 50.0 + 5.0 * r;
        segs.push_back({static_cast<geo::SegmentId>(1 + (i * n2 + j) * per_cell + r), {j * 100.0 + 40.0, y},
                        {j * 100.0 + 60.0, y}});
      }
  Town t{testing::make_network(segs), GridSpec{n1, n2, 100.0, t_steps, 10, {}}, {}, per_cell};
  t.grid.origin = t.net.min_corner() - geo::LocalPoint{40.0, 50.0};
  t.cells = SegmentCells::build(t.net, t.grid);
  return t;
}

std::vector<SegmentId> all_of(const Town& t, int cell)
{
  std::vector<SegmentId> out;
  for (int r = 0; r < t.per_cell; ++r)
    out.push_back(t.seg(cell, r));
  return out;
}

} // namespace

TEST_SUITE("patrol")
{
  TEST_CASE("grid geometry")
  {
    GridSpec g{3, 4, 100.0, 10, 10, {0, 0}};
    bool clamped = true;
    CHECK(g.locate({250, 150}, &clamped) == Cell{1, 2});
    CHECK_FALSE(clamped);
    CHECK(g.locate({-5, 900}, &clamped) == Cell{2, 0});
    CHECK(clamped);
    CHECK(g.index({2, 3}) == 11);
    CHECK(g.cell(11) == Cell{2, 3});
    CHECK(feasible(g, {0, 0}, kStay));
    CHECK_FALSE(feasible(g, {0, 0}, 1));
    CHECK(feasible(g, {0, 0}, 8));
    CHECK(target({1, 1}, 3) == Cell{0, 2});
    CHECK_THROWS_AS((GridSpec{0, 4, 100.0, 10, 10, {}}.validate()), Error);
  }

  TEST_CASE("segments land in their cells")
  {
    const auto town = make_town(5, 4, 3);
    for (int c = 0; c < town.grid.cells(); ++c)
      for (int r = 0; r < 3; ++r)
        CHECK(town.cells.cell_of(town.seg(c, r)) == c);
    CHECK_THROWS_AS(town.cells.cell_of(999), Error);
  }

  TEST_CASE("event board counts")
  {
    const auto town = make_town(5, 4, 3);
    const auto empty = map_events({}, town.cells, town.grid);
    CHECK(empty.total() == 0);
    for (int m : empty.counts())
      CHECK(m == 0);

    const auto three = all_of(town, 7);
    const auto board = map_events(three, town.cells, town.grid);
    CHECK(board.m(7) == 3);
    CHECK(board.total() == 3);

    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<SegmentId> active;
      std::vector<int> expect(20, 0);
      for (SegmentId s = 1; s <= 60; ++s)
        if (rng() % 3 == 0) {
          active.push_back(s);
          ++expect[static_cast<std::size_t>((s - 1) / 3)];
        }
      const auto b = map_events(active, town.cells, town.grid);
      CHECK(b.counts() == expect);
      CHECK(b.total() == active.size());
    }
  }

  TEST_CASE("state encoding layout")
  {
    GridSpec g{10, 10, 500.0, 102, 10, {}};
    CHECK(g.state_size() == 402);
    WorldState w = make_world(g, {{1, 2}, {1, 2}, {9, 9}});
    w.t = 40;
    w.board.items[5] = {1, 2};
    const auto v = encode_state(w, g, 0);
    REQUIRE(v.size() == 402);
    double m = 0, own = 0, partners = 0, time = 0;
    for (int i = 0; i < 100; ++i) {
      m += v[static_cast<std::size_t>(i)];
      own += v[static_cast<std::size_t>(100 + i)];
      partners += v[static_cast<std::size_t>(200 + i)];
    }
    for (int i = 300; i < 402; ++i)
      time += v[static_cast<std::size_t>(i)];
    CHECK(m == 2.0);
    CHECK(v[5] == 2.0);
    CHECK(own == 1.0);
    CHECK(v[100 + 12] == 1.0);
    CHECK(partners == 2.0);
    CHECK(v[200 + 12] == 1.0);
    CHECK(v[200 + 99] == 1.0);
    CHECK(time == 1.0);
    CHECK(v[340] == 1.0);
  }

  TEST_CASE("step rewards")
  {
    const auto town = make_town(3, 3, 10);
    const SimConfig cfg;
    Rng rng(1);

    WorldState w = make_world(town.grid, {{0, 0}, {1, 1}});
    const std::vector<int> stay{kStay, kStay};
    CHECK(step(w, stay, {}, town.cells, town.grid, cfg, rng) == std::vector<double>{0.0, 0.0});
    CHECK(w.t == 1);

    // Events only in cell 8, nobody there.
    const auto far = all_of(town, 8);
    for (int k = 0; k < 20; ++k)
      CHECK(step(w, stay, far, town.cells, town.grid, cfg, rng) == std::vector<double>{0.0, 0.0});

    // A mover earns nothing even when it lands on events.
    WorldState m = make_world(town.grid, {{1, 1}});
    const std::vector<int> up_right{8};
    CHECK(step(m, up_right, far, town.cells, town.grid, cfg, rng)[0] == 0.0);
    CHECK(m.agents[0] == Cell{2, 2});

    // Off-grid actions become stays.
    SimConfig fixed;
    fixed.fixed_capacity = 2;
    WorldState edge = make_world(town.grid, {{2, 2}});
    const auto r = step(edge, up_right, far, town.cells, town.grid, fixed, rng);
    CHECK(edge.agents[0] == Cell{2, 2});
    CHECK(r[0] == 2.0);
  }

  TEST_CASE("stayers in one cell share the pool in agent order")
  {
    const auto town = make_town(2, 2, 4);
    SimConfig cfg;
    cfg.fixed_capacity = 3;
    Rng rng(2);
    WorldState w = make_world(town.grid, {{0, 1}, {0, 1}});
    const std::vector<int> stay{kStay, kStay};
    const auto r = step(w, stay, all_of(town, 1), town.cells, town.grid, cfg, rng);
    CHECK(r == std::vector<double>{3.0, 1.0});
    CHECK(w.board.m(1) == 0);
    CHECK(w.n_tot == 4);
  }

  TEST_CASE("Poisson processing mean")
  {
    const auto town = make_town(2, 2, 10);
    const auto events = all_of(town, 0);
    const std::vector<int> stay{kStay};
    const SimConfig cfg;
    Rng rng(3);
    double total = 0.0;
    const int replays = 10000;
    for (int k = 0; k < replays; ++k) {
      WorldState w = make_world(town.grid, {{0, 0}});
      total += step(w, stay, events, town.cells, town.grid, cfg, rng)[0];
    }
    CHECK(std::abs(total / replays - 1.0) < 0.03);
  }

  TEST_CASE("processing after a move uses the remaining time")
  {
    const auto town = make_town(2, 2, 10);
    const auto events = all_of(town, 0);
    SimConfig cfg;
    cfg.move_then_process = true;
    Rng rng(4);
    const std::vector<int> left{4};
    double total = 0.0;
    const int replays = 10000;
    for (int k = 0; k < replays; ++k) {
      WorldState w = make_world(town.grid, {{0, 1}});
      total += step(w, left, events, town.cells, town.grid, cfg, rng)[0];
      CHECK(w.agents[0] == Cell{0, 0});
    }
    // Poisson mean lambda * (1 - t_mv / step) = 0.8.
    CHECK(std::abs(total / replays - 0.8) < 0.03);
  }

  TEST_CASE("cooldown hides processed roads")
  {
    const auto town = make_town(2, 2, 3);
    SimConfig cfg;
    cfg.fixed_capacity = 1;
    cfg.cooldown = 3;
    Rng rng(5);
    WorldState w = make_world(town.grid, {{0, 0}});
    const std::vector<int> stay{kStay};
    const auto events = all_of(town, 0);
    // Steps 0..2 each take one new road and hide it for 3 steps; step 3 finds all hidden.
    std::vector<double> got;
    for (int t = 0; t < 5; ++t)
      got.push_back(step(w, stay, events, town.cells, town.grid, cfg, rng)[0]);
    CHECK(got == std::vector<double>{1, 1, 1, 0, 1});
    CHECK(w.n_tot == 3 + 2 + 1 + 0 + 1);
  }

  TEST_CASE("episode totals")
  {
    const auto town = make_town(3, 3, 2);
    const Policy all_stay = [](const WorldState& w, Rng&) { return std::vector<int>(w.agents.size(), kStay); };
    const SimConfig cfg;

    const auto none = run_episode(all_stay, EtaStream{}, town.cells, town.grid, cfg, {{0, 0}}, 1);
    CHECK(none.n_tot == 0);
    CHECK(none.n_catch == 0.0);
    CHECK_THROWS_AS(metrics::rpe(none.n_catch, static_cast<double>(none.n_tot)), Error);

    // One road active all day under a single staying agent: each step catches min(Poisson(1), 1).
    EtaStream one;
    one.active.assign(102, {town.seg(4)});
    const double p = 1.0 - std::exp(-1.0);
    const int episodes = 200;
    double sum = 0.0;
    for (int e = 0; e < episodes; ++e) {
      const auto r = run_episode(all_stay, one, town.cells, town.grid, cfg, {{1, 1}}, 100 + e);
      CHECK(r.n_tot == 102);
      sum += r.n_catch;
    }
    const double sigma = std::sqrt(102.0 * p * (1.0 - p) / episodes);
    CHECK(std::abs(sum / episodes - 102.0 * p) < 3.0 * sigma);
  }

  TEST_CASE("random episodes conserve events and replay exactly")
  {
    const auto town = make_town(4, 4, 3);
    std::mt19937_64 gen(6);
    EtaStream eta;
    eta.active.resize(102);
    for (auto& a : eta.active) {
      for (SegmentId s = 1; s <= 48; ++s)
        if (gen() % 5 == 0)
          a.push_back(s);
    }
    const Policy wander = [&](const WorldState& w, Rng& rng) {
      std::vector<int> out;
      for (std::size_t k = 0; k < w.agents.size(); ++k) {
        CHECK(w.board.counts().size() == 16);
        std::size_t sum = 0;
        for (int c = 0; c < 16; ++c)
          sum += static_cast<std::size_t>(w.board.m(c));
        CHECK(sum == w.board.total());
        out.push_back(std::uniform_int_distribution<int>(0, kActions - 1)(rng));
      }
      return out;
    };
    for (const int cooldown : {0, 3}) {
      SimConfig cfg;
      cfg.cooldown = cooldown;
      const std::vector<Cell> start{{0, 0}, {3, 3}, {1, 2}};
      const auto a = run_episode(wander, eta, town.cells, town.grid, cfg, start, 9, true);
      const auto b = run_episode(wander, eta, town.cells, town.grid, cfg, start, 9, true);
      REQUIRE(a.trace.size() == 3 * 102);
      double rewards = 0.0;
      for (std::size_t i = 0; i < a.trace.size(); ++i) {
        CHECK(a.trace[i].reward == b.trace[i].reward);
        CHECK(a.trace[i].action == b.trace[i].action);
        CHECK(a.trace[i].cell == b.trace[i].cell);
        rewards += a.trace[i].reward;
      }
      CHECK(rewards == a.n_catch);
      CHECK(a.n_catch <= static_cast<double>(a.n_tot));
      if (cooldown == 0)
        CHECK(a.n_tot == eta.events());
      else
        CHECK(a.n_tot <= eta.events());
    }
  }

  TEST_CASE("eta file round trip")
  {
    EtaStream eta;
    eta.active = {{3, 9}, {}, {1}};
    std::stringstream ss;
    write_eta(ss, eta);
    CHECK(ss.str() == "H 0 3 1\nH 0 9 1\nH 2 1 1\n");
    const auto back = parse_eta(ss, 5);
    REQUIRE(back.active.size() == 5);
    CHECK(back.active[0] == std::vector<SegmentId>{3, 9});
    CHECK(back.at(2).size() == 1);
    CHECK(back.at(4).empty());
    CHECK(back.at(99).empty());
    CHECK(back.events() == 3);

    auto zeros = testing::text("# comment\nH 1 4 0\nH 1 5 1\nH 1 5 1\n");
    CHECK(parse_eta(zeros, 3).active[1] == std::vector<SegmentId>{5});
    auto range = testing::text("H 7 4 1\n");
    CHECK_THROWS_WITH_AS(parse_eta(range, 5, "e"), doctest::Contains("e:1"), Error);
    auto flag = testing::text("H 1 4 1\nH 1 4 2\n");
    CHECK_THROWS_WITH_AS(parse_eta(flag, 5, "e"), doctest::Contains("e:2"), Error);

    std::ostringstream csv;
    const std::vector<StepLog> trace{{0, 1, 4, 2.0, 7}};
    write_trace_csv(csv, trace);
    CHECK(csv.str() == "step,agent,action,reward,cell\n0,1,4,2,7\n");
  }

  TEST_CASE("simulator config validation")
  {
    const GridSpec g;
    SimConfig c;
    CHECK_NOTHROW(c.validate(g));
    c.lambda_p = 0.0;
    CHECK_THROWS_AS(c.validate(g), Error);
    c = {};
    c.t_mv = 11.0;
    CHECK_THROWS_AS(c.validate(g), Error);
    c = {};
    c.cooldown = -1;
    CHECK_THROWS_AS(c.validate(g), Error);
    CHECK_THROWS_AS(make_world(g, {{6, 0}}), Error);
  }
}
