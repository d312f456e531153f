#include "curbsense/patrol.hpp"

#include "curbsense/error.hpp"
#include "text.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <spdlog/spdlog.h>

namespace curbsense::patrol {

Cell GridSpec::locate(geo::LocalPoint p, bool* clamped) const
{
  const auto fi = static_cast<int>(std::floor((p.y - origin.y) / cell_m));
  const auto fj = static_cast<int>(std::floor((p.x - origin.x) / cell_m));
  const Cell c{std::clamp(fi, 0, n1 - 1), std::clamp(fj, 0, n2 - 1)};
  if (clamped)
    *clamped = c.i != fi || c.j != fj;
  return c;
}

void GridSpec::validate() const
{
  if (n1 < 1 || n2 < 1 || t_steps < 1 || step_minutes < 1 || !(cell_m > 0.0))
    throw usage_error("grid needs n1, n2, T >= 1 and a positive cell size");
}

std::size_t EtaStream::events() const
{
  std::size_t n = 0;
  for (const auto& a : active)
    n += a.size();
  return n;
}

std::span<const SegmentId> EtaStream::at(int step) const
{
  if (step < 0 || static_cast<std::size_t>(step) >= active.size())
    return {};
  return active[static_cast<std::size_t>(step)];
}

EtaStream parse_eta(std::istream& in, int t_steps, const std::string& source)
{
  text::LineReader reader(in, source);
  EtaStream eta;
  eta.active.resize(static_cast<std::size_t>(t_steps));
  std::string raw;
  while (reader.next(raw)) {
    const auto line = text::strip(raw);
    if (line.empty() || line.front() == '#')
      continue;
    const auto tok = text::split(line);
    if (tok[0] != "H" || tok.size() != 4)
      reader.fail("expected 'H <step> <seg_id> <0|1>'");
    const int step = reader.number<int>(tok[1], "step");
    if (step < 0 || step >= t_steps)
      reader.fail("step " + std::to_string(step) + " outside [0, " + std::to_string(t_steps) + ")");
    const auto seg = reader.number<SegmentId>(tok[2], "segment id");
    if (tok[3] == "1")
      eta.active[static_cast<std::size_t>(step)].push_back(seg);
    else if (tok[3] != "0")
      reader.fail("indicator must be 0 or 1");
  }
  for (auto& a : eta.active) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return eta;
}

void write_eta(std::ostream& out, const EtaStream& eta)
{
  for (std::size_t t = 0; t < eta.active.size(); ++t)
    for (auto seg : eta.active[t])
      out << "H " << t << ' ' << seg << " 1\n";
}

SegmentCells SegmentCells::build(const geo::RoadNetwork& net, const GridSpec& grid)
{
  SegmentCells sc;
  for (const auto& seg : net.segments()) {
    const auto mid = geo::locate(seg, geo::Direction::forward, seg.length() / 2.0);
    bool clamped = false;
    const Cell c = grid.locate(mid, &clamped);
    if (clamped)
      spdlog::warn("segment {} midpoint outside the patrol grid, clamped to cell ({}, {})", seg.id, c.i, c.j);
    sc.table_.emplace(seg.id, grid.index(c));
  }
  return sc;
}

int SegmentCells::cell_of(SegmentId id) const
{
  auto it = table_.find(id);
  if (it == table_.end())
    throw data_error("segment " + std::to_string(id) + " is not in the network");
  return it->second;
}

std::vector<int> EventBoard::counts() const
{
  std::vector<int> out;
  out.reserve(items.size());
  for (const auto& v : items)
    out.push_back(static_cast<int>(v.size()));
  return out;
}

std::size_t EventBoard::total() const
{
  std::size_t n = 0;
  for (const auto& v : items)
    n += v.size();
  return n;
}

EventBoard map_events(std::span<const SegmentId> active, const SegmentCells& cells, const GridSpec& grid)
{
  EventBoard board;
  board.items.resize(static_cast<std::size_t>(grid.cells()));
  for (auto seg : active)
    board.items[static_cast<std::size_t>(cells.cell_of(seg))].push_back(seg);
  return board;
}

Cell target(Cell c, int action)
{
  const auto& d = kMoves[static_cast<std::size_t>(action)];
  return {c.i + d[0], c.j + d[1]};
}

bool feasible(const GridSpec& grid, Cell c, int action)
{
  return action >= 0 && action < kActions && grid.inside(target(c, action));
}

void SimConfig::validate(const GridSpec& grid) const
{
  if (!(lambda_p > 0.0))
    throw usage_error("lambda_p must be positive");
  if (!(t_mv > 0.0) || t_mv > grid.step_minutes)
    throw usage_error("t_mv must lie in (0, step_minutes]");
  if (cooldown < 0)
    throw usage_error("cooldown must be non-negative");
  if (fixed_capacity && *fixed_capacity < 0)
    throw usage_error("fixed capacity must be non-negative");
}

WorldState make_world(const GridSpec& grid, std::vector<Cell> agents)
{
  WorldState w;
  w.board.items.resize(static_cast<std::size_t>(grid.cells()));
  for (const auto& a : agents)
    if (!grid.inside(a))
      throw usage_error("agent start position outside the grid");
  w.catches.assign(agents.size(), 0.0);
  w.agents = std::move(agents);
  return w;
}

AgentState observe(const WorldState& world, const GridSpec& grid, std::size_t k)
{
  AgentState s;
  s.m.resize(static_cast<std::size_t>(grid.cells()));
  s.partners.assign(static_cast<std::size_t>(grid.cells()), 0.0f);
  for (int c = 0; c < grid.cells(); ++c)
    s.m[static_cast<std::size_t>(c)] = static_cast<float>(world.board.m(c));
  for (std::size_t a = 0; a < world.agents.size(); ++a)
    if (a != k)
      s.partners[static_cast<std::size_t>(grid.index(world.agents[a]))] += 1.0f;
  s.own = grid.index(world.agents[k]);
  s.t = world.t;
  return s;
}

std::vector<double> encode(const AgentState& s, const GridSpec& grid)
{
  const auto n = static_cast<std::size_t>(grid.cells());
  std::vector<double> v(static_cast<std::size_t>(grid.state_size()), 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    v[c] = s.m[c];
    v[2 * n + c] = s.partners[c];
  }
  v[n + static_cast<std::size_t>(s.own)] = 1.0;
  v[3 * n + static_cast<std::size_t>(std::clamp(s.t, 0, grid.t_steps - 1))] = 1.0;
  return v;
}

std::vector<double> encode_state(const WorldState& world, const GridSpec& grid, std::size_t k)
{
  return encode(observe(world, grid, k), grid);
}

void refresh(WorldState& world, std::span<const SegmentId> active, const SegmentCells& cells, const GridSpec& grid)
{
  if (world.hidden_until.empty()) {
    world.board = map_events(active, cells, grid);
    return;
  }
  std::vector<SegmentId> visible;
  for (auto seg : active) {
    auto it = world.hidden_until.find(seg);
    if (it == world.hidden_until.end() || it->second <= world.t)
      visible.push_back(seg);
  }
  std::erase_if(world.hidden_until, [&](const auto& kv) { return kv.second <= world.t; });
  world.board = map_events(visible, cells, grid);
}

std::vector<double> step(WorldState& world, std::span<const int> actions, std::span<const SegmentId> active,
                         const SegmentCells& cells, const GridSpec& grid, const SimConfig& cfg, Rng& rng,
                         std::vector<StepLog>* trace)
{
  if (world.t >= grid.t_steps)
    throw usage_error("episode already finished");
  if (actions.size() != world.agents.size())
    throw usage_error("joint action size does not match the number of agents");

  refresh(world, active, cells, grid);
  world.n_tot += world.board.total();

  std::vector<double> rewards(world.agents.size(), 0.0);
  std::vector<double> budget(world.agents.size(), 0.0); // fraction of the step left for processing
  for (std::size_t k = 0; k < world.agents.size(); ++k) {
    int a = actions[k];
    if (a != kStay && !feasible(grid, world.agents[k], a)) {
      spdlog::debug("agent {} action {} leaves the grid, treated as stay", k, a);
      a = kStay;
    }
    if (a == kStay) {
      budget[k] = 1.0;
    } else {
      world.agents[k] = target(world.agents[k], a);
      if (cfg.move_then_process)
        budget[k] = 1.0 - cfg.t_mv / grid.step_minutes;
    }
  }

  for (std::size_t k = 0; k < world.agents.size(); ++k) {
    if (budget[k] <= 0.0)
      continue;
    int n = 0;
    if (cfg.fixed_capacity) {
      n = *cfg.fixed_capacity;
    } else {
      std::poisson_distribution<int> poisson(cfg.lambda_p * budget[k]);
      n = poisson(rng);
    }
    auto& pool = world.board.items[static_cast<std::size_t>(grid.index(world.agents[k]))];
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(n), pool.size());
    for (std::size_t r = 0; r < take; ++r) {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      const auto idx = pick(rng);
      if (cfg.cooldown > 0)
        world.hidden_until[pool[idx]] = world.t + 1 + cfg.cooldown;
      pool[idx] = pool.back();
      pool.pop_back();
    }
    rewards[k] = static_cast<double>(take);
    world.catches[k] += rewards[k];
  }

  if (trace)
    for (std::size_t k = 0; k < world.agents.size(); ++k)
      trace->push_back({world.t, k, actions[k], rewards[k], grid.index(world.agents[k])});
  ++world.t;
  return rewards;
}

std::vector<Cell> random_positions(const GridSpec& grid, std::size_t n_agents, Rng& rng)
{
  std::uniform_int_distribution<int> cell(0, grid.cells() - 1);
  std::vector<Cell> out;
  for (std::size_t k = 0; k < n_agents; ++k)
    out.push_back(grid.cell(cell(rng)));
  return out;
}

EpisodeResult run_episode(const Policy& policy, const EtaStream& eta, const SegmentCells& cells,
                          const GridSpec& grid, const SimConfig& cfg, std::vector<Cell> start, std::uint64_t seed,
                          bool keep_trace)
{
  cfg.validate(grid);
  WorldState world = make_world(grid, std::move(start));
  Rng sim_rng = make_rng(seed, {1});
  Rng policy_rng = make_rng(seed, {2});
  EpisodeResult out;
  while (world.t < grid.t_steps) {
    refresh(world, eta.at(world.t), cells, grid);
    const auto actions = policy(world, policy_rng);
    step(world, actions, eta.at(world.t), cells, grid, cfg, sim_rng, keep_trace ? &out.trace : nullptr);
  }
  for (double c : world.catches)
    out.n_catch += c;
  out.n_tot = world.n_tot;
  return out;
}

void write_trace_csv(std::ostream& out, std::span<const StepLog> trace)
{
  out << "step,agent,action,reward,cell\n";
  for (const auto& r : trace)
    out << r.step << ',' << r.agent << ',' << r.action << ',' << r.reward << ',' << r.cell << '\n';
}

} // namespace curbsense::patrol
