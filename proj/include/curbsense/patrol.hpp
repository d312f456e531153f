#pragma once

#include "curbsense/geo.hpp"
#include "curbsense/rng.hpp"

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace curbsense::patrol {

using geo::SegmentId;

struct Cell
{
  int i = 0; // row, along local y
  int j = 0; // column, along local x

  auto operator<=>(const Cell&) const = default;
};

struct GridSpec
{
  int n1 = 6;
  int n2 = 6;
  double cell_m = 500.0;
  int t_steps = 102;
  int step_minutes = 10;
  geo::LocalPoint origin; // lower-left corner in the network's local frame

  int cells() const { return n1 * n2; }
  int index(Cell c) const { return c.i * n2 + c.j; }
  Cell cell(int idx) const { return {idx / n2, idx % n2}; }
  bool inside(Cell c) const { return c.i >= 0 && c.i < n1 && c.j >= 0 && c.j < n2; }
  /// Length of the encoded state vector.
  int state_size() const { return 3 * cells() + t_steps; }

  /// Cell containing p; points outside are clamped to the border and flagged.
  Cell locate(geo::LocalPoint p, bool* clamped = nullptr) const;

  void validate() const;
};

/// Active segments per step (sorted ids); steps beyond the stream are empty.
struct EtaStream
{
  std::vector<std::vector<SegmentId>> active;

  std::size_t events() const;
  std::span<const SegmentId> at(int step) const;
};

/// Reads `H <step> <seg_id> <0|1>` rows; absent rows mean 0.
EtaStream parse_eta(std::istream& in, int t_steps, const std::string& source = "<eta>");
void write_eta(std::ostream& out, const EtaStream& eta);

/// Grid cell of every segment's midpoint.
class SegmentCells
{
public:
  SegmentCells() = default;
  static SegmentCells build(const geo::RoadNetwork& net, const GridSpec& grid);

  /// Cell index of a segment; throws for unknown ids.
  int cell_of(SegmentId id) const;
  const std::map<SegmentId, int>& table() const { return table_; }

private:
  std::map<SegmentId, int> table_;
};

/// I (road ids per cell) together with M (their counts).
struct EventBoard
{
  std::vector<std::vector<SegmentId>> items; // per cell index

  int m(int cell) const { return static_cast<int>(items[static_cast<std::size_t>(cell)].size()); }
  std::vector<int> counts() const;
  std::size_t total() const;
};

EventBoard map_events(std::span<const SegmentId> active, const SegmentCells& cells, const GridSpec& grid);

constexpr int kActions = 9;
constexpr int kStay = 0;

/// Row/column displacement of each action; action 0 stays.
constexpr std::array<std::array<int, 2>, kActions> kMoves{
  {{0, 0}, {-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}}};

Cell target(Cell c, int action);
bool feasible(const GridSpec& grid, Cell c, int action);

struct SimConfig
{
  double lambda_p = 1.0;      // mean catches per full step
  double t_mv = 2.0;          // minutes
  bool move_then_process = false;
  int cooldown = 0;           // steps a processed road stays hidden
  /// Replaces the Poisson draw by a fixed per-step capacity.
  std::optional<int> fixed_capacity;

  void validate(const GridSpec& grid) const;
};

struct WorldState
{
  int t = 0;
  EventBoard board;
  std::vector<Cell> agents;
  std::vector<double> catches;
  std::size_t n_tot = 0;
  std::map<SegmentId, int> hidden_until; // cooldown bookkeeping
};

WorldState make_world(const GridSpec& grid, std::vector<Cell> agents);

/// Agent-centric view: M plane, own cell, partner counts, time.
struct AgentState
{
  std::vector<float> m;
  std::vector<float> partners;
  int own = 0;
  int t = 0;
};

AgentState observe(const WorldState& world, const GridSpec& grid, std::size_t k);

/// Flattened M, one-hot own cell, partner counts, one-hot time step.
std::vector<double> encode(const AgentState& s, const GridSpec& grid);
std::vector<double> encode_state(const WorldState& world, const GridSpec& grid, std::size_t k);

/// Rebuilds the board from the active roads of step world.t.
void refresh(WorldState& world, std::span<const SegmentId> active, const SegmentCells& cells, const GridSpec& grid);

struct StepLog
{
  int step = 0;
  std::size_t agent = 0;
  int action = 0;
  double reward = 0.0;
  int cell = 0;
};

/// One simulator step: refresh, move, process, advance. Returns per-agent rewards.
std::vector<double> step(WorldState& world, std::span<const int> actions, std::span<const SegmentId> active,
                         const SegmentCells& cells, const GridSpec& grid, const SimConfig& cfg, Rng& rng,
                         std::vector<StepLog>* trace = nullptr);

/// Chooses a joint action from the refreshed world.
using Policy = std::function<std::vector<int>(const WorldState&, Rng&)>;

struct EpisodeResult
{
  double n_catch = 0.0;
  std::size_t n_tot = 0;
  std::vector<StepLog> trace;
};

std::vector<Cell> random_positions(const GridSpec& grid, std::size_t n_agents, Rng& rng);

EpisodeResult run_episode(const Policy& policy, const EtaStream& eta, const SegmentCells& cells,
                          const GridSpec& grid, const SimConfig& cfg, std::vector<Cell> start, std::uint64_t seed,
                          bool keep_trace = false);

void write_trace_csv(std::ostream& out, std::span<const StepLog> trace);

} // namespace curbsense::patrol
