#pragma once

#include "curbsense/patrol.hpp"
#include "curbsense/qnet.hpp"

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace curbsense::marl {

using patrol::AgentState;
using patrol::GridSpec;
using patrol::WorldState;

/// Which state planes a learner sees; masked planes are encoded as zeros.
struct StateMask
{
  bool context = true;  // the M plane
  bool partners = true; // partner locations
};

Eigen::VectorXd encode(const AgentState& s, const GridSpec& grid, const StateMask& mask);

struct Experience
{
  AgentState s;
  int a = 0;
  double r = 0.0;
  AgentState s2;
  bool terminal = false;
};

class ReplayBuffer
{
public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Experience e);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Experience& operator[](std::size_t i) const { return items_[i]; }

  /// Uniform draws with replacement; `n` must not exceed the population.
  std::vector<const Experience*> sample(std::size_t n, Rng& rng) const;

private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Experience> items_;
};

/// r for terminal items, r + gamma * max_a Q_target(s', a) otherwise.
std::vector<double> td_targets(std::span<const Experience* const> batch, const QNet& target, double gamma,
                               const GridSpec& grid, const StateMask& mask);

struct TrainConfig
{
  double gamma = 0.99;
  int batch = 1024;
  int target_sync = 2048;
  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_fraction = 0.5; // share of training steps over which epsilon decays
  std::size_t buffer = 100000;
  int episodes = 200;
  std::vector<int> hidden{256, 128, 32};
  AdamConfig adam;
  std::uint64_t seed = 1;

  void validate() const;
  double epsilon(std::int64_t step, std::int64_t total_steps) const;
};

/// One gradient step on a sampled batch; returns the loss before the update.
double train_step(QNet& net, const QNet& target, const ReplayBuffer& buffer, Adam& adam, const TrainConfig& cfg,
                  const GridSpec& grid, const StateMask& mask, Rng& rng);

/// Copies `net` into `target` when step is a positive multiple of `every`.
bool sync_target(const QNet& net, QNet& target, std::int64_t step, int every);

using QValues = std::array<double, patrol::kActions>;
using QFunction = std::function<QValues(const AgentState&)>;

QFunction net_q(const QNet& net, const GridSpec& grid, StateMask mask);

/// Best feasible action (ties to the lower index) and its value.
std::pair<int, double> greedy_action(const QValues& q, const GridSpec& grid, patrol::Cell at);

/// Uniform over actions that stay on the grid.
int random_feasible(const GridSpec& grid, patrol::Cell at, Rng& rng);

enum class Order { q_priority, agent_id };

struct JointAction
{
  std::vector<int> actions;
  std::vector<std::size_t> commit_order;
};

/// One agent at a time: commit the most confident (or lowest-id) agent, then update the
/// remaining agents' partner planes and discount the target cell's expected catch.
JointAction generate_joint_action(const QFunction& q, const WorldState& world, const GridSpec& grid, double epsilon,
                                  Order order, double lambda_p, Rng& rng);

/// Every agent acts on the unmodified state.
std::vector<int> simultaneous_action(const QFunction& q, const WorldState& world, const GridSpec& grid,
                                     double epsilon, Rng& rng);

/// The evaluated patrol methods.
enum class PolicyKind { random, nc_ours, greedy, softmax, idqn, ours_aid, ours };

constexpr PolicyKind kPolicyKinds[] = {PolicyKind::random,  PolicyKind::nc_ours,  PolicyKind::greedy,
                                       PolicyKind::softmax, PolicyKind::idqn,     PolicyKind::ours_aid,
                                       PolicyKind::ours};

const char* to_string(PolicyKind k);
std::string display_name(PolicyKind k);
PolicyKind parse_policy(const std::string& s);
bool learned(PolicyKind k);
StateMask mask_for(PolicyKind k);

patrol::Policy random_policy();
patrol::Policy greedy_policy(const GridSpec& grid, double epsilon = 0.1);
patrol::Policy softmax_policy(const GridSpec& grid, double tau = 1.0);
/// Learned policies; epsilon is the evaluation-time exploration rate.
patrol::Policy learned_policy(PolicyKind kind, const QNet& net, const GridSpec& grid, double lambda_p,
                              double epsilon = 0.0);

struct TrainEnv
{
  GridSpec grid;
  patrol::SegmentCells cells;
  std::vector<patrol::EtaStream> days;
  patrol::SimConfig sim;
  std::size_t agents = 2;
};

struct CurveRow
{
  int episode = 0;
  double reward = 0.0;
  double rpe = 0.0;
  double loss = 0.0; // mean over the episode's gradient steps
  double epsilon = 0.0;
};

struct TrainResult
{
  QNet net;
  std::vector<CurveRow> curve;
  std::int64_t steps = 0;
};

/// Trains a shared Q-network for a learned policy kind.
TrainResult train(const TrainEnv& env, const TrainConfig& cfg, PolicyKind kind);

void write_curve_csv(std::ostream& out, std::span<const CurveRow> curve);

} // namespace curbsense::marl
