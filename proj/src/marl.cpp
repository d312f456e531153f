#include "curbsense/marl.hpp"

#include "curbsense/error.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <spdlog/spdlog.h>

namespace curbsense::marl {

using patrol::Cell;
using patrol::kActions;
using patrol::kStay;

Eigen::VectorXd encode(const AgentState& s, const GridSpec& grid, const StateMask& mask)
{
  const auto n = static_cast<Eigen::Index>(grid.cells());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(grid.state_size());
  for (Eigen::Index c = 0; c < n; ++c) {
    if (mask.context)
      v(c) = s.m[static_cast<std::size_t>(c)];
    if (mask.partners)
      v(2 * n + c) = s.partners[static_cast<std::size_t>(c)];
  }
  v(n + s.own) = 1.0;
  v(3 * n + std::clamp(s.t, 0, grid.t_steps - 1)) = 1.0;
  return v;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity)
{
  if (capacity == 0)
    throw usage_error("replay buffer capacity must be positive");
}

void ReplayBuffer::push(Experience e)
{
  if (items_.size() < capacity_) {
    items_.push_back(std::move(e));
  } else {
    items_[next_] = std::move(e);
    next_ = (next_ + 1) % capacity_;
  }
}

std::vector<const Experience*> ReplayBuffer::sample(std::size_t n, Rng& rng) const
{
  if (items_.empty())
    throw usage_error("cannot sample from an empty replay buffer");
  if (n > items_.size())
    throw usage_error("sample larger than the replay buffer population");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<const Experience*> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(&items_[pick(rng)]);
  return out;
}

std::vector<double> td_targets(std::span<const Experience* const> batch, const QNet& target, double gamma,
                               const GridSpec& grid, const StateMask& mask)
{
  std::vector<double> y(batch.size());
  std::vector<std::size_t> live;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    y[i] = batch[i]->r;
    if (!batch[i]->terminal && gamma != 0.0)
      live.push_back(i);
  }
  if (live.empty())
    return y;
  Eigen::MatrixXd x(grid.state_size(), static_cast<Eigen::Index>(live.size()));
  for (std::size_t c = 0; c < live.size(); ++c)
    x.col(static_cast<Eigen::Index>(c)) = encode(batch[live[c]]->s2, grid, mask);
  const Eigen::MatrixXd q = target.forward_batch(x);
  for (std::size_t c = 0; c < live.size(); ++c)
    y[live[c]] += gamma * q.col(static_cast<Eigen::Index>(c)).maxCoeff();
  return y;
}

void TrainConfig::validate() const
{
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw usage_error("gamma must lie in (0, 1]");
  if (batch < 1 || target_sync < 1 || buffer < static_cast<std::size_t>(batch) || episodes < 1)
    throw usage_error("batch, sync period and episodes must be positive and the buffer must hold a batch");
  if (eps_start < 0.0 || eps_start > 1.0 || eps_end < 0.0 || eps_end > 1.0 || !(eps_fraction > 0.0))
    throw usage_error("epsilon schedule out of range");
}

double TrainConfig::epsilon(std::int64_t step, std::int64_t total_steps) const
{
  const double horizon = eps_fraction * static_cast<double>(total_steps);
  if (horizon <= 0.0 || static_cast<double>(step) >= horizon)
    return eps_end;
  return eps_start + (eps_end - eps_start) * static_cast<double>(step) / horizon;
}

double train_step(QNet& net, const QNet& target, const ReplayBuffer& buffer, Adam& adam, const TrainConfig& cfg,
                  const GridSpec& grid, const StateMask& mask, Rng& rng)
{
  const auto batch = buffer.sample(static_cast<std::size_t>(cfg.batch), rng);
  const auto y = td_targets(batch, target, cfg.gamma, grid, mask);
  Eigen::MatrixXd x(grid.state_size(), static_cast<Eigen::Index>(batch.size()));
  std::vector<int> actions(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    x.col(static_cast<Eigen::Index>(i)) = encode(batch[i]->s, grid, mask);
    actions[i] = batch[i]->a;
  }
  Gradient grad;
  const double loss = td_loss(net, x, actions, y, &grad);
  adam.apply(net, grad);
  return loss;
}

bool sync_target(const QNet& net, QNet& target, std::int64_t step, int every)
{
  if (step <= 0 || step % every != 0)
    return false;
  target = net;
  return true;
}

QFunction net_q(const QNet& net, const GridSpec& grid, StateMask mask)
{
  return [&net, grid, mask](const AgentState& s) {
    const Eigen::VectorXd q = net.forward(encode(s, grid, mask));
    QValues out{};
    for (int a = 0; a < kActions; ++a)
      out[static_cast<std::size_t>(a)] = q(a);
    return out;
  };
}

std::pair<int, double> greedy_action(const QValues& q, const GridSpec& grid, Cell at)
{
  int best = kStay;
  double value = q[kStay];
  for (int a = 1; a < kActions; ++a)
    if (patrol::feasible(grid, at, a) && q[static_cast<std::size_t>(a)] > value) {
      best = a;
      value = q[static_cast<std::size_t>(a)];
    }
  return {best, value};
}

int random_feasible(const GridSpec& grid, Cell at, Rng& rng)
{
  std::vector<int> ok;
  for (int a = 0; a < kActions; ++a)
    if (patrol::feasible(grid, at, a))
      ok.push_back(a);
  return ok[std::uniform_int_distribution<std::size_t>(0, ok.size() - 1)(rng)];
}

JointAction generate_joint_action(const QFunction& q, const WorldState& world, const GridSpec& grid, double epsilon,
                                  Order order, double lambda_p, Rng& rng)
{
  const std::size_t n = world.agents.size();
  std::vector<AgentState> states;
  for (std::size_t k = 0; k < n; ++k)
    states.push_back(patrol::observe(world, grid, k));
  std::vector<std::size_t> remaining(n);
  for (std::size_t k = 0; k < n; ++k)
    remaining[k] = k;

  JointAction out;
  out.actions.assign(n, kStay);
  while (!remaining.empty()) {
    std::size_t pick = 0; // position in `remaining`
    int action = kStay;
    double best = -std::numeric_limits<double>::infinity();
    const std::size_t scan = order == Order::agent_id ? 1 : remaining.size();
    for (std::size_t r = 0; r < scan; ++r) {
      const std::size_t k = remaining[r];
      const auto [a, v] = greedy_action(q(states[k]), grid, world.agents[k]);
      if (r == 0 || v > best) {
        pick = r;
        action = a;
        best = v;
      }
    }
    const std::size_t k = remaining[pick];
    if (epsilon > 0.0 && uniform01(rng) < epsilon)
      action = random_feasible(grid, world.agents[k], rng);
    out.actions[k] = action;
    out.commit_order.push_back(k);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));

    const auto from = static_cast<std::size_t>(grid.index(world.agents[k]));
    const auto to = static_cast<std::size_t>(grid.index(patrol::target(world.agents[k], action)));
    for (auto j : remaining) {
      auto& s = states[j];
      s.partners[from] -= 1.0f;
      s.partners[to] += 1.0f;
      s.m[to] -= std::min(static_cast<float>(lambda_p), s.m[to]);
    }
  }
  return out;
}

std::vector<int> simultaneous_action(const QFunction& q, const WorldState& world, const GridSpec& grid,
                                     double epsilon, Rng& rng)
{
  std::vector<int> out;
  for (std::size_t k = 0; k < world.agents.size(); ++k) {
    int a = greedy_action(q(patrol::observe(world, grid, k)), grid, world.agents[k]).first;
    if (epsilon > 0.0 && uniform01(rng) < epsilon)
      a = random_feasible(grid, world.agents[k], rng);
    out.push_back(a);
  }
  return out;
}

const char* to_string(PolicyKind k)
{
  switch (k) {
  case PolicyKind::random:
    return "random";
  case PolicyKind::nc_ours:
    return "nc-ours";
  case PolicyKind::greedy:
    return "greedy";
  case PolicyKind::softmax:
    return "softmax";
  case PolicyKind::idqn:
    return "idqn";
  case PolicyKind::ours_aid:
    return "ours-aid";
  case PolicyKind::ours:
    return "ours";
  }
  return "random";
}

std::string display_name(PolicyKind k)
{
  switch (k) {
  case PolicyKind::random:
    return "M1 No-Context Random";
  case PolicyKind::nc_ours:
    return "M2 No-Context Ours";
  case PolicyKind::greedy:
    return "M3 Heuristic-Greedy";
  case PolicyKind::softmax:
    return "M4 Heuristic-Softmax";
  case PolicyKind::idqn:
    return "M5 Independent DQN";
  case PolicyKind::ours_aid:
    return "M6 Ours-aID";
  case PolicyKind::ours:
    return "M7 Ours";
  }
  return "";
}

PolicyKind parse_policy(const std::string& s)
{
  for (auto k : kPolicyKinds)
    if (s == to_string(k))
      return k;
  throw usage_error("unknown policy '" + s + "'");
}

bool learned(PolicyKind k)
{
  return k == PolicyKind::nc_ours || k == PolicyKind::idqn || k == PolicyKind::ours_aid || k == PolicyKind::ours;
}

StateMask mask_for(PolicyKind k)
{
  StateMask m;
  if (k == PolicyKind::nc_ours)
    m.context = false;
  if (k == PolicyKind::idqn)
    m.partners = false;
  return m;
}

patrol::Policy random_policy()
{
  return [](const WorldState& world, Rng& rng) {
    std::uniform_int_distribution<int> pick(0, kActions - 1);
    std::vector<int> out;
    for (std::size_t k = 0; k < world.agents.size(); ++k)
      out.push_back(pick(rng));
    return out;
  };
}

patrol::Policy greedy_policy(const GridSpec& grid, double epsilon)
{
  return [grid, epsilon](const WorldState& world, Rng& rng) {
    std::vector<int> out;
    for (const auto& at : world.agents) {
      int best = kStay;
      int best_m = world.board.m(grid.index(at));
      int best_cell = grid.index(at);
      for (int a = 1; a < kActions; ++a) {
        if (!patrol::feasible(grid, at, a))
          continue;
        const int cell = grid.index(patrol::target(at, a));
        const int m = world.board.m(cell);
        if (m > best_m || (m == best_m && best != kStay && cell < best_cell)) {
          best = a;
          best_m = m;
          best_cell = cell;
        }
      }
      if (epsilon > 0.0 && uniform01(rng) < epsilon)
        best = random_feasible(grid, at, rng);
      out.push_back(best);
    }
    return out;
  };
}

patrol::Policy softmax_policy(const GridSpec& grid, double tau)
{
  if (!(tau > 0.0))
    throw usage_error("softmax temperature must be positive");
  return [grid, tau](const WorldState& world, Rng& rng) {
    std::vector<int> out;
    for (const auto& at : world.agents) {
      std::vector<int> acts;
      std::vector<double> m;
      for (int a = 0; a < kActions; ++a)
        if (patrol::feasible(grid, at, a)) {
          acts.push_back(a);
          m.push_back(world.board.m(grid.index(patrol::target(at, a))));
        }
      const double top = *std::max_element(m.begin(), m.end());
      std::vector<double> w;
      for (double v : m)
        w.push_back(std::exp((v - top) / tau));
      std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
      out.push_back(acts[pick(rng)]);
    }
    return out;
  };
}

namespace {

std::vector<int> act(PolicyKind kind, const QFunction& q, const WorldState& world, const GridSpec& grid,
                     double lambda_p, double epsilon, Rng& rng)
{
  switch (kind) {
  case PolicyKind::ours:
    return generate_joint_action(q, world, grid, epsilon, Order::q_priority, lambda_p, rng).actions;
  case PolicyKind::ours_aid:
  case PolicyKind::nc_ours:
    return generate_joint_action(q, world, grid, epsilon, Order::agent_id, lambda_p, rng).actions;
  case PolicyKind::idqn:
    return simultaneous_action(q, world, grid, epsilon, rng);
  default:
    throw usage_error(std::string("policy ") + to_string(kind) + " is not learned");
  }
}

} // namespace

patrol::Policy learned_policy(PolicyKind kind, const QNet& net, const GridSpec& grid, double lambda_p, double epsilon)
{
  if (!learned(kind))
    throw usage_error(std::string("policy ") + to_string(kind) + " is not learned");
  if (net.input_size() != grid.state_size() || net.output_size() != kActions)
    throw data_error("model does not match the patrol grid (input " + std::to_string(net.input_size()) +
                     ", expected " + std::to_string(grid.state_size()) + ")");
  auto shared = std::make_shared<QNet>(net);
  return [kind, shared, grid, lambda_p, epsilon](const WorldState& world, Rng& rng) {
    return act(kind, net_q(*shared, grid, mask_for(kind)), world, grid, lambda_p, epsilon, rng);
  };
}

TrainResult train(const TrainEnv& env, const TrainConfig& cfg, PolicyKind kind)
{
  cfg.validate();
  env.sim.validate(env.grid);
  if (!learned(kind))
    throw usage_error(std::string("policy ") + to_string(kind) + " is not learned");
  if (env.days.empty())
    throw usage_error("training needs at least one event stream");
  const auto& grid = env.grid;
  const StateMask mask = mask_for(kind);

  std::vector<int> sizes{grid.state_size()};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(kActions);
  Rng init = make_rng(cfg.seed, {1});
  TrainResult out;
  out.net = QNet(sizes, init);
  QNet target = out.net;
  Adam adam(out.net, cfg.adam);
  ReplayBuffer buffer(cfg.buffer);
  Rng rng = make_rng(cfg.seed, {2});
  Rng sim = make_rng(cfg.seed, {3});
  const QFunction q = net_q(out.net, grid, mask);

  const std::int64_t total = static_cast<std::int64_t>(cfg.episodes) * grid.t_steps;
  std::int64_t env_steps = 0, grad_steps = 0;
  int exploding = 0;
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const auto& eta = env.days[std::uniform_int_distribution<std::size_t>(0, env.days.size() - 1)(rng)];
    WorldState world = patrol::make_world(grid, patrol::random_positions(grid, env.agents, rng));
    std::vector<AgentState> prev_s;
    std::vector<int> prev_a;
    std::vector<double> prev_r;
    double loss_sum = 0.0;
    int loss_n = 0;
    double eps = 0.0;
    while (world.t < grid.t_steps) {
      patrol::refresh(world, eta.at(world.t), env.cells, grid);
      std::vector<AgentState> states;
      for (std::size_t k = 0; k < env.agents; ++k)
        states.push_back(patrol::observe(world, grid, k));
      for (std::size_t k = 0; k < prev_s.size(); ++k)
        buffer.push({prev_s[k], prev_a[k], prev_r[k], states[k], false});

      eps = cfg.epsilon(env_steps, total);
      const auto actions = act(kind, q, world, grid, env.sim.lambda_p, eps, rng);
      prev_r = patrol::step(world, actions, eta.at(world.t), env.cells, grid, env.sim, sim);
      prev_s = std::move(states);
      prev_a = actions;
      ++env_steps;

      if (buffer.size() >= static_cast<std::size_t>(cfg.batch)) {
        const double loss = train_step(out.net, target, buffer, adam, cfg, grid, mask, rng);
        ++grad_steps;
        sync_target(out.net, target, grad_steps, cfg.target_sync);
        loss_sum += loss;
        ++loss_n;
        exploding = loss > 1e6 ? exploding + 1 : 0;
        if (exploding >= 100)
          throw Error(ErrorKind::internal, "training diverged: loss above 1e6 for 100 consecutive steps");
      }
    }
    for (std::size_t k = 0; k < prev_s.size(); ++k)
      buffer.push({prev_s[k], prev_a[k], prev_r[k], patrol::observe(world, grid, k), true});

    double reward = 0.0;
    for (double c : world.catches)
      reward += c;
    out.curve.push_back({ep, reward, world.n_tot > 0 ? reward / static_cast<double>(world.n_tot) : 0.0,
                         loss_n > 0 ? loss_sum / loss_n : 0.0, eps});
    spdlog::debug("{} episode {}: reward {} loss {}", to_string(kind), ep, reward, out.curve.back().loss);
  }
  out.steps = env_steps;
  return out;
}

void write_curve_csv(std::ostream& out, std::span<const CurveRow> curve)
{
  out << "episode,reward,rpe,loss,epsilon\n";
  for (const auto& r : curve)
    out << r.episode << ',' << r.reward << ',' << r.rpe << ',' << r.loss << ',' << r.epsilon << '\n';
}

} // namespace curbsense::marl
