#include "curbsense/experiments.hpp"

#include "curbsense/error.hpp"

#include <spdlog/spdlog.h>

namespace curbsense::experiments {

const char* to_string(Method m)
{
  switch (m) {
  case Method::naive:
    return "naive";
  case Method::nt:
    return "nt";
  case Method::nt_dir:
    return "nt+dir";
  case Method::nt_dir_t:
    return "nt+dir+t";
  }
  return "naive";
}

Method parse_method(const std::string& s)
{
  for (auto m : kMethods)
    if (s == to_string(m))
      return m;
  throw usage_error("unknown method '" + s + "' (naive, nt, nt+dir, nt+dir+t)");
}

DetectionStudy prepare_detection(const synth::SynthConfig& cfg, const synth::DetectPreset& preset,
                                 const detect::DetectConfig& dcfg)
{
  DetectionStudy s;
  s.corpus = synth::gen_detect_corpus(cfg, preset);
  for (const auto& t : s.corpus.truth.trajectories)
    s.ordinal.emplace(t.traj_id, t.ordinal);

  mapmatch::PreprocessConfig pcfg;
  pcfg.mode = mapmatch::DirectionMode::directed;
  auto directed = mapmatch::preprocess_parallel(s.corpus.trajectories, s.corpus.net, pcfg);
  pcfg.mode = mapmatch::DirectionMode::undirected;
  auto undirected = mapmatch::preprocess_parallel(s.corpus.trajectories, s.corpus.net, pcfg);
  s.directed_counts = directed.counts;
  s.undirected_counts = undirected.counts;
  s.directed = store::RoadTimeIndex::build(std::move(directed.matched));
  s.undirected = store::RoadTimeIndex::build(std::move(undirected.matched));

  s.night_directed = detect::build_night_baseline(s.directed, s.corpus.nights, dcfg);
  s.night_undirected = detect::build_night_baseline(s.undirected, s.corpus.nights, dcfg);
  s.naive = detect::naive_baseline(s.corpus.net, dcfg);
  return s;
}

MethodEval evaluate_method(const DetectionStudy& study, Method method, int per_window, detect::DetectConfig dcfg)
{
  const bool directed = method == Method::nt_dir || method == Method::nt_dir_t;
  dcfg.extractor = method == Method::nt_dir_t ? detect::Extractor::top : detect::Extractor::avg;
  const auto& idx = directed ? study.directed : study.undirected;
  const auto& baseline = method == Method::naive
                           ? study.naive
                           : (directed ? study.night_directed : study.night_undirected);

  MethodEval out;
  for (const auto& label : study.corpus.truth.labels) {
    const geo::DirectedSegment query =
      directed ? label.key.rid : geo::DirectedSegment{label.key.rid.segment, geo::Direction::forward};
    const store::TimeRange range{label.key.hour, label.key.hour + 3600};
    detect::TrajectoryRefs trajs;
    for (const auto& e : idx.query(query, range)) {
      auto it = study.ordinal.find(e.traj.key.traj_id);
      if (it != study.ordinal.end() && it->second < per_window)
        trajs.push_back(&e.traj);
    }
    for (auto r : detect::detect_trajectories(baseline, query, trajs, range, dcfg)) {
      r.rid = label.key.rid;
      out.results.push_back(r);
    }
  }
  out.scores = metrics::window_scores(study.corpus.truth.labels, out.results);
  out.roc = metrics::roc(out.scores);
  return out;
}

marl::TrainConfig PatrolSetup::default_patrol_training()
{
  marl::TrainConfig cfg;
  cfg.batch = 128;
  cfg.episodes = 400;
  return cfg;
}

PatrolBench prepare_patrol(const PatrolSetup& setup)
{
  if (setup.eval_episodes < 1 || setup.train_days < 1 || setup.agents < 1)
    throw usage_error("patrol study needs at least one agent, training day and evaluation episode");
  PatrolBench b;
  b.setup = setup;
  b.world = synth::gen_patrol_world(setup.synth, setup.preset);
  b.train_days = synth::gen_event_stream(b.world, setup.train_days, setup.preset.events, stream_seed(setup.seed, {1}));
  b.eval_days = synth::gen_event_stream(b.world, setup.eval_episodes, setup.preset.events, stream_seed(setup.seed, {2}));
  for (int e = 0; e < setup.eval_episodes; ++e) {
    Rng rng = make_rng(setup.seed, {3, static_cast<std::uint64_t>(e)});
    b.starts.push_back(patrol::random_positions(b.world.grid, setup.agents, rng));
  }
  return b;
}

marl::TrainResult train_patrol(const PatrolBench& bench, marl::PolicyKind kind)
{
  const marl::TrainEnv env{bench.world.grid, bench.world.cells, bench.train_days, bench.setup.sim, bench.setup.agents};
  auto cfg = bench.setup.train;
  cfg.seed = stream_seed(bench.setup.seed, {4, static_cast<std::uint64_t>(kind)});
  return marl::train(env, cfg, kind);
}

PatrolEval evaluate_patrol(const PatrolBench& bench, marl::PolicyKind kind, const marl::QNet* net)
{
  const auto& grid = bench.world.grid;
  patrol::Policy policy;
  switch (kind) {
  case marl::PolicyKind::random:
    policy = marl::random_policy();
    break;
  case marl::PolicyKind::greedy:
    policy = marl::greedy_policy(grid);
    break;
  case marl::PolicyKind::softmax:
    policy = marl::softmax_policy(grid);
    break;
  default:
    if (!net)
      throw usage_error(std::string("policy ") + marl::to_string(kind) + " needs a trained model");
    policy = marl::learned_policy(kind, *net, grid, bench.setup.sim.lambda_p);
  }

  const auto n = bench.eval_days.size();
  PatrolEval out;
  out.rpe.resize(n);
  out.catches.resize(n);
  out.totals.resize(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t e = 0; e < n; ++e) {
    const auto r = patrol::run_episode(policy, bench.eval_days[e], bench.world.cells, grid, bench.setup.sim,
                                       bench.starts[e], stream_seed(bench.setup.seed, {5, e}));
    out.catches[e] = r.n_catch;
    out.totals[e] = r.n_tot;
    out.rpe[e] = metrics::rpe(r.n_catch, static_cast<double>(r.n_tot));
  }
  for (double v : out.rpe)
    out.mean += v / static_cast<double>(n);
  spdlog::debug("{}: mean RPE {}", marl::to_string(kind), out.mean);
  return out;
}

} // namespace curbsense::experiments
