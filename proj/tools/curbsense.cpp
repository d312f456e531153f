#include "curbsense/detect.hpp"
#include "curbsense/engine.hpp"
#include "curbsense/error.hpp"
#include "curbsense/experiments.hpp"
#include "curbsense/marl.hpp"
#include "curbsense/match.hpp"
#include "curbsense/metrics.hpp"
#include "curbsense/patrol.hpp"
#include "curbsense/qnet.hpp"
#include "curbsense/store.hpp"
#include "curbsense/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace curbsense;

namespace {

struct Globals
{
  std::uint64_t seed = 1;
  std::string out = ".";
  bool verbose = false;
};

// Inputs and outputs touched by one run, recorded in its manifest.
struct Run
{
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  nlohmann::json extra = nlohmann::json::object();

  fs::path output(const Globals& g, const std::string& name)
  {
    fs::create_directories(g.out);
    auto p = fs::path(g.out) / name;
    outputs.push_back(p.string());
    return p;
  }

  const std::string& input(const std::string& path)
  {
    if (!fs::exists(path))
      throw data_error("missing input file: " + path);
    inputs.push_back(path);
    return path;
  }
};

std::ofstream open_out(const fs::path& p)
{
  std::ofstream f(p);
  if (!f)
    throw data_error("cannot write " + p.string());
  f.precision(17);
  return f;
}

std::ifstream open_in(const std::string& p)
{
  std::ifstream f(p);
  if (!f)
    throw data_error("cannot read " + p);
  return f;
}

std::vector<detect::DetectionResult> load_results(const std::string& p)
{
  auto f = open_in(p);
  return detect::parse_results(f, p);
}

std::vector<metrics::LabelRecord> load_labels(const std::string& p)
{
  auto f = open_in(p);
  return metrics::parse_labels(f, p);
}

// A detect run usually covers more windows than were labelled; scoring keeps
// only the labelled ones.
std::vector<detect::DetectionResult> labelled_only(std::vector<detect::DetectionResult> results,
                                                   std::span<const metrics::LabelRecord> labels)
{
  std::set<metrics::WindowKey> keys;
  for (const auto& l : labels)
    keys.insert(l.key);
  std::erase_if(results, [&](const detect::DetectionResult& r) { return !keys.contains({r.rid, r.range.start}); });
  return results;
}

void write_manifest(const Globals& g, const CLI::App& sub, const Run& run, std::chrono::steady_clock::duration took)
{
  nlohmann::json m;
  m["subcommand"] = sub.get_name();
  m["seed"] = g.seed;
  m["config"] = sub.config_to_str(true, false);
  m["inputs"] = run.inputs;
  m["outputs"] = run.outputs;
  m["duration_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(took).count();
  if (!run.extra.empty())
    m["summary"] = run.extra;
  fs::create_directories(g.out);
  auto f = open_out(fs::path(g.out) / (sub.get_name() + ".manifest.json"));
  f << m.dump(2) << '\n';
}

void print_counts(const mapmatch::PipelineCounts& c)
{
  std::printf("raw trajectories    %zu (%zu points)\n", c.raw_trajectories, c.raw_points);
  std::printf("after cleaning      %zu (%zu points)\n", c.sub_trajectories, c.sub_points);
  std::printf("matched visits      %zu (%zu points)\n", c.matched, c.matched_points);
  std::printf("after distance      %zu\n", c.after_distance);
  std::printf("after direction     %zu\n", c.after_direction);
  std::printf("reverse removed     %zu\n", c.reverse_removed);
  std::printf("output              %zu (%zu points)\n", c.output, c.output_points);
}

nlohmann::json counts_json(const mapmatch::PipelineCounts& c)
{
  return {{"raw_trajectories", c.raw_trajectories}, {"sub_trajectories", c.sub_trajectories},
          {"matched", c.matched},                   {"after_distance", c.after_distance},
          {"after_direction", c.after_direction},   {"reverse_removed", c.reverse_removed},
          {"output", c.output},                     {"output_points", c.output_points}};
}

// Night baselines are keyed by midnight; every midnight inside the range counts.
std::vector<std::int64_t> midnights(const store::TimeRange& r)
{
  std::vector<std::int64_t> days;
  std::int64_t d = (r.start + 86399) / 86400 * 86400;
  for (; d < r.end; d += 86400)
    days.push_back(d);
  return days;
}

detect::Extractor parse_extractor(const std::string& s)
{
  if (s == "top")
    return detect::Extractor::top;
  if (s == "avg")
    return detect::Extractor::avg;
  throw usage_error("extractor must be top or avg");
}

// Illegal-parking windows become η rows: a road is active at every step its
// window overlaps.
patrol::EtaStream eta_from_results(std::span<const detect::DetectionResult> results, std::int64_t day,
                                   const patrol::GridSpec& grid, int start_minute)
{
  patrol::EtaStream eta;
  eta.active.resize(static_cast<std::size_t>(grid.t_steps));
  const std::int64_t t0 = day + start_minute * 60LL;
  const std::int64_t dt = grid.step_minutes * 60LL;
  for (const auto& r : results) {
    if (r.decision != detect::Decision::illegal_parking)
      continue;
    for (int k = 0; k < grid.t_steps; ++k) {
      const std::int64_t s = t0 + k * dt;
      if (r.range.start < s + dt && s < r.range.end)
        eta.active[static_cast<std::size_t>(k)].push_back(r.rid.segment);
    }
  }
  for (auto& a : eta.active) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return eta;
}

struct PatrolOptions
{
  int train_days = 30;
  int eval_episodes = 10;
  int episodes = experiments::PatrolSetup::default_patrol_training().episodes;
  int batch = experiments::PatrolSetup::default_patrol_training().batch;
  int cooldown = 0;

  void add(CLI::App* app, bool training)
  {
    app->add_option("--train-days", train_days, "synthetic days in the training pool")->check(CLI::PositiveNumber);
    app->add_option("--eval-episodes", eval_episodes, "evaluation episodes")->check(CLI::PositiveNumber);
    if (training) {
      app->add_option("--episodes", episodes, "training episodes")->check(CLI::PositiveNumber);
      app->add_option("--batch", batch, "minibatch size")->check(CLI::PositiveNumber);
    }
    app->add_option("--cooldown", cooldown, "steps a processed road stays hidden")->check(CLI::NonNegativeNumber);
  }

  experiments::PatrolSetup setup(std::uint64_t seed, std::size_t agents) const
  {
    experiments::PatrolSetup s;
    s.seed = seed;
    s.synth.seed = seed;
    s.agents = agents;
    s.train_days = train_days;
    s.eval_episodes = eval_episodes;
    s.train.episodes = episodes;
    s.train.batch = batch;
    s.sim.cooldown = cooldown;
    return s;
  }
};

marl::PolicyKind kind_for_order(const std::string& order)
{
  if (order == "qprio")
    return marl::PolicyKind::ours;
  if (order == "aid")
    return marl::PolicyKind::ours_aid;
  throw usage_error("order must be qprio or aid");
}

int run(int argc, char** argv)
{
  CLI::App app{"Curbside obstruction detection and patrol planning from bike trajectories", "curbsense"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "read options from a TOML/INI file");
  Globals g;
  app.add_option("--seed", g.seed, "root random seed")->capture_default_str();
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_flag("-v,--verbose", g.verbose, "debug logging");

  Run r;
  std::function<void()> action;
  auto on = [&](CLI::App* sub, std::function<void()> fn) { sub->callback([&action, fn] { action = fn; }); };

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus");
  std::string preset = "detect";
  int patrol_days = 30;
  synth_cmd->add_option("--preset", preset, "detect or patrol")->check(CLI::IsMember({"detect", "patrol"}));
  synth_cmd->add_option("--days", patrol_days, "patrol preset: number of η days")->check(CLI::PositiveNumber);
  on(synth_cmd, [&] {
    synth::SynthConfig cfg;
    cfg.seed = g.seed;
    if (preset == "detect") {
      const auto c = synth::gen_detect_corpus(cfg);
      auto f = open_out(r.output(g, "network.txt"));
      geo::write_network(f, c.net);
      prep::save_trajectories(c.trajectories, r.output(g, "trajectories.txt"));
      auto lf = open_out(r.output(g, "labels.txt"));
      metrics::write_labels(lf, c.truth.labels);
      const auto nights = std::to_string(c.nights.front()) + ".." + std::to_string(c.nights.back() + 86400);
      const auto eval = std::to_string(c.eval_windows.front()) + ".." + std::to_string(c.eval_windows.back() + 3600);
      r.extra = {{"trajectories", c.trajectories.size()}, {"labels", c.truth.labels.size()},
                 {"nights", nights}, {"eval_range", eval}};
      std::printf("%zu trajectories, %zu labelled windows\nnights %s\nevaluation %s\n", c.trajectories.size(),
                  c.truth.labels.size(), nights.c_str(), eval.c_str());
    } else {
      const synth::PatrolPreset p;
      const auto world = synth::gen_patrol_world(cfg, p);
      geo::save_network(world.net, r.output(g, "network.txt"));
      const auto days = synth::gen_event_stream(world, patrol_days, p.events, g.seed);
      std::size_t events = 0;
      for (std::size_t d = 0; d < days.size(); ++d) {
        char name[32];
        std::snprintf(name, sizeof name, "eta_%03zu.txt", d);
        auto f = open_out(r.output(g, name));
        patrol::write_eta(f, days[d]);
        events += days[d].events();
      }
      r.extra = {{"days", days.size()}, {"events", events}, {"hot_cells", world.hot}};
      std::printf("%zu days, %zu active road-steps\n", days.size(), events);
    }
  });

  // preprocess
  auto* pre_cmd = app.add_subcommand("preprocess", "clean, map-match and refine raw trajectories");
  std::string traj_path, net_path;
  bool undirected = false;
  mapmatch::PreprocessConfig pcfg;
  pre_cmd->add_option("--traj", traj_path, "trajectory file")->required();
  pre_cmd->add_option("--network", net_path, "network file")->required();
  pre_cmd->add_flag("--undirected", undirected, "pool both travel directions on the forward frame");
  pre_cmd->add_option("--v-max", pcfg.cleaning.v_max, "m/s")->capture_default_str();
  pre_cmd->add_option("--v-min", pcfg.cleaning.v_min, "m/s")->capture_default_str();
  pre_cmd->add_option("--gap-s", pcfg.cleaning.gap_max_s, "max gap, seconds")->capture_default_str();
  pre_cmd->add_option("--gap-m", pcfg.cleaning.gap_max_m, "max gap, meters")->capture_default_str();
  pre_cmd->add_option("--min-points", pcfg.cleaning.min_points)->capture_default_str();
  pre_cmd->add_option("--max-shift", pcfg.matching.max_avg_shift, "meters")->capture_default_str();
  pre_cmd->add_option("--max-deviation", pcfg.matching.max_deviation, "radians")->capture_default_str();
  on(pre_cmd, [&] {
    pcfg.mode = undirected ? mapmatch::DirectionMode::undirected : mapmatch::DirectionMode::directed;
    const auto net = geo::load_network(r.input(net_path));
    const auto trajs = prep::load_trajectories(r.input(traj_path));
    const auto res = mapmatch::preprocess_parallel(trajs, net, pcfg);
    mapmatch::save_matched(res.matched, r.output(g, "matched.txt"));
    print_counts(res.counts);
    r.extra = counts_json(res.counts);
  });

  // index
  auto* idx_cmd = app.add_subcommand("index", "build the road-time index");
  std::string matched_path;
  idx_cmd->add_option("--in", matched_path, "matched trajectory file")->required();
  on(idx_cmd, [&] {
    auto idx = store::RoadTimeIndex::build(mapmatch::load_matched(r.input(matched_path)));
    store::save_index(idx, r.output(g, "index.bin"));
    std::printf("%zu visits on %zu directed segments\n", idx.size(), idx.table().size());
    r.extra = {{"visits", idx.size()}, {"segments", idx.table().size()}};
  });

  detect::DetectConfig dcfg;
  auto add_detect_opts = [&](CLI::App* sub) {
    sub->add_option("--alpha", dcfg.alpha)->capture_default_str();
    sub->add_option("--chunk", dcfg.chunk_len, "chunk length, meters")->capture_default_str();
    sub->add_option("--top-k", dcfg.top_k)->capture_default_str();
  };

  // baseline
  auto* base_cmd = app.add_subcommand("baseline", "build a baseline model");
  std::string index_path, nights_arg;
  bool naive = false;
  base_cmd->add_option("--index", index_path, "index file (night baseline)");
  base_cmd->add_option("--nights", nights_arg, "<start>..<end>; every midnight inside is a baseline night");
  base_cmd->add_flag("--naive", naive, "zero-centred Gaussian baseline from the network alone");
  base_cmd->add_option("--network", net_path, "network file (naive baseline)");
  add_detect_opts(base_cmd);
  on(base_cmd, [&] {
    detect::BaselineModel model;
    if (naive) {
      if (net_path.empty())
        throw usage_error("--naive needs --network");
      model = detect::naive_baseline(geo::load_network(r.input(net_path)), dcfg);
    } else {
      if (index_path.empty() || nights_arg.empty())
        throw usage_error("night baseline needs --index and --nights");
      const auto days = midnights(store::parse_range(nights_arg));
      model = detect::build_night_baseline(store::load_index(r.input(index_path)), days, dcfg);
    }
    detect::save_baseline(model, r.output(g, "baseline.bin"));
    std::printf("%zu chunk samples\n", model.size());
    r.extra = {{"chunks", model.size()}};
  });

  // detect
  auto* det_cmd = app.add_subcommand("detect", "run the detector over hourly windows");
  std::string baseline_path, range_arg, extractor = "top";
  det_cmd->add_option("--index", index_path)->required();
  det_cmd->add_option("--baseline", baseline_path)->required();
  det_cmd->add_option("--range", range_arg, "<start>..<end>, split into hours")->required();
  det_cmd->add_option("--extractor", extractor, "top or avg")->capture_default_str();
  add_detect_opts(det_cmd);
  on(det_cmd, [&] {
    dcfg.extractor = parse_extractor(extractor);
    const auto idx = store::load_index(r.input(index_path));
    const auto base = detect::load_baseline(r.input(baseline_path));
    std::vector<detect::DetectionResult> out;
    for (const auto& w : engine::hourly_windows(store::parse_range(range_arg)))
      for (const auto& rid : base.rids())
        for (auto& res : detect::detect_window(base, idx, rid, w, dcfg))
          out.push_back(res);
    std::sort(out.begin(), out.end(), engine::rank_before);
    auto f = open_out(r.output(g, "results.txt"));
    detect::write_results(f, out);
    std::size_t flagged = 0;
    for (const auto& x : out)
      flagged += x.decision == detect::Decision::illegal_parking;
    std::printf("%zu results, %zu flagged\n", out.size(), flagged);
    r.extra = {{"results", out.size()}, {"flagged", flagged}};
  });

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "F1 against the rejection probability");
  std::string results_path, labels_path;
  double step = 0.01;
  sweep_cmd->add_option("--results", results_path)->required();
  sweep_cmd->add_option("--labels", labels_path)->required();
  sweep_cmd->add_option("--step", step)->capture_default_str();
  on(sweep_cmd, [&] {
    const auto labels = load_labels(r.input(labels_path));
    const auto results = labelled_only(load_results(r.input(results_path)), labels);
    const auto s = metrics::sweep_alpha(labels, results, step);
    auto f = open_out(r.output(g, "sweep.csv"));
    metrics::write_sweep_csv(f, s);
    std::printf("best alpha %.2f, F1 %.4f\n", s.best_alpha, s.best_f1);
    r.extra = {{"best_alpha", s.best_alpha}, {"best_f1", s.best_f1}};
  });

  // roc
  auto* roc_cmd = app.add_subcommand("roc", "ROC curves from a results file, or the synthetic method study");
  bool study = false;
  roc_cmd->add_option("--results", results_path);
  roc_cmd->add_option("--labels", labels_path);
  roc_cmd->add_flag("--study", study, "run all four methods and the trajectory-count study on a synthetic corpus");
  on(roc_cmd, [&] {
    if (!study) {
      if (results_path.empty() || labels_path.empty())
        throw usage_error("roc needs --results and --labels, or --study");
      const auto labels = load_labels(r.input(labels_path));
      const auto results = labelled_only(load_results(r.input(results_path)), labels);
      const auto curve = metrics::roc(metrics::window_scores(labels, results));
      auto f = open_out(r.output(g, "roc.csv"));
      metrics::write_roc_csv(f, curve);
      std::printf("AUC %.4f\n", curve.auc);
      r.extra = {{"auc", curve.auc}};
      return;
    }
    synth::SynthConfig cfg;
    cfg.seed = g.seed;
    const auto s = experiments::prepare_detection(cfg, {});
    auto auc = open_out(r.output(g, "auc.csv"));
    auc << "study,method,trajectories,auc\n";
    for (auto m : experiments::kMethods) {
      const auto e = experiments::evaluate_method(s, m, 30);
      std::string name = std::string("roc_") + experiments::to_string(m) + ".csv";
      std::replace(name.begin(), name.end(), '+', '_');
      auto f = open_out(r.output(g, name));
      metrics::write_roc_csv(f, e.roc);
      auc << "method," << experiments::to_string(m) << ",30," << e.roc.auc << '\n';
      std::printf("%-9s AUC %.4f\n", experiments::to_string(m), e.roc.auc);
      r.extra[experiments::to_string(m)] = e.roc.auc;
    }
    for (int n = 10; n <= 50; n += 10) {
      const auto e = experiments::evaluate_method(s, experiments::Method::nt_dir_t, n);
      auto f = open_out(r.output(g, "roc_count_" + std::to_string(n) + ".csv"));
      metrics::write_roc_csv(f, e.roc);
      auc << "count,nt+dir+t," << n << ',' << e.roc.auc << '\n';
      std::printf("%2d trajectories AUC %.4f\n", n, e.roc.auc);
    }
  });

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "answer one detection request with the worker pool");
  std::size_t workers = 1;
  serve_cmd->add_option("--workers", workers)->check(CLI::PositiveNumber)->capture_default_str();
  serve_cmd->add_option("--index", index_path)->required();
  serve_cmd->add_option("--baseline", baseline_path)->required();
  serve_cmd->add_option("--range", range_arg, "<start>..<end>")->required();
  add_detect_opts(serve_cmd);
  on(serve_cmd, [&] {
    const auto idx = store::load_index(r.input(index_path));
    const auto base = detect::load_baseline(r.input(baseline_path));
    engine::Engine eng(base, idx, workers, dcfg);
    const auto rep = eng.service(store::parse_range(range_arg));
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(rep.duration).count();
    detect::write_results(std::cout, rep.results);
    std::cout << "# duration_ms=" << ms << '\n';
    r.extra = {{"results", rep.results.size()}, {"workers", workers}, {"service_ms", ms}};
  });

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "run one patrol episode and write its trace");
  std::vector<std::string> eta_paths;
  std::string policy_name = "greedy", model_path;
  std::size_t agents = 2;
  std::int64_t day = synth::kDayZero;
  patrol::SimConfig sim;
  sim_cmd->add_option("--network", net_path)->required();
  sim_cmd->add_option("--eta", eta_paths, "η stream file(s), one episode each");
  sim_cmd->add_option("--results", results_path, "derive η from a detection results file instead");
  sim_cmd->add_option("--day", day, "midnight of the results day")->capture_default_str();
  sim_cmd->add_option("--policy", policy_name)->capture_default_str();
  sim_cmd->add_option("--model", model_path, "model file for learned policies");
  sim_cmd->add_option("--agents", agents)->check(CLI::PositiveNumber)->capture_default_str();
  sim_cmd->add_option("--cooldown", sim.cooldown)->check(CLI::NonNegativeNumber)->capture_default_str();
  on(sim_cmd, [&] {
    const synth::PatrolPreset p;
    patrol::GridSpec grid = p.grid;
    const auto net = geo::load_network(r.input(net_path));
    grid.origin = net.min_corner() - geo::LocalPoint{p.spacing_m / 2.0, p.spacing_m / 2.0};
    const auto cells = patrol::SegmentCells::build(net, grid);
    std::vector<patrol::EtaStream> days;
    for (const auto& e : eta_paths) {
      auto f = open_in(r.input(e));
      days.push_back(patrol::parse_eta(f, grid.t_steps, e));
    }
    if (!results_path.empty())
      days.push_back(eta_from_results(load_results(r.input(results_path)), day, grid, p.events.start_minute));
    if (days.empty())
      throw usage_error("simulate needs --eta or --results");

    const auto kind = marl::parse_policy(policy_name);
    marl::QNet net_q;
    patrol::Policy policy;
    if (kind == marl::PolicyKind::random)
      policy = marl::random_policy();
    else if (kind == marl::PolicyKind::greedy)
      policy = marl::greedy_policy(grid);
    else if (kind == marl::PolicyKind::softmax)
      policy = marl::softmax_policy(grid);
    else {
      if (model_path.empty())
        throw usage_error(std::string("policy ") + marl::to_string(kind) + " needs --model");
      net_q = marl::load_qnet(r.input(model_path));
      policy = marl::learned_policy(kind, net_q, grid, sim.lambda_p);
    }

    auto trace = open_out(r.output(g, "trace.csv"));
    trace << "episode,step,agent,action,reward,cell\n";
    double catches = 0.0, total = 0.0;
    for (std::size_t e = 0; e < days.size(); ++e) {
      Rng rng = make_rng(g.seed, {3, e});
      const auto res = patrol::run_episode(policy, days[e], cells, grid, sim,
                                           patrol::random_positions(grid, agents, rng), stream_seed(g.seed, {5, e}),
                                           true);
      for (const auto& s : res.trace)
        trace << e << ',' << s.step << ',' << s.agent << ',' << s.action << ',' << s.reward << ',' << s.cell << '\n';
      catches += res.n_catch;
      total += static_cast<double>(res.n_tot);
      std::printf("episode %zu: %.0f of %zu events\n", e, res.n_catch, res.n_tot);
    }
    const double v = metrics::rpe(catches, total);
    std::printf("RPE %.4f\n", v);
    r.extra = {{"episodes", days.size()}, {"rpe", v}};
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "train a shared Q-network on the synthetic patrol preset");
  std::string order = "qprio", train_policy;
  PatrolOptions popt;
  train_cmd->add_option("--order", order, "commit order: qprio or aid")->capture_default_str();
  train_cmd->add_option("--policy", train_policy, "train idqn or nc-ours instead");
  train_cmd->add_option("--agents", agents)->check(CLI::PositiveNumber)->capture_default_str();
  popt.add(train_cmd, true);
  on(train_cmd, [&] {
    const auto kind = train_policy.empty() ? kind_for_order(order) : marl::parse_policy(train_policy);
    if (!marl::learned(kind))
      throw usage_error(std::string(marl::to_string(kind)) + " is not a learned policy");
    const auto bench = experiments::prepare_patrol(popt.setup(g.seed, agents));
    const auto res = experiments::train_patrol(bench, kind);
    marl::save_qnet(res.net, r.output(g, std::string("model_") + marl::to_string(kind) + ".bin"));
    auto f = open_out(r.output(g, std::string("curve_") + marl::to_string(kind) + ".csv"));
    marl::write_curve_csv(f, res.curve);
    const auto ev = experiments::evaluate_patrol(bench, kind, &res.net);
    std::printf("%s: %lld gradient steps, evaluation RPE %.4f\n", marl::to_string(kind),
                static_cast<long long>(res.steps), ev.mean);
    r.extra = {{"policy", marl::to_string(kind)}, {"steps", res.steps}, {"eval_rpe", ev.mean}};
  });

  // eval-patrol
  auto* eval_cmd = app.add_subcommand("eval-patrol", "evaluate patrol methods and write the RPE table");
  std::string eval_policy = "all";
  std::vector<std::size_t> agent_counts{2, 4, 6};
  eval_cmd->add_option("--policy", eval_policy, "one policy, or all for the full table")->capture_default_str();
  eval_cmd->add_option("--agents", agent_counts, "agent counts (columns)")->capture_default_str();
  eval_cmd->add_option("--model", model_path, "model file for a single learned policy");
  eval_cmd->add_option("--episodes", popt.eval_episodes, "evaluation episodes")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--train-episodes", popt.episodes, "training episodes")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--train-days", popt.train_days)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--batch", popt.batch)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--cooldown", popt.cooldown)->check(CLI::NonNegativeNumber);
  on(eval_cmd, [&] {
    std::vector<marl::PolicyKind> kinds;
    if (eval_policy == "all")
      kinds.assign(std::begin(marl::kPolicyKinds), std::end(marl::kPolicyKinds));
    else
      kinds.push_back(marl::parse_policy(eval_policy));
    if (!model_path.empty() && (kinds.size() != 1 || agent_counts.size() != 1))
      throw usage_error("--model applies to a single policy and agent count");

    std::vector<std::vector<double>> table(kinds.size());
    for (std::size_t n : agent_counts) {
      const auto bench = experiments::prepare_patrol(popt.setup(g.seed, n));
      for (std::size_t k = 0; k < kinds.size(); ++k) {
        std::optional<marl::QNet> net;
        if (!model_path.empty())
          net = marl::load_qnet(r.input(model_path));
        else if (marl::learned(kinds[k]))
          net = experiments::train_patrol(bench, kinds[k]).net;
        const auto ev = experiments::evaluate_patrol(bench, kinds[k], net ? &*net : nullptr);
        table[k].push_back(ev.mean);
        spdlog::info("{} agents, {}: RPE {:.4f}", n, marl::to_string(kinds[k]), ev.mean);
      }
    }
    auto f = open_out(r.output(g, "rpe_table.csv"));
    f << "method";
    for (auto n : agent_counts)
      f << ",agents_" << n;
    f << '\n';
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      f << marl::display_name(kinds[k]);
      std::printf("%-22s", marl::display_name(kinds[k]).c_str());
      for (double v : table[k]) {
        f << ',' << v;
        std::printf("  %6.2f%%", 100.0 * v);
      }
      f << '\n';
      std::printf("\n");
      r.extra[marl::to_string(kinds[k])] = table[k];
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::info);

  const auto t0 = std::chrono::steady_clock::now();
  action();
  const auto took = std::chrono::steady_clock::now() - t0;
  write_manifest(g, *app.get_subcommands().front(), r, took);
  return 0;
}

} // namespace

int main(int argc, char** argv)
{
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::fprintf(stderr, "curbsense: %s\n", e.what());
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "curbsense: internal error: %s\n", e.what());
    return 3;
  }
}
