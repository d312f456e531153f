// Acceptance checks. Run with no arguments for all criteria, or pass criterion numbers.
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "toys.hpp"

#include "curbsense/detect.hpp"
#include "curbsense/engine.hpp"
#include "curbsense/experiments.hpp"
#include "curbsense/marl.hpp"
#include "curbsense/metrics.hpp"
#include "curbsense/store.hpp"
#include "curbsense/synth.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <thread>

using namespace curbsense;

namespace {

struct Outcome
{
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args)
{
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome ks_oracle()
{
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> size(1, 50);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> coarse(0, 6);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> a(static_cast<std::size_t>(size(rng))), b(static_cast<std::size_t>(size(rng)));
    for (auto& v : a)
      v = trial % 3 == 0 ? coarse(rng) : g(rng);
    for (auto& v : b)
      v = trial % 3 == 0 ? coarse(rng) : g(rng) + 0.5;
    mismatches += detect::ks_statistic(a, b) != testing::brute_ks(a, b);
  }
  const std::vector<double> a{3.0, 1.0, 2.0, 2.0};
  const std::vector<double> low{1.0, 2.0}, high{5.0, 6.0, 7.0};
  const bool self = detect::ks_statistic(a, a) == 0.0;
  const bool disjoint = detect::ks_statistic(low, high) == 1.0;
  const double secs = seconds_since(t0);
  return {mismatches == 0 && self && disjoint && secs < 5.0,
          fmt("%d/1000 mismatches, D(a,a)=0 %s, disjoint D=1 %s, %.2f s", mismatches, self ? "yes" : "no",
              disjoint ? "yes" : "no", secs)};
}

Outcome rejection_rule()
{
  const double c = detect::c_alpha(2.0 * std::exp(-2.0));
  const double threshold = detect::c_alpha(0.71) * std::sqrt(200.0 / (100.0 * 100.0));
  // The threshold is where the rule flips.
  const bool flips = detect::ks_reject(threshold + 1e-9, 100, 100, 0.71) && !detect::ks_reject(threshold - 1e-9, 100, 100, 0.71);
  return {std::abs(c - 1.0) < 1e-12 && std::abs(threshold - 0.1018) < 1e-4 && flips,
          fmt("c(2e^-2) = %.15f, threshold(100, 100, 0.71) = %.5f", c, threshold)};
}

/// The default detection study, built once and shared by criteria 3 to 5.
const experiments::DetectionStudy& study()
{
  static const experiments::DetectionStudy s = [] {
    synth::SynthConfig cfg;
    cfg.seed = 1;
    synth::DetectPreset preset; // 6x6 grid, 30 nights, 50 trajectories per window
    return experiments::prepare_detection(cfg, preset);
  }();
  return s;
}

Outcome detection_power()
{
  const auto t0 = std::chrono::steady_clock::now();
  const auto ev = experiments::evaluate_method(study(), experiments::Method::nt_dir_t, 30);
  const double secs = seconds_since(t0);
  const auto windows = ev.scores.size();
  return {ev.roc.auc >= 0.90 && windows >= 200 && secs < 120.0,
          fmt("nt+dir+t AUC %.3f over %zu labelled windows, %.1f s", ev.roc.auc, windows, secs)};
}

Outcome method_ordering()
{
  std::map<experiments::Method, double> auc;
  for (auto m : experiments::kMethods)
    auc[m] = experiments::evaluate_method(study(), m, 30).roc.auc;
  using experiments::Method;
  const bool ok = auc[Method::nt_dir_t] - auc[Method::nt_dir] >= 0.02 &&
                  auc[Method::nt_dir] - auc[Method::nt] >= 0.02 && auc[Method::nt] - auc[Method::naive] >= 0.02 &&
                  auc[Method::naive] < 0.55;
  return {ok, fmt("AUC naive %.3f, nt %.3f, nt+dir %.3f, nt+dir+t %.3f", auc[Method::naive], auc[Method::nt],
                  auc[Method::nt_dir], auc[Method::nt_dir_t])};
}

Outcome count_trend()
{
  std::vector<double> counts, auc;
  for (int k : {10, 20, 30, 40, 50}) {
    counts.push_back(k);
    auc.push_back(experiments::evaluate_method(study(), experiments::Method::nt_dir_t, k).roc.auc);
  }
  const double rho = metrics::spearman(counts, auc);
  return {rho > 0.0 && std::abs(auc[2] - auc[4]) <= 0.05,
          fmt("AUC %.3f %.3f %.3f %.3f %.3f, Spearman %.2f", auc[0], auc[1], auc[2], auc[3], auc[4], rho)};
}

/// Matched traffic straight onto every directed segment of a large grid.
struct EngineLoad
{
  detect::BaselineModel baseline;
  store::RoadTimeIndex index;
  store::TimeRange request;
  std::size_t rids = 0;
};

EngineLoad engine_load()
{
  synth::SynthConfig cfg;
  cfg.grid_rows = 20;
  cfg.grid_cols = 20;
  const auto net = synth::gen_network(cfg);
  const auto rids = geo::directed_segments(net);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> lane(-1.0, 1.0);
  std::vector<mapmatch::MatchedTrajectory> all;
  std::int64_t id = 1;
  auto ride = [&](const geo::DirectedSegment& rid, std::int64_t t0, double push) {
    mapmatch::MatchedTrajectory mt;
    mt.key = {id++, 0, 0};
    mt.rid = rid;
    const double len = net.segment(rid.segment).length();
    for (double o = 2.0; o < len - 2.0; o += 16.0)
      mt.points.push_back({t0 + static_cast<std::int64_t>(o / 4.0), o, lane(rng) + (o > 60 && o < 90 ? push : 0.0)});
    all.push_back(std::move(mt));
  };
  std::vector<std::int64_t> nights;
  for (int d = 0; d < 35; ++d)
    nights.push_back(synth::kDayZero + d * 86400LL);
  const std::int64_t day = synth::kDayZero + 40 * 86400LL;
  for (const auto& rid : rids) {
    for (auto night : nights)
      ride(rid, night + 23 * 3600 + 60, 0.0);
    const double push = rid.segment % 7 == 0 ? 2.0 : 0.0;
    for (int h = 9; h < 11; ++h)
      for (int k = 0; k < 30; ++k)
        ride(rid, day + h * 3600 + k * 60, push);
  }
  EngineLoad load;
  load.rids = rids.size();
  load.index = store::RoadTimeIndex::build(std::move(all));
  load.baseline = detect::build_night_baseline(load.index, nights, {});
  load.request = {day + 9 * 3600, day + 11 * 3600};
  return load;
}

Outcome engine_scaling()
{
  const auto t0 = std::chrono::steady_clock::now();
  const auto load = engine_load();
  std::map<std::size_t, double> best;
  std::vector<detect::DetectionResult> reference;
  bool identical = true;
  for (std::size_t workers : {1u, 2u, 4u, 8u}) {
    engine::Engine eng(load.baseline, load.index, workers);
    for (int rep = 0; rep < 3; ++rep) {
      const auto report = eng.service(load.request);
      const double d = std::chrono::duration<double>(report.duration).count();
      best[workers] = rep == 0 ? d : std::min(best[workers], d);
      if (reference.empty())
        reference = report.results;
      else
        identical = identical && report.results == reference;
    }
  }
  const double ratio = best[2] / best[1];
  const double secs = seconds_since(t0);
  return {identical && load.rids >= 1000 && ratio <= 0.65 && secs < 60.0,
          fmt("%zu directed segments, %zu results, identical across 1/2/4/8 workers: %s, "
              "duration 1 worker %.3f s, 2 workers %.3f s (ratio %.2f), %u hardware threads, %.1f s",
              load.rids, reference.size(), identical ? "yes" : "no", best[1], best[2], ratio,
              std::thread::hardware_concurrency(), secs)};
}

Outcome index_oracle()
{
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> seg(1, 40);
  std::uniform_int_distribution<std::int64_t> time(0, 100000);
  std::vector<mapmatch::MatchedTrajectory> all;
  for (std::int64_t i = 0; i < 20000; ++i) {
    mapmatch::MatchedTrajectory mt;
    mt.key = {i, 0, 0};
    mt.rid = {seg(rng), rng() % 2 ? geo::Direction::forward : geo::Direction::backward};
    const auto t = time(rng);
    mt.points = {{t, 0.0, 0.0}, {t + 4, 10.0, 0.5}};
    all.push_back(mt);
  }
  const auto idx = store::RoadTimeIndex::build(all);
  int mismatches = 0;
  for (int q = 0; q < 10000; ++q) {
    const geo::DirectedSegment rid{seg(rng), q % 2 ? geo::Direction::forward : geo::Direction::backward};
    std::int64_t a = time(rng), b = time(rng);
    if (a > b)
      std::swap(a, b);
    std::vector<std::int64_t> want;
    for (const auto& mt : all)
      if (mt.rid == rid && mt.entry_time() >= a && mt.entry_time() < b)
        want.push_back(mt.key.traj_id);
    std::vector<std::int64_t> got;
    for (const auto& e : idx.query(rid, {a, b}))
      got.push_back(e.traj.key.traj_id);
    std::sort(want.begin(), want.end());
    std::sort(got.begin(), got.end());
    mismatches += got != want;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10.0, fmt("%d/10000 queries differ from the linear scan, %.2f s", mismatches, secs)};
}

Outcome gradient_check()
{
  Rng rng(4);
  std::uniform_int_distribution<int> width(2, 8);
  std::uniform_int_distribution<int> act(0, 8);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> sizes{width(rng)};
    for (int l = trial % 3; l >= 0; --l)
      sizes.push_back(width(rng));
    sizes.push_back(9);
    marl::QNet net(sizes, rng);
    for (auto& l : net.layers())
      for (Eigen::Index i = 0; i < l.b.size(); ++i)
        l.b(i) = 0.1 * g(rng);
    const int n = 1 + trial % 5;
    Eigen::MatrixXd x(sizes.front(), n);
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      for (Eigen::Index r = 0; r < x.rows(); ++r)
        x(r, c) = g(rng);
    std::vector<int> actions;
    std::vector<double> targets;
    for (int i = 0; i < n; ++i) {
      actions.push_back(act(rng));
      targets.push_back(g(rng));
    }
    worst = std::max(worst, testing::gradient_error(net, x, actions, targets));
  }
  return {worst < 1e-4, fmt("max relative error %.2e over 20 networks", worst)};
}

Outcome toy_convergence()
{
  const testing::Corridor corridor;
  std::string detail;
  bool ok = true;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto r = marl::train(corridor.env(), corridor.config(seed), marl::PolicyKind::ours);
    const int wrong = corridor.mistakes(r.net);
    ok = ok && wrong == 0 && r.steps <= 20000;
    detail += fmt("seed %llu: %d wrong states after %lld steps; ", static_cast<unsigned long long>(seed), wrong,
                  static_cast<long long>(r.steps));
  }
  return {ok, detail.substr(0, detail.size() - 2)};
}

Outcome preemption_toy()
{
  const auto toy = testing::preemption_toy();
  return {toy.ordered == 7.0 && toy.simultaneous == 4.0,
          fmt("ordered %.0f events, simultaneous %.0f events", toy.ordered, toy.simultaneous)};
}

Outcome patrol_ordering()
{
  const auto t0 = std::chrono::steady_clock::now();
  const auto bench = experiments::prepare_patrol(experiments::PatrolSetup{});
  std::map<marl::PolicyKind, double> rpe;
  using marl::PolicyKind;
  for (auto kind : {PolicyKind::random, PolicyKind::greedy, PolicyKind::softmax, PolicyKind::idqn,
                    PolicyKind::ours_aid, PolicyKind::ours}) {
    std::optional<marl::QNet> net;
    if (marl::learned(kind))
      net = experiments::train_patrol(bench, kind).net;
    rpe[kind] = experiments::evaluate_patrol(bench, kind, net ? &*net : nullptr).mean;
  }
  const double secs = seconds_since(t0);
  const bool order = rpe[PolicyKind::ours] >= rpe[PolicyKind::ours_aid] &&
                     rpe[PolicyKind::ours_aid] >= rpe[PolicyKind::idqn] &&
                     rpe[PolicyKind::idqn] > rpe[PolicyKind::softmax] &&
                     rpe[PolicyKind::softmax] >= rpe[PolicyKind::greedy] &&
                     rpe[PolicyKind::greedy] > rpe[PolicyKind::random];
  const bool margin = rpe[PolicyKind::ours] >= 1.15 * rpe[PolicyKind::random];
  return {order && margin && secs < 1800.0,
          fmt("mean RPE ours %.4f, ours-aid %.4f, idqn %.4f, softmax %.4f, greedy %.4f, random %.4f, %.0f s",
              rpe[PolicyKind::ours], rpe[PolicyKind::ours_aid], rpe[PolicyKind::idqn], rpe[PolicyKind::softmax],
              rpe[PolicyKind::greedy], rpe[PolicyKind::random], secs)};
}

Outcome metric_identities()
{
  using metrics::Confusion;
  bool ok = true;
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> u(0, 30);
  int checked = 0;
  for (int t = 0; t < 5000; ++t) {
    const Confusion c{u(rng), u(rng), u(rng), u(rng)};
    const auto r = metrics::f1(c);
    if (c.tp == 0)
      ok = ok && r.f1 == 0.0;
    if (c.tp > 0 && c.fp == c.fn) {
      ok = ok && std::abs(r.f1 - r.precision) < 1e-12;
      ++checked;
    }
  }
  double worst = 0.0;
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> coarse(0, 9);
  for (int corpus = 0; corpus < 50; ++corpus) {
    std::vector<metrics::Scored> rs;
    for (int i = 0; i < 200; ++i) {
      const bool pos = i % 4 == 0 || (i % 4 == 1 && rng() % 2);
      const double s = corpus % 2 ? coarse(rng) : g(rng) + (pos ? 0.8 : 0.0);
      rs.push_back({pos, s});
    }
    worst = std::max(worst, std::abs(metrics::roc(rs).auc - testing::pairwise_auc(rs)));
  }
  return {ok && worst < 1e-9,
          fmt("F1 identities hold on 5000 tables (%d with P = R), max |trapezoid - pairwise| %.1e over 50 corpora",
              checked, worst)};
}

} // namespace

int main(int argc, char** argv)
{
  const std::map<int, std::function<Outcome()>> criteria{
    {1, ks_oracle},        {2, rejection_rule},  {3, detection_power}, {4, method_ordering},
    {5, count_trend},      {6, engine_scaling},  {7, index_oracle},    {8, gradient_check},
    {9, toy_convergence},  {10, preemption_toy}, {11, patrol_ordering}, {12, metric_identities}};
  const std::map<int, const char*> names{
    {1, "KS statistic equals brute-force ECDF scan"},
    {2, "rejection-rule arithmetic"},
    {3, "detection power on synthetic truth"},
    {4, "detector method ordering"},
    {5, "trajectory-count trend"},
    {6, "engine determinism and scaling"},
    {7, "index equals linear scan"},
    {8, "gradient check"},
    {9, "corridor DQN convergence"},
    {10, "ordered vs simultaneous toy"},
    {11, "patrol method ordering"},
    {12, "F1 and ROC identities"}};

  std::vector<int> run;
  for (int i = 1; i < argc; ++i)
    run.push_back(std::stoi(argv[i]));
  if (run.empty())
    for (const auto& [k, f] : criteria)
      run.push_back(k);

  int failed = 0;
  for (int k : run) {
    auto it = criteria.find(k);
    if (it == criteria.end()) {
      std::fprintf(stderr, "unknown criterion %d\n", k);
      return 2;
    }
    Outcome o;
    try {
      o = it->second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("criterion %2d %s  %s: %s\n", k, o.pass ? "PASS" : "FAIL", names.at(k), o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
