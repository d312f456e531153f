#pragma once

#include "curbsense/detect.hpp"
#include "curbsense/marl.hpp"
#include "curbsense/match.hpp"
#include "curbsense/metrics.hpp"
#include "curbsense/store.hpp"
#include "curbsense/synth.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace curbsense::experiments {

/// The four detector variants compared on labelled windows.
enum class Method { naive, nt, nt_dir, nt_dir_t };

constexpr Method kMethods[] = {Method::naive, Method::nt, Method::nt_dir, Method::nt_dir_t};

const char* to_string(Method m);
Method parse_method(const std::string& s);

/// A generated corpus preprocessed both ways, indexed, with every baseline built.
struct DetectionStudy
{
  synth::DetectCorpus corpus;
  mapmatch::PipelineCounts directed_counts;
  mapmatch::PipelineCounts undirected_counts;
  store::RoadTimeIndex directed;
  store::RoadTimeIndex undirected;
  detect::BaselineModel night_directed;
  detect::BaselineModel night_undirected;
  detect::BaselineModel naive;
  std::unordered_map<std::int64_t, int> ordinal; // evaluation trajectory id -> position in its window
};

DetectionStudy prepare_detection(const synth::SynthConfig& cfg, const synth::DetectPreset& preset,
                                 const detect::DetectConfig& dcfg = {});

struct MethodEval
{
  std::vector<detect::DetectionResult> results; // keyed by the labelled rid
  std::vector<metrics::Scored> scores;
  metrics::RocCurve roc;
};

/// Runs `method` on every labelled window using the first `per_window` trajectories of each.
MethodEval evaluate_method(const DetectionStudy& study, Method method, int per_window,
                           detect::DetectConfig dcfg = {});

/// The patrol comparison: a synthetic world, training days and held-out evaluation days.
struct PatrolSetup
{
  synth::SynthConfig synth;
  synth::PatrolPreset preset;
  patrol::SimConfig sim;
  marl::TrainConfig train = default_patrol_training();
  std::size_t agents = 2;
  int train_days = 30;
  int eval_episodes = 10;
  std::uint64_t seed = 1;

  static marl::TrainConfig default_patrol_training();
};

struct PatrolBench
{
  PatrolSetup setup;
  synth::PatrolWorld world;
  std::vector<patrol::EtaStream> train_days;
  std::vector<patrol::EtaStream> eval_days;      // one per evaluation episode
  std::vector<std::vector<patrol::Cell>> starts; // agent start cells per evaluation episode
};

PatrolBench prepare_patrol(const PatrolSetup& setup);

marl::TrainResult train_patrol(const PatrolBench& bench, marl::PolicyKind kind);

struct PatrolEval
{
  std::vector<double> rpe; // per evaluation episode
  std::vector<double> catches;
  std::vector<std::size_t> totals;
  double mean = 0.0;
};

/// Runs the evaluation episodes in parallel; `net` is required for learned kinds.
PatrolEval evaluate_patrol(const PatrolBench& bench, marl::PolicyKind kind, const marl::QNet* net);

} // namespace curbsense::experiments
