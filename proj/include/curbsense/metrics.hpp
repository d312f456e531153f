#pragma once

#include "curbsense/detect.hpp"

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace curbsense::metrics {

using detect::Decision;
using detect::DetectionResult;
using geo::DirectedSegment;

/// (rid, hour start) identifies a labelled window.
struct WindowKey
{
  DirectedSegment rid;
  std::int64_t hour = 0;

  auto operator<=>(const WindowKey&) const = default;
};

struct LabelRecord
{
  WindowKey key;
  bool positive = false;

  bool operator==(const LabelRecord&) const = default;
};

struct WindowPrediction
{
  WindowKey key;
  Decision decision = Decision::insufficient_data;
};

/// Road-level verdict per window: illegal if any chunk is, insufficient if every chunk is.
std::vector<WindowPrediction> road_decisions(std::span<const DetectionResult> results);

/// Same, re-deciding each chunk from (D, n, m) at `alpha`.
std::vector<WindowPrediction> road_decisions(std::span<const DetectionResult> results, double alpha);

struct Confusion
{
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  bool operator==(const Confusion&) const = default;
};

/// Insufficient-data predictions are skipped; a key missing on either side is an error.
Confusion confusion(std::span<const LabelRecord> labels, std::span<const WindowPrediction> predictions);

struct Prf
{
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

Prf f1(const Confusion& c);

struct SweepRow
{
  double alpha = 0.0;
  Prf prf;
};

struct SweepResult
{
  double best_alpha = 0.0;
  double best_f1 = 0.0;
  std::vector<SweepRow> curve;
};

/// alpha = 0, step, ..., 1; ties on F1 go to the smaller alpha.
SweepResult sweep_alpha(std::span<const LabelRecord> labels, std::span<const DetectionResult> results,
                        double step = 0.01);

struct Scored
{
  bool positive = false;
  double score = 0.0;
};

struct RocPoint
{
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve
{
  std::vector<RocPoint> points; // (0,0) first, (1,1) last
  double auc = 0.0;
};

/// Thresholds at every distinct score, highest first; AUC by the trapezoid rule.
RocCurve roc(std::span<const Scored> records);

/// Per labelled window: max normalized KS score over its chunks; -inf when no chunk is testable.
std::vector<Scored> window_scores(std::span<const LabelRecord> labels, std::span<const DetectionResult> results);

double rpe(double n_catch, double n_tot);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

void write_labels(std::ostream& out, std::span<const LabelRecord> labels);
std::vector<LabelRecord> parse_labels(std::istream& in, const std::string& source = "<labels>");

void write_sweep_csv(std::ostream& out, const SweepResult& sweep);
void write_roc_csv(std::ostream& out, const RocCurve& curve);

} // namespace curbsense::metrics
