#include "curbsense/metrics.hpp"

#include "curbsense/error.hpp"
#include "text.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

namespace curbsense::metrics {

namespace {

std::vector<WindowPrediction> aggregate(std::span<const DetectionResult> results, auto decide)
{
  std::map<WindowKey, Decision> by_key;
  for (const auto& r : results) {
    const Decision d = decide(r);
    auto [it, inserted] = by_key.try_emplace({r.rid, r.range.start}, d);
    // illegal beats normal beats insufficient (enum order)
    if (!inserted)
      it->second = std::min(it->second, d);
  }
  std::vector<WindowPrediction> out;
  out.reserve(by_key.size());
  for (const auto& [k, d] : by_key)
    out.push_back({k, d});
  return out;
}

} // namespace

std::vector<WindowPrediction> road_decisions(std::span<const DetectionResult> results)
{
  return aggregate(results, [](const DetectionResult& r) { return r.decision; });
}

std::vector<WindowPrediction> road_decisions(std::span<const DetectionResult> results, double alpha)
{
  return aggregate(results, [alpha](const DetectionResult& r) {
    if (r.decision == Decision::insufficient_data)
      return r.decision;
    return detect::ks_reject(r.d_stat, r.n, r.m, alpha) ? Decision::illegal_parking : Decision::normal;
  });
}

Confusion confusion(std::span<const LabelRecord> labels, std::span<const WindowPrediction> predictions)
{
  std::map<WindowKey, bool> truth;
  for (const auto& l : labels)
    if (!truth.emplace(l.key, l.positive).second)
      throw data_error("duplicate label for segment " + std::to_string(l.key.rid.segment) + " hour " +
                       std::to_string(l.key.hour));
  if (predictions.size() != truth.size())
    throw data_error("labels and predictions cover different windows");
  Confusion c;
  for (const auto& p : predictions) {
    auto it = truth.find(p.key);
    if (it == truth.end())
      throw data_error("prediction for unlabelled window: segment " + std::to_string(p.key.rid.segment) + " hour " +
                       std::to_string(p.key.hour));
    if (p.decision == Decision::insufficient_data)
      continue;
    const bool pred = p.decision == Decision::illegal_parking;
    if (pred && it->second)
      ++c.tp;
    else if (pred)
      ++c.fp;
    else if (it->second)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

Prf f1(const Confusion& c)
{
  Prf out;
  if (c.tp + c.fp > 0)
    out.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0)
    out.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (out.precision + out.recall > 0.0)
    out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

SweepResult sweep_alpha(std::span<const LabelRecord> labels, std::span<const DetectionResult> results, double step)
{
  if (!(step > 0.0) || step > 1.0)
    throw usage_error("sweep step must lie in (0, 1]");
  SweepResult out;
  const auto count = static_cast<std::size_t>(std::llround(1.0 / step));
  out.best_f1 = -1.0;
  for (std::size_t i = 0; i <= count; ++i) {
    const double alpha = std::min(1.0, static_cast<double>(i) * step);
    const auto prf = f1(confusion(labels, road_decisions(results, alpha)));
    out.curve.push_back({alpha, prf});
    if (prf.f1 > out.best_f1) {
      out.best_f1 = prf.f1;
      out.best_alpha = alpha;
    }
  }
  return out;
}

RocCurve roc(std::span<const Scored> records)
{
  std::size_t pos = 0, neg = 0;
  for (const auto& r : records)
    (r.positive ? pos : neg)++;
  if (pos == 0 || neg == 0)
    throw data_error("ROC needs at least one positive and one negative label");

  std::vector<Scored> sorted(records.begin(), records.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double s = sorted[i].score;
    for (; i < sorted.size() && sorted[i].score == s; ++i)
      (sorted[i].positive ? tp : fp)++;
    curve.points.push_back({s, static_cast<double>(fp) / static_cast<double>(neg),
                            static_cast<double>(tp) / static_cast<double>(pos)});
  }
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    curve.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return curve;
}

std::vector<Scored> window_scores(std::span<const LabelRecord> labels, std::span<const DetectionResult> results)
{
  std::map<WindowKey, double> best;
  for (const auto& r : results) {
    auto [it, inserted] = best.try_emplace({r.rid, r.range.start}, -std::numeric_limits<double>::infinity());
    (void)inserted;
    if (r.decision != Decision::insufficient_data)
      it->second = std::max(it->second, detect::normalized_statistic(r.d_stat, r.n, r.m));
  }
  std::vector<Scored> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    auto it = best.find(l.key);
    out.push_back({l.positive, it == best.end() ? -std::numeric_limits<double>::infinity() : it->second});
  }
  return out;
}

double rpe(double n_catch, double n_tot)
{
  if (!(n_tot > 0.0))
    throw data_error("RPE is undefined when no events were presented");
  return n_catch / n_tot;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v)
{
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]])
      ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
    for (std::size_t k = i; k < j; ++k)
      rank[order[k]] = r;
    i = j;
  }
  return rank;
}

} // namespace

double spearman(std::span<const double> x, std::span<const double> y)
{
  if (x.size() != y.size() || x.size() < 2)
    throw data_error("spearman needs two equal-length series of at least 2 values");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

void write_labels(std::ostream& out, std::span<const LabelRecord> labels)
{
  for (const auto& l : labels)
    out << "L " << l.key.rid.segment << ' ' << geo::dir_char(l.key.rid.dir) << ' ' << l.key.hour << ' '
        << (l.positive ? 1 : 0) << '\n';
}

std::vector<LabelRecord> parse_labels(std::istream& in, const std::string& source)
{
  text::LineReader reader(in, source);
  std::vector<LabelRecord> out;
  std::string raw;
  while (reader.next(raw)) {
    const auto line = text::strip(raw);
    if (line.empty() || line.front() == '#')
      continue;
    const auto tok = text::split(line);
    if (tok[0] != "L" || tok.size() != 5)
      reader.fail("expected 'L <seg_id> <dir> <hour_start> <0|1>'");
    LabelRecord l;
    l.key.rid.segment = reader.number<geo::SegmentId>(tok[1], "segment id");
    if (tok[2] == "F")
      l.key.rid.dir = geo::Direction::forward;
    else if (tok[2] == "B")
      l.key.rid.dir = geo::Direction::backward;
    else
      reader.fail("direction must be F or B");
    l.key.hour = reader.number<std::int64_t>(tok[3], "hour start");
    if (tok[4] == "1")
      l.positive = true;
    else if (tok[4] != "0")
      reader.fail("label must be 0 or 1");
    out.push_back(l);
  }
  return out;
}

void write_sweep_csv(std::ostream& out, const SweepResult& sweep)
{
  out << "alpha,p,r,f1\n";
  for (const auto& row : sweep.curve)
    out << geo::format_double(row.alpha) << ',' << geo::format_double(row.prf.precision) << ','
        << geo::format_double(row.prf.recall) << ',' << geo::format_double(row.prf.f1) << '\n';
}

void write_roc_csv(std::ostream& out, const RocCurve& curve)
{
  out << "threshold,fpr,tpr\n";
  for (const auto& p : curve.points)
    out << (std::isinf(p.threshold) ? (p.threshold > 0 ? "inf" : "-inf") : geo::format_double(p.threshold)) << ','
        << geo::format_double(p.fpr) << ',' << geo::format_double(p.tpr) << '\n';
}

} // namespace curbsense::metrics
