#include "curbsense/detect.hpp"

#include "binary.hpp"
#include "curbsense/error.hpp"
#include "curbsense/rng.hpp"
#include "text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>

namespace curbsense::detect {

namespace {

constexpr char kBaselineMagic[6] = "CSBL1";
constexpr std::uint32_t kBaselineVersion = 1;
constexpr std::uint64_t kNaiveSeed = 0x6e61697665ULL;

int chunk_of(double offset, double chunk_len)
{
  return static_cast<int>(std::floor(offset / chunk_len));
}

} // namespace

const ShiftSample* BaselineModel::find(const DirectedSegment& rid, int chunk) const
{
  auto it = entries_.find({rid, chunk});
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<int> BaselineModel::chunks_of(const DirectedSegment& rid) const
{
  std::vector<int> out;
  for (auto it = entries_.lower_bound({rid, std::numeric_limits<int>::min()});
       it != entries_.end() && it->first.rid == rid; ++it)
    out.push_back(it->first.chunk);
  return out;
}

std::vector<DirectedSegment> BaselineModel::rids() const
{
  std::vector<DirectedSegment> out;
  for (const auto& [key, sample] : entries_)
    if (out.empty() || out.back() != key.rid)
      out.push_back(key.rid);
  return out;
}

BaselineModel BaselineModel::slice(std::span<const DirectedSegment> rids) const
{
  BaselineModel out(chunk_len_);
  for (const auto& [key, sample] : entries_)
    if (std::binary_search(rids.begin(), rids.end(), key.rid))
      out.entries_.emplace(key, sample);
  return out;
}

const char* to_string(Decision d)
{
  switch (d) {
  case Decision::illegal_parking:
    return "illegal_parking";
  case Decision::normal:
    return "normal";
  case Decision::insufficient_data:
    return "insufficient_data";
  }
  return "insufficient_data";
}

Decision parse_decision(const std::string& s)
{
  if (s == "illegal_parking")
    return Decision::illegal_parking;
  if (s == "normal")
    return Decision::normal;
  if (s == "insufficient_data")
    return Decision::insufficient_data;
  throw data_error("unknown decision '" + s + "'");
}

void DetectConfig::validate() const
{
  if (!(alpha > 0.0 && alpha < 1.0))
    throw usage_error("alpha must lie in (0, 1)");
  if (!(chunk_len > 0.0) || !(resample_step > 0.0) || !(bucket > 0.0) || !(naive_sigma > 0.0) || top_k == 0)
    throw usage_error("detect config lengths must be positive");
  if (night_start_hour < 0 || night_start_hour > 23 || night_end_hour < 0 || night_end_hour > 23)
    throw usage_error("night window hours must lie in [0, 23]");
}

std::vector<OffsetShift> resample_uniform(const MatchedTrajectory& mt, double step)
{
  if (mt.points.empty())
    return {};
  std::vector<OffsetShift> pts;
  pts.reserve(mt.points.size());
  for (const auto& p : mt.points)
    pts.push_back({p.offset, p.shift});
  std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.offset < b.offset; });

  const double lo = pts.front().offset;
  const double hi = pts.back().offset;
  if (!(hi > lo))
    return {{lo, pts.front().shift}};

  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step)) + 1;
  std::vector<OffsetShift> out;
  out.reserve(count);
  std::size_t j = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const double o = lo + static_cast<double>(k) * step;
    while (j + 2 < pts.size() && pts[j + 1].offset <= o)
      ++j;
    const auto& a = pts[j];
    const auto& b = pts[j + 1];
    const double span = b.offset - a.offset;
    const double w = span > 0.0 ? std::clamp((o - a.offset) / span, 0.0, 1.0) : 0.0;
    out.push_back({o, a.shift + w * (b.shift - a.shift)});
  }
  return out;
}

std::map<int, std::vector<OffsetShift>> chunk(std::span<const OffsetShift> samples, double chunk_len)
{
  std::map<int, std::vector<OffsetShift>> out;
  for (const auto& s : samples)
    out[chunk_of(s.offset, chunk_len)].push_back(s);
  return out;
}

TrajectoryRefs refs(std::span<const store::IndexEntry> entries)
{
  TrajectoryRefs out;
  out.reserve(entries.size());
  for (const auto& e : entries)
    out.push_back(&e.traj);
  return out;
}

TrajectoryRefs refs(std::span<const MatchedTrajectory> trajs)
{
  TrajectoryRefs out;
  out.reserve(trajs.size());
  for (const auto& t : trajs)
    out.push_back(&t);
  return out;
}

ChunkSamples extract_avg(std::span<const MatchedTrajectory* const> trajs, const DetectConfig& cfg)
{
  // (chunk, bucket) -> (sum, count)
  std::map<std::pair<int, std::int64_t>, std::pair<double, std::size_t>> acc;
  for (const auto* mt : trajs)
    for (const auto& s : resample_uniform(*mt, cfg.resample_step)) {
      auto& [sum, n] = acc[{chunk_of(s.offset, cfg.chunk_len), static_cast<std::int64_t>(std::floor(s.offset / cfg.bucket))}];
      sum += s.shift;
      ++n;
    }
  ChunkSamples out;
  for (const auto& [key, v] : acc) {
    auto& sample = out[key.first];
    sample.provenance = Provenance::eval_avg;
    sample.values.push_back(v.first / static_cast<double>(v.second));
  }
  return out;
}

ChunkSamples extract_top(std::span<const MatchedTrajectory* const> trajs, const DetectConfig& cfg)
{
  ChunkSamples out;
  for (const auto* mt : trajs) {
    const auto resampled = resample_uniform(*mt, cfg.resample_step);
    for (auto& [c, pts] : chunk(resampled, cfg.chunk_len)) {
      std::stable_sort(pts.begin(), pts.end(),
                       [](const auto& a, const auto& b) { return std::abs(a.shift) > std::abs(b.shift); });
      auto& sample = out[c];
      sample.provenance = Provenance::eval_top;
      const std::size_t k = std::min(cfg.top_k, pts.size());
      for (std::size_t i = 0; i < k; ++i)
        sample.values.push_back(pts[i].shift);
    }
  }
  return out;
}

ChunkSamples extract(std::span<const MatchedTrajectory* const> trajs, const DetectConfig& cfg)
{
  return cfg.extractor == Extractor::top ? extract_top(trajs, cfg) : extract_avg(trajs, cfg);
}

TimeRange night_window(std::int64_t day_start, const DetectConfig& cfg)
{
  const std::int64_t start = day_start + cfg.night_start_hour * 3600;
  std::int64_t end = day_start + cfg.night_end_hour * 3600;
  if (end <= start)
    end += 86400;
  return {start, end};
}

BaselineModel build_night_baseline(const RoadTimeIndex& idx, std::span<const std::int64_t> days,
                                   const DetectConfig& cfg)
{
  BaselineModel model(cfg.chunk_len);
  std::map<ChunkKey, ShiftSample> pooled;
  for (const auto& rid : idx.rids())
    for (const auto day : days) {
      const auto trajs = refs(idx.query(rid, night_window(day, cfg)));
      if (trajs.empty())
        continue;
      for (auto& [c, sample] : extract_avg(trajs, cfg)) {
        auto& dst = pooled[{rid, c}];
        dst.provenance = Provenance::baseline_night;
        dst.values.insert(dst.values.end(), sample.values.begin(), sample.values.end());
      }
    }
  for (auto& [key, sample] : pooled)
    if (sample.values.size() >= cfg.min_baseline)
      model.set(key, std::move(sample));
  return model;
}

BaselineModel naive_baseline(const geo::RoadNetwork& net, const DetectConfig& cfg)
{
  BaselineModel model(cfg.chunk_len);
  for (const auto& rid : geo::directed_segments(net)) {
    const double len = net.segment(rid.segment).length();
    // The tolerance keeps a length of 150.0000001 m from opening an empty fourth chunk.
    const int chunks = std::max(1, static_cast<int>(std::ceil(len / cfg.chunk_len - 1e-6)));
    for (int c = 0; c < chunks; ++c) {
      auto rng = make_rng(kNaiveSeed, {static_cast<std::uint64_t>(rid.segment), static_cast<std::uint64_t>(rid.dir),
                                       static_cast<std::uint64_t>(c)});
      std::normal_distribution<double> gauss(0.0, cfg.naive_sigma);
      ShiftSample s;
      s.provenance = Provenance::baseline_naive;
      s.values.resize(cfg.naive_draws);
      for (auto& v : s.values)
        v = gauss(rng);
      model.set({rid, c}, std::move(s));
    }
  }
  return model;
}

double ks_statistic(std::span<const double> a, std::span<const double> b)
{
  if (a.empty() || b.empty())
    throw data_error("KS statistic needs two non-empty samples");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() || j < y.size()) {
    double v;
    if (j >= y.size() || (i < x.size() && x[i] <= y[j]))
      v = x[i];
    else
      v = y[j];
    while (i < x.size() && x[i] <= v)
      ++i;
    while (j < y.size() && y[j] <= v)
      ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  return d;
}

double c_alpha(double alpha)
{
  if (!(alpha > 0.0 && alpha < 1.0))
    throw usage_error("alpha must lie in (0, 1)");
  return std::sqrt(-0.5 * std::log(alpha / 2.0));
}

double critical_value(double alpha)
{
  if (alpha <= 0.0)
    return std::numeric_limits<double>::infinity();
  return std::sqrt(-0.5 * std::log(std::min(alpha, 1.0) / 2.0));
}

bool ks_reject(double d, std::size_t n, std::size_t m, double alpha)
{
  const double nn = static_cast<double>(n);
  const double mm = static_cast<double>(m);
  return d > critical_value(alpha) * std::sqrt((nn + mm) / (nn * mm));
}

double normalized_statistic(double d, std::size_t n, std::size_t m)
{
  const double nn = static_cast<double>(n);
  const double mm = static_cast<double>(m);
  return d / std::sqrt((nn + mm) / (nn * mm));
}

std::vector<DetectionResult> detect_trajectories(const BaselineModel& baseline, const DirectedSegment& rid,
                                                 std::span<const MatchedTrajectory* const> trajs,
                                                 const TimeRange& range, const DetectConfig& cfg)
{
  std::vector<DetectionResult> out;
  const auto chunks = baseline.chunks_of(rid);
  if (chunks.empty())
    return out;
  const bool enough = trajs.size() >= cfg.min_eval_trajs;
  const ChunkSamples eval = enough ? extract(trajs, cfg) : ChunkSamples{};
  for (const int c : chunks) {
    const ShiftSample* base = baseline.find(rid, c);
    DetectionResult r;
    r.rid = rid;
    r.chunk = c;
    r.range = range;
    r.n = base->values.size();
    auto it = eval.find(c);
    if (!enough || it == eval.end() || it->second.values.empty()) {
      r.m = it == eval.end() ? 0 : it->second.values.size();
      r.decision = Decision::insufficient_data;
    } else {
      r.m = it->second.values.size();
      r.d_stat = ks_statistic(base->values, it->second.values);
      r.decision = ks_reject(r.d_stat, r.n, r.m, cfg.alpha) ? Decision::illegal_parking : Decision::normal;
    }
    out.push_back(r);
  }
  return out;
}

std::vector<DetectionResult> detect_window(const BaselineModel& baseline, const RoadTimeIndex& idx,
                                           const DirectedSegment& rid, const TimeRange& range,
                                           const DetectConfig& cfg)
{
  const auto trajs = refs(idx.query(rid, range));
  return detect_trajectories(baseline, rid, trajs, range, cfg);
}

std::vector<RoadRank> rank_roads(std::span<const DetectionResult> results, std::size_t days)
{
  if (days == 0)
    throw usage_error("rank_roads needs at least one day");
  std::map<DirectedSegment, std::set<std::int64_t>> event_hours;
  for (const auto& r : results) {
    auto& hours = event_hours[r.rid];
    if (r.decision == Decision::illegal_parking)
      hours.insert(r.range.start);
  }
  std::vector<RoadRank> out;
  for (const auto& [rid, hours] : event_hours)
    out.push_back({rid, static_cast<double>(hours.size()) / static_cast<double>(days)});
  std::stable_sort(out.begin(), out.end(),
                   [](const RoadRank& a, const RoadRank& b) { return a.hours_with_events > b.hours_with_events; });
  return out;
}

void write_results(std::ostream& out, std::span<const DetectionResult> results)
{
  for (const auto& r : results)
    out << "R " << r.rid.segment << ' ' << geo::dir_char(r.rid.dir) << ' ' << r.chunk << ' ' << r.range.start << ' '
        << r.range.end << ' ' << geo::format_double(r.d_stat) << ' ' << r.n << ' ' << r.m << ' '
        << to_string(r.decision) << '\n';
}

std::vector<DetectionResult> parse_results(std::istream& in, const std::string& source)
{
  text::LineReader reader(in, source);
  std::vector<DetectionResult> out;
  std::string raw;
  while (reader.next(raw)) {
    const auto line = text::strip(raw);
    if (line.empty() || line.front() == '#')
      continue;
    const auto tok = text::split(line);
    if (tok[0] != "R" || tok.size() != 10)
      reader.fail("expected 'R <seg_id> <dir> <chunk> <start> <end> <D> <n> <m> <decision>'");
    DetectionResult r;
    r.rid.segment = reader.number<geo::SegmentId>(tok[1], "segment id");
    if (tok[2] == "F")
      r.rid.dir = geo::Direction::forward;
    else if (tok[2] == "B")
      r.rid.dir = geo::Direction::backward;
    else
      reader.fail("direction must be F or B");
    r.chunk = reader.number<int>(tok[3], "chunk");
    r.range = {reader.number<std::int64_t>(tok[4], "start"), reader.number<std::int64_t>(tok[5], "end")};
    r.d_stat = reader.number<double>(tok[6], "D");
    r.n = reader.number<std::size_t>(tok[7], "n");
    r.m = reader.number<std::size_t>(tok[8], "m");
    try {
      r.decision = parse_decision(std::string(tok[9]));
    } catch (const Error& e) {
      reader.fail(e.what());
    }
    out.push_back(r);
  }
  return out;
}

void write_baseline(std::ostream& out, const BaselineModel& model)
{
  binary::Writer w(out);
  binary::put_header(w, kBaselineMagic, kBaselineVersion);
  w.put<double>(model.chunk_len());
  w.put<std::uint64_t>(model.size());
  for (const auto& [key, sample] : model.entries()) {
    w.put<std::int64_t>(key.rid.segment);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(key.rid.dir));
    w.put<std::int32_t>(key.chunk);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(sample.provenance));
    w.put<std::uint64_t>(sample.values.size());
    for (double v : sample.values)
      w.put<double>(v);
  }
}

BaselineModel read_baseline(std::istream& in, const std::string& source)
{
  binary::Reader r(in, source);
  binary::expect_header(r, kBaselineMagic, kBaselineVersion);
  BaselineModel model(r.get<double>());
  const auto n = r.count();
  for (std::uint64_t i = 0; i < n; ++i) {
    ChunkKey key;
    key.rid.segment = r.get<std::int64_t>();
    const auto dir = r.get<std::uint8_t>();
    if (dir > 1)
      throw data_error(source + ": corrupt direction flag");
    key.rid.dir = static_cast<geo::Direction>(dir);
    key.chunk = r.get<std::int32_t>();
    ShiftSample s;
    const auto prov = r.get<std::uint8_t>();
    if (prov > 3)
      throw data_error(source + ": corrupt provenance");
    s.provenance = static_cast<Provenance>(prov);
    s.values.resize(r.count());
    for (auto& v : s.values)
      v = r.get<double>();
    model.set(key, std::move(s));
  }
  r.expect_end();
  return model;
}

void save_baseline(const BaselineModel& model, const std::filesystem::path& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw data_error("cannot write baseline file " + path.string());
  write_baseline(out, model);
}

BaselineModel load_baseline(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw data_error("cannot open baseline file " + path.string());
  return read_baseline(in, path.string());
}

} // namespace curbsense::detect
