#include "curbsense/match.hpp"

#include "curbsense/error.hpp"
#include "text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>

#include <omp.h>

namespace curbsense::mapmatch {

std::string to_string(const TrajKey& key)
{
  return std::to_string(key.traj_id) + "." + std::to_string(key.sub_seq) + "." + std::to_string(key.visit);
}

TrajKey parse_key(const std::string& s)
{
  const auto parts = text::split(s, '.');
  auto num = [&](std::string_view tok) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
      throw data_error("bad trajectory key '" + s + "'");
    return v;
  };
  if (parts.size() == 1)
    return {num(parts[0]), 0, 0};
  if (parts.size() != 3)
    throw data_error("bad trajectory key '" + s + "'");
  return {num(parts[0]), static_cast<int>(num(parts[1])), static_cast<int>(num(parts[2]))};
}

void MatchConfig::validate() const
{
  if (!(max_avg_shift > 0.0) || !(max_deviation > 0.0) || !(candidate_radius > 0.0) || window < 1 ||
      continuity_bonus < 0.0)
    throw usage_error("match config values must be positive");
}

namespace {

struct Candidate
{
  geo::SegmentId segment = 0;
  geo::Projection proj;
};

struct PointCandidates
{
  std::vector<Candidate> all;
  std::optional<geo::SegmentId> nearest;
};

PointCandidates candidates_for(geo::LocalPoint p, const geo::RoadNetwork& net, double radius)
{
  PointCandidates out;
  double best = radius;
  for (const auto* seg : net.nearby(p, radius)) {
    if (seg->level == geo::RoadLevel::highway)
      continue;
    const auto proj = geo::project(*seg, Direction::forward, p);
    if (proj.distance > radius)
      continue;
    out.all.push_back({seg->id, proj});
    // nearby() is ordered by id, so strict comparison keeps the smaller id on ties.
    if (!out.nearest || proj.distance < best) {
      best = proj.distance;
      out.nearest = seg->id;
    }
  }
  return out;
}

const Candidate* find_candidate(const PointCandidates& pc, geo::SegmentId id)
{
  for (const auto& c : pc.all)
    if (c.segment == id)
      return &c;
  return nullptr;
}

} // namespace

std::vector<MatchedTrajectory> match(const prep::SubTrajectory& sub, const geo::RoadNetwork& net,
                                     const MatchConfig& cfg)
{
  const std::size_t n = sub.points.size();
  std::vector<PointCandidates> cands(n);
  for (std::size_t i = 0; i < n; ++i)
    cands[i] = candidates_for(net.to_local(sub.points[i].position()), net, cfg.candidate_radius);

  const auto half = static_cast<std::ptrdiff_t>(cfg.window / 2);
  std::vector<std::optional<geo::SegmentId>> winner(n);
  std::optional<geo::SegmentId> previous;
  for (std::size_t i = 0; i < n; ++i) {
    if (!cands[i].nearest)
      continue;
    std::map<geo::SegmentId, double> votes;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(i) - half);
    const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1, static_cast<std::ptrdiff_t>(i) + half);
    for (auto j = lo; j <= hi; ++j)
      if (cands[static_cast<std::size_t>(j)].nearest)
        votes[*cands[static_cast<std::size_t>(j)].nearest] += 1.0;
    if (previous)
      if (auto it = votes.find(*previous); it != votes.end())
        it->second += cfg.continuity_bonus;
    geo::SegmentId best = votes.begin()->first;
    double best_votes = votes.begin()->second;
    for (const auto& [seg, v] : votes)
      if (v > best_votes) {
        best = seg;
        best_votes = v;
      }
    if (!find_candidate(cands[i], best))
      best = *cands[i].nearest;
    winner[i] = best;
    previous = best;
  }

  std::vector<MatchedTrajectory> out;
  MatchedTrajectory run;
  auto flush = [&] {
    if (run.points.size() >= 2) {
      run.key = {sub.parent_id, sub.seq_no, static_cast<int>(out.size())};
      out.push_back(std::move(run));
    }
    run = MatchedTrajectory{};
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (!winner[i])
      continue;
    if (!run.points.empty() && run.rid.segment != *winner[i])
      flush();
    run.rid = {*winner[i], Direction::forward};
    const auto* c = find_candidate(cands[i], *winner[i]);
    run.points.push_back({sub.points[i].t, c->proj.offset, c->proj.shift});
  }
  flush();
  return out;
}

bool refine_distance(const MatchedTrajectory& mt, const MatchConfig& cfg)
{
  if (mt.points.empty())
    return false;
  double sum = 0.0;
  for (const auto& p : mt.points)
    sum += std::abs(p.shift);
  return sum / static_cast<double>(mt.points.size()) <= cfg.max_avg_shift;
}

namespace {

// First half [0, n/2), second half [(n+1)/2, n); the middle point of an odd run is skipped.
std::pair<std::size_t, std::size_t> halves(std::size_t n)
{
  return {n / 2, (n + 1) / 2};
}

} // namespace

double deviation_angle(const MatchedTrajectory& mt, const geo::RoadNetwork& net)
{
  const std::size_t n = mt.points.size();
  if (n < 2)
    return geo::kPi;
  const auto& seg = net.segment(mt.rid.segment);
  const auto [first_end, second_begin] = halves(n);
  geo::LocalPoint c1, c2;
  double mean_offset = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = geo::locate(seg, mt.rid.dir, mt.points[i].offset, mt.points[i].shift);
    if (i < first_end)
      c1 = c1 + p;
    if (i >= second_begin)
      c2 = c2 + p;
    mean_offset += mt.points[i].offset;
  }
  c1 = (1.0 / static_cast<double>(first_end)) * c1;
  c2 = (1.0 / static_cast<double>(n - second_begin)) * c2;
  mean_offset /= static_cast<double>(n);
  const auto v = c2 - c1;
  const double len = geo::norm(v);
  if (len < 1e-9)
    return geo::kPi;
  const auto d = geo::tangent(seg, mt.rid.dir, mean_offset);
  return std::acos(std::clamp(geo::dot(v, d) / len, -1.0, 1.0));
}

bool refine_direction(const MatchedTrajectory& mt, const geo::RoadNetwork& net, const MatchConfig& cfg)
{
  return !(deviation_angle(mt, net) > cfg.max_deviation);
}

Direction travel_direction(const MatchedTrajectory& mt)
{
  const std::size_t n = mt.points.size();
  if (n < 2)
    return mt.rid.dir;
  const auto [first_end, second_begin] = halves(n);
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < first_end; ++i)
    a += mt.points[i].offset;
  for (std::size_t i = second_begin; i < n; ++i)
    b += mt.points[i].offset;
  a /= static_cast<double>(first_end);
  b /= static_cast<double>(n - second_begin);
  const bool along_frame = !(b < a);
  return along_frame ? mt.rid.dir : geo::flip(mt.rid.dir);
}

MatchedTrajectory orient(MatchedTrajectory mt, const geo::RoadNetwork& net, Direction dir)
{
  if (mt.rid.dir == dir)
    return mt;
  const double len = net.segment(mt.rid.segment).length();
  for (auto& p : mt.points) {
    p.offset = len - p.offset;
    p.shift = -p.shift;
  }
  mt.rid.dir = dir;
  return mt;
}

std::vector<MatchedTrajectory> remove_reverse(std::vector<MatchedTrajectory> mts, const geo::RoadNetwork& net)
{
  std::erase_if(mts, [&](const MatchedTrajectory& mt) {
    return mt.rid.dir == Direction::backward && !net.segment(mt.rid.segment).bidirectional();
  });
  return mts;
}

PipelineCounts& PipelineCounts::operator+=(const PipelineCounts& o)
{
  raw_trajectories += o.raw_trajectories;
  raw_points += o.raw_points;
  sub_trajectories += o.sub_trajectories;
  sub_points += o.sub_points;
  matched += o.matched;
  matched_points += o.matched_points;
  after_distance += o.after_distance;
  after_direction += o.after_direction;
  reverse_removed += o.reverse_removed;
  output += o.output;
  output_points += o.output_points;
  return *this;
}

PreprocessResult preprocess_one(const prep::RawTrajectory& tr, const geo::RoadNetwork& net,
                                const PreprocessConfig& cfg)
{
  PreprocessResult res;
  auto& c = res.counts;
  c.raw_trajectories = 1;
  c.raw_points = tr.points.size();
  std::vector<MatchedTrajectory> kept;
  for (const auto& sub : prep::clean(tr, net.anchor(), cfg.cleaning)) {
    ++c.sub_trajectories;
    c.sub_points += sub.points.size();
    for (auto& mt : match(sub, net, cfg.matching)) {
      ++c.matched;
      c.matched_points += mt.points.size();
      const Direction dir = travel_direction(mt);
      auto oriented = orient(std::move(mt), net, dir);
      if (!refine_distance(oriented, cfg.matching))
        continue;
      ++c.after_distance;
      if (!refine_direction(oriented, net, cfg.matching))
        continue;
      ++c.after_direction;
      if (cfg.mode == DirectionMode::undirected)
        oriented = orient(std::move(oriented), net, Direction::forward);
      kept.push_back(std::move(oriented));
    }
  }
  if (cfg.mode == DirectionMode::directed) {
    const std::size_t before = kept.size();
    kept = remove_reverse(std::move(kept), net);
    c.reverse_removed = before - kept.size();
  }
  c.output = kept.size();
  for (const auto& mt : kept)
    c.output_points += mt.points.size();
  res.matched = std::move(kept);
  return res;
}

PreprocessResult preprocess(const std::vector<prep::RawTrajectory>& trajs, const geo::RoadNetwork& net,
                            const PreprocessConfig& cfg)
{
  PreprocessResult out;
  for (const auto& tr : trajs) {
    auto one = preprocess_one(tr, net, cfg);
    out.counts += one.counts;
    std::move(one.matched.begin(), one.matched.end(), std::back_inserter(out.matched));
  }
  return out;
}

PreprocessResult preprocess_parallel(const std::vector<prep::RawTrajectory>& trajs, const geo::RoadNetwork& net,
                                     const PreprocessConfig& cfg)
{
  std::vector<PreprocessResult> parts(trajs.size());
  const auto n = static_cast<std::int64_t>(trajs.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < n; ++i)
    parts[static_cast<std::size_t>(i)] = preprocess_one(trajs[static_cast<std::size_t>(i)], net, cfg);

  PreprocessResult out;
  std::size_t total = 0;
  for (const auto& p : parts)
    total += p.matched.size();
  out.matched.reserve(total);
  for (auto& p : parts) {
    out.counts += p.counts;
    std::move(p.matched.begin(), p.matched.end(), std::back_inserter(out.matched));
  }
  return out;
}

std::vector<MatchedTrajectory> parse_matched(std::istream& in, const std::string& source)
{
  text::LineReader reader(in, source);
  std::vector<MatchedTrajectory> out;
  std::string raw;
  while (reader.next(raw)) {
    const auto line = text::strip(raw);
    if (line.empty() || line.front() == '#')
      continue;
    const auto tok = text::split(line);
    if (tok[0] == "M") {
      if (tok.size() != 4)
        reader.fail("expected 'M <traj_id> <seg_id> <F|B>'");
      MatchedTrajectory mt;
      try {
        mt.key = parse_key(std::string(tok[1]));
      } catch (const Error& e) {
        reader.fail(e.what());
      }
      mt.rid.segment = reader.number<geo::SegmentId>(tok[2], "segment id");
      if (tok[3] == "F")
        mt.rid.dir = Direction::forward;
      else if (tok[3] == "B")
        mt.rid.dir = Direction::backward;
      else
        reader.fail("direction must be F or B");
      out.push_back(std::move(mt));
    } else if (tok[0] == "Q") {
      if (out.empty())
        reader.fail("point before any matched trajectory header");
      if (tok.size() != 4)
        reader.fail("expected 'Q <t> <offset> <shift>'");
      out.back().points.push_back({reader.number<std::int64_t>(tok[1], "timestamp"),
                                   reader.number<double>(tok[2], "offset"), reader.number<double>(tok[3], "shift")});
    } else {
      reader.fail("unknown record type '" + std::string(tok[0]) + "'");
    }
  }
  for (const auto& mt : out)
    if (mt.points.empty())
      throw data_error(source + ": matched trajectory " + to_string(mt.key) + " has no points");
  return out;
}

std::vector<MatchedTrajectory> load_matched(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw data_error("cannot open matched file " + path.string());
  return parse_matched(in, path.string());
}

void write_matched(std::ostream& out, const std::vector<MatchedTrajectory>& mts)
{
  for (const auto& mt : mts) {
    out << "M " << to_string(mt.key) << ' ' << mt.rid.segment << ' ' << geo::dir_char(mt.rid.dir) << '\n';
    for (const auto& p : mt.points)
      out << "Q " << p.t << ' ' << geo::format_double(p.offset) << ' ' << geo::format_double(p.shift) << '\n';
  }
}

void save_matched(const std::vector<MatchedTrajectory>& mts, const std::filesystem::path& path)
{
  std::ofstream out(path);
  if (!out)
    throw data_error("cannot write matched file " + path.string());
  write_matched(out, mts);
}

} // namespace curbsense::mapmatch
