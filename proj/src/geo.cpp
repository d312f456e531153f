#include "curbsense/geo.hpp"

#include "curbsense/error.hpp"
#include "text.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>

namespace curbsense::geo {

namespace {

constexpr double kDegToRad = kPi / 180.0;
constexpr double kShapeEndpointToleranceM = 1.0;

} // namespace

double norm(LocalPoint v)
{
  return std::hypot(v.x, v.y);
}

double distance(LocalPoint a, LocalPoint b)
{
  return norm(a - b);
}

bool valid_wgs84(LatLng p)
{
  return std::isfinite(p.lat) && std::isfinite(p.lng) && p.lat >= -90.0 && p.lat <= 90.0 && p.lng >= -180.0 &&
         p.lng <= 180.0;
}

LocalPoint to_local(LatLng anchor, LatLng p)
{
  const double k = kEarthRadiusM * kDegToRad;
  return {(p.lng - anchor.lng) * std::cos(anchor.lat * kDegToRad) * k, (p.lat - anchor.lat) * k};
}

LatLng from_local(LatLng anchor, LocalPoint p)
{
  const double k = kEarthRadiusM * kDegToRad;
  return {anchor.lat + p.y / k, anchor.lng + p.x / (k * std::cos(anchor.lat * kDegToRad))};
}

const char* to_string(RoadLevel level)
{
  switch (level) {
  case RoadLevel::highway:
    return "highway";
  case RoadLevel::arterial:
    return "arterial";
  case RoadLevel::local:
    return "local";
  case RoadLevel::supplementary:
    return "supplementary";
  }
  return "local";
}

RoadLevel parse_level(const std::string& s)
{
  if (s == "highway")
    return RoadLevel::highway;
  if (s == "arterial")
    return RoadLevel::arterial;
  if (s == "local")
    return RoadLevel::local;
  if (s == "supplementary")
    return RoadLevel::supplementary;
  throw data_error("unknown road level '" + s + "'");
}

std::string to_string(const DirectedSegment& rid)
{
  return std::to_string(rid.segment) + dir_char(rid.dir);
}

std::string format_double(double v)
{
  std::array<char, 64> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc())
    throw Error(ErrorKind::internal, "cannot format double");
  return std::string(buf.data(), p);
}

Projection project(const RoadSegment& seg, Direction dir, LocalPoint p)
{
  double best = std::numeric_limits<double>::infinity();
  double best_offset = 0.0;
  double best_side = 0.0;
  for (std::size_t i = 0; i + 1 < seg.shape.size(); ++i) {
    const LocalPoint a = seg.shape[i];
    const LocalPoint d = seg.shape[i + 1] - a;
    const double len2 = dot(d, d);
    const double t = std::clamp(dot(p - a, d) / len2, 0.0, 1.0);
    const LocalPoint q = a + t * d;
    const double dist = distance(p, q);
    if (dist < best) {
      best = dist;
      best_offset = seg.cumulative[i] + t * std::sqrt(len2);
      best_side = cross(d, p - q);
    }
  }
  Projection out;
  out.distance = best;
  out.shift = best_side < 0.0 ? -best : best;
  out.offset = best_offset;
  if (dir == Direction::backward) {
    out.shift = -out.shift;
    out.offset = seg.length() - best_offset;
  }
  out.offset = std::clamp(out.offset, 0.0, seg.length());
  return out;
}

namespace {

// Piece index and parameter for a forward-frame offset.
std::pair<std::size_t, double> piece_at(const RoadSegment& seg, double fwd_offset)
{
  fwd_offset = std::clamp(fwd_offset, 0.0, seg.length());
  auto it = std::upper_bound(seg.cumulative.begin(), seg.cumulative.end(), fwd_offset);
  std::size_t i = it == seg.cumulative.begin() ? 0 : static_cast<std::size_t>(it - seg.cumulative.begin()) - 1;
  i = std::min(i, seg.shape.size() - 2);
  const double piece = seg.cumulative[i + 1] - seg.cumulative[i];
  return {i, (fwd_offset - seg.cumulative[i]) / piece};
}

} // namespace

LocalPoint tangent(const RoadSegment& seg, Direction dir, double offset)
{
  const double fwd = dir == Direction::forward ? offset : seg.length() - offset;
  const auto [i, t] = piece_at(seg, fwd);
  (void)t;
  LocalPoint d = seg.shape[i + 1] - seg.shape[i];
  d = (1.0 / norm(d)) * d;
  return dir == Direction::forward ? d : -1.0 * d;
}

LocalPoint locate(const RoadSegment& seg, Direction dir, double offset, double shift)
{
  const double fwd = dir == Direction::forward ? offset : seg.length() - offset;
  const auto [i, t] = piece_at(seg, fwd);
  const LocalPoint a = seg.shape[i];
  const LocalPoint q = a + t * (seg.shape[i + 1] - a);
  const LocalPoint d = tangent(seg, dir, offset);
  const LocalPoint left{-d.y, d.x};
  return q + shift * left;
}

RoadNetwork RoadNetwork::build(std::vector<NodeSpec> nodes, std::vector<SegmentSpec> segments)
{
  RoadNetwork net;
  if (nodes.empty())
    throw data_error("network has no nodes");

  double lat_lo = 90.0, lat_hi = -90.0, lng_lo = 180.0, lng_hi = -180.0;
  for (const auto& n : nodes) {
    if (!valid_wgs84(n.position))
      throw data_error("node " + std::to_string(n.id) + " has invalid coordinates");
    lat_lo = std::min(lat_lo, n.position.lat);
    lat_hi = std::max(lat_hi, n.position.lat);
    lng_lo = std::min(lng_lo, n.position.lng);
    lng_hi = std::max(lng_hi, n.position.lng);
  }
  net.anchor_ = {0.5 * (lat_lo + lat_hi), 0.5 * (lng_lo + lng_hi)};

  net.nodes_.reserve(nodes.size());
  for (const auto& n : nodes) {
    if (!net.node_index_.emplace(n.id, net.nodes_.size()).second)
      throw data_error("duplicate node id " + std::to_string(n.id));
    net.nodes_.push_back({n.id, n.position, net.to_local(n.position)});
  }

  net.segments_.reserve(segments.size());
  for (auto& s : segments) {
    if (!net.segment_index_.emplace(s.id, net.segments_.size()).second)
      throw data_error("duplicate segment id " + std::to_string(s.id));
    auto from = net.node_index_.find(s.from);
    if (from == net.node_index_.end())
      throw data_error("segment " + std::to_string(s.id) + " references unknown node " + std::to_string(s.from));
    auto to = net.node_index_.find(s.to);
    if (to == net.node_index_.end())
      throw data_error("segment " + std::to_string(s.id) + " references unknown node " + std::to_string(s.to));

    RoadSegment seg;
    seg.id = s.id;
    seg.from = s.from;
    seg.to = s.to;
    seg.level = s.level;
    seg.travel = s.travel;
    seg.geo_shape = s.shape.empty() ? std::vector<LatLng>{nodes[from->second].position, nodes[to->second].position}
                                    : std::move(s.shape);
    if (seg.geo_shape.size() < 2)
      throw data_error("segment " + std::to_string(s.id) + " has fewer than 2 shape points");
    seg.cumulative.push_back(0.0);
    for (const auto& g : seg.geo_shape) {
      if (!valid_wgs84(g))
        throw data_error("segment " + std::to_string(s.id) + " has invalid shape coordinates");
      seg.shape.push_back(net.to_local(g));
      if (seg.shape.size() > 1) {
        const double piece = distance(seg.shape[seg.shape.size() - 2], seg.shape.back());
        if (piece <= 0.0)
          throw data_error("segment " + std::to_string(s.id) + " has repeated consecutive shape points");
        seg.cumulative.push_back(seg.cumulative.back() + piece);
      }
    }
    if (seg.length() <= 0.0)
      throw data_error("segment " + std::to_string(s.id) + " has zero length");
    if (distance(seg.shape.front(), net.nodes_[from->second].local) > kShapeEndpointToleranceM ||
        distance(seg.shape.back(), net.nodes_[to->second].local) > kShapeEndpointToleranceM)
      throw data_error("segment " + std::to_string(s.id) + " shape does not start/end at its nodes");
    net.segments_.push_back(std::move(seg));
  }
  net.build_buckets();
  return net;
}

void RoadNetwork::build_buckets()
{
  min_ = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  max_ = {-min_.x, -min_.y};
  auto grow = [&](LocalPoint p) {
    min_ = {std::min(min_.x, p.x), std::min(min_.y, p.y)};
    max_ = {std::max(max_.x, p.x), std::max(max_.y, p.y)};
  };
  for (const auto& n : nodes_)
    grow(n.local);
  LocalPoint lo = min_, hi = max_;
  for (const auto& s : segments_)
    for (const auto& p : s.shape) {
      lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
    }
  bucket_origin_ = lo;
  bucket_cols_ = static_cast<std::int64_t>((hi.x - lo.x) / bucket_m_) + 1;
  bucket_rows_ = static_cast<std::int64_t>((hi.y - lo.y) / bucket_m_) + 1;
  buckets_.assign(static_cast<std::size_t>(bucket_cols_ * bucket_rows_), {});
  for (std::size_t k = 0; k < segments_.size(); ++k) {
    LocalPoint a{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    LocalPoint b{-a.x, -a.y};
    for (const auto& p : segments_[k].shape) {
      a = {std::min(a.x, p.x), std::min(a.y, p.y)};
      b = {std::max(b.x, p.x), std::max(b.y, p.y)};
    }
    const auto c0 = static_cast<std::int64_t>((a.x - lo.x) / bucket_m_);
    const auto c1 = static_cast<std::int64_t>((b.x - lo.x) / bucket_m_);
    const auto r0 = static_cast<std::int64_t>((a.y - lo.y) / bucket_m_);
    const auto r1 = static_cast<std::int64_t>((b.y - lo.y) / bucket_m_);
    for (auto r = r0; r <= r1; ++r)
      for (auto c = c0; c <= c1; ++c)
        buckets_[static_cast<std::size_t>(r * bucket_cols_ + c)].push_back(k);
  }
}

std::vector<const RoadSegment*> RoadNetwork::nearby(LocalPoint p, double radius) const
{
  std::vector<std::size_t> hits;
  auto clamp_idx = [](double v, std::int64_t n) {
    return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(v)), 0, n - 1);
  };
  if (buckets_.empty())
    return {};
  // Points far outside the bucket grid cannot be near any segment.
  if (p.x + radius < bucket_origin_.x || p.y + radius < bucket_origin_.y ||
      p.x - radius > bucket_origin_.x + static_cast<double>(bucket_cols_) * bucket_m_ ||
      p.y - radius > bucket_origin_.y + static_cast<double>(bucket_rows_) * bucket_m_)
    return {};
  const auto c0 = clamp_idx((p.x - radius - bucket_origin_.x) / bucket_m_, bucket_cols_);
  const auto c1 = clamp_idx((p.x + radius - bucket_origin_.x) / bucket_m_, bucket_cols_);
  const auto r0 = clamp_idx((p.y - radius - bucket_origin_.y) / bucket_m_, bucket_rows_);
  const auto r1 = clamp_idx((p.y + radius - bucket_origin_.y) / bucket_m_, bucket_rows_);
  for (auto r = r0; r <= r1; ++r)
    for (auto c = c0; c <= c1; ++c) {
      const auto& b = buckets_[static_cast<std::size_t>(r * bucket_cols_ + c)];
      hits.insert(hits.end(), b.begin(), b.end());
    }
  std::sort(hits.begin(), hits.end());
  hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
  std::vector<const RoadSegment*> out;
  out.reserve(hits.size());
  for (auto k : hits)
    out.push_back(&segments_[k]);
  std::sort(out.begin(), out.end(), [](const RoadSegment* a, const RoadSegment* b) { return a->id < b->id; });
  return out;
}

const Node& RoadNetwork::node(NodeId id) const
{
  auto it = node_index_.find(id);
  if (it == node_index_.end())
    throw data_error("unknown node " + std::to_string(id));
  return nodes_[it->second];
}

const RoadSegment* RoadNetwork::find_segment(SegmentId id) const
{
  auto it = segment_index_.find(id);
  return it == segment_index_.end() ? nullptr : &segments_[it->second];
}

const RoadSegment& RoadNetwork::segment(SegmentId id) const
{
  const RoadSegment* s = find_segment(id);
  if (s == nullptr)
    throw data_error("unknown segment " + std::to_string(id));
  return *s;
}

bool RoadNetwork::contains(const DirectedSegment& rid) const
{
  const RoadSegment* s = find_segment(rid.segment);
  return s != nullptr && (rid.dir == Direction::forward || s->bidirectional());
}

RoadNetwork parse_network(std::istream& in, const std::string& source)
{
  text::LineReader reader(in, source);
  std::vector<NodeSpec> nodes;
  std::vector<std::pair<std::size_t, SegmentSpec>> segments;
  std::set<NodeId> node_ids;
  std::string raw;
  while (reader.next(raw)) {
    const auto line = text::strip(raw);
    if (line.empty() || line.front() == '#')
      continue;
    const auto tok = text::split(line);
    if (tok[0] == "N") {
      if (tok.size() != 4)
        reader.fail("expected 'N <node_id> <lat> <lng>'");
      NodeSpec n;
      n.id = reader.number<NodeId>(tok[1], "node id");
      n.position = {reader.number<double>(tok[2], "latitude"), reader.number<double>(tok[3], "longitude")};
      if (!valid_wgs84(n.position))
        reader.fail("coordinates out of range");
      if (!node_ids.insert(n.id).second)
        reader.fail("duplicate node id " + std::to_string(n.id));
      nodes.push_back(n);
    } else if (tok[0] == "E") {
      if (tok.size() != 7)
        reader.fail("expected 'E <seg_id> <from> <to> <level> <U|B> <shape>'");
      SegmentSpec s;
      s.id = reader.number<SegmentId>(tok[1], "segment id");
      s.from = reader.number<NodeId>(tok[2], "from node");
      s.to = reader.number<NodeId>(tok[3], "to node");
      try {
        s.level = parse_level(std::string(tok[4]));
      } catch (const Error& e) {
        reader.fail(e.what());
      }
      if (tok[5] == "U")
        s.travel = Travel::unidirectional;
      else if (tok[5] == "B")
        s.travel = Travel::bidirectional;
      else
        reader.fail("direction must be U or B");
      if (tok[6] != "-") {
        for (auto pt : text::split(tok[6], ';')) {
          const auto ll = text::split(pt, ',');
          if (ll.size() != 2)
            reader.fail("bad shape point '" + std::string(pt) + "'");
          s.shape.push_back({reader.number<double>(ll[0], "shape latitude"), reader.number<double>(ll[1], "shape longitude")});
        }
        if (s.shape.size() < 2)
          reader.fail("shape needs at least 2 points");
      }
      segments.emplace_back(reader.line_no(), std::move(s));
    } else {
      reader.fail("unknown record type '" + std::string(tok[0]) + "'");
    }
  }

  std::vector<SegmentSpec> specs;
  specs.reserve(segments.size());
  for (auto& [line, s] : segments) {
    for (NodeId ref : {s.from, s.to})
      if (!node_ids.count(ref))
        throw parse_error(source, line, "unknown node " + std::to_string(ref));
    if (s.from == s.to && s.shape.empty())
      throw parse_error(source, line, "zero-length segment " + std::to_string(s.id));
    specs.push_back(std::move(s));
  }
  try {
    return RoadNetwork::build(std::move(nodes), std::move(specs));
  } catch (const Error& e) {
    throw data_error(source + ": " + e.what());
  }
}

RoadNetwork load_network(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw data_error("cannot open network file " + path.string());
  return parse_network(in, path.string());
}

void write_network(std::ostream& out, const RoadNetwork& net)
{
  out << "# curbsense road network\n";
  for (const auto& n : net.nodes())
    out << "N " << n.id << ' ' << format_double(n.position.lat) << ' ' << format_double(n.position.lng) << '\n';
  for (const auto& s : net.segments()) {
    out << "E " << s.id << ' ' << s.from << ' ' << s.to << ' ' << to_string(s.level) << ' '
        << (s.bidirectional() ? 'B' : 'U') << ' ';
    for (std::size_t i = 0; i < s.geo_shape.size(); ++i) {
      if (i)
        out << ';';
      out << format_double(s.geo_shape[i].lat) << ',' << format_double(s.geo_shape[i].lng);
    }
    out << '\n';
  }
}

void save_network(const RoadNetwork& net, const std::filesystem::path& path)
{
  std::ofstream out(path);
  if (!out)
    throw data_error("cannot write network file " + path.string());
  write_network(out, net);
}

std::vector<DirectedSegment> directed_segments(const RoadNetwork& net)
{
  std::vector<DirectedSegment> out;
  for (const auto& s : net.segments()) {
    out.push_back({s.id, Direction::forward});
    if (s.bidirectional())
      out.push_back({s.id, Direction::backward});
  }
  std::sort(out.begin(), out.end());
  return out;
}

} // namespace curbsense::geo
