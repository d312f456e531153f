#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace curbsense::geo {

constexpr double kEarthRadiusM = 6371000.0;
constexpr double kPi = 3.14159265358979323846;

using NodeId = std::int64_t;
using SegmentId = std::int64_t;

struct LatLng
{
  double lat = 0.0;
  double lng = 0.0;
};

/// A timestamped GPS record (WGS84 degrees, integer seconds since epoch).
struct GpsPoint
{
  double lat = 0.0;
  double lng = 0.0;
  std::int64_t t = 0;

  LatLng position() const { return {lat, lng}; }

  bool operator==(const GpsPoint&) const = default;
};

/// Planar working frame: meters east / north of the network anchor.
struct LocalPoint
{
  double x = 0.0;
  double y = 0.0;
};

inline LocalPoint operator-(LocalPoint a, LocalPoint b) { return {a.x - b.x, a.y - b.y}; }
inline LocalPoint operator+(LocalPoint a, LocalPoint b) { return {a.x + b.x, a.y + b.y}; }
inline LocalPoint operator*(double s, LocalPoint a) { return {s * a.x, s * a.y}; }
double norm(LocalPoint v);
double distance(LocalPoint a, LocalPoint b);
/// z-component of a x b; positive when b lies to the left of a.
inline double cross(LocalPoint a, LocalPoint b) { return a.x * b.y - a.y * b.x; }
inline double dot(LocalPoint a, LocalPoint b) { return a.x * b.x + a.y * b.y; }

bool valid_wgs84(LatLng p);

/// Equirectangular projection around `anchor`.
LocalPoint to_local(LatLng anchor, LatLng p);
LatLng from_local(LatLng anchor, LocalPoint p);

enum class RoadLevel : std::uint8_t { highway, arterial, local, supplementary };
enum class Travel : std::uint8_t { unidirectional, bidirectional };
enum class Direction : std::uint8_t { forward, backward };

const char* to_string(RoadLevel level);
RoadLevel parse_level(const std::string& s);
inline Direction flip(Direction d) { return d == Direction::forward ? Direction::backward : Direction::forward; }
inline char dir_char(Direction d) { return d == Direction::forward ? 'F' : 'B'; }

/// Road segment id paired with a travel-direction flag.
struct DirectedSegment
{
  SegmentId segment = 0;
  Direction dir = Direction::forward;

  auto operator<=>(const DirectedSegment&) const = default;
};

std::string to_string(const DirectedSegment& rid);

struct DirectedSegmentHash
{
  std::size_t operator()(const DirectedSegment& d) const noexcept
  {
    return std::hash<std::int64_t>{}(d.segment * 2 + static_cast<int>(d.dir));
  }
};

struct Node
{
  NodeId id = 0;
  LatLng position;
  LocalPoint local;
};

struct RoadSegment
{
  SegmentId id = 0;
  NodeId from = 0;
  NodeId to = 0;
  RoadLevel level = RoadLevel::local;
  Travel travel = Travel::bidirectional;
  std::vector<LatLng> geo_shape;
  std::vector<LocalPoint> shape;
  /// cumulative[i] = polyline length from shape[0] to shape[i].
  std::vector<double> cumulative;

  double length() const { return cumulative.empty() ? 0.0 : cumulative.back(); }
  bool bidirectional() const { return travel == Travel::bidirectional; }
};

/// Signed lateral shift (left of travel positive), offset along travel, and |shift|.
struct Projection
{
  double shift = 0.0;
  double offset = 0.0;
  double distance = 0.0;
};

/// Nearest point on the polyline; offset is measured from the travel-direction origin.
Projection project(const RoadSegment& seg, Direction dir, LocalPoint p);

/// Inverse of `project` along the polyline: the point `shift` meters left of
/// the polyline position at `offset` (both in the `dir` frame).
LocalPoint locate(const RoadSegment& seg, Direction dir, double offset, double shift = 0.0);

/// Unit tangent of the polyline at `offset`, oriented along `dir`.
LocalPoint tangent(const RoadSegment& seg, Direction dir, double offset);

struct NodeSpec
{
  NodeId id = 0;
  LatLng position;
};

struct SegmentSpec
{
  SegmentId id = 0;
  NodeId from = 0;
  NodeId to = 0;
  RoadLevel level = RoadLevel::local;
  Travel travel = Travel::bidirectional;
  /// Full polyline including both end nodes; empty means a straight edge.
  std::vector<LatLng> shape;
};

/// Immutable directed road graph with polyline geometry in a local planar frame.
class RoadNetwork
{
public:
  RoadNetwork() = default;

  /// Validates and builds; the anchor is the centre of the node bounding box.
  static RoadNetwork build(std::vector<NodeSpec> nodes, std::vector<SegmentSpec> segments);

  LatLng anchor() const { return anchor_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<RoadSegment>& segments() const { return segments_; }

  const Node& node(NodeId id) const;
  const RoadSegment& segment(SegmentId id) const;
  const RoadSegment* find_segment(SegmentId id) const;
  bool contains(const DirectedSegment& rid) const;

  LocalPoint to_local(LatLng p) const { return geo::to_local(anchor_, p); }
  LatLng from_local(LocalPoint p) const { return geo::from_local(anchor_, p); }

  /// Segments whose bounding box lies within `radius` of p, ordered by id.
  std::vector<const RoadSegment*> nearby(LocalPoint p, double radius) const;

  /// Bounding box of node positions in the local frame.
  LocalPoint min_corner() const { return min_; }
  LocalPoint max_corner() const { return max_; }

private:
  void build_buckets();

  LatLng anchor_;
  std::vector<Node> nodes_;
  std::vector<RoadSegment> segments_;
  std::unordered_map<NodeId, std::size_t> node_index_;
  std::unordered_map<SegmentId, std::size_t> segment_index_;

  LocalPoint min_;
  LocalPoint max_;
  double bucket_m_ = 50.0;
  std::int64_t bucket_cols_ = 0;
  std::int64_t bucket_rows_ = 0;
  LocalPoint bucket_origin_;
  std::vector<std::vector<std::size_t>> buckets_;
};

RoadNetwork parse_network(std::istream& in, const std::string& source = "<network>");
RoadNetwork load_network(const std::filesystem::path& path);
void write_network(std::ostream& out, const RoadNetwork& net);
void save_network(const RoadNetwork& net, const std::filesystem::path& path);

/// One entry per unidirectional segment, two per bidirectional; ordered by (segment, dir).
std::vector<DirectedSegment> directed_segments(const RoadNetwork& net);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

} // namespace curbsense::geo
