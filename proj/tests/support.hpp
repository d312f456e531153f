#pragma once

#include "curbsense/geo.hpp"
#include "curbsense/match.hpp"

#include <sstream>
#include <string>
#include <vector>

namespace testing {

using namespace curbsense;

/// A bare segment in local coordinates, outside any network.
inline geo::RoadSegment make_segment(std::vector<geo::LocalPoint> shape, geo::SegmentId id = 1,
                                     geo::Travel travel = geo::Travel::bidirectional)
{
  geo::RoadSegment s;
  s.id = id;
  s.travel = travel;
  s.shape = std::move(shape);
  s.cumulative.push_back(0.0);
  for (std::size_t i = 1; i < s.shape.size(); ++i)
    s.cumulative.push_back(s.cumulative.back() + geo::distance(s.shape[i - 1], s.shape[i]));
  return s;
}

struct LocalSeg
{
  geo::SegmentId id;
  geo::LocalPoint a;
  geo::LocalPoint b;
  geo::Travel travel = geo::Travel::bidirectional;
  geo::RoadLevel level = geo::RoadLevel::local;
};

/// Builds a network from segments given in meters around a fixed anchor.
/// Each segment gets its own pair of nodes.
inline geo::RoadNetwork make_network(const std::vector<LocalSeg>& segs, geo::LatLng anchor = {39.9, 116.4})
{
  std::vector<geo::NodeSpec> nodes;
  std::vector<geo::SegmentSpec> specs;
  geo::NodeId next = 1;
  for (const auto& s : segs) {
    nodes.push_back({next, geo::from_local(anchor, s.a)});
    nodes.push_back({next + 1, geo::from_local(anchor, s.b)});
    specs.push_back({s.id, next, next + 1, s.level, s.travel, {}});
    next += 2;
  }
  return geo::RoadNetwork::build(std::move(nodes), std::move(specs));
}

/// Matched trajectory on `rid` with the given offsets and shifts, 1 s apart.
inline mapmatch::MatchedTrajectory make_matched(geo::DirectedSegment rid, const std::vector<double>& offsets,
                                                const std::vector<double>& shifts, std::int64_t t0 = 0,
                                                std::int64_t id = 1)
{
  mapmatch::MatchedTrajectory mt;
  mt.key = {id, 0, 0};
  mt.rid = rid;
  for (std::size_t i = 0; i < offsets.size(); ++i)
    mt.points.push_back({t0 + static_cast<std::int64_t>(i), offsets[i], shifts[i]});
  return mt;
}

inline std::istringstream text(const std::string& s) { return std::istringstream(s); }

} // namespace testing
