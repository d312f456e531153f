#pragma once

#include "curbsense/match.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace curbsense::store {

using geo::DirectedSegment;
using mapmatch::MatchedTrajectory;

/// Half-open [start, end) in seconds.
struct TimeRange
{
  std::int64_t start = 0;
  std::int64_t end = 0;

  bool contains(std::int64_t t) const { return t >= start && t < end; }
  std::int64_t length() const { return end - start; }
  void validate() const;
  auto operator<=>(const TimeRange&) const = default;
};

/// Parses "<start>..<end>".
TimeRange parse_range(const std::string& s);

struct IndexEntry
{
  std::int64_t entry_time = 0;
  MatchedTrajectory traj;

  bool operator==(const IndexEntry&) const = default;
};

/// Inverted index DirectedSegment -> trajectories sorted by entry time.
class RoadTimeIndex
{
public:
  using Table = std::map<DirectedSegment, std::vector<IndexEntry>>;

  RoadTimeIndex() = default;

  /// Order-insensitive: ties on entry time are broken by trajectory key, then content.
  static RoadTimeIndex build(std::vector<MatchedTrajectory> mts);

  /// Entries of `rid` with start <= entry_time < end; empty for unknown rids.
  std::span<const IndexEntry> query(const DirectedSegment& rid, const TimeRange& range) const;

  /// Every entry of `rid` in time order.
  std::span<const IndexEntry> all(const DirectedSegment& rid) const;

  std::vector<DirectedSegment> rids() const;
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  const Table& table() const { return table_; }

  bool operator==(const RoadTimeIndex& o) const { return table_ == o.table_; }

private:
  Table table_;
  std::size_t size_ = 0;
};

void write_index(std::ostream& out, const RoadTimeIndex& idx);
RoadTimeIndex read_index(std::istream& in, const std::string& source = "<index>");
void save_index(const RoadTimeIndex& idx, const std::filesystem::path& path);
RoadTimeIndex load_index(const std::filesystem::path& path);

} // namespace curbsense::store
