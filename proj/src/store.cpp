#include "curbsense/store.hpp"

#include "binary.hpp"
#include "curbsense/error.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

namespace curbsense::store {

namespace {

constexpr char kMagic[6] = "CSIX1";
constexpr std::uint32_t kVersion = 1;

bool entry_less(const IndexEntry& a, const IndexEntry& b)
{
  if (a.entry_time != b.entry_time)
    return a.entry_time < b.entry_time;
  if (a.traj.key != b.traj.key)
    return a.traj.key < b.traj.key;
  return std::lexicographical_compare(
    a.traj.points.begin(), a.traj.points.end(), b.traj.points.begin(), b.traj.points.end(),
    [](const auto& x, const auto& y) { return std::tie(x.t, x.offset, x.shift) < std::tie(y.t, y.offset, y.shift); });
}

} // namespace

void TimeRange::validate() const
{
  if (!(start < end))
    throw usage_error("time range requires start < end (got " + std::to_string(start) + ".." + std::to_string(end) +
                      ")");
}

TimeRange parse_range(const std::string& s)
{
  const auto dots = s.find("..");
  if (dots == std::string::npos)
    throw usage_error("time range must look like <start>..<end>");
  TimeRange r;
  auto num = [&](std::string_view tok, std::int64_t& v) {
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
      throw usage_error("bad time range '" + s + "'");
  };
  num(std::string_view(s).substr(0, dots), r.start);
  num(std::string_view(s).substr(dots + 2), r.end);
  r.validate();
  return r;
}

RoadTimeIndex RoadTimeIndex::build(std::vector<MatchedTrajectory> mts)
{
  RoadTimeIndex idx;
  for (auto& mt : mts) {
    if (mt.points.empty())
      continue;
    const auto rid = mt.rid;
    const auto t = mt.entry_time();
    idx.table_[rid].push_back({t, std::move(mt)});
    ++idx.size_;
  }
  for (auto& [rid, entries] : idx.table_)
    std::sort(entries.begin(), entries.end(), entry_less);
  return idx;
}

std::span<const IndexEntry> RoadTimeIndex::query(const DirectedSegment& rid, const TimeRange& range) const
{
  auto it = table_.find(rid);
  if (it == table_.end())
    return {};
  const auto& v = it->second;
  auto lo = std::lower_bound(v.begin(), v.end(), range.start,
                             [](const IndexEntry& e, std::int64_t t) { return e.entry_time < t; });
  auto hi = std::lower_bound(lo, v.end(), range.end,
                             [](const IndexEntry& e, std::int64_t t) { return e.entry_time < t; });
  return {v.data() + (lo - v.begin()), static_cast<std::size_t>(hi - lo)};
}

std::span<const IndexEntry> RoadTimeIndex::all(const DirectedSegment& rid) const
{
  auto it = table_.find(rid);
  if (it == table_.end())
    return {};
  return it->second;
}

std::vector<DirectedSegment> RoadTimeIndex::rids() const
{
  std::vector<DirectedSegment> out;
  out.reserve(table_.size());
  for (const auto& [rid, entries] : table_)
    out.push_back(rid);
  return out;
}

void write_index(std::ostream& out, const RoadTimeIndex& idx)
{
  binary::Writer w(out);
  binary::put_header(w, kMagic, kVersion);
  w.put<std::uint64_t>(idx.table().size());
  for (const auto& [rid, entries] : idx.table()) {
    w.put<std::int64_t>(rid.segment);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(rid.dir));
    w.put<std::uint64_t>(entries.size());
    for (const auto& e : entries) {
      w.put<std::int64_t>(e.entry_time);
      w.put<std::int64_t>(e.traj.key.traj_id);
      w.put<std::int32_t>(e.traj.key.sub_seq);
      w.put<std::int32_t>(e.traj.key.visit);
      w.put<std::uint64_t>(e.traj.points.size());
      for (const auto& p : e.traj.points) {
        w.put<std::int64_t>(p.t);
        w.put<double>(p.offset);
        w.put<double>(p.shift);
      }
    }
  }
}

RoadTimeIndex read_index(std::istream& in, const std::string& source)
{
  binary::Reader r(in, source);
  binary::expect_header(r, kMagic, kVersion);
  std::vector<MatchedTrajectory> mts;
  const auto nrids = r.count();
  for (std::uint64_t i = 0; i < nrids; ++i) {
    DirectedSegment rid;
    rid.segment = r.get<std::int64_t>();
    const auto dir = r.get<std::uint8_t>();
    if (dir > 1)
      throw data_error(source + ": corrupt direction flag");
    rid.dir = static_cast<geo::Direction>(dir);
    const auto n = r.count();
    for (std::uint64_t k = 0; k < n; ++k) {
      MatchedTrajectory mt;
      mt.rid = rid;
      const auto entry_time = r.get<std::int64_t>();
      mt.key.traj_id = r.get<std::int64_t>();
      mt.key.sub_seq = r.get<std::int32_t>();
      mt.key.visit = r.get<std::int32_t>();
      const auto np = r.count();
      if (np == 0)
        throw data_error(source + ": empty trajectory in index");
      mt.points.resize(np);
      for (auto& p : mt.points) {
        p.t = r.get<std::int64_t>();
        p.offset = r.get<double>();
        p.shift = r.get<double>();
      }
      if (mt.entry_time() != entry_time)
        throw data_error(source + ": entry time does not match first point");
      mts.push_back(std::move(mt));
    }
  }
  r.expect_end();
  return RoadTimeIndex::build(std::move(mts));
}

void save_index(const RoadTimeIndex& idx, const std::filesystem::path& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw data_error("cannot write index file " + path.string());
  write_index(out, idx);
}

RoadTimeIndex load_index(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw data_error("cannot open index file " + path.string());
  return read_index(in, path.string());
}

} // namespace curbsense::store
