#include "curbsense/traj.hpp"

#include "curbsense/error.hpp"
#include "text.hpp"

#include <fstream>
#include <ostream>

namespace curbsense::prep {

void CleaningConfig::validate() const
{
  if (!(v_max > v_min) || v_min < 0.0)
    throw usage_error("cleaning config requires v_max > v_min >= 0");
  if (!(gap_max_s > 0.0) || !(gap_max_m > 0.0))
    throw usage_error("cleaning config requires positive gap thresholds");
  if (min_points < 2)
    throw usage_error("cleaning config requires min_points >= 2");
}

double speed_between(const GpsPoint& a, const GpsPoint& b, geo::LatLng anchor)
{
  if (b.t <= a.t)
    throw data_error("non-increasing timestamps " + std::to_string(a.t) + " -> " + std::to_string(b.t));
  const double d = geo::distance(geo::to_local(anchor, a.position()), geo::to_local(anchor, b.position()));
  return d / static_cast<double>(b.t - a.t);
}

bool pair_qualifies(const GpsPoint& a, const GpsPoint& b, geo::LatLng anchor, const CleaningConfig& cfg)
{
  if (b.t <= a.t)
    return false;
  const double dt = static_cast<double>(b.t - a.t);
  const double d = geo::distance(geo::to_local(anchor, a.position()), geo::to_local(anchor, b.position()));
  const double v = d / dt;
  return v >= cfg.v_min && v <= cfg.v_max && dt <= cfg.gap_max_s && d <= cfg.gap_max_m;
}

std::vector<SubTrajectory> clean(const RawTrajectory& tr, geo::LatLng anchor, const CleaningConfig& cfg)
{
  std::vector<SubTrajectory> out;
  std::vector<GpsPoint> run;
  auto flush = [&] {
    if (run.size() >= cfg.min_points)
      out.push_back({tr.traj_id, static_cast<int>(out.size()), run});
    run.clear();
  };
  for (std::size_t i = 0; i < tr.points.size(); ++i) {
    if (!run.empty() && !pair_qualifies(run.back(), tr.points[i], anchor, cfg))
      flush();
    run.push_back(tr.points[i]);
  }
  flush();
  return out;
}

void validate(const RawTrajectory& tr)
{
  if (tr.points.empty())
    throw data_error("trajectory " + std::to_string(tr.traj_id) + " has no points");
  for (std::size_t i = 0; i < tr.points.size(); ++i) {
    if (!geo::valid_wgs84(tr.points[i].position()) || tr.points[i].t < 0)
      throw data_error("trajectory " + std::to_string(tr.traj_id) + " has an invalid point");
    if (i > 0 && tr.points[i].t <= tr.points[i - 1].t)
      throw data_error("trajectory " + std::to_string(tr.traj_id) + " timestamps are not strictly increasing");
  }
}

std::vector<RawTrajectory> parse_trajectories(std::istream& in, const std::string& source)
{
  text::LineReader reader(in, source);
  std::vector<RawTrajectory> out;
  std::string raw;
  while (reader.next(raw)) {
    const auto line = text::strip(raw);
    if (line.empty() || line.front() == '#')
      continue;
    const auto tok = text::split(line);
    if (tok[0] == "T") {
      if (tok.size() != 4)
        reader.fail("expected 'T <traj_id> <bike_id> <user_id>'");
      RawTrajectory tr;
      tr.traj_id = reader.number<std::int64_t>(tok[1], "trajectory id");
      tr.bike_id = reader.number<std::int64_t>(tok[2], "bike id");
      tr.user_id = reader.number<std::int64_t>(tok[3], "user id");
      out.push_back(std::move(tr));
    } else if (tok[0] == "P") {
      if (out.empty())
        reader.fail("point before any trajectory header");
      if (tok.size() != 4)
        reader.fail("expected 'P <t> <lat> <lng>'");
      GpsPoint p;
      p.t = reader.number<std::int64_t>(tok[1], "timestamp");
      p.lat = reader.number<double>(tok[2], "latitude");
      p.lng = reader.number<double>(tok[3], "longitude");
      if (!geo::valid_wgs84(p.position()) || p.t < 0)
        reader.fail("point out of range");
      auto& pts = out.back().points;
      if (!pts.empty() && p.t <= pts.back().t)
        reader.fail("timestamps must be strictly increasing");
      pts.push_back(p);
    } else {
      reader.fail("unknown record type '" + std::string(tok[0]) + "'");
    }
  }
  for (const auto& tr : out)
    if (tr.points.empty())
      throw data_error(source + ": trajectory " + std::to_string(tr.traj_id) + " has no points");
  return out;
}

std::vector<RawTrajectory> load_trajectories(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw data_error("cannot open trajectory file " + path.string());
  return parse_trajectories(in, path.string());
}

void write_trajectories(std::ostream& out, const std::vector<RawTrajectory>& trajs)
{
  bool first = true;
  for (const auto& tr : trajs) {
    if (!first)
      out << '\n';
    first = false;
    out << "T " << tr.traj_id << ' ' << tr.bike_id << ' ' << tr.user_id << '\n';
    for (const auto& p : tr.points)
      out << "P " << p.t << ' ' << geo::format_double(p.lat) << ' ' << geo::format_double(p.lng) << '\n';
  }
}

void save_trajectories(const std::vector<RawTrajectory>& trajs, const std::filesystem::path& path)
{
  std::ofstream out(path);
  if (!out)
    throw data_error("cannot write trajectory file " + path.string());
  write_trajectories(out, trajs);
}

} // namespace curbsense::prep
