#include "lanesurvey/dashcam_ingest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "lanesurvey/csv.hpp"
#include "lanesurvey/errors.hpp"

namespace lanesurvey {
namespace {

constexpr double kKnotsToMps = 1852.0 / 3600.0;

std::vector<std::string_view> split_fields(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == ',') {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

double to_double(std::string_view s) {
  const std::string str(s);
  std::size_t used = 0;
  const double v = std::stod(str, &used);
  if (used != str.size() || !std::isfinite(v)) throw InputError("bad number '" + str + "'");
  return v;
}

// hhmmss(.sss) to seconds of day.
double time_of_day(std::string_view s) {
  if (s.size() < 6) throw InputError("bad NMEA time");
  const int hh = std::stoi(std::string(s.substr(0, 2)));
  const int mm = std::stoi(std::string(s.substr(2, 2)));
  const double ss = to_double(s.substr(4));
  if (hh > 23 || mm > 59 || ss >= 61.0) throw InputError("NMEA time out of range");
  return hh * 3600.0 + mm * 60.0 + ss;
}

// ddmmyy to days since the epoch.
double epoch_day(std::string_view s) {
  if (s.size() != 6) throw InputError("bad NMEA date");
  const int dd = std::stoi(std::string(s.substr(0, 2)));
  const int mo = std::stoi(std::string(s.substr(2, 2)));
  const int yy = std::stoi(std::string(s.substr(4, 2)));
  const std::chrono::year_month_day ymd{std::chrono::year(yy < 80 ? 2000 + yy : 1900 + yy),
                                        std::chrono::month(static_cast<unsigned>(mo)),
                                        std::chrono::day(static_cast<unsigned>(dd))};
  if (!ymd.ok()) throw InputError("NMEA date out of range");
  return static_cast<double>(std::chrono::sys_days(ymd).time_since_epoch().count());
}

std::string slurp(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read {} {}", what, path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RawRmc {
  double tod;
  double timestamp;
  GeoPoint point;
  std::optional<double> course;
  std::optional<double> speed;
};

}  // namespace

unsigned nmea_checksum(std::string_view sentence) {
  unsigned sum = 0;
  std::size_t i = sentence.empty() || sentence[0] != '$' ? 0 : 1;
  for (; i < sentence.size() && sentence[i] != '*'; ++i) sum ^= static_cast<unsigned char>(sentence[i]);
  return sum;
}

double nmea_to_degrees(std::string_view value, char hemisphere) {
  const auto dot = value.find('.');
  const std::size_t int_len = dot == std::string_view::npos ? value.size() : dot;
  if (int_len < 3) throw InputError("bad NMEA coordinate '" + std::string(value) + "'");
  const double degrees = to_double(value.substr(0, int_len - 2));
  const double minutes = to_double(value.substr(int_len - 2));
  if (minutes >= 60.0) throw InputError("NMEA minutes out of range");
  double v = degrees + minutes / 60.0;
  switch (hemisphere) {
    case 'N':
    case 'E':
      break;
    case 'S':
    case 'W':
      v = -v;
      break;
    default:
      throw InputError(std::string("bad hemisphere '") + hemisphere + "'");
  }
  return v;
}

NmeaTrack parse_nmea(std::string_view text) {
  NmeaTrack track;
  std::vector<RawRmc> rmcs;
  std::map<long, double> altitude_by_centisecond;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
    if (line.empty()) continue;
    try {
      if (line[0] != '$') throw InputError("missing '$'");
      const auto star = line.find('*');
      if (star == std::string_view::npos || star + 3 != line.size()) throw InputError("missing checksum");
      const unsigned expected = static_cast<unsigned>(std::stoul(std::string(line.substr(star + 1)), nullptr, 16));
      if (expected != nmea_checksum(line)) throw InputError("checksum mismatch");
      const auto f = split_fields(line.substr(1, star - 1));
      if (f.empty() || f[0].size() < 5) throw InputError("bad sentence id");
      const std::string_view type = f[0].substr(f[0].size() - 3);
      if (type == "RMC") {
        if (f.size() < 10) throw InputError("short RMC sentence");
        if (f[2] != "A") {
          track.diagnostics.push_back(fmt::format("line {}: void RMC fix skipped", line_no));
          continue;
        }
        RawRmc r;
        r.tod = time_of_day(f[1]);
        r.timestamp = epoch_day(f[9]) * 86400.0 + r.tod;
        if (f[4].size() != 1 || f[6].size() != 1) throw InputError("bad hemisphere");
        r.point = {nmea_to_degrees(f[3], f[4][0]), nmea_to_degrees(f[5], f[6][0])};
        if (!is_valid(r.point)) throw InputError("coordinates out of range");
        if (!f[7].empty()) r.speed = to_double(f[7]) * kKnotsToMps;
        if (!f[8].empty()) r.course = to_double(f[8]);
        rmcs.push_back(r);
      } else if (type == "GGA") {
        if (f.size() < 10) throw InputError("short GGA sentence");
        if (f[1].empty() || f[9].empty()) continue;
        altitude_by_centisecond[std::lround(time_of_day(f[1]) * 100.0)] = to_double(f[9]);
      }
    } catch (const std::exception& e) {
      track.diagnostics.push_back(fmt::format("line {}: {}", line_no, e.what()));
    }
  }

  for (const RawRmc& r : rmcs) {
    if (!track.fixes.empty() && r.timestamp <= track.fixes.back().timestamp) {
      track.diagnostics.push_back(fmt::format("fix at t={} not after previous fix; skipped", r.timestamp));
      continue;
    }
    NmeaFix fix;
    fix.timestamp = r.timestamp;
    fix.point = r.point;
    fix.speed_mps = r.speed;
    if (r.course) {
      fix.heading = Heading(*r.course);
    } else if (!track.fixes.empty()) {
      fix.heading = track.fixes.back().heading;
    }
    auto alt = altitude_by_centisecond.find(std::lround(r.tod * 100.0));
    if (alt != altitude_by_centisecond.end()) fix.altitude_m = alt->second;
    track.fixes.push_back(fix);
  }
  // A leading fix with no course takes the bearing to the next distinct fix.
  if (!rmcs.empty() && !rmcs.front().course && track.fixes.size() > 1) {
    for (std::size_t i = 1; i < track.fixes.size(); ++i) {
      if (track.fixes[i].point != track.fixes[0].point) {
        track.fixes[0].heading = bearing(track.fixes[0].point, track.fixes[i].point);
        break;
      }
    }
  }
  if (track.fixes.empty()) throw InputError("NMEA track contains no valid fixes");
  return track;
}

NmeaTrack read_nmea(const std::filesystem::path& path) {
  try {
    return parse_nmea(slurp(path, "NMEA file"));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

int FrameManifest::step() const {
  if (!(fps_source > 0.0) || !(fps_sampled > 0.0) || fps_sampled > fps_source) {
    throw ConfigError("frame rates must satisfy 0 < fps_sampled <= fps_source");
  }
  return static_cast<int>(std::floor(fps_source / fps_sampled + 1e-9));
}

FrameManifest sample_manifest(std::string footage_id, long frame_count, double fps_source, double fps_sampled,
                              std::string_view pattern) {
  FrameManifest m;
  m.footage_id = std::move(footage_id);
  m.fps_source = fps_source;
  m.fps_sampled = fps_sampled;
  const int step = m.step();
  for (long i = 0; i < frame_count; i += step) {
    m.frames.push_back({i, fmt::format(fmt::runtime(pattern), i)});
  }
  return m;
}

FrameManifest read_frame_manifest(const std::filesystem::path& path, std::string footage_id) {
  const csv::Table table = csv::parse(slurp(path, "frame manifest"), false);
  FrameManifest m;
  m.footage_id = std::move(footage_id);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const csv::Row& row = table.rows[i];
    if (i == 0 && !row.empty() && row[0] == "frame_index") continue;
    if (row.size() != 2) {
      throw InputError(fmt::format("{} line {}: expected frame_index,relative_path", path.string(),
                                   table.line_numbers[i]));
    }
    std::size_t used = 0;
    long idx = -1;
    try {
      idx = std::stol(row[0], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != row[0].size() || idx < 0) {
      throw InputError(fmt::format("{} line {}: bad frame index '{}'", path.string(), table.line_numbers[i], row[0]));
    }
    if (!m.frames.empty() && idx <= m.frames.back().frame_index) {
      throw InputError(fmt::format("{} line {}: frame indices must increase", path.string(), table.line_numbers[i]));
    }
    m.frames.push_back({idx, row[1]});
  }
  return m;
}

void write_frame_manifest(const std::filesystem::path& path, const FrameManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "frame_index,relative_path\n";
  for (const auto& f : manifest.frames) csv::write_row(out, {std::to_string(f.frame_index), f.path});
  if (!out) throw IoError("write failed: " + path.string());
}

GeotagResult geotag_frames(const FrameManifest& manifest, const std::vector<NmeaFix>& fixes) {
  if (fixes.empty()) throw InputError("cannot geotag frames: empty NMEA track");
  if (!(manifest.fps_source > 0.0)) throw ConfigError("fps_source must be positive");
  GeotagResult result;
  const double t0 = fixes.front().timestamp;
  const double t_end = fixes.back().timestamp;
  for (const ManifestFrame& f : manifest.frames) {
    const double t = t0 + static_cast<double>(f.frame_index) / manifest.fps_source;
    GeotaggedFrame g;
    g.image_path = f.path;
    g.timestamp = t;
    if (t >= t_end) {
      if (t > t_end) {
        result.diagnostics.push_back(
            fmt::format("{}: frame {} after last fix; clamped", manifest.footage_id, f.frame_index));
      }
      g.point = fixes.back().point;
      g.heading = fixes.back().heading;
    } else {
      auto hi = std::upper_bound(fixes.begin(), fixes.end(), t,
                                 [](double v, const NmeaFix& fx) { return v < fx.timestamp; });
      const NmeaFix& b = *hi;
      const NmeaFix& a = *(hi - 1);
      const double u = (t - a.timestamp) / (b.timestamp - a.timestamp);
      g.point = {a.point.lat + u * (b.point.lat - a.point.lat), a.point.lon + u * (b.point.lon - a.point.lon)};
      g.heading = interpolate(a.heading, b.heading, u);
    }
    result.frames.push_back(std::move(g));
  }
  return result;
}

void write_metadata(const std::filesystem::path& path, const std::vector<GeotaggedFrame>& frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << kMetadataHeader << '\n';
  for (const auto& f : frames) {
    csv::write_row(out, {f.image_path, fmt::format("{:.7f}", f.point.lat), fmt::format("{:.7f}", f.point.lon),
                         fmt::format("{:.1f}", f.heading.degrees()), fmt::format("{:.3f}", f.timestamp)});
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<GeotaggedFrame> read_metadata(const std::filesystem::path& path) {
  const csv::Table table = csv::read_file(path);
  const std::string src = path.string();
  const std::size_t c_path = table.require_column("image_path", src);
  const std::size_t c_lat = table.require_column("lat", src);
  const std::size_t c_lon = table.require_column("lon", src);
  const std::size_t c_hdg = table.require_column("heading", src);
  const std::size_t c_ts = table.require_column("timestamp", src);
  std::vector<GeotaggedFrame> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const csv::Row& row = table.rows[i];
    try {
      const std::size_t need = std::max({c_path, c_lat, c_lon, c_hdg, c_ts});
      if (row.size() <= need) throw InputError("short row");
      GeotaggedFrame f;
      f.image_path = row[c_path];
      f.point = {to_double(row[c_lat]), to_double(row[c_lon])};
      if (!is_valid(f.point)) throw InputError("coordinates out of range");
      f.heading = Heading(to_double(row[c_hdg]));
      f.timestamp = to_double(row[c_ts]);
      out.push_back(std::move(f));
    } catch (const std::exception& e) {
      throw InputError(fmt::format("{} line {}: {}", src, table.line_numbers[i], e.what()));
    }
  }
  return out;
}

GeotagResult ingest_footage_dir(const std::filesystem::path& dir, double fps_source) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("footage directory not found: " + dir.string());
  std::vector<fs::path> tracks;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".nmea") tracks.push_back(e.path());
  }
  std::sort(tracks.begin(), tracks.end());
  GeotagResult all;
  for (const fs::path& nmea : tracks) {
    const std::string base = nmea.stem().string();
    const fs::path manifest_path = dir / base / "frames.csv";
    if (!fs::exists(manifest_path)) {
      all.diagnostics.push_back("no frames.csv for " + nmea.filename().string() + "; skipped");
      continue;
    }
    NmeaTrack track = read_nmea(nmea);
    for (auto& d : track.diagnostics) all.diagnostics.push_back(base + ": " + d);
    FrameManifest m = read_frame_manifest(manifest_path, base);
    m.fps_source = fps_source;
    for (auto& f : m.frames) f.path = (fs::path(base) / f.path).generic_string();
    GeotagResult r = geotag_frames(m, track.fixes);
    all.frames.insert(all.frames.end(), r.frames.begin(), r.frames.end());
    all.diagnostics.insert(all.diagnostics.end(), r.diagnostics.begin(), r.diagnostics.end());
  }
  return all;
}

}  // namespace lanesurvey
