#include "lanesurvey/detector_gateway.hpp"

#include <spawn.h>
#include <sys/wait.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "lanesurvey/csv.hpp"
#include "lanesurvey/errors.hpp"
#include "lanesurvey/image_io.hpp"

extern char** environ;

namespace lanesurvey {
namespace {

std::string slurp_text(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read {} {}", what, path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& s, const char* field) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw InputError(fmt::format("bad {} '{}'", field, s));
}

std::optional<std::int64_t> parse_optional_id(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t used = 0;
  const long long v = std::stoll(s, &used);
  if (used != s.size()) throw InputError("bad id '" + s + "'");
  return v;
}

std::string format_id(const std::optional<std::int64_t>& id) { return id ? std::to_string(*id) : std::string(); }

}  // namespace

void Detection::validate() const {
  if (image_ref.empty()) throw InputError("empty image_ref");
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    throw InputError(fmt::format("confidence {} outside [0, 1]", confidence));
  }
  const auto ok = [](double lo, double hi) { return lo >= 0.0 && lo < hi && hi <= 1.0; };
  if (!ok(bbox.x_min, bbox.x_max) || !ok(bbox.y_min, bbox.y_max)) {
    throw InputError(fmt::format("invalid bbox ({}, {}, {}, {})", bbox.x_min, bbox.y_min, bbox.x_max, bbox.y_max));
  }
}

void DetectionMask::validate() const {
  if (polygon.size() < 3) throw ConfigError("detection mask needs at least 3 vertices");
  for (const auto& [x, y] : polygon) {
    if (!std::isfinite(x) || !std::isfinite(y)) throw ConfigError("detection mask vertex not finite");
  }
}

bool DetectionMask::contains(double x, double y) const {
  bool inside = false;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto [xi, yi] = polygon[i];
    const auto [xj, yj] = polygon[j];
    // On-edge test.
    const double cross = (xj - xi) * (y - yi) - (yj - yi) * (x - xi);
    if (std::fabs(cross) < 1e-12 && x >= std::min(xi, xj) && x <= std::max(xi, xj) && y >= std::min(yi, yj) &&
        y <= std::max(yi, yj)) {
      return true;
    }
    if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) inside = !inside;
  }
  return inside;
}

DetectionMask DetectionMask::full_frame() { return {{{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}}}; }

DetectionMask DetectionMask::default_mask() {
  return {{{0.0, 0.55}, {0.45, 0.55}, {0.60, 0.82}, {0.0, 0.82}}};
}

std::vector<std::string> parse_label_map(std::string_view text) {
  std::vector<std::string> labels;
  const std::string s(text);
  static const std::regex name_re(R"re(\bname\s*:\s*['"]([^'"]+)['"])re");
  for (auto it = std::sregex_iterator(s.begin(), s.end(), name_re); it != std::sregex_iterator(); ++it) {
    labels.push_back((*it)[1].str());
  }
  if (!labels.empty()) return labels;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (!t.empty() && t[0] != '#') labels.push_back(t);
  }
  return labels;
}

std::vector<std::string> read_label_map(const std::filesystem::path& path) {
  auto labels = parse_label_map(slurp_text(path, "label map"));
  if (labels.empty()) throw InputError("label map " + path.string() + " defines no labels");
  return labels;
}

std::vector<Detection> parse_detections(std::string_view text, const std::vector<std::string>& labels) {
  const std::set<std::string> known(labels.begin(), labels.end());
  const csv::Table table = csv::parse(text, false);
  std::vector<Detection> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const csv::Row& row = table.rows[i];
    const std::size_t line = table.line_numbers[i];
    if (i == 0 && !row.empty() && row[0] == "image_ref") continue;
    try {
      if (row.size() != 7) throw InputError(fmt::format("expected 7 fields, got {}", row.size()));
      Detection d;
      d.image_ref = row[0];
      d.class_label = row[1];
      d.confidence = parse_double(row[2], "confidence");
      d.bbox = {parse_double(row[3], "x_min"), parse_double(row[4], "y_min"), parse_double(row[5], "x_max"),
                parse_double(row[6], "y_max")};
      d.validate();
      if (!known.empty() && !known.contains(d.class_label)) {
        throw InputError("unknown class label '" + d.class_label + "'");
      }
      out.push_back(std::move(d));
    } catch (const InputError& e) {
      throw InputError(fmt::format("detector output line {}: {}", line, e.what()));
    }
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<std::string>& image_refs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  for (const auto& r : image_refs) out << r << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::string> read_manifest(const std::filesystem::path& path) {
  std::istringstream in(slurp_text(path, "manifest"));
  std::vector<std::string> refs;
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (!t.empty()) refs.push_back(t);
  }
  return refs;
}

std::vector<std::string> split_command(std::string_view command) {
  std::vector<std::string> args;
  std::string cur;
  bool have = false;
  char quote = 0;
  for (char c : command) {
    if (quote) {
      if (c == quote) {
        quote = 0;
      } else {
        cur += c;
      }
    } else if (c == '\'' || c == '"') {
      quote = c;
      have = true;
    } else if (c == ' ' || c == '\t') {
      if (have) args.push_back(std::move(cur));
      cur.clear();
      have = false;
    } else {
      cur += c;
      have = true;
    }
  }
  if (quote) throw ConfigError("unterminated quote in adapter command");
  if (have) args.push_back(std::move(cur));
  return args;
}

std::vector<Detection> run_detector(const std::filesystem::path& manifest, std::string_view adapter_command,
                                    const std::filesystem::path& label_map, const std::filesystem::path& output) {
  std::vector<std::string> args = split_command(adapter_command);
  if (args.empty()) throw ConfigError("detector adapter command is not configured");
  const std::vector<std::string> labels = read_label_map(label_map);
  if (read_manifest(manifest).empty()) return {};

  args.push_back(manifest.string());
  args.push_back(output.string());
  args.push_back(label_map.string());
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  std::error_code ec;
  std::filesystem::remove(output, ec);
  pid_t pid = 0;
  const int rc = posix_spawnp(&pid, argv[0], nullptr, nullptr, argv.data(), environ);
  if (rc != 0) throw ExternalError(fmt::format("cannot start detector adapter '{}': {}", args[0], std::strerror(rc)));
  int status = 0;
  while (waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) throw ExternalError("waitpid failed for detector adapter");
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw ExternalError(fmt::format("detector adapter '{}' failed with status {}", args[0],
                                    WIFEXITED(status) ? WEXITSTATUS(status) : -1));
  }
  if (!std::filesystem::exists(output)) throw ExternalError("detector adapter wrote no output file " + output.string());
  return parse_detections(slurp_text(output, "detector output"), labels);
}

std::vector<Detection> apply_threshold(const std::vector<Detection>& dets, double min_conf) {
  std::vector<Detection> out;
  for (const auto& d : dets) {
    if (d.class_label == kTargetClass && d.confidence >= min_conf) out.push_back(d);
  }
  return out;
}

std::vector<Detection> apply_mask(const std::vector<Detection>& dets, const DetectionMask& mask) {
  mask.validate();
  std::vector<Detection> out;
  for (const auto& d : dets) {
    if (mask.contains(d.bbox.centre_x(), d.bbox.centre_y())) out.push_back(d);
  }
  return out;
}

std::vector<DetectionRecord> support_filter(const std::vector<DetectionRecord>& records, const SupportConfig& cfg) {
  if (cfg.radius_m <= 0.0 || cfg.required <= 0) return records;

  double max_abs_lat = 0.0;
  for (const auto& r : records) max_abs_lat = std::max(max_abs_lat, std::fabs(r.point.lat));
  const double deg = std::numbers::pi / 180.0;
  const double cell_lat = cfg.radius_m / (kEarthRadiusM * deg);
  const double cell_lon = cell_lat / std::max(std::cos(std::min(89.0, max_abs_lat) * deg), 1e-6);
  auto cell = [&](const GeoPoint& p) {
    return std::pair<long, long>{static_cast<long>(std::floor(p.lat / cell_lat)),
                                 static_cast<long>(std::floor(p.lon / cell_lon))};
  };
  std::map<std::pair<long, long>, std::vector<std::size_t>> grid;
  for (std::size_t i = 0; i < records.size(); ++i) grid[cell(records[i].point)].push_back(i);

  std::vector<DetectionRecord> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto [r, c] = cell(records[i].point);
    int support = 0;
    for (long dr = -1; dr <= 1 && support < cfg.required; ++dr) {
      for (long dc = -1; dc <= 1 && support < cfg.required; ++dc) {
        auto it = grid.find({r + dr, c + dc});
        if (it == grid.end()) continue;
        for (std::size_t j : it->second) {
          if (j == i) continue;
          const double d = distance_m(records[i].point, records[j].point);
          if (d >= cfg.min_separation_m && d <= cfg.radius_m) ++support;
        }
      }
    }
    if (support >= cfg.required) out.push_back(records[i]);
  }
  return out;
}

LocateResult locate(const std::vector<Detection>& dets, const std::vector<ImageEntry>& images) {
  std::unordered_map<std::string, const ImageEntry*> by_ref;
  for (const auto& img : images) by_ref.emplace(img.image_ref, &img);
  LocateResult result;
  for (const auto& d : dets) {
    auto it = by_ref.find(d.image_ref);
    if (it == by_ref.end()) {
      result.diagnostics.push_back("detection for unknown image '" + d.image_ref + "'");
      continue;
    }
    result.records.push_back({d, it->second->point, it->second->way_id, it->second->node_id});
  }
  return result;
}

PixelRect to_pixels(const BBox& box, int width, int height) {
  auto px = [](double v, int n) { return std::clamp(static_cast<int>(std::lround(v * n)), 0, std::max(0, n - 1)); };
  return {px(box.x_min, width), px(box.y_min, height), px(box.x_max, width), px(box.y_max, height)};
}

PartitionResult partition_outputs(const std::vector<DetectionRecord>& hits, const std::vector<ImageEntry>& images,
                                  const std::filesystem::path& out_dir, const DetectionMask* mask) {
  namespace fs = std::filesystem;
  const fs::path hit_dir = out_dir / "hits";
  const fs::path miss_dir = out_dir / "miss";
  std::error_code ec;
  fs::create_directories(hit_dir, ec);
  fs::create_directories(miss_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  std::unordered_map<std::string, std::vector<const Detection*>> by_ref;
  for (const auto& r : hits) by_ref[r.detection.image_ref].push_back(&r.detection);

  PartitionResult result;
  for (const auto& img : images) {
    const fs::path name = img.path.filename();
    auto it = by_ref.find(img.image_ref);
    try {
      if (it == by_ref.end()) {
        fs::copy_file(img.path, miss_dir / name, fs::copy_options::overwrite_existing);
        ++result.misses;
        continue;
      }
      RgbImage canvas = read_rgb(img.path);
      if (mask) {
        const auto& poly = mask->polygon;
        for (std::size_t k = 0; k < poly.size(); ++k) {
          const auto& [ax, ay] = poly[k];
          const auto& [bx, by] = poly[(k + 1) % poly.size()];
          draw_line(canvas, ax * canvas.width, ay * canvas.height, bx * canvas.width, by * canvas.height,
                    {0, 255, 0}, 1);
        }
      }
      for (const Detection* d : it->second) {
        const PixelRect r = to_pixels(d->bbox, canvas.width, canvas.height);
        draw_rect(canvas, r.x0, r.y0, r.x1, r.y1, {255, 0, 0}, 2);
      }
      fs::path target = hit_dir / name;
      if (format_for_extension(target) == ImageFormat::kUnknown) target += ".png";
      write_rgb(target, canvas);
      ++result.hits;
    } catch (const std::exception& e) {
      result.diagnostics.push_back(fmt::format("{}: {}", img.path.string(), e.what()));
    }
  }
  return result;
}

void write_detection_log(const std::filesystem::path& path, const std::vector<DetectionRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write detection log " + path.string());
  out << kDetectionLogHeader << '\n';
  for (const auto& r : records) {
    const Detection& d = r.detection;
    csv::write_row(out, {d.image_ref, fmt::format("{:.7f}", r.point.lat), fmt::format("{:.7f}", r.point.lon),
                         d.class_label, fmt::format("{:.4f}", d.confidence), fmt::format("{:.6f}", d.bbox.x_min),
                         fmt::format("{:.6f}", d.bbox.y_min), fmt::format("{:.6f}", d.bbox.x_max),
                         fmt::format("{:.6f}", d.bbox.y_max), format_id(r.way_id), format_id(r.node_id)});
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<DetectionRecord> read_detection_log(const std::filesystem::path& path) {
  const csv::Table table = csv::read_file(path);
  const std::string src = path.string();
  const std::size_t c_ref = table.require_column("image_ref", src);
  const std::size_t c_lat = table.require_column("lat", src);
  const std::size_t c_lon = table.require_column("lon", src);
  const auto c_class = table.column("class");
  const auto c_conf = table.column("confidence");
  const auto c_x0 = table.column("x_min");
  const auto c_y0 = table.column("y_min");
  const auto c_x1 = table.column("x_max");
  const auto c_y1 = table.column("y_max");
  const auto c_way = table.column("way_id");
  const auto c_node = table.column("node_id");

  std::vector<DetectionRecord> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const csv::Row& row = table.rows[i];
    auto get = [&](std::optional<std::size_t> c) -> std::string { return c && *c < row.size() ? row[*c] : ""; };
    try {
      DetectionRecord r;
      r.detection.image_ref = get(c_ref);
      r.detection.class_label = c_class ? get(c_class) : std::string(kTargetClass);
      r.detection.confidence = c_conf ? parse_double(get(c_conf), "confidence") : 1.0;
      if (c_x0 && c_y0 && c_x1 && c_y1) {
        r.detection.bbox = {parse_double(get(c_x0), "x_min"), parse_double(get(c_y0), "y_min"),
                            parse_double(get(c_x1), "x_max"), parse_double(get(c_y1), "y_max")};
      } else {
        r.detection.bbox = {0.0, 0.0, 1.0, 1.0};
      }
      r.point = {parse_double(get(c_lat), "lat"), parse_double(get(c_lon), "lon")};
      if (!is_valid(r.point)) throw InputError("coordinates out of range");
      r.way_id = parse_optional_id(get(c_way));
      r.node_id = parse_optional_id(get(c_node));
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw InputError(fmt::format("{} line {}: {}", src, table.line_numbers[i], e.what()));
    }
  }
  return out;
}

}  // namespace lanesurvey
