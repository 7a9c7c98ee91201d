#include "test_support.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "lanesurvey/dashcam_ingest.hpp"
#include "lanesurvey/imagery_cache.hpp"
#include "lanesurvey/map_match.hpp"
#include "lanesurvey/survey_plan.hpp"

namespace lanesurvey::testing {
namespace fs = std::filesystem;

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

struct Vec3 {
  double x, y, z;
};
Vec3 to_vec(const GeoPoint& p) {
  const double la = p.lat * kDeg, lo = p.lon * kDeg;
  return {std::cos(la) * std::cos(lo), std::cos(la) * std::sin(lo), std::sin(la)};
}
double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
// Local east and north unit vectors at p.
Vec3 east_at(const GeoPoint& p) {
  const double lo = p.lon * kDeg;
  return {-std::sin(lo), std::cos(lo), 0.0};
}
Vec3 north_at(const GeoPoint& p) {
  const double la = p.lat * kDeg, lo = p.lon * kDeg;
  return {-std::sin(la) * std::cos(lo), -std::sin(la) * std::sin(lo), std::cos(la)};
}

std::string oracle_normalize(const std::string& s) {
  std::string out;
  bool space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

const std::string* find_tag(const OsmWay& w, const std::string& key) {
  for (const Tag& t : w.tags) {
    if (t.key == key) return &t.value;
  }
  return nullptr;
}

bool oracle_is_road(const OsmWay& w) {
  const std::string* hw = find_tag(w, "highway");
  return hw && *hw != "footway" && *hw != "pedestrian" && *hw != "steps";
}

}  // namespace

TempDir::TempDir(const std::string& prefix) {
  static std::mt19937_64 rng{std::random_device{}()};
  for (int attempt = 0; attempt < 100; ++attempt) {
    const fs::path p = fs::temp_directory_path() / fmt::format("{}-{:016x}", prefix, rng());
    if (fs::create_directory(p)) {
      path_ = p;
      return;
    }
  }
  throw std::runtime_error("cannot create temp dir");
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

OsmBuilder& OsmBuilder::node(NodeId id, double lat, double lon, Tags tags) {
  nodes_.push_back({id, lat, lon, std::move(tags)});
  return *this;
}

OsmBuilder& OsmBuilder::way(WayId id, std::vector<NodeId> refs, Tags tags) {
  ways_.push_back({id, std::move(refs), std::move(tags)});
  return *this;
}

std::string OsmBuilder::xml() const {
  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<osm version=\"0.6\" generator=\"test\">\n";
  for (const N& n : nodes_) {
    s += fmt::format(" <node id=\"{}\" lat=\"{:.8f}\" lon=\"{:.8f}\"", n.id, n.lat, n.lon);
    if (n.tags.empty()) {
      s += "/>\n";
      continue;
    }
    s += ">\n";
    for (const auto& [k, v] : n.tags) s += fmt::format("  <tag k=\"{}\" v=\"{}\"/>\n", xml_escape(k), xml_escape(v));
    s += " </node>\n";
  }
  for (const W& w : ways_) {
    s += fmt::format(" <way id=\"{}\">\n", w.id);
    for (NodeId r : w.refs) s += fmt::format("  <nd ref=\"{}\"/>\n", r);
    for (const auto& [k, v] : w.tags) s += fmt::format("  <tag k=\"{}\" v=\"{}\"/>\n", xml_escape(k), xml_escape(v));
    s += " </way>\n";
  }
  s += "</osm>\n";
  return s;
}

std::string random_grid_extract(std::uint32_t seed, int lattice, int max_ways) {
  std::mt19937 rng(seed);
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const std::vector<std::string> names{"Main Street", "main  street", "High St", "Station Road", "Ocean View Pde",
                                       "Park Lane",   "Bay Road",     "Hill St"};
  OsmBuilder b;
  auto id_of = [&](int r, int c) { return static_cast<NodeId>(r * lattice + c + 1); };
  std::uniform_real_distribution<double> jitter(-0.00002, 0.00002);
  for (int r = 0; r < lattice; ++r) {
    for (int c = 0; c < lattice; ++c) b.node(id_of(r, c), -38.0 + r * 0.001 + jitter(rng), 145.0 + c * 0.001 + jitter(rng));
  }
  WayId next_way = 1;
  auto tags_for = [&](int style, const std::string& name) {
    OsmBuilder::Tags t;
    const int kind = uni(0, 19);
    t.push_back({"highway", kind == 0 ? "footway" : (kind == 1 ? "steps" : "residential")});
    if (style == 0) t.push_back({"name", name});
    if (style == 1) t.push_back({"ref", fmt::format("C{}", uni(1, 3))});
    if (uni(0, 3) == 0) t.push_back({uni(0, 1) ? "cycleway:left" : "cycleway", "lane"});
    if (uni(0, 4) == 0) t.push_back({"maxspeed", std::to_string(uni(4, 8) * 10)});
    return t;
  };
  // lines: rows then columns
  for (int line = 0; line < 2 * lattice && next_way <= max_ways; ++line) {
    const bool row = line < lattice;
    const int fixed = line % lattice;
    std::vector<NodeId> pts;
    for (int k = 0; k < lattice; ++k) pts.push_back(row ? id_of(fixed, k) : id_of(k, fixed));
    const int style = uni(0, 9) < 7 ? 0 : (uni(0, 1) ? 1 : 2);
    const std::string name = names[static_cast<std::size_t>(uni(0, static_cast<int>(names.size()) - 1))];
    std::size_t start = 0;
    while (start + 1 < pts.size() && next_way <= max_ways) {
      const std::size_t len = static_cast<std::size_t>(uni(1, 4));
      const std::size_t end = std::min(pts.size() - 1, start + len);
      if (uni(0, 9) != 0) {  // occasional gap
        std::vector<NodeId> refs(pts.begin() + static_cast<long>(start), pts.begin() + static_cast<long>(end) + 1);
        if (uni(0, 1)) std::reverse(refs.begin(), refs.end());
        b.way(next_way++, refs, tags_for(style, name));
      }
      start = end;
    }
  }
  // a few named loops around single cells
  for (int k = 0; k < 2 && next_way <= max_ways; ++k) {
    const int r = uni(0, lattice - 2), c = uni(0, lattice - 2);
    b.way(next_way++, {id_of(r, c), id_of(r, c + 1), id_of(r + 1, c + 1), id_of(r + 1, c), id_of(r, c)},
          {{"highway", "service"}, {"name", fmt::format("Loop {}", k)}});
  }
  return b.xml();
}

namespace oracle {

double distance_m(const GeoPoint& a, const GeoPoint& b) {
  const Vec3 u = to_vec(a), v = to_vec(b);
  return kEarthRadiusM * std::atan2(norm(cross(u, v)), dot(u, v));
}

double bearing_deg(const GeoPoint& a, const GeoPoint& b) {
  const Vec3 v = to_vec(b);
  double deg = std::atan2(dot(v, east_at(a)), dot(v, north_at(a))) / kDeg;
  if (deg < 0) deg += 360.0;
  return deg;
}

GeoPoint offset(const GeoPoint& p, double heading_deg, double d_m) {
  const Vec3 u = to_vec(p), n = north_at(p), e = east_at(p);
  const double th = heading_deg * kDeg, delta = d_m / kEarthRadiusM;
  const Vec3 dir{std::cos(th) * n.x + std::sin(th) * e.x, std::cos(th) * n.y + std::sin(th) * e.y,
                 std::cos(th) * n.z + std::sin(th) * e.z};
  const Vec3 q{std::cos(delta) * u.x + std::sin(delta) * dir.x, std::cos(delta) * u.y + std::sin(delta) * dir.y,
               std::cos(delta) * u.z + std::sin(delta) * dir.z};
  return {std::asin(std::clamp(q.z, -1.0, 1.0)) / kDeg, std::atan2(q.y, q.x) / kDeg};
}

std::string road_key(const OsmWay& w) {
  if (const std::string* n = find_tag(w, "name")) {
    const std::string k = oracle_normalize(*n);
    if (!k.empty()) return k;
  }
  if (const std::string* r = find_tag(w, "ref")) {
    const std::string k = oracle_normalize(*r);
    if (!k.empty()) return "ref:" + k;
  }
  return {};
}

std::set<NodeId> intersections(const RoadNetwork& net) {
  std::vector<const OsmWay*> roads;
  for (const auto& [id, w] : net.ways) {
    if (oracle_is_road(w) && !oracle::road_key(w).empty()) roads.push_back(&w);
  }
  std::set<NodeId> out;
  for (std::size_t i = 0; i < roads.size(); ++i) {
    for (std::size_t j = i + 1; j < roads.size(); ++j) {
      if (oracle::road_key(*roads[i]) == oracle::road_key(*roads[j])) continue;
      for (NodeId a : roads[i]->node_refs) {
        for (NodeId b : roads[j]->node_refs) {
          if (a == b) out.insert(a);
        }
      }
    }
  }
  return out;
}

std::set<std::set<WayId>> chain_partition(const RoadNetwork& net) {
  std::vector<const OsmWay*> roads;
  for (WayId id : net.sorted_way_ids()) {
    const OsmWay& w = net.ways.at(id);
    if (oracle_is_road(w) && w.node_refs.size() >= 2) roads.push_back(&w);
  }
  const std::size_t n = roads.size();
  std::vector<std::size_t> parent(n);
  for (std::size_t i = 0; i < n; ++i) parent[i] = i;
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    return parent[x] == x ? x : parent[x] = find(parent[x]);
  };
  // Touches of `node` by same-keyed ways: endpoints count once, interior twice.
  auto touches = [&](const std::string& key, NodeId node) {
    int count = 0;
    for (const OsmWay* w : roads) {
      if (oracle::road_key(*w) != key) continue;
      for (std::size_t k = 0; k < w->node_refs.size(); ++k) {
        if (w->node_refs[k] != node) continue;
        count += (k == 0 || k + 1 == w->node_refs.size()) ? 1 : 2;
      }
    }
    return count;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const std::string key = oracle::road_key(*roads[i]);
    if (key.empty()) continue;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (oracle::road_key(*roads[j]) != key) continue;
      for (NodeId ei : {roads[i]->node_refs.front(), roads[i]->node_refs.back()}) {
        for (NodeId ej : {roads[j]->node_refs.front(), roads[j]->node_refs.back()}) {
          if (ei == ej && touches(key, ei) == 2) parent[find(i)] = find(j);
        }
      }
    }
  }
  std::map<std::size_t, std::set<WayId>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[find(i)].insert(roads[i]->id);
  std::set<std::set<WayId>> out;
  for (auto& [root, ids] : groups) out.insert(ids);
  return out;
}

std::multiset<std::pair<NodeId, NodeId>> way_edges(const RoadNetwork& net, const std::set<WayId>& ways) {
  std::multiset<std::pair<NodeId, NodeId>> out;
  for (WayId id : ways) {
    const auto& refs = net.ways.at(id).node_refs;
    for (std::size_t k = 0; k + 1 < refs.size(); ++k) {
      if (refs[k] == refs[k + 1]) continue;
      out.insert(std::minmax(refs[k], refs[k + 1]));
    }
  }
  return out;
}

std::pair<WayId, double> nearest_way(const RoadNetwork& net, const GeoPoint& p) {
  std::pair<WayId, double> best{0, std::numeric_limits<double>::infinity()};
  for (WayId id : net.sorted_way_ids()) {
    const OsmWay& w = net.ways.at(id);
    if (!w.is_road || w.node_refs.empty()) continue;
    const double d = point_to_way_m(net, id, p);
    if (d < best.second) best = {id, d};
  }
  return best;
}

std::vector<std::pair<std::size_t, std::size_t>> spans(const std::vector<bool>& flags, int gap) {
  auto valid = [&](std::size_t i, std::size_t j) {
    if (i >= j || !flags[i] || !flags[j]) return false;
    int run = 0;
    for (std::size_t k = i + 1; k < j; ++k) {
      run = flags[k] ? 0 : run + 1;
      if (run > gap) return false;
    }
    return true;
  };
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    for (std::size_t j = i + 1; j < flags.size(); ++j) {
      if (valid(i, j)) all.push_back({i, j});
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& s : all) {
    const bool contained = std::any_of(all.begin(), all.end(), [&](const auto& o) {
      return o != s && o.first <= s.first && s.second <= o.second;
    });
    if (!contained) out.push_back(s);
  }
  return out;
}

}  // namespace oracle

GrayImage render_scene(const RoadScene& s) {
  GrayImage img(s.width, s.height, s.grass);
  for (int y = 0; y < s.height; ++y) {
    const double yc = y + 0.5;
    for (int x = 0; x < s.width; ++x) {
      const double xc = x + 0.5;
      std::uint8_t v = s.grass;
      if (yc < s.vp_y) {
        v = s.sky;
      } else {
        const double dy = yc - s.vp_y;
        const double xl = s.vp_x + s.left_slope_x * dy;
        const double xr = s.vp_x + s.right_slope_x * dy;
        if (xc >= xl && xc <= xr) {
          v = s.lane;
        } else if (s.shoulder_slope_x && xc < xl && xc >= s.vp_x + *s.shoulder_slope_x * dy) {
          v = s.shoulder;
        }
      }
      img.at(x, y) = v;
    }
  }
  return img;
}

MiniSurvey write_mini_survey(const fs::path& root, const fs::path& stub_detector) {
  MiniSurvey ms;
  ms.root = root;
  fs::create_directories(root);

  constexpr int kBlocks = 5;
  constexpr double kStep = 0.002;
  OsmBuilder b;
  std::vector<NodeId> main1, main2;
  for (int k = 0; k <= kBlocks; ++k) {
    const NodeId inter = 100 + k;
    ms.intersections.push_back(inter);
    const double lat = -38.0 - kStep * k;
    b.node(inter, lat, 145.0);
    b.node(300 + k, lat, 144.999);
    b.node(400 + k, lat, 145.001);
    (k <= 2 ? main1 : main2).push_back(inter);
    if (k == 2) main2.push_back(inter);
    if (k < kBlocks) {
      b.node(200 + k, lat - kStep / 2, 145.0);
      (k < 2 ? main1 : main2).push_back(200 + k);
    }
  }
  b.node(900, -38.0005, 145.0005, {{"amenity", "bench"}});
  b.way(1001, main1, {{"highway", "secondary"}, {"name", "Main Road"}, {"cycleway", "lane"}});
  b.way(1002, main2, {{"highway", "secondary"}, {"name", "Main Road"}, {"maxspeed", "60"}});
  for (int k = 0; k <= kBlocks; ++k) {
    b.way(2000 + k, {300 + k, 100 + k, 400 + k},
          {{"highway", "residential"}, {"name", fmt::format("Cross Street {}", k)}});
  }
  b.way(3000, {300, 900}, {{"highway", "footway"}});
  const std::string xml = b.xml();
  write_file(root / "extract.osm", xml);

  ms.segment_m = kEarthRadiusM * kStep * std::numbers::pi / 180.0;
  // Detections at I1, I2, I3, I5: with max_gap 1 one route I1..I5.
  // OSM lane on I0..I2.
  ms.expected_detected_m = 4 * ms.segment_m;
  ms.expected_osm_m = 2 * ms.segment_m;
  ms.expected_both_m = 1 * ms.segment_m;
  ms.expected_detected_only_m = 3 * ms.segment_m;
  ms.expected_osm_only_m = 1 * ms.segment_m;
  ms.expected_shoulder_m = 2 * ms.segment_m;

  // street-level imagery fixtures mirroring the cache layout
  const RoadNetwork net = load_network(xml);
  PlanConfig plan;
  const std::vector<SamplePoint> samples = plan_samples(net, plan);
  const std::vector<BatchRow> rows = batch_rows(samples);
  const fs::path fixtures = root / "fixtures";
  fs::create_directories(fixtures);
  GrayImage tile(64, 64, 90);
  for (int y = 40; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) tile.at(x, y) = 150;
  }
  std::string answers = "file,class,confidence,x_min,y_min,x_max,y_max\n";
  const std::set<NodeId> marked{101, 102, 103, 105};
  for (const BatchRow& r : rows) {
    const std::string name = cache_key(request_for(r, 64, 64)) + ".jpg";
    write_gray(fixtures / name, tile);
    const SamplePoint& s = samples[static_cast<std::size_t>(r.point_id)];
    if (r.offset_m != 0.0 || !(r.heading == s.capture_headings[0])) continue;
    if (marked.contains(r.node_id)) answers += name + ",BikeLaneMarker,0.91,0.40,0.62,0.52,0.80\n";
    if (r.node_id == 104) answers += name + ",BikeLaneMarker,0.40,0.40,0.62,0.52,0.80\n";
    if (r.node_id == 100) answers += name + ",ArrowMarker,0.99,0.40,0.62,0.52,0.80\n";
  }
  write_file(root / "answers.csv", answers);
  write_file(root / "labels.txt", "item { id: 1 name: 'BikeLaneMarker' }\nitem { id: 2 name: 'ArrowMarker' }\n");

  // dash-cam drive due south at 0.00036 deg/s (about 40 m/s), 27 s
  const fs::path footage = root / "footage";
  fs::create_directories(footage / "drive1");
  std::string nmea;
  for (int k = 0; k <= 27; ++k) {
    const double lat = 38.0 + 0.00036 * k;
    const double minutes = (lat - 38.0) * 60.0;
    const std::string body = fmt::format("GPRMC,0100{:02d}.00,A,38{:09.6f},S,14500.000000,E,77.8,180.0,010324,,,A",
                                         k, minutes);
    nmea += fmt::format("${}*{:02X}\r\n", body, nmea_checksum("$" + body + "*"));
  }
  write_file(footage / "drive1.nmea", nmea);
  const FrameManifest manifest = sample_manifest("drive1", 27 * 60, 60.0, 5.0);
  write_frame_manifest(footage / "drive1" / "frames.csv", manifest);
  RoadScene with;
  RoadScene without;
  without.shoulder_slope_x.reset();
  write_gray(root / "with.png", render_scene(with));
  write_gray(root / "without.png", render_scene(without));
  for (const ManifestFrame& f : manifest.frames) {
    const double lat = -38.0 - 0.00036 * (static_cast<double>(f.frame_index) / 60.0);
    const bool shoulder = lat < -38.004 && lat > -38.008;
    fs::copy_file(root / (shoulder ? "with.png" : "without.png"), footage / "drive1" / f.path,
                  fs::copy_options::overwrite_existing);
  }

  ms.config = root / "survey.toml";
  write_file(ms.config, fmt::format(R"(name = "mini"

[osm]
extract = "extract.osm"

[plan]
margin_m = 20
interval_m = 10

[imagery]
mode = "offline"
fixture_dir = "fixtures"
width = 64
height = 64

[detector]
adapter = '"{}" --answers "{}"'
label_map = "labels.txt"

[dashcam]
footage_dir = "footage"

[shoulder]
min_frames = 5
)",
                                     stub_detector.string(), (root / "answers.csv").string()));
  return ms;
}

}  // namespace lanesurvey::testing
