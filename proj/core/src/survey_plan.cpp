#include "lanesurvey/survey_plan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "lanesurvey/csv.hpp"
#include "lanesurvey/errors.hpp"

namespace lanesurvey {
namespace {

struct Candidate {
  SamplePoint sample;
  bool is_offset = false;
};

SamplePoint make_sample(GeoPoint p, WayId way, NodeId anchor, double offset, Heading road) {
  SamplePoint s;
  s.point = p;
  s.way_id = way;
  s.node_id = anchor;
  s.offset_m = offset;
  s.road_heading = road;
  for (int k = 0; k < 4; ++k) s.capture_headings[k] = road + 90.0 * k;
  return s;
}

// Walks the chain from path position `start` in direction `dir` (+1/-1),
// emitting a sample every interval out to margin.
void walk_arm(const RoadNetwork& net, const NamedChain& chain, std::size_t start, int dir, NodeId anchor,
              const PlanConfig& cfg, std::vector<Candidate>& out) {
  const std::size_t n = chain.node_path.size();
  const auto targets = static_cast<int>(std::llround(cfg.margin_m / cfg.interval_m));
  int k = 1;
  double walked = 0.0;
  std::size_t pos = start;
  for (std::size_t step = 0; step < chain.edge_count() && k <= targets; ++step) {
    std::size_t next;
    std::size_t edge;
    if (dir > 0) {
      if (pos + 1 >= n && !chain.closed) break;
      next = (pos + 1) % n;
      edge = pos;
    } else {
      if (pos == 0 && !chain.closed) break;
      next = pos == 0 ? n - 1 : pos - 1;
      edge = next;
    }
    const GeoPoint a = net.point(chain.node_path[pos]);
    const GeoPoint b = net.point(chain.node_path[next]);
    const double len = distance_m(a, b);
    if (len > 0.0) {
      const Heading travel = bearing(a, b);
      const Heading road = dir > 0 ? travel : travel + 180.0;
      while (k <= targets && k * cfg.interval_m <= walked + len + 1e-9) {
        const double along = std::min(k * cfg.interval_m - walked, len);
        const GeoPoint p = offset_point(a, travel, along);
        Candidate c{make_sample(p, chain.edge_ways[edge], anchor, dir * k * cfg.interval_m, road), true};
        out.push_back(c);
        ++k;
      }
    }
    walked += len;
    pos = next;
  }
}

class DedupeGrid {
 public:
  DedupeGrid(double radius_m, double max_abs_lat) : radius_(radius_m) {
    cell_lat_ = radius_m / (kEarthRadiusM * std::numbers::pi / 180.0);
    const double c = std::cos(std::min(89.0, max_abs_lat) * std::numbers::pi / 180.0);
    cell_lon_ = cell_lat_ / std::max(c, 1e-6);
  }

  bool near_existing(const GeoPoint& p) const {
    const auto [r, c] = cell(p);
    for (long dr = -1; dr <= 1; ++dr) {
      for (long dc = -1; dc <= 1; ++dc) {
        auto it = cells_.find({r + dr, c + dc});
        if (it == cells_.end()) continue;
        for (const GeoPoint& q : it->second) {
          if (distance_m(p, q) < radius_) return true;
        }
      }
    }
    return false;
  }

  void insert(const GeoPoint& p) { cells_[cell(p)].push_back(p); }

 private:
  std::pair<long, long> cell(const GeoPoint& p) const {
    return {static_cast<long>(std::floor(p.lat / cell_lat_)), static_cast<long>(std::floor(p.lon / cell_lon_))};
  }

  double radius_;
  double cell_lat_;
  double cell_lon_;
  std::map<std::pair<long, long>, std::vector<GeoPoint>> cells_;
};

std::string format_heading(Heading h) {
  double r = std::round(h.degrees() * 10.0) / 10.0;
  if (r >= 360.0) r -= 360.0;
  return fmt::format("{:.1f}", r);
}

}  // namespace

void PlanConfig::validate() const {
  if (!(interval_m > 0.0)) throw ConfigError("plan interval_m must be positive");
  if (!(margin_m >= 0.0)) throw ConfigError("plan margin_m must be non-negative");
  if (!(dedupe_radius_m >= 0.0)) throw ConfigError("plan dedupe_radius_m must be non-negative");
  const double ratio = margin_m / interval_m;
  if (std::fabs(ratio - std::round(ratio)) > 1e-9) {
    throw ConfigError("plan margin_m must be a multiple of interval_m");
  }
}

std::vector<SamplePoint> plan_samples(const RoadNetwork& network, const PlanConfig& cfg) {
  return plan_samples(network, network, cfg);
}

std::vector<SamplePoint> plan_samples(const RoadNetwork& network, const RoadNetwork& margin_network,
                                      const PlanConfig& cfg) {
  cfg.validate();

  std::set<NodeId> anchors(network.intersections.begin(), network.intersections.end());
  for (NodeId n : margin_network.intersections) {
    auto it = network.node_memberships.find(n);
    if (it == network.node_memberships.end()) continue;
    const bool on_road = std::any_of(it->second.begin(), it->second.end(), [&](const WayPosition& m) {
      return network.chain_of_way.contains(m.way);
    });
    if (on_road) anchors.insert(n);
  }

  std::vector<Candidate> candidates;
  for (NodeId anchor : anchors) {
    auto members = network.node_memberships.find(anchor);
    if (members == network.node_memberships.end()) continue;

    // (chain, position) pairs through the anchor.
    std::set<std::pair<std::size_t, std::size_t>> arms;
    for (const WayPosition& m : members->second) {
      auto c = network.chain_of_way.find(m.way);
      if (c == network.chain_of_way.end()) continue;
      const NamedChain& chain = network.chains[c->second];
      for (std::size_t p = 0; p < chain.node_path.size(); ++p) {
        if (chain.node_path[p] == anchor) arms.insert({c->second, p});
      }
    }
    if (arms.empty()) continue;

    const auto [first_chain, first_pos] = *arms.begin();
    const NamedChain& fc = network.chains[first_chain];
    std::vector<GeoPoint> geometry;
    for (NodeId id : fc.node_path) geometry.push_back(network.point(id));
    if (fc.closed) geometry.push_back(geometry.front());
    Heading heading;
    try {
      heading = node_heading(geometry, first_pos);
    } catch (const DomainError&) {
      heading = Heading(0.0);
    }
    const WayId anchor_way = first_pos < fc.edge_count() ? fc.edge_ways[first_pos] : fc.edge_ways[first_pos - 1];
    candidates.push_back({make_sample(network.point(anchor), anchor_way, anchor, 0.0, heading), false});

    if (cfg.margin_m <= 0.0) continue;
    for (const auto& [c, p] : arms) {
      walk_arm(network, network.chains[c], p, +1, anchor, cfg, candidates);
      walk_arm(network, network.chains[c], p, -1, anchor, cfg, candidates);
    }
  }

  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.sample.node_id, a.is_offset, a.sample.way_id, a.sample.offset_m) <
           std::tie(b.sample.node_id, b.is_offset, b.sample.way_id, b.sample.offset_m);
  });

  double max_abs_lat = 0.0;
  for (const auto& c : candidates) max_abs_lat = std::max(max_abs_lat, std::fabs(c.sample.point.lat));

  std::vector<SamplePoint> plan;
  if (cfg.dedupe_radius_m <= 0.0) {
    for (auto& c : candidates) plan.push_back(c.sample);
    return plan;
  }
  DedupeGrid grid(cfg.dedupe_radius_m, max_abs_lat);
  for (auto& c : candidates) {
    if (grid.near_existing(c.sample.point)) continue;
    grid.insert(c.sample.point);
    plan.push_back(c.sample);
  }
  return plan;
}

std::vector<BatchRow> batch_rows(const std::vector<SamplePoint>& plan) {
  std::vector<BatchRow> rows;
  rows.reserve(plan.size() * 4);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const SamplePoint& s = plan[i];
    for (const Heading& h : s.capture_headings) {
      rows.push_back({static_cast<std::int64_t>(i), s.point, h, s.fov_deg, s.pitch_deg, s.way_id, s.node_id,
                      s.offset_m});
    }
  }
  return rows;
}

void emit_batch(std::ostream& out, const std::vector<SamplePoint>& plan) {
  out << kBatchHeader << '\n';
  for (const BatchRow& r : batch_rows(plan)) {
    out << fmt::format("{},{:.7f},{:.7f},{},{:g},{:g},{},{},{:.1f}\n", r.point_id, r.point.lat, r.point.lon,
                       format_heading(r.heading), r.fov_deg, r.pitch_deg, r.way_id, r.node_id, r.offset_m);
  }
}

void emit_batch(const std::filesystem::path& path, const std::vector<SamplePoint>& plan) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write batch file " + path.string());
  emit_batch(out, plan);
  if (!out) throw IoError("write failed: " + path.string());
}

BatchFile parse_batch(std::string_view text) {
  const csv::Table table = csv::parse(text);
  const std::vector<std::string> cols{"point_id", "lat",    "lon",     "heading_deg", "fov_deg",
                                      "pitch_deg", "way_id", "node_id", "offset_m"};
  std::vector<std::size_t> idx;
  for (const auto& c : cols) idx.push_back(table.require_column(c, "batch file"));

  BatchFile result;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const csv::Row& row = table.rows[i];
    try {
      auto field = [&](std::size_t k) -> const std::string& {
        if (idx[k] >= row.size()) throw InputError("missing field '" + cols[k] + "'");
        return row[idx[k]];
      };
      auto num = [&](std::size_t k) {
        const std::string& s = field(k);
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) throw InputError("bad number in '" + cols[k] + "'");
        return v;
      };
      auto integer = [&](std::size_t k) {
        const std::string& s = field(k);
        std::size_t used = 0;
        long long v = std::stoll(s, &used);
        if (used != s.size()) throw InputError("bad integer in '" + cols[k] + "'");
        return static_cast<std::int64_t>(v);
      };
      BatchRow r;
      r.point_id = integer(0);
      r.point = {num(1), num(2)};
      if (!is_valid(r.point)) throw InputError("coordinates out of range");
      r.heading = Heading(num(3));
      r.fov_deg = num(4);
      r.pitch_deg = num(5);
      r.way_id = integer(6);
      r.node_id = integer(7);
      r.offset_m = num(8);
      result.rows.push_back(r);
    } catch (const std::exception& e) {
      result.diagnostics.push_back(fmt::format("batch line {}: {}", table.line_numbers[i], e.what()));
    }
  }
  return result;
}

BatchFile read_batch(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read batch file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_batch(ss.str());
}

}  // namespace lanesurvey
