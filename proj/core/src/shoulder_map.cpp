#include "lanesurvey/shoulder_map.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "lanesurvey/csv.hpp"
#include "lanesurvey/errors.hpp"
#include "lanesurvey/route_infer.hpp"

namespace lanesurvey {
namespace {

std::optional<double> population_stddev(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

std::string opt(const std::optional<double>& v, int digits = 3) {
  return v ? fmt::format("{:.{}f}", *v, digits) : std::string();
}

std::string opt_id(const std::optional<NodeId>& v) { return v ? std::to_string(*v) : std::string(); }

}  // namespace

void ShoulderConfig::validate() const {
  if (!(min_detect_fraction > 0.0 && min_detect_fraction <= 1.0)) {
    throw ConfigError("shoulder min_detect_fraction must be in (0, 1]");
  }
  if (!(min_mean_width_px > 0.0) || !(max_stddev_px > 0.0) || !(intersection_exclusion_m > 0.0)) {
    throw ConfigError("shoulder thresholds must be positive");
  }
}

AggregateResult aggregate(const std::vector<GeotaggedFrame>& frames, const std::vector<LaneObservation>& observations,
                          const SpatialIndex& index, const ShoulderConfig& cfg, const MatchConfig& match) {
  cfg.validate();
  if (frames.size() != observations.size()) throw DomainError("frames and observations differ in length");
  const RoadNetwork& net = index.network();
  AggregateResult result;
  result.frames.resize(frames.size());

  std::map<SegmentKey, std::vector<std::size_t>> groups;
  std::map<SegmentKey, std::size_t> seen;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const SegmentKeyResult sk = segment_key(index, frames[i].point, match);
    if (!sk.key) {
      result.diagnostics.push_back(fmt::format("{}: {}", frames[i].image_path, sk.diagnostic));
      continue;
    }
    FrameAssignment& fa = result.frames[i];
    fa.key = sk.key;
    ++seen[*sk.key];
    for (const auto& node : {sk.key->a, sk.key->b}) {
      if (node && distance_m(frames[i].point, net.point(*node)) <= cfg.intersection_exclusion_m) fa.excluded = true;
    }
    if (!fa.excluded) groups[*sk.key].push_back(i);
  }
  for (const auto& [key, count] : seen) {
    if (!groups.contains(key)) {
      result.diagnostics.push_back(fmt::format("segment way {} ({}-{}): all {} frames within {} m of an intersection",
                                               key.way_id, opt_id(key.a), opt_id(key.b), count,
                                               cfg.intersection_exclusion_m));
    }
  }

  for (const auto& [key, members] : groups) {
    SegmentStats s;
    s.key = key;
    s.frames_total = members.size();
    std::vector<double> widths, ix, iy;
    for (std::size_t i : members) {
      const LaneObservation& o = observations[i];
      if (o.width_at_upper_row_px) widths.push_back(*o.width_at_upper_row_px);
      if (o.boundary_intersection) {
        ix.push_back(o.boundary_intersection->first);
        iy.push_back(o.boundary_intersection->second);
      }
    }
    s.frames_detected = widths.size();
    s.detect_fraction = static_cast<double>(s.frames_detected) / static_cast<double>(s.frames_total);
    if (!widths.empty()) {
      double sum = 0.0;
      for (double w : widths) sum += w;
      s.mean_width_px = sum / static_cast<double>(widths.size());
    }
    s.stddev_ix_px = population_stddev(ix);
    s.stddev_iy_px = population_stddev(iy);
    result.segments.push_back(s);
  }
  return result;
}

bool classify(double detect_fraction, double mean_width_px, double stddev_ix_px, double stddev_iy_px,
              const ShoulderConfig& cfg) {
  return detect_fraction >= cfg.min_detect_fraction && mean_width_px >= cfg.min_mean_width_px &&
         stddev_ix_px <= cfg.max_stddev_px && stddev_iy_px <= cfg.max_stddev_px;
}

bool classify(const SegmentStats& s, const ShoulderConfig& cfg) {
  if (!s.mean_width_px || !s.stddev_ix_px || !s.stddev_iy_px) return false;
  return classify(s.detect_fraction, *s.mean_width_px, *s.stddev_ix_px, *s.stddev_iy_px, cfg);
}

std::string_view to_string(ShoulderStatus s) {
  switch (s) {
    case ShoulderStatus::kShoulder:
      return "shoulder";
    case ShoulderStatus::kNoShoulder:
      return "no_shoulder";
    case ShoulderStatus::kInsufficientData:
      return "insufficient_data";
  }
  return "unknown";
}

ShoulderStatus assess(const SegmentStats& stats, const ShoulderConfig& cfg) {
  if (stats.frames_total < cfg.min_frames) return ShoulderStatus::kInsufficientData;
  return classify(stats, cfg) ? ShoulderStatus::kShoulder : ShoulderStatus::kNoShoulder;
}

RouteLayer shoulder_layer(const std::vector<SegmentStats>& segments, const RoadNetwork& network,
                          const ShoulderConfig& cfg) {
  RouteLayer layer;
  layer.name = "shoulder";
  for (const SegmentStats& s : segments) {
    if (assess(s, cfg) != ShoulderStatus::kShoulder) continue;
    if (!s.key.pos_a || !s.key.pos_b) continue;
    const NamedChain& chain = network.chains.at(s.key.chain);
    RoutePolyline line = chain_path(network, chain, *s.key.pos_a, *s.key.pos_b);
    if (line.points.size() < 2) continue;
    line.properties["way_id"] = std::to_string(s.key.way_id);
    line.properties["mean_width_px"] = opt(s.mean_width_px, 1);
    line.properties["detect_fraction"] = fmt::format("{:.3f}", s.detect_fraction);
    layer.polylines.push_back(std::move(line));
  }
  return layer;
}

void write_summary(const std::filesystem::path& path, const std::vector<GeotaggedFrame>& frames,
                   const std::vector<LaneObservation>& observations, const AggregateResult& agg,
                   const ShoulderConfig& cfg) {
  if (frames.size() != observations.size() || frames.size() != agg.frames.size()) {
    throw DomainError("summary inputs differ in length");
  }
  std::map<SegmentKey, const SegmentStats*> by_key;
  for (const auto& s : agg.segments) by_key[s.key] = &s;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  csv::write_row(out, {"image_path", "lat", "lon", "heading", "timestamp", "way_id", "node_a", "node_b", "excluded",
                       "width_px", "ix", "iy", "seg_frames", "seg_detect_fraction", "seg_mean_width_px",
                       "seg_stddev_ix_px", "seg_stddev_iy_px", "seg_status"});
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const GeotaggedFrame& f = frames[i];
    const LaneObservation& o = observations[i];
    const FrameAssignment& fa = agg.frames[i];
    csv::Row row{f.image_path,
                 fmt::format("{:.7f}", f.point.lat),
                 fmt::format("{:.7f}", f.point.lon),
                 fmt::format("{:.1f}", f.heading.degrees()),
                 fmt::format("{:.3f}", f.timestamp),
                 fa.key ? std::to_string(fa.key->way_id) : "",
                 fa.key ? opt_id(fa.key->a) : "",
                 fa.key ? opt_id(fa.key->b) : "",
                 fa.excluded ? "1" : "0",
                 opt(o.width_at_upper_row_px),
                 o.boundary_intersection ? fmt::format("{:.3f}", o.boundary_intersection->first) : "",
                 o.boundary_intersection ? fmt::format("{:.3f}", o.boundary_intersection->second) : ""};
    const SegmentStats* s = nullptr;
    if (fa.key) {
      auto it = by_key.find(*fa.key);
      if (it != by_key.end()) s = it->second;
    }
    if (s) {
      row.push_back(std::to_string(s->frames_total));
      row.push_back(fmt::format("{:.3f}", s->detect_fraction));
      row.push_back(opt(s->mean_width_px));
      row.push_back(opt(s->stddev_ix_px));
      row.push_back(opt(s->stddev_iy_px));
      row.push_back(std::string(to_string(assess(*s, cfg))));
    } else {
      row.insert(row.end(), 6, "");
    }
    csv::write_row(out, row);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace lanesurvey
