#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "lanesurvey/dashcam_ingest.hpp"
#include "lanesurvey/map_match.hpp"
#include "lanesurvey/osm_network.hpp"
#include "lanesurvey/route_infer.hpp"
#include "lanesurvey/route_layer.hpp"

namespace lanesurvey {

enum class EdgeClass { kNeither, kBoth, kDetectedOnly, kOsmOnly };

std::string_view to_string(EdgeClass c);
EdgeClass compare_flags(bool detected, bool osm);

/// Per-chain, per-edge flags; outer index is the chain index.
using EdgeFlags = std::vector<std::vector<bool>>;

/// Edges whose way carries a cycleway tag.
EdgeFlags osm_edge_flags(const RoadNetwork& network);
/// Edges covered by an inferred route.
EdgeFlags detected_edge_flags(const RoadNetwork& network, const std::vector<IntersectionEvidence>& evidence,
                              const InferenceConfig& cfg);

/// Clears the flags of every chain not in `surveyed`.
EdgeFlags restrict_to_surveyed(const EdgeFlags& flags, const std::set<std::size_t>& surveyed);

/// Chains containing the matched way of at least one frame.
std::set<std::size_t> surveyed_chains(const SpatialIndex& index, const std::vector<GeotaggedFrame>& frames,
                                      const MatchConfig& cfg = {});

struct ComparisonReport {
  double detected_m = 0.0;
  double osm_m = 0.0;
  double both_m = 0.0;
  double detected_only_m = 0.0;
  double osm_only_m = 0.0;
  RouteLayer detected;
  RouteLayer osm;
  RouteLayer both;
  RouteLayer detected_only;
  RouteLayer osm_only;
};

/// Classifies every chain edge and joins maximal same-class runs into polylines.
ComparisonReport compare_edges(const RoadNetwork& network, const EdgeFlags& detected, const EdgeFlags& osm);

struct CompareOptions {
  InferenceConfig inference;
  /// When set, OSM flags are kept only on these chains.
  std::optional<std::set<std::size_t>> surveyed;
};

ComparisonReport compare(const RoadNetwork& network, const std::vector<IntersectionEvidence>& evidence,
                         const CompareOptions& opts = {});

/// Plain-text summary with lengths rounded to whole metres.
std::string report_text(const ComparisonReport& report, std::string_view title = {});
/// Raw lengths as JSON.
std::string report_json(const ComparisonReport& report);

/// detected.geojson, osm.geojson, both.geojson, only.geojson (with a `class`
/// property), report.txt and report.json.
void write_comparison(const std::filesystem::path& dir, const ComparisonReport& report,
                      std::string_view title = {});

/// A third-party route network (e.g. a regional bicycle plan) for visual overlay.
RouteLayer load_overlay(const std::filesystem::path& path, std::string name = "overlay");

}  // namespace lanesurvey
