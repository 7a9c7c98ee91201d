#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "lanesurvey/detector_gateway.hpp"
#include "lanesurvey/map_match.hpp"
#include "lanesurvey/osm_network.hpp"
#include "lanesurvey/route_layer.hpp"

namespace lanesurvey {

struct IntersectionEvidence {
  std::size_t chain = 0;
  std::string name;
  std::vector<NodeId> nodes;           // intersections in node_path order
  std::vector<std::size_t> positions;  // their node_path positions
  std::vector<bool> flags;             // marking detected at this intersection
  bool cyclic = false;
};

struct EvidenceResult {
  std::vector<IntersectionEvidence> evidence;  // one per chain with intersections, chain order
  std::set<NodeId> flagged;
  std::vector<std::string> diagnostics;
};

/// Flags every intersection that at least one record maps to. A record's own
/// node_id is used when it is an intersection; otherwise the point is matched
/// to the network.
EvidenceResult collect_evidence(const std::vector<DetectionRecord>& records, const SpatialIndex& index,
                                const MatchConfig& match = {});

/// Evidence for an explicit set of flagged intersections.
std::vector<IntersectionEvidence> evidence_for(const RoadNetwork& network, const std::set<NodeId>& flagged);

struct InferenceConfig {
  int max_gap = 1;

  void validate() const;
};

/// Inclusive index range into an evidence sequence. On cyclic evidence `last`
/// may precede `first` (the span wraps); first == last with full_loop covers
/// the whole ring.
struct Span {
  std::size_t first = 0;
  std::size_t last = 0;
  bool full_loop = false;

  friend bool operator==(const Span&, const Span&) = default;
};

/// Maximal runs of flags whose internal unflagged gaps never exceed max_gap
/// and that contain at least two flags.
std::vector<Span> infer_spans(const std::vector<bool>& flags, int max_gap, bool cyclic = false);

/// Node path from node_path[from] forward to node_path[to], wrapping on closed
/// chains. from == to on a closed chain with `full_loop` returns the ring.
RoutePolyline chain_path(const RoadNetwork& network, const NamedChain& chain, std::size_t from, std::size_t to,
                         bool full_loop = false);

/// Per-edge membership in an inferred route, for one chain's evidence.
std::vector<bool> detected_edges(const RoadNetwork& network, const IntersectionEvidence& evidence,
                                 const InferenceConfig& cfg);

/// One polyline per span, property "name" = chain name.
RouteLayer infer_routes(const RoadNetwork& network, const std::vector<IntersectionEvidence>& evidence,
                        const InferenceConfig& cfg);

}  // namespace lanesurvey
