#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "lanesurvey/geodesy.hpp"
#include "lanesurvey/osm_network.hpp"

namespace lanesurvey {

/// Distance from p to a way's polyline: each segment is projected in a local
/// equirectangular frame around p, and the haversine distance to the projected
/// point is taken. The index and any brute-force check share this metric.
double point_to_way_m(const RoadNetwork& network, WayId way, const GeoPoint& p);

/// Same metric for a single segment; `t` receives the clamped projection parameter.
double point_to_segment_m(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b, double* t = nullptr);

/// Static R-tree over the bounding boxes of every road way. Holds a reference
/// to the network, which must outlive it. Immutable; concurrent queries are safe.
class SpatialIndex {
 public:
  /// Throws InputError if the network has no road ways.
  explicit SpatialIndex(const RoadNetwork& network, std::size_t node_capacity = 8);

  const RoadNetwork& network() const { return *network_; }
  std::size_t size() const { return items_.size(); }

  /// Nearest road way and its distance; ties resolve to the smaller way id.
  std::pair<WayId, double> nearest_way(const GeoPoint& p) const;

 private:
  struct Box {
    double min_lat, min_lon, max_lat, max_lon;
  };
  struct Node {
    Box box;
    std::size_t first = 0;  // child node index, or item index at leaves
    std::size_t count = 0;
    bool leaf = false;
  };
  struct Item {
    Box box;
    WayId way;
  };

  static double lower_bound_m(const Box& b, const GeoPoint& p);

  const RoadNetwork* network_;
  std::vector<Item> items_;
  std::vector<Node> nodes_;
  std::size_t root_ = 0;
};

inline SpatialIndex build_index(const RoadNetwork& network) { return SpatialIndex(network); }

struct MatchConfig {
  double max_distance_m = 100.0;
};

struct MatchResult {
  WayId way_id = 0;
  std::optional<NodeId> nearest_intersection;  // on the matched way
  NodeId nearest_any_node = 0;                 // on the matched way
  double distance_m = 0.0;
};

/// Nearest way within max_distance_m, then its nearest intersection node and
/// nearest node of any kind. Node ties resolve to the smaller node id.
std::optional<MatchResult> match_point(const SpatialIndex& index, const GeoPoint& p, const MatchConfig& cfg = {});

struct SegmentKey {
  WayId way_id = 0;
  std::optional<NodeId> a;  // nearest intersection behind the probe along the chain
  std::optional<NodeId> b;  // nearest intersection ahead
  std::size_t chain = 0;
  std::optional<std::size_t> pos_a;  // positions in the chain's node_path
  std::optional<std::size_t> pos_b;

  bool open_ended() const { return !a || !b; }
  friend auto operator<=>(const SegmentKey& x, const SegmentKey& y) {
    return std::tie(x.way_id, x.a, x.b) <=> std::tie(y.way_id, y.a, y.b);
  }
  friend bool operator==(const SegmentKey& x, const SegmentKey& y) {
    return std::tie(x.way_id, x.a, x.b) == std::tie(y.way_id, y.a, y.b);
  }
};

struct SegmentKeyResult {
  std::optional<SegmentKey> key;
  std::optional<MatchResult> match;
  std::string diagnostic;  // set when key is absent or open-ended
};

/// Bracketing intersections of the probe along the chain of its matched way.
SegmentKeyResult segment_key(const SpatialIndex& index, const GeoPoint& p, const MatchConfig& cfg = {});

}  // namespace lanesurvey
