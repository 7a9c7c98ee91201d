#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lanesurvey/geodesy.hpp"
#include "lanesurvey/route_layer.hpp"

namespace lanesurvey {

struct Tag {
  std::string key;
  std::string value;

  friend bool operator==(const Tag&, const Tag&) = default;
};

struct OsmNode {
  NodeId id = 0;
  double lat = 0.0;
  double lon = 0.0;
  std::vector<Tag> tags;

  GeoPoint point() const { return {lat, lon}; }
};

struct OsmWay {
  WayId id = 0;
  std::vector<NodeId> node_refs;  // resolvable refs only; dangling ones are reported in diagnostics
  std::vector<Tag> tags;
  std::optional<std::string> name;
  bool is_road = false;
  bool has_cycleway = false;

  const std::string* tag(std::string_view key) const;
  bool closed() const { return node_refs.size() > 2 && node_refs.front() == node_refs.back(); }
};

struct WayPosition {
  WayId way = 0;
  std::size_t index = 0;

  friend auto operator<=>(const WayPosition&, const WayPosition&) = default;
};

/// Same-named adjacent road ways joined back into one logical road.
struct NamedChain {
  std::string name;
  std::vector<WayId> way_ids;
  std::vector<NodeId> node_path;
  /// Way carrying each edge. edge_ways[i] joins node_path[i] and
  /// node_path[(i + 1) % size]; a closed chain has one extra closing edge.
  std::vector<WayId> edge_ways;
  bool closed = false;

  std::size_t edge_count() const { return edge_ways.size(); }
  NodeId edge_from(std::size_t e) const { return node_path[e]; }
  NodeId edge_to(std::size_t e) const { return node_path[(e + 1) % node_path.size()]; }
};

/// A parsed OSM extract. Immutable once built; share freely across readers.
struct RoadNetwork {
  std::unordered_map<NodeId, OsmNode> nodes;
  std::unordered_map<WayId, OsmWay> ways;
  std::unordered_map<NodeId, std::vector<WayPosition>> node_memberships;
  std::set<NodeId> intersections;
  std::vector<NamedChain> chains;
  std::unordered_map<WayId, std::size_t> chain_of_way;
  std::vector<std::string> diagnostics;

  const OsmNode& node(NodeId id) const;
  const OsmWay& way(WayId id) const;
  GeoPoint point(NodeId id) const { return node(id).point(); }
  bool is_intersection(NodeId id) const { return intersections.contains(id); }

  /// Way ids in ascending order.
  std::vector<WayId> sorted_way_ids() const;
  /// Geometry of a way in node order.
  std::vector<GeoPoint> way_points(WayId id) const;
};

/// Trimmed, whitespace-collapsed, ASCII-lowercased road name.
std::string normalize_name(std::string_view name);

/// Key used for intersection and chain grouping: normalized name, else
/// "ref:" + normalized ref, else empty (no name).
std::string road_key(const OsmWay& way);

/// True iff the highway tag is present and not a pedestrian-only value.
bool is_road_way(const std::vector<Tag>& tags);
/// True iff some tag key begins with "cycleway" (case-sensitive).
bool has_cycleway_tag(const std::vector<Tag>& tags);

/// Parses an OSM XML extract. Relations are ignored. Throws XmlParseError
/// with a byte offset on malformed XML, InputError on bad attributes.
RoadNetwork parse_extract(std::string_view xml);

/// Nodes shared by road ways with at least two distinct road keys. Stores
/// the result on the network and returns it.
const std::set<NodeId>& find_intersections(RoadNetwork& network);

/// Joins same-keyed road ways into maximal linear chains, splitting at
/// nodes of degree >= 3 within the group. Unnamed roads form singleton
/// chains. Stores the result on the network and returns it.
const std::vector<NamedChain>& build_chains(RoadNetwork& network);

/// parse_extract + find_intersections + build_chains.
RoadNetwork load_network(std::string_view xml);
RoadNetwork load_network_file(const std::string& path);

/// Node coordinates for edges [first_edge, last_edge) of a chain.
RoutePolyline chain_polyline(const RoadNetwork& network, const NamedChain& chain, std::size_t first_edge,
                             std::size_t last_edge);

/// One polyline per maximal run of cycleway-tagged edges in each chain.
RouteLayer cycleway_layer(const RoadNetwork& network);

/// Re-serializes the retained nodes and ways as OSM XML.
std::string to_osm_xml(const RoadNetwork& network);

}  // namespace lanesurvey
