#include "lanesurvey/map_match.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <tuple>

#include <fmt/format.h>

#include "lanesurvey/errors.hpp"

namespace lanesurvey {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

}  // namespace

double point_to_segment_m(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b, double* t_out) {
  const double kx = kEarthRadiusM * kDeg * std::cos(p.lat * kDeg);
  const double ky = kEarthRadiusM * kDeg;
  const double ax = (a.lon - p.lon) * kx, ay = (a.lat - p.lat) * ky;
  const double bx = (b.lon - p.lon) * kx, by = (b.lat - p.lat) * ky;
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(-(ax * dx + ay * dy) / len2, 0.0, 1.0);
  if (t_out) *t_out = t;
  const GeoPoint q{a.lat + t * (b.lat - a.lat), a.lon + t * (b.lon - a.lon)};
  return distance_m(p, q);
}

double point_to_way_m(const RoadNetwork& network, WayId way, const GeoPoint& p) {
  const OsmWay& w = network.way(way);
  if (w.node_refs.empty()) return std::numeric_limits<double>::infinity();
  if (w.node_refs.size() == 1) return distance_m(p, network.point(w.node_refs[0]));
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < w.node_refs.size(); ++i) {
    best = std::min(best, point_to_segment_m(p, network.point(w.node_refs[i]), network.point(w.node_refs[i + 1])));
  }
  return best;
}

SpatialIndex::SpatialIndex(const RoadNetwork& network, std::size_t node_capacity) : network_(&network) {
  if (node_capacity < 2) throw ConfigError("index node capacity must be at least 2");
  for (WayId id : network.sorted_way_ids()) {
    const OsmWay& w = network.way(id);
    if (!w.is_road || w.node_refs.empty()) continue;
    Box b{90.0, 180.0, -90.0, -180.0};
    for (NodeId n : w.node_refs) {
      const GeoPoint p = network.point(n);
      b.min_lat = std::min(b.min_lat, p.lat);
      b.max_lat = std::max(b.max_lat, p.lat);
      b.min_lon = std::min(b.min_lon, p.lon);
      b.max_lon = std::max(b.max_lon, p.lon);
    }
    items_.push_back({b, id});
  }
  if (items_.empty()) throw InputError("cannot build spatial index: network has no road ways");

  // Sort-tile-recursive packing: slice by longitude, then sort each slice by latitude.
  auto centre_lon = [](const Box& b) { return 0.5 * (b.min_lon + b.max_lon); };
  auto centre_lat = [](const Box& b) { return 0.5 * (b.min_lat + b.max_lat); };
  const std::size_t n = items_.size();
  const std::size_t leaves = (n + node_capacity - 1) / node_capacity;
  const auto slices = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(leaves))));
  const std::size_t per_slice = slices * node_capacity;
  std::stable_sort(items_.begin(), items_.end(),
                   [&](const Item& x, const Item& y) { return centre_lon(x.box) < centre_lon(y.box); });
  for (std::size_t s = 0; s < n; s += per_slice) {
    auto last = items_.begin() + static_cast<std::ptrdiff_t>(std::min(n, s + per_slice));
    std::stable_sort(items_.begin() + static_cast<std::ptrdiff_t>(s), last,
                     [&](const Item& x, const Item& y) { return centre_lat(x.box) < centre_lat(y.box); });
  }

  auto merge = [](Box a, const Box& b) {
    a.min_lat = std::min(a.min_lat, b.min_lat);
    a.min_lon = std::min(a.min_lon, b.min_lon);
    a.max_lat = std::max(a.max_lat, b.max_lat);
    a.max_lon = std::max(a.max_lon, b.max_lon);
    return a;
  };

  std::vector<std::size_t> level;
  for (std::size_t i = 0; i < n; i += node_capacity) {
    Node node;
    node.leaf = true;
    node.first = i;
    node.count = std::min(node_capacity, n - i);
    node.box = items_[i].box;
    for (std::size_t k = 1; k < node.count; ++k) node.box = merge(node.box, items_[i + k].box);
    level.push_back(nodes_.size());
    nodes_.push_back(node);
  }
  // Upper levels: consecutive groups of nodes, which are stored contiguously.
  while (level.size() > 1) {
    std::vector<std::size_t> next;
    for (std::size_t i = 0; i < level.size(); i += node_capacity) {
      Node node;
      node.first = level[i];
      node.count = std::min(node_capacity, level.size() - i);
      node.box = nodes_[level[i]].box;
      for (std::size_t k = 1; k < node.count; ++k) node.box = merge(node.box, nodes_[level[i + k]].box);
      next.push_back(nodes_.size());
      nodes_.push_back(node);
    }
    level = std::move(next);
  }
  root_ = level.front();
}

double SpatialIndex::lower_bound_m(const Box& b, const GeoPoint& p) {
  const double dlat = p.lat < b.min_lat ? b.min_lat - p.lat : (p.lat > b.max_lat ? p.lat - b.max_lat : 0.0);
  const double dlon = p.lon < b.min_lon ? b.min_lon - p.lon : (p.lon > b.max_lon ? p.lon - b.max_lon : 0.0);
  if (dlat == 0.0 && dlon == 0.0) return 0.0;
  // Haversine is monotone in both gaps; the smallest cosine over the box and
  // the probe bounds the longitude term from below.
  const double max_abs_lat = std::max({std::fabs(b.min_lat), std::fabs(b.max_lat), std::fabs(p.lat)});
  const double min_cos = std::cos(std::min(90.0, max_abs_lat) * kDeg);
  const double s_lat = std::sin(dlat * kDeg / 2.0);
  const double s_lon = std::sin(std::min(dlon, 180.0) * kDeg / 2.0);
  const double h = s_lat * s_lat + min_cos * min_cos * s_lon * s_lon;
  return 0.999 * 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

std::pair<WayId, double> SpatialIndex::nearest_way(const GeoPoint& p) const {
  // (key, is_item, tie id, index): nodes sort before items at equal key so a
  // popped item is final.
  using Entry = std::tuple<double, int, WayId, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  queue.emplace(lower_bound_m(nodes_[root_].box, p), 0, 0, root_);
  while (!queue.empty()) {
    const auto [key, is_item, way, idx] = queue.top();
    queue.pop();
    if (is_item) return {way, key};
    const Node& node = nodes_[idx];
    for (std::size_t k = 0; k < node.count; ++k) {
      if (node.leaf) {
        const Item& item = items_[node.first + k];
        queue.emplace(point_to_way_m(*network_, item.way, p), 1, item.way, 0);
      } else {
        const std::size_t child = node.first + k;
        queue.emplace(lower_bound_m(nodes_[child].box, p), 0, 0, child);
      }
    }
  }
  throw DomainError("spatial index is empty");
}

std::optional<MatchResult> match_point(const SpatialIndex& index, const GeoPoint& p, const MatchConfig& cfg) {
  const auto [way, dist] = index.nearest_way(p);
  if (dist > cfg.max_distance_m) return std::nullopt;
  const RoadNetwork& net = index.network();
  MatchResult r;
  r.way_id = way;
  r.distance_m = dist;
  double best_any = std::numeric_limits<double>::infinity();
  double best_int = std::numeric_limits<double>::infinity();
  for (NodeId n : net.way(way).node_refs) {
    const double d = distance_m(p, net.point(n));
    if (d < best_any || (d == best_any && n < r.nearest_any_node)) {
      best_any = d;
      r.nearest_any_node = n;
    }
    if (net.is_intersection(n) && (d < best_int || (d == best_int && n < *r.nearest_intersection))) {
      best_int = d;
      r.nearest_intersection = n;
    }
  }
  return r;
}

SegmentKeyResult segment_key(const SpatialIndex& index, const GeoPoint& p, const MatchConfig& cfg) {
  SegmentKeyResult result;
  result.match = match_point(index, p, cfg);
  if (!result.match) {
    result.diagnostic = fmt::format("({:.7f}, {:.7f}) farther than {} m from any road", p.lat, p.lon,
                                    cfg.max_distance_m);
    return result;
  }
  const RoadNetwork& net = index.network();
  const WayId way = result.match->way_id;
  auto c = net.chain_of_way.find(way);
  if (c == net.chain_of_way.end()) {
    result.diagnostic = fmt::format("way {} belongs to no chain", way);
    return result;
  }
  const NamedChain& chain = net.chains[c->second];
  const std::size_t n = chain.node_path.size();

  // Nearest edge of the matched way; on a tie the earlier edge wins.
  std::size_t edge = 0;
  double best = std::numeric_limits<double>::infinity();
  double best_t = 0.0;
  for (std::size_t e = 0; e < chain.edge_count(); ++e) {
    if (chain.edge_ways[e] != way) continue;
    double t = 0.0;
    const double d = point_to_segment_m(p, net.point(chain.edge_from(e)), net.point(chain.edge_to(e)), &t);
    if (d < best) {
      best = d;
      edge = e;
      best_t = t;
    }
  }
  if (!std::isfinite(best)) {
    if (n == 1) {
      edge = 0;
    } else {
      result.diagnostic = fmt::format("way {} has no edges in its chain", way);
      return result;
    }
  }

  // A probe at the far end of an edge sits on the next node.
  std::size_t behind = edge;
  if (best_t >= 1.0 && n > 1) behind = (edge + 1) % n;

  SegmentKey key;
  key.way_id = way;
  key.chain = c->second;
  for (std::size_t k = 0; k < n; ++k) {
    if (!chain.closed && k > behind) break;
    const std::size_t pos = (behind + n - k) % n;
    if (net.is_intersection(chain.node_path[pos])) {
      key.a = chain.node_path[pos];
      key.pos_a = pos;
      break;
    }
  }
  for (std::size_t k = 1; k < n; ++k) {
    if (!chain.closed && behind + k >= n) break;
    const std::size_t pos = (behind + k) % n;
    if (net.is_intersection(chain.node_path[pos])) {
      key.b = chain.node_path[pos];
      key.pos_b = pos;
      break;
    }
  }
  if (!key.a && !key.b) {
    result.diagnostic = fmt::format("chain '{}' of way {} has no intersections; unmatchable", chain.name, way);
    return result;
  }
  if (key.open_ended()) result.diagnostic = fmt::format("open-ended segment on way {}", way);
  result.key = key;
  return result;
}

}  // namespace lanesurvey
