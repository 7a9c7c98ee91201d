#include "lanesurvey/route_infer.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "lanesurvey/errors.hpp"

namespace lanesurvey {

void InferenceConfig::validate() const {
  if (max_gap < 0) throw ConfigError("inference max_gap must be >= 0");
}

std::vector<IntersectionEvidence> evidence_for(const RoadNetwork& network, const std::set<NodeId>& flagged) {
  std::vector<IntersectionEvidence> out;
  for (std::size_t c = 0; c < network.chains.size(); ++c) {
    const NamedChain& chain = network.chains[c];
    IntersectionEvidence ev;
    ev.chain = c;
    ev.name = chain.name;
    ev.cyclic = chain.closed;
    for (std::size_t p = 0; p < chain.node_path.size(); ++p) {
      const NodeId n = chain.node_path[p];
      if (!network.is_intersection(n)) continue;
      ev.nodes.push_back(n);
      ev.positions.push_back(p);
      ev.flags.push_back(flagged.contains(n));
    }
    if (!ev.nodes.empty()) out.push_back(std::move(ev));
  }
  return out;
}

EvidenceResult collect_evidence(const std::vector<DetectionRecord>& records, const SpatialIndex& index,
                                const MatchConfig& match) {
  const RoadNetwork& net = index.network();
  EvidenceResult result;
  for (const DetectionRecord& r : records) {
    if (r.node_id && net.is_intersection(*r.node_id)) {
      result.flagged.insert(*r.node_id);
      continue;
    }
    const auto m = match_point(index, r.point, match);
    if (!m) {
      result.diagnostics.push_back(
          fmt::format("{}: no road within {} m", r.detection.image_ref, match.max_distance_m));
      continue;
    }
    if (m->nearest_intersection) {
      result.flagged.insert(*m->nearest_intersection);
      continue;
    }
    // Way without intersections: nearer of the bracketing chain intersections.
    const SegmentKeyResult sk = segment_key(index, r.point, match);
    if (!sk.key) {
      result.diagnostics.push_back(fmt::format("{}: {}", r.detection.image_ref, sk.diagnostic));
      continue;
    }
    NodeId pick;
    if (sk.key->a && sk.key->b) {
      const double da = distance_m(r.point, net.point(*sk.key->a));
      const double db = distance_m(r.point, net.point(*sk.key->b));
      pick = (db < da || (db == da && *sk.key->b < *sk.key->a)) ? *sk.key->b : *sk.key->a;
    } else {
      pick = sk.key->a ? *sk.key->a : *sk.key->b;
    }
    result.flagged.insert(pick);
  }
  result.evidence = evidence_for(net, result.flagged);
  return result;
}

std::vector<Span> infer_spans(const std::vector<bool>& flags, int max_gap, bool cyclic) {
  if (max_gap < 0) throw ConfigError("inference max_gap must be >= 0");
  const std::size_t m = flags.size();
  std::vector<std::size_t> on;
  for (std::size_t i = 0; i < m; ++i) {
    if (flags[i]) on.push_back(i);
  }
  std::vector<Span> spans;
  if (on.size() < 2) return spans;
  const auto gap = static_cast<std::size_t>(max_gap);

  if (!cyclic) {
    std::size_t start = on[0];
    std::size_t count = 1;
    for (std::size_t k = 1; k <= on.size(); ++k) {
      if (k < on.size() && on[k] - on[k - 1] - 1 <= gap) {
        ++count;
        continue;
      }
      if (count >= 2) spans.push_back({start, on[k - 1], false});
      if (k < on.size()) {
        start = on[k];
        count = 1;
      }
    }
    return spans;
  }

  // Cyclic: find a flagged index preceded by a gap larger than max_gap.
  std::size_t pivot = m;
  for (std::size_t k = 0; k < on.size(); ++k) {
    const std::size_t prev = on[(k + on.size() - 1) % on.size()];
    const std::size_t between = (on[k] + m - prev - 1) % m;
    if (between > gap) {
      pivot = k;
      break;
    }
  }
  if (pivot == m) return {{on[0], on[0], true}};
  std::vector<bool> rotated(m);
  for (std::size_t i = 0; i < m; ++i) rotated[i] = flags[(on[pivot] + i) % m];
  for (Span s : infer_spans(rotated, max_gap, false)) {
    spans.push_back({(s.first + on[pivot]) % m, (s.last + on[pivot]) % m, false});
  }
  std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.first < b.first; });
  return spans;
}

RoutePolyline chain_path(const RoadNetwork& network, const NamedChain& chain, std::size_t from, std::size_t to,
                         bool full_loop) {
  const std::size_t n = chain.node_path.size();
  if (from >= n || to >= n) throw DomainError("chain position out of range");
  if (!chain.closed && to < from) throw DomainError("open chain path must run forward");
  RoutePolyline line;
  line.properties["name"] = chain.name;
  std::size_t steps = chain.closed ? (to + n - from) % n : to - from;
  if (full_loop && chain.closed) steps = n;
  for (std::size_t k = 0; k <= steps; ++k) {
    const NodeId id = chain.node_path[(from + k) % n];
    line.node_ids.push_back(id);
    line.points.push_back(network.point(id));
  }
  return line;
}

namespace {

// Edge indices covered by a span between node_path positions.
void mark_edges(const NamedChain& chain, std::size_t from, std::size_t to, bool full_loop, std::vector<bool>& edges) {
  const std::size_t n = chain.node_path.size();
  std::size_t steps = chain.closed ? (to + n - from) % n : to - from;
  if (full_loop && chain.closed) steps = n;
  for (std::size_t k = 0; k < steps; ++k) edges[(from + k) % chain.edge_count()] = true;
}

}  // namespace

std::vector<bool> detected_edges(const RoadNetwork& network, const IntersectionEvidence& evidence,
                                 const InferenceConfig& cfg) {
  const NamedChain& chain = network.chains.at(evidence.chain);
  std::vector<bool> edges(chain.edge_count(), false);
  for (const Span& s : infer_spans(evidence.flags, cfg.max_gap, evidence.cyclic)) {
    mark_edges(chain, evidence.positions[s.first], evidence.positions[s.last], s.full_loop, edges);
  }
  return edges;
}

RouteLayer infer_routes(const RoadNetwork& network, const std::vector<IntersectionEvidence>& evidence,
                        const InferenceConfig& cfg) {
  cfg.validate();
  RouteLayer layer;
  layer.name = "detected";
  for (const IntersectionEvidence& ev : evidence) {
    const NamedChain& chain = network.chains.at(ev.chain);
    for (const Span& s : infer_spans(ev.flags, cfg.max_gap, ev.cyclic)) {
      RoutePolyline line = chain_path(network, chain, ev.positions[s.first], ev.positions[s.last], s.full_loop);
      if (line.points.size() >= 2) layer.polylines.push_back(std::move(line));
    }
  }
  return layer;
}

}  // namespace lanesurvey
