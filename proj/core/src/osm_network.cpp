#include "lanesurvey/osm_network.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "lanesurvey/errors.hpp"
#include "xml_scanner.hpp"

namespace lanesurvey {
namespace {

using detail::XmlEvent;
using detail::XmlScanner;

std::int64_t parse_id(const XmlEvent& ev, std::string_view attr) {
  const std::string* raw = ev.attribute(attr);
  if (!raw) {
    throw XmlParseError(fmt::format("<{}> without '{}'", ev.name, attr), ev.offset);
  }
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(raw->data(), raw->data() + raw->size(), value);
  if (ec != std::errc() || ptr != raw->data() + raw->size()) {
    throw XmlParseError(fmt::format("bad {} '{}'", attr, *raw), ev.offset);
  }
  return value;
}

double parse_coord(const XmlEvent& ev, std::string_view attr) {
  const std::string* raw = ev.attribute(attr);
  if (!raw) throw XmlParseError(fmt::format("<node> without '{}'", attr), ev.offset);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(raw->data(), raw->data() + raw->size(), value);
  if (ec != std::errc() || ptr != raw->data() + raw->size()) {
    throw XmlParseError(fmt::format("bad {} '{}'", attr, *raw), ev.offset);
  }
  return value;
}

Tag parse_tag(const XmlEvent& ev) {
  const std::string* k = ev.attribute("k");
  const std::string* v = ev.attribute("v");
  if (!k || !v) throw XmlParseError("<tag> needs k and v", ev.offset);
  return {*k, *v};
}

// Skips an element's subtree; `ev` is its start event.
void skip_element(XmlScanner& scanner, const XmlEvent& ev) {
  const std::size_t target = scanner.depth() - (ev.self_closing ? 0 : 1);
  if (ev.self_closing) {
    scanner.next();
    return;
  }
  while (scanner.depth() > target) {
    if (scanner.next().kind == XmlEvent::Kind::kEof) break;
  }
}

std::string xml_escape(std::string_view s) {
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
        out.push_back(c);
    }
  }
  return out;
}

struct OrientedWay {
  WayId id;
  bool reversed;
};

}  // namespace

const std::string* OsmWay::tag(std::string_view key) const {
  for (const Tag& t : tags) {
    if (t.key == key) return &t.value;
  }
  return nullptr;
}

const OsmNode& RoadNetwork::node(NodeId id) const {
  auto it = nodes.find(id);
  if (it == nodes.end()) throw InputError(fmt::format("unknown node {}", id));
  return it->second;
}

const OsmWay& RoadNetwork::way(WayId id) const {
  auto it = ways.find(id);
  if (it == ways.end()) throw InputError(fmt::format("unknown way {}", id));
  return it->second;
}

std::vector<WayId> RoadNetwork::sorted_way_ids() const {
  std::vector<WayId> ids;
  ids.reserve(ways.size());
  for (const auto& [id, w] : ways) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<GeoPoint> RoadNetwork::way_points(WayId id) const {
  std::vector<GeoPoint> pts;
  for (NodeId n : way(id).node_refs) pts.push_back(point(n));
  return pts;
}

std::string normalize_name(std::string_view name) {
  std::string out;
  bool pending_space = false;
  for (char c : name) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c);
  }
  return out;
}

std::string road_key(const OsmWay& way) {
  if (way.name) {
    std::string n = normalize_name(*way.name);
    if (!n.empty()) return n;
  }
  if (const std::string* ref = way.tag("ref")) {
    std::string r = normalize_name(*ref);
    if (!r.empty()) return "ref:" + r;
  }
  return {};
}

bool is_road_way(const std::vector<Tag>& tags) {
  for (const Tag& t : tags) {
    if (t.key == "highway") return t.value != "footway" && t.value != "pedestrian" && t.value != "steps";
  }
  return false;
}

bool has_cycleway_tag(const std::vector<Tag>& tags) {
  return std::any_of(tags.begin(), tags.end(), [](const Tag& t) { return t.key.starts_with("cycleway"); });
}

RoadNetwork parse_extract(std::string_view xml) {
  RoadNetwork net;
  XmlScanner scanner(xml);

  struct PendingWay {
    OsmWay way;
    std::size_t offset;
  };
  std::vector<PendingWay> pending;

  XmlEvent root = scanner.next();
  if (root.kind != XmlEvent::Kind::kStart) throw XmlParseError("empty document", 0);
  if (root.name != "osm" && root.name != "osmChange") {
    throw XmlParseError(fmt::format("root element is <{}>, expected <osm>", root.name), root.offset);
  }

  while (true) {
    XmlEvent ev = scanner.next();
    if (ev.kind == XmlEvent::Kind::kEof) break;
    if (ev.kind == XmlEvent::Kind::kEnd) continue;
    if (scanner.depth() != 2 && !(ev.self_closing && scanner.depth() == 1)) {
      skip_element(scanner, ev);
      continue;
    }

    if (ev.name == "node") {
      OsmNode node;
      node.id = parse_id(ev, "id");
      node.lat = parse_coord(ev, "lat");
      node.lon = parse_coord(ev, "lon");
      if (!is_valid(node.point())) {
        throw XmlParseError(fmt::format("node {} has out-of-range coordinates", node.id), ev.offset);
      }
      if (!ev.self_closing) {
        while (true) {
          XmlEvent child = scanner.next();
          if (child.kind == XmlEvent::Kind::kEnd && child.name == "node" && scanner.depth() == 1) break;
          if (child.kind == XmlEvent::Kind::kStart && child.name == "tag") node.tags.push_back(parse_tag(child));
        }
      } else {
        scanner.next();
      }
      if (!net.nodes.emplace(node.id, node).second) {
        throw XmlParseError(fmt::format("duplicate node id {}", node.id), ev.offset);
      }
    } else if (ev.name == "way") {
      PendingWay pw{{}, ev.offset};
      pw.way.id = parse_id(ev, "id");
      if (!ev.self_closing) {
        while (true) {
          XmlEvent child = scanner.next();
          if (child.kind == XmlEvent::Kind::kEnd && child.name == "way" && scanner.depth() == 1) break;
          if (child.kind != XmlEvent::Kind::kStart) continue;
          if (child.name == "nd") {
            pw.way.node_refs.push_back(parse_id(child, "ref"));
          } else if (child.name == "tag") {
            pw.way.tags.push_back(parse_tag(child));
          }
        }
      } else {
        scanner.next();
      }
      pending.push_back(std::move(pw));
    } else {
      // bounds, relation, changeset and anything else
      skip_element(scanner, ev);
    }
  }

  for (auto& [way, offset] : pending) {
    std::vector<NodeId> resolved;
    resolved.reserve(way.node_refs.size());
    std::size_t dangling = 0;
    for (NodeId ref : way.node_refs) {
      if (net.nodes.contains(ref)) {
        resolved.push_back(ref);
      } else {
        ++dangling;
        net.diagnostics.push_back(fmt::format("way {} references missing node {}", way.id, ref));
      }
    }
    if (dangling > 0 && resolved.size() < 2) {
      net.diagnostics.push_back(
          fmt::format("way {} has fewer than 2 resolvable nodes and is excluded from routing", way.id));
    }
    way.node_refs = std::move(resolved);
    for (const Tag& t : way.tags) {
      if (t.key == "name") way.name = t.value;
    }
    way.is_road = is_road_way(way.tags);
    way.has_cycleway = has_cycleway_tag(way.tags);
    for (std::size_t i = 0; i < way.node_refs.size(); ++i) {
      net.node_memberships[way.node_refs[i]].push_back({way.id, i});
    }
    const WayId id = way.id;
    if (!net.ways.emplace(id, std::move(way)).second) {
      throw XmlParseError(fmt::format("duplicate way id {}", id), offset);
    }
  }
  for (auto& [node, members] : net.node_memberships) std::sort(members.begin(), members.end());
  return net;
}

const std::set<NodeId>& find_intersections(RoadNetwork& network) {
  std::set<NodeId> result;
  for (const auto& [node, members] : network.node_memberships) {
    std::string first_key;
    for (const WayPosition& m : members) {
      const OsmWay& w = network.ways.at(m.way);
      if (!w.is_road || w.node_refs.size() < 2) continue;
      std::string key = road_key(w);
      if (key.empty()) continue;
      if (first_key.empty()) {
        first_key = std::move(key);
      } else if (key != first_key) {
        result.insert(node);
        break;
      }
    }
  }
  network.intersections = std::move(result);
  return network.intersections;
}

const std::vector<NamedChain>& build_chains(RoadNetwork& network) {
  std::map<std::string, std::vector<WayId>> groups;
  std::vector<WayId> singletons;
  for (WayId id : network.sorted_way_ids()) {
    const OsmWay& w = network.ways.at(id);
    if (!w.is_road || w.node_refs.size() < 2) continue;
    std::string key = road_key(w);
    if (key.empty()) {
      singletons.push_back(id);
    } else {
      groups[key].push_back(id);
    }
  }

  std::vector<NamedChain> chains;

  auto assemble = [&](const std::vector<OrientedWay>& seq, bool closed_cycle) {
    NamedChain chain;
    const OsmWay& first = network.ways.at(seq.front().id);
    chain.name = first.name ? *first.name : (first.tag("ref") ? *first.tag("ref") : std::string());
    std::vector<std::pair<NodeId, WayId>> steps;  // node plus way of the edge arriving at it
    for (const OrientedWay& ow : seq) {
      chain.way_ids.push_back(ow.id);
      std::vector<NodeId> refs = network.ways.at(ow.id).node_refs;
      if (ow.reversed) std::reverse(refs.begin(), refs.end());
      for (std::size_t i = 0; i < refs.size(); ++i) {
        if (!steps.empty() && steps.back().first == refs[i]) continue;
        steps.push_back({refs[i], ow.id});
      }
    }
    bool closed = closed_cycle;
    if (steps.size() > 2 && steps.front().first == steps.back().first) closed = true;
    WayId closing_way = 0;
    if (closed && steps.size() > 1 && steps.front().first == steps.back().first) {
      closing_way = steps.back().second;
      steps.pop_back();
    }
    for (std::size_t i = 0; i < steps.size(); ++i) {
      chain.node_path.push_back(steps[i].first);
      if (i + 1 < steps.size()) chain.edge_ways.push_back(steps[i + 1].second);
    }
    if (closed && steps.size() >= 2) {
      chain.closed = true;
      chain.edge_ways.push_back(closing_way != 0 ? closing_way : seq.back().id);
    }
    if (!chain.closed && chain.node_path.size() >= 2 && chain.node_path.front() > chain.node_path.back()) {
      std::reverse(chain.node_path.begin(), chain.node_path.end());
      std::reverse(chain.edge_ways.begin(), chain.edge_ways.end());
      std::reverse(chain.way_ids.begin(), chain.way_ids.end());
    }
    if (chain.node_path.size() >= 2) chains.push_back(std::move(chain));
  };

  for (const auto& [key, ids] : groups) {
    // Graph degree of each node within the group; endpoint incidences per node.
    std::unordered_map<NodeId, int> degree;
    std::unordered_map<NodeId, std::vector<std::pair<WayId, bool>>> ends;  // (way, at_front)
    for (WayId id : ids) {
      const auto& refs = network.ways.at(id).node_refs;
      for (std::size_t i = 0; i < refs.size(); ++i) {
        const bool endpoint = i == 0 || i + 1 == refs.size();
        degree[refs[i]] += endpoint ? 1 : 2;
      }
      ends[refs.front()].push_back({id, true});
      ends[refs.back()].push_back({id, false});
    }

    auto other_way_at = [&](NodeId node, WayId self) -> std::optional<std::pair<WayId, bool>> {
      if (degree[node] != 2) return std::nullopt;
      const auto& inc = ends[node];
      if (inc.size() != 2) return std::nullopt;
      if (inc[0].first == self && inc[1].first == self) return std::nullopt;
      return inc[0].first == self ? inc[1] : inc[0];
    };

    std::set<WayId> visited;
    for (WayId start : ids) {
      if (visited.contains(start)) continue;
      visited.insert(start);
      std::vector<OrientedWay> seq{{start, false}};
      bool cycle = false;

      // forward from the last node
      NodeId tail = network.ways.at(start).node_refs.back();
      WayId tail_way = start;
      while (auto next = other_way_at(tail, tail_way)) {
        if (next->first == start) {
          cycle = true;
          break;
        }
        if (visited.contains(next->first)) break;
        visited.insert(next->first);
        const bool reversed = !next->second;  // entering at its back means walking it backwards
        seq.push_back({next->first, reversed});
        const auto& refs = network.ways.at(next->first).node_refs;
        tail = reversed ? refs.front() : refs.back();
        tail_way = next->first;
      }

      if (!cycle) {
        NodeId head = network.ways.at(start).node_refs.front();
        WayId head_way = start;
        while (auto prev = other_way_at(head, head_way)) {
          if (visited.contains(prev->first)) break;
          visited.insert(prev->first);
          // prepend: its exit must be `head`
          const bool reversed = prev->second;  // touching head with its front means walk backwards
          seq.insert(seq.begin(), {prev->first, reversed});
          const auto& refs = network.ways.at(prev->first).node_refs;
          head = reversed ? refs.back() : refs.front();
          head_way = prev->first;
        }
      }
      assemble(seq, cycle);
    }
  }

  for (WayId id : singletons) assemble({{id, false}}, false);

  std::sort(chains.begin(), chains.end(), [](const NamedChain& a, const NamedChain& b) {
    return *std::min_element(a.way_ids.begin(), a.way_ids.end()) <
           *std::min_element(b.way_ids.begin(), b.way_ids.end());
  });

  network.chains = std::move(chains);
  network.chain_of_way.clear();
  for (std::size_t c = 0; c < network.chains.size(); ++c) {
    for (WayId w : network.chains[c].way_ids) network.chain_of_way[w] = c;
  }
  return network.chains;
}

RoadNetwork load_network(std::string_view xml) {
  RoadNetwork net = parse_extract(xml);
  find_intersections(net);
  build_chains(net);
  return net;
}

RoadNetwork load_network_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read OSM extract " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_network(ss.str());
}

RoutePolyline chain_polyline(const RoadNetwork& network, const NamedChain& chain, std::size_t first_edge,
                             std::size_t last_edge) {
  RoutePolyline line;
  line.properties["name"] = chain.name;
  if (first_edge >= last_edge) return line;
  for (std::size_t e = first_edge; e < last_edge; ++e) {
    if (e == first_edge) {
      line.node_ids.push_back(chain.edge_from(e));
      line.points.push_back(network.point(chain.edge_from(e)));
    }
    line.node_ids.push_back(chain.edge_to(e));
    line.points.push_back(network.point(chain.edge_to(e)));
  }
  return line;
}

RouteLayer cycleway_layer(const RoadNetwork& network) {
  RouteLayer layer;
  layer.name = "osm_cycleway";
  for (const NamedChain& chain : network.chains) {
    std::size_t e = 0;
    while (e < chain.edge_count()) {
      if (!network.way(chain.edge_ways[e]).has_cycleway) {
        ++e;
        continue;
      }
      std::size_t end = e;
      while (end < chain.edge_count() && network.way(chain.edge_ways[end]).has_cycleway) ++end;
      layer.polylines.push_back(chain_polyline(network, chain, e, end));
      e = end;
    }
  }
  return layer;
}

std::string to_osm_xml(const RoadNetwork& network) {
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<osm version=\"0.6\" generator=\"lanesurvey\">\n";
  std::vector<NodeId> node_ids;
  node_ids.reserve(network.nodes.size());
  for (const auto& [id, n] : network.nodes) node_ids.push_back(id);
  std::sort(node_ids.begin(), node_ids.end());
  for (NodeId id : node_ids) {
    const OsmNode& n = network.nodes.at(id);
    out << fmt::format("  <node id=\"{}\" lat=\"{}\" lon=\"{}\"", n.id, n.lat, n.lon);
    if (n.tags.empty()) {
      out << "/>\n";
      continue;
    }
    out << ">\n";
    for (const Tag& t : n.tags) {
      out << "    <tag k=\"" << xml_escape(t.key) << "\" v=\"" << xml_escape(t.value) << "\"/>\n";
    }
    out << "  </node>\n";
  }
  for (WayId id : network.sorted_way_ids()) {
    const OsmWay& w = network.ways.at(id);
    out << "  <way id=\"" << w.id << "\">\n";
    for (NodeId ref : w.node_refs) out << "    <nd ref=\"" << ref << "\"/>\n";
    for (const Tag& t : w.tags) {
      out << "    <tag k=\"" << xml_escape(t.key) << "\" v=\"" << xml_escape(t.value) << "\"/>\n";
    }
    out << "  </way>\n";
  }
  out << "</osm>\n";
  return out.str();
}

}  // namespace lanesurvey
