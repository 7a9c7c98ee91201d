#include "lanesurvey/geo_compare.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include "json.hpp"

#include "lanesurvey/errors.hpp"

namespace lanesurvey {
namespace {

void check_shape(const RoadNetwork& network, const EdgeFlags& flags, const char* what) {
  if (flags.size() != network.chains.size()) throw DomainError(fmt::format("{} flags: chain count mismatch", what));
  for (std::size_t c = 0; c < flags.size(); ++c) {
    if (flags[c].size() != network.chains[c].edge_count()) {
      throw DomainError(fmt::format("{} flags: edge count mismatch on chain {}", what, c));
    }
  }
}

// Appends one polyline per maximal run of edges satisfying `pred`.
template <typename Pred>
void add_runs(const RoadNetwork& network, const NamedChain& chain, Pred pred, RouteLayer& layer) {
  std::size_t e = 0;
  while (e < chain.edge_count()) {
    if (!pred(e)) {
      ++e;
      continue;
    }
    std::size_t end = e;
    while (end < chain.edge_count() && pred(end)) ++end;
    layer.polylines.push_back(chain_polyline(network, chain, e, end));
    e = end;
  }
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

std::string_view to_string(EdgeClass c) {
  switch (c) {
    case EdgeClass::kNeither:
      return "neither";
    case EdgeClass::kBoth:
      return "both";
    case EdgeClass::kDetectedOnly:
      return "detected_only";
    case EdgeClass::kOsmOnly:
      return "osm_only";
  }
  return "unknown";
}

EdgeClass compare_flags(bool detected, bool osm) {
  if (detected && osm) return EdgeClass::kBoth;
  if (detected) return EdgeClass::kDetectedOnly;
  if (osm) return EdgeClass::kOsmOnly;
  return EdgeClass::kNeither;
}

EdgeFlags osm_edge_flags(const RoadNetwork& network) {
  EdgeFlags flags;
  for (const NamedChain& chain : network.chains) {
    std::vector<bool> f(chain.edge_count());
    for (std::size_t e = 0; e < chain.edge_count(); ++e) f[e] = network.way(chain.edge_ways[e]).has_cycleway;
    flags.push_back(std::move(f));
  }
  return flags;
}

EdgeFlags detected_edge_flags(const RoadNetwork& network, const std::vector<IntersectionEvidence>& evidence,
                              const InferenceConfig& cfg) {
  cfg.validate();
  EdgeFlags flags;
  for (const NamedChain& chain : network.chains) flags.emplace_back(chain.edge_count(), false);
  for (const IntersectionEvidence& ev : evidence) {
    const std::vector<bool> edges = detected_edges(network, ev, cfg);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (edges[e]) flags.at(ev.chain)[e] = true;
    }
  }
  return flags;
}

EdgeFlags restrict_to_surveyed(const EdgeFlags& flags, const std::set<std::size_t>& surveyed) {
  EdgeFlags out = flags;
  for (std::size_t c = 0; c < out.size(); ++c) {
    if (!surveyed.contains(c)) std::fill(out[c].begin(), out[c].end(), false);
  }
  return out;
}

std::set<std::size_t> surveyed_chains(const SpatialIndex& index, const std::vector<GeotaggedFrame>& frames,
                                      const MatchConfig& cfg) {
  std::set<std::size_t> chains;
  const RoadNetwork& net = index.network();
  for (const GeotaggedFrame& f : frames) {
    const auto m = match_point(index, f.point, cfg);
    if (!m) continue;
    auto it = net.chain_of_way.find(m->way_id);
    if (it != net.chain_of_way.end()) chains.insert(it->second);
  }
  return chains;
}

ComparisonReport compare_edges(const RoadNetwork& network, const EdgeFlags& detected, const EdgeFlags& osm) {
  check_shape(network, detected, "detected");
  check_shape(network, osm, "osm");
  ComparisonReport r;
  r.detected.name = "detected";
  r.osm.name = "osm";
  r.both.name = "both";
  r.detected_only.name = "detected_only";
  r.osm_only.name = "osm_only";
  for (std::size_t c = 0; c < network.chains.size(); ++c) {
    const NamedChain& chain = network.chains[c];
    const auto& d = detected[c];
    const auto& o = osm[c];
    for (std::size_t e = 0; e < chain.edge_count(); ++e) {
      const double len = distance_m(network.point(chain.edge_from(e)), network.point(chain.edge_to(e)));
      switch (compare_flags(d[e], o[e])) {
        case EdgeClass::kBoth:
          r.both_m += len;
          break;
        case EdgeClass::kDetectedOnly:
          r.detected_only_m += len;
          break;
        case EdgeClass::kOsmOnly:
          r.osm_only_m += len;
          break;
        case EdgeClass::kNeither:
          break;
      }
    }
    add_runs(network, chain, [&](std::size_t e) { return static_cast<bool>(d[e]); }, r.detected);
    add_runs(network, chain, [&](std::size_t e) { return static_cast<bool>(o[e]); }, r.osm);
    add_runs(network, chain, [&](std::size_t e) { return d[e] && o[e]; }, r.both);
    add_runs(network, chain, [&](std::size_t e) { return d[e] && !o[e]; }, r.detected_only);
    add_runs(network, chain, [&](std::size_t e) { return !d[e] && o[e]; }, r.osm_only);
  }
  r.detected_m = r.both_m + r.detected_only_m;
  r.osm_m = r.both_m + r.osm_only_m;
  return r;
}

ComparisonReport compare(const RoadNetwork& network, const std::vector<IntersectionEvidence>& evidence,
                         const CompareOptions& opts) {
  const EdgeFlags detected = detected_edge_flags(network, evidence, opts.inference);
  EdgeFlags osm = osm_edge_flags(network);
  if (opts.surveyed) osm = restrict_to_surveyed(osm, *opts.surveyed);
  return compare_edges(network, detected, osm);
}

std::string report_text(const ComparisonReport& r, std::string_view title) {
  std::string out;
  if (!title.empty()) out += fmt::format("{}\n", title);
  auto row = [&](std::string_view label, double m) { out += fmt::format("{:<16}{:>10} m\n", label, std::llround(m)); };
  row("detected", r.detected_m);
  row("osm", r.osm_m);
  row("both", r.both_m);
  row("detected only", r.detected_only_m);
  row("osm only", r.osm_only_m);
  return out;
}

std::string report_json(const ComparisonReport& r) {
  nlohmann::ordered_json j;
  j["detected_m"] = r.detected_m;
  j["osm_m"] = r.osm_m;
  j["both_m"] = r.both_m;
  j["detected_only_m"] = r.detected_only_m;
  j["osm_only_m"] = r.osm_only_m;
  j["polylines"] = {{"detected", r.detected.polylines.size()},
                    {"osm", r.osm.polylines.size()},
                    {"both", r.both.polylines.size()},
                    {"detected_only", r.detected_only.polylines.size()},
                    {"osm_only", r.osm_only.polylines.size()}};
  return j.dump(2) + "\n";
}

void write_comparison(const std::filesystem::path& dir, const ComparisonReport& report, std::string_view title) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_geojson(dir / "detected.geojson", report.detected);
  write_geojson(dir / "osm.geojson", report.osm);
  write_geojson(dir / "both.geojson", report.both);

  RouteLayer det_only = report.detected_only;
  RouteLayer osm_only = report.osm_only;
  for (auto& p : det_only.polylines) p.properties["class"] = "detected_only";
  for (auto& p : osm_only.polylines) p.properties["class"] = "osm_only";
  write_text(dir / "only.geojson", to_geojson(std::vector<const RouteLayer*>{&det_only, &osm_only}));
  write_text(dir / "report.txt", report_text(report, title));
  write_text(dir / "report.json", report_json(report));
}

RouteLayer load_overlay(const std::filesystem::path& path, std::string name) {
  return layer_from_geojson(slurp(path), std::move(name));
}

}  // namespace lanesurvey
