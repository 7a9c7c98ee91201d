#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lanesurvey/geodesy.hpp"

namespace lanesurvey {

using NodeId = std::int64_t;
using WayId = std::int64_t;

struct RoutePolyline {
  std::vector<GeoPoint> points;
  std::vector<NodeId> node_ids;  // parallel to points when drawn from the network, else empty
  std::map<std::string, std::string> properties;

  double length_m() const { return polyline_length_m(points); }
};

/// A named set of polylines; serializes to a GeoJSON FeatureCollection of
/// LineString features.
struct RouteLayer {
  std::string name;
  std::vector<RoutePolyline> polylines;

  double length_m() const;
  bool empty() const { return polylines.empty(); }
};

std::string to_geojson(const RouteLayer& layer);

/// Concatenates several layers into one collection. Each feature gets a
/// `layer` property naming its source layer.
std::string to_geojson(const std::vector<const RouteLayer*>& layers);

/// Reads LineString and MultiLineString features (other geometry types are
/// skipped). String/number properties are kept as text. Throws InputError.
RouteLayer layer_from_geojson(std::string_view text, std::string name);

void write_geojson(const std::filesystem::path& path, const RouteLayer& layer);

}  // namespace lanesurvey
