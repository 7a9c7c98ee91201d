#include "lanesurvey/route_layer.hpp"

#include <fstream>

#include "json.hpp"
#include "lanesurvey/errors.hpp"

namespace lanesurvey {
namespace {

using nlohmann::json;

json feature_of(const RoutePolyline& line, const std::string* layer_name) {
  json coords = json::array();
  for (const GeoPoint& p : line.points) coords.push_back(json::array({p.lon, p.lat}));
  json props = json::object();
  for (const auto& [k, v] : line.properties) props[k] = v;
  if (layer_name) props["layer"] = *layer_name;
  props["length_m"] = line.length_m();
  if (!line.node_ids.empty()) props["node_ids"] = line.node_ids;
  return json{{"type", "Feature"},
              {"properties", props},
              {"geometry", {{"type", "LineString"}, {"coordinates", coords}}}};
}

std::vector<GeoPoint> parse_line(const json& coords) {
  std::vector<GeoPoint> pts;
  for (const auto& c : coords) {
    if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number()) {
      throw InputError("GeoJSON: malformed coordinate");
    }
    pts.push_back({c[1].get<double>(), c[0].get<double>()});
  }
  return pts;
}

}  // namespace

double RouteLayer::length_m() const {
  double total = 0.0;
  for (const auto& line : polylines) total += line.length_m();
  return total;
}

std::string to_geojson(const RouteLayer& layer) {
  json features = json::array();
  for (const auto& line : layer.polylines) features.push_back(feature_of(line, nullptr));
  json doc{{"type", "FeatureCollection"}, {"name", layer.name}, {"features", features}};
  return doc.dump(1) + "\n";
}

std::string to_geojson(const std::vector<const RouteLayer*>& layers) {
  json features = json::array();
  std::string name;
  for (const RouteLayer* layer : layers) {
    if (!name.empty()) name += "+";
    name += layer->name;
    for (const auto& line : layer->polylines) features.push_back(feature_of(line, &layer->name));
  }
  json doc{{"type", "FeatureCollection"}, {"name", name}, {"features", features}};
  return doc.dump(1) + "\n";
}

RouteLayer layer_from_geojson(std::string_view text, std::string name) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("GeoJSON: ") + e.what());
  }
  RouteLayer layer;
  layer.name = std::move(name);

  std::vector<const json*> features;
  if (doc.value("type", "") == "FeatureCollection" && doc.contains("features")) {
    for (const auto& f : doc["features"]) features.push_back(&f);
  } else if (doc.value("type", "") == "Feature") {
    features.push_back(&doc);
  } else {
    throw InputError("GeoJSON: expected a Feature or FeatureCollection");
  }

  for (const json* f : features) {
    if (!f->contains("geometry") || (*f)["geometry"].is_null()) continue;
    const json& geom = (*f)["geometry"];
    std::map<std::string, std::string> props;
    if (f->contains("properties") && (*f)["properties"].is_object()) {
      for (const auto& [k, v] : (*f)["properties"].items()) {
        if (v.is_string()) {
          props[k] = v.get<std::string>();
        } else if (v.is_number() || v.is_boolean()) {
          props[k] = v.dump();
        }
      }
    }
    const std::string type = geom.value("type", "");
    if (type == "LineString") {
      layer.polylines.push_back({parse_line(geom["coordinates"]), {}, props});
    } else if (type == "MultiLineString") {
      for (const auto& part : geom["coordinates"]) layer.polylines.push_back({parse_line(part), {}, props});
    }
  }
  return layer;
}

void write_geojson(const std::filesystem::path& path, const RouteLayer& layer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_geojson(layer);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace lanesurvey
