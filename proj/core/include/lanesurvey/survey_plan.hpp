#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "lanesurvey/geodesy.hpp"
#include "lanesurvey/osm_network.hpp"

namespace lanesurvey {

inline constexpr double kDefaultFovDeg = 90.0;
inline constexpr double kDefaultPitchDeg = -20.0;

struct SamplePoint {
  GeoPoint point;
  WayId way_id = 0;
  NodeId node_id = 0;  // anchor intersection
  double offset_m = 0.0;  // signed, along the chain direction
  Heading road_heading;
  std::array<Heading, 4> capture_headings;  // road heading + 0, 90, 180, 270
  double fov_deg = kDefaultFovDeg;
  double pitch_deg = kDefaultPitchDeg;
};

struct PlanConfig {
  double margin_m = 20.0;
  double interval_m = 10.0;
  double dedupe_radius_m = 5.0;

  /// Throws ConfigError unless margin is a non-negative multiple of a positive interval.
  void validate() const;
};

/// Intersection point plus offsets every interval_m along each road arm out
/// to margin_m, walking chain geometry. Points closer than dedupe_radius_m to
/// an earlier point are dropped. `margin_network` contributes intersections
/// that lie on surveyed roads but whose crossing road is outside the survey
/// extract.
std::vector<SamplePoint> plan_samples(const RoadNetwork& network, const RoadNetwork& margin_network,
                                      const PlanConfig& cfg);

/// Same, without a margin extract.
std::vector<SamplePoint> plan_samples(const RoadNetwork& network, const PlanConfig& cfg);

/// One request row per (point, capture heading).
struct BatchRow {
  std::int64_t point_id = 0;
  GeoPoint point;
  Heading heading;
  double fov_deg = kDefaultFovDeg;
  double pitch_deg = kDefaultPitchDeg;
  WayId way_id = 0;
  NodeId node_id = 0;
  double offset_m = 0.0;
};

inline constexpr const char* kBatchHeader = "point_id,lat,lon,heading_deg,fov_deg,pitch_deg,way_id,node_id,offset_m";

std::vector<BatchRow> batch_rows(const std::vector<SamplePoint>& plan);

/// Writes the batch file (header row always present).
void emit_batch(std::ostream& out, const std::vector<SamplePoint>& plan);
void emit_batch(const std::filesystem::path& path, const std::vector<SamplePoint>& plan);

struct BatchFile {
  std::vector<BatchRow> rows;
  std::vector<std::string> diagnostics;  // one per malformed row
};

/// Parses a batch file; malformed rows become diagnostics rather than errors.
BatchFile read_batch(const std::filesystem::path& path);
BatchFile parse_batch(std::string_view text);

}  // namespace lanesurvey
