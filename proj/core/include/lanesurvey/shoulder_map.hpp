#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lanesurvey/dashcam_ingest.hpp"
#include "lanesurvey/lane_vision.hpp"
#include "lanesurvey/map_match.hpp"
#include "lanesurvey/route_layer.hpp"

namespace lanesurvey {

struct ShoulderConfig {
  double min_detect_fraction = 0.80;
  double min_mean_width_px = 75.0;
  double max_stddev_px = 50.0;
  double intersection_exclusion_m = 30.0;
  std::size_t min_frames = 5;

  void validate() const;
};

struct SegmentStats {
  SegmentKey key;
  std::size_t frames_total = 0;     // eligible frames
  std::size_t frames_detected = 0;  // eligible frames with a measured width
  double detect_fraction = 0.0;
  std::optional<double> mean_width_px;
  std::optional<double> stddev_ix_px;  // population, over frames with an intersection point
  std::optional<double> stddev_iy_px;
};

struct FrameAssignment {
  std::optional<SegmentKey> key;
  bool excluded = false;  // within the exclusion distance of a bracketing intersection
};

struct AggregateResult {
  std::vector<SegmentStats> segments;     // ordered by key
  std::vector<FrameAssignment> frames;    // parallel to the input
  std::vector<std::string> diagnostics;
};

/// Groups observations (parallel to `frames`) by segment key, drops frames
/// near the bracketing intersections and computes per-segment statistics.
AggregateResult aggregate(const std::vector<GeotaggedFrame>& frames, const std::vector<LaneObservation>& observations,
                          const SpatialIndex& index, const ShoulderConfig& cfg = {}, const MatchConfig& match = {});

/// Inclusive thresholds: fraction >= min, width >= min, both stddevs <= max.
bool classify(double detect_fraction, double mean_width_px, double stddev_ix_px, double stddev_iy_px,
              const ShoulderConfig& cfg = {});
/// False when any statistic is missing.
bool classify(const SegmentStats& stats, const ShoulderConfig& cfg = {});

enum class ShoulderStatus { kShoulder, kNoShoulder, kInsufficientData };
std::string_view to_string(ShoulderStatus s);

/// classify, except segments with fewer than min_frames eligible frames.
ShoulderStatus assess(const SegmentStats& stats, const ShoulderConfig& cfg = {});

/// Chain path between the bracketing intersections of each positive segment.
RouteLayer shoulder_layer(const std::vector<SegmentStats>& segments, const RoadNetwork& network,
                          const ShoulderConfig& cfg = {});

/// One row per frame with its segment's statistics appended.
void write_summary(const std::filesystem::path& path, const std::vector<GeotaggedFrame>& frames,
                   const std::vector<LaneObservation>& observations, const AggregateResult& agg,
                   const ShoulderConfig& cfg = {});

}  // namespace lanesurvey
