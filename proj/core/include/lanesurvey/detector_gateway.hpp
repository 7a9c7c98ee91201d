#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lanesurvey/geodesy.hpp"
#include "lanesurvey/route_layer.hpp"

namespace lanesurvey {

inline constexpr std::string_view kTargetClass = "BikeLaneMarker";
inline constexpr double kDefaultMinConfidence = 0.55;

/// Normalized image coordinates, origin top-left.
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double centre_x() const { return 0.5 * (x_min + x_max); }
  double centre_y() const { return 0.5 * (y_min + y_max); }
};

struct Detection {
  std::string image_ref;
  std::string class_label;
  double confidence = 0.0;
  BBox bbox;

  /// Throws InputError if confidence or bbox are out of range.
  void validate() const;
};

struct DetectionMask {
  std::vector<std::pair<double, double>> polygon;  // normalized (x, y)

  void validate() const;
  /// Even-odd ray casting; points on the boundary count as inside.
  bool contains(double x, double y) const;

  static DetectionMask full_frame();
  /// Left carriageway ahead of the vehicle, above the bonnet.
  static DetectionMask default_mask();
};

struct DetectionRecord {
  Detection detection;
  GeoPoint point;
  std::optional<WayId> way_id;
  std::optional<NodeId> node_id;
};

/// Image known to the pipeline, with the location it was taken at.
struct ImageEntry {
  std::string image_ref;
  std::filesystem::path path;
  GeoPoint point;
  std::optional<WayId> way_id;
  std::optional<NodeId> node_id;
};

/// Labels from a TF-style pbtxt (`name: '...'`) or one label per line.
std::vector<std::string> parse_label_map(std::string_view text);
std::vector<std::string> read_label_map(const std::filesystem::path& path);

/// Parses adapter output. Rows are image_ref,class_label,confidence,x_min,y_min,x_max,y_max.
/// Throws InputError naming the line for malformed rows or labels absent from
/// `labels` (when non-empty).
std::vector<Detection> parse_detections(std::string_view text, const std::vector<std::string>& labels);

/// One image path per line.
void write_manifest(const std::filesystem::path& path, const std::vector<std::string>& image_refs);
std::vector<std::string> read_manifest(const std::filesystem::path& path);

/// Splits a command line on whitespace, honouring single and double quotes.
std::vector<std::string> split_command(std::string_view command);

/// Runs `adapter <manifest> <output> <label_map>` and parses its output.
/// Throws ExternalError on spawn failure or nonzero exit.
std::vector<Detection> run_detector(const std::filesystem::path& manifest, std::string_view adapter_command,
                                    const std::filesystem::path& label_map, const std::filesystem::path& output);

std::vector<Detection> apply_threshold(const std::vector<Detection>& dets, double min_conf = kDefaultMinConfidence);
std::vector<Detection> apply_mask(const std::vector<Detection>& dets, const DetectionMask& mask);

struct SupportConfig {
  double radius_m = 50.0;
  double min_separation_m = 10.0;
  int required = 2;
};

/// Keeps a record iff at least `required` other records lie within radius_m
/// and no closer than min_separation_m.
std::vector<DetectionRecord> support_filter(const std::vector<DetectionRecord>& records,
                                            const SupportConfig& cfg = {});

struct LocateResult {
  std::vector<DetectionRecord> records;
  std::vector<std::string> diagnostics;
};

/// Joins detections to image locations by image_ref.
LocateResult locate(const std::vector<Detection>& dets, const std::vector<ImageEntry>& images);

struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

/// Normalized bbox scaled by image size, rounded, clamped to the frame.
PixelRect to_pixels(const BBox& box, int width, int height);

struct PartitionResult {
  std::size_t hits = 0;
  std::size_t misses = 0;
  std::vector<std::string> diagnostics;
};

/// Copies each image into out_dir/hits (with boxes drawn) or out_dir/miss.
/// An image is a hit iff some record references it. When `mask` is given its
/// outline is drawn on hit overlays.
PartitionResult partition_outputs(const std::vector<DetectionRecord>& hits, const std::vector<ImageEntry>& images,
                                  const std::filesystem::path& out_dir, const DetectionMask* mask = nullptr);

inline constexpr const char* kDetectionLogHeader =
    "image_ref,lat,lon,class,confidence,x_min,y_min,x_max,y_max,way_id,node_id";

void write_detection_log(const std::filesystem::path& path, const std::vector<DetectionRecord>& records);
std::vector<DetectionRecord> read_detection_log(const std::filesystem::path& path);

}  // namespace lanesurvey
