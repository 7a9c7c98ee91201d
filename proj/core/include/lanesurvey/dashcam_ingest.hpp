#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lanesurvey/geodesy.hpp"

namespace lanesurvey {

struct NmeaFix {
  double timestamp = 0.0;  // seconds since the Unix epoch, UTC
  GeoPoint point;
  Heading heading;
  std::optional<double> altitude_m;
  std::optional<double> speed_mps;
};

struct NmeaTrack {
  std::vector<NmeaFix> fixes;
  std::vector<std::string> diagnostics;
};

/// Parses RMC (position, course, date) and GGA (altitude) sentences. Bad
/// checksums, void fixes and non-increasing times are skipped with a
/// diagnostic. Throws InputError when no valid fix remains.
NmeaTrack parse_nmea(std::string_view text);
NmeaTrack read_nmea(const std::filesystem::path& path);

/// "ddmm.mmmm" / "dddmm.mmmm" plus hemisphere letter to signed degrees.
double nmea_to_degrees(std::string_view value, char hemisphere);

/// XOR of the characters between '$' and '*'.
unsigned nmea_checksum(std::string_view sentence);

struct ManifestFrame {
  long frame_index = 0;
  std::string path;
};

struct FrameManifest {
  std::string footage_id;
  double fps_source = 60.0;
  double fps_sampled = 5.0;
  std::vector<ManifestFrame> frames;

  int step() const;
};

/// Every step()-th source frame from 0 up to frame_count, named by `pattern`
/// (fmt syntax with one integer argument).
FrameManifest sample_manifest(std::string footage_id, long frame_count, double fps_source = 60.0,
                              double fps_sampled = 5.0, std::string_view pattern = "frame_{:06d}.png");

/// frame_index,relative_path rows (header optional).
FrameManifest read_frame_manifest(const std::filesystem::path& path, std::string footage_id);
void write_frame_manifest(const std::filesystem::path& path, const FrameManifest& manifest);

struct GeotaggedFrame {
  std::string image_path;
  GeoPoint point;
  Heading heading;
  double timestamp = 0.0;
};

struct GeotagResult {
  std::vector<GeotaggedFrame> frames;
  std::vector<std::string> diagnostics;
};

/// Frame time is the first fix time plus frame_index / fps_source. Position
/// is interpolated linearly between bracketing fixes, heading along the
/// shorter arc; frames outside the track clamp to the end fix.
GeotagResult geotag_frames(const FrameManifest& manifest, const std::vector<NmeaFix>& fixes);

inline constexpr const char* kMetadataHeader = "image_path,lat,lon,heading,timestamp";

void write_metadata(const std::filesystem::path& path, const std::vector<GeotaggedFrame>& frames);
std::vector<GeotaggedFrame> read_metadata(const std::filesystem::path& path);

/// Footage directory layout: <dir>/<base>.nmea paired with <dir>/<base>/frames.csv.
/// Image paths in the result are relative to <dir>. Footage is processed in
/// basename order.
GeotagResult ingest_footage_dir(const std::filesystem::path& dir, double fps_source = 60.0);

}  // namespace lanesurvey
