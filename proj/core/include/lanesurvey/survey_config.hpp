#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lanesurvey/detector_gateway.hpp"
#include "lanesurvey/imagery_cache.hpp"
#include "lanesurvey/lane_vision.hpp"
#include "lanesurvey/map_match.hpp"
#include "lanesurvey/route_infer.hpp"
#include "lanesurvey/shoulder_map.hpp"
#include "lanesurvey/survey_plan.hpp"

namespace lanesurvey {

struct ConfigValue;
using ConfigArray = std::vector<ConfigValue>;

struct ConfigValue {
  std::variant<std::string, double, bool, ConfigArray> value;
  std::size_t line = 0;
};

/// Section name ("" for top level) -> key -> value.
using ConfigDocument = std::map<std::string, std::map<std::string, ConfigValue>>;

/// TOML subset: [section] headers, key = value, strings (basic and literal),
/// numbers, booleans and (nested) arrays on one line, '#' comments.
ConfigDocument parse_config_document(std::string_view text);

struct SurveyConfig {
  std::string name = "survey";
  std::filesystem::path base_dir;
  std::filesystem::path output_dir = "out";

  std::optional<std::filesystem::path> extract;
  std::optional<std::filesystem::path> margin_extract;

  PlanConfig plan;

  ImageryConfig imagery;
  std::optional<std::filesystem::path> api_key_file;
  FetchOptions fetch;

  std::string detector_adapter;
  std::optional<std::filesystem::path> label_map;
  double min_confidence = kDefaultMinConfidence;
  DetectionMask mask = DetectionMask::default_mask();

  SupportConfig support;
  InferenceConfig inference;
  MatchConfig match;

  std::optional<std::filesystem::path> footage_dir;
  double fps_source = 60.0;
  double fps_sampled = 5.0;
  std::optional<std::filesystem::path> calibration;
  LaneVisionConfig vision;

  ShoulderConfig shoulder;

  std::optional<std::filesystem::path> overlay;
  /// Compare OSM routes only on chains the dash camera travelled.
  bool restrict_to_surveyed = false;

  /// Throws ConfigError for out-of-range values.
  void validate() const;
};

/// Relative paths resolve against `base_dir`. Unknown sections or keys and
/// missing input files are ConfigErrors.
SurveyConfig parse_survey_config(std::string_view text, const std::filesystem::path& base_dir);
SurveyConfig load_survey_config(const std::filesystem::path& path);

}  // namespace lanesurvey
