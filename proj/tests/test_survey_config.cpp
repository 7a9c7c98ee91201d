#include <gtest/gtest.h>

#include "lanesurvey/errors.hpp"
#include "lanesurvey/survey_config.hpp"
#include "test_support.hpp"

using namespace lanesurvey;
using lanesurvey::testing::TempDir;
using lanesurvey::testing::write_file;

TEST(ConfigDocument, ParsesValues) {
  const ConfigDocument doc = parse_config_document(R"(
name = "Town"   # trailing comment
[a]
s = 'literal \n'
b = "esc \"q\" \t"
n = -1.5e2
t = true
arr = [[0, 1], [2.5, 3]]
)");
  EXPECT_EQ(std::get<std::string>(doc.at("").at("name").value), "Town");
  EXPECT_EQ(std::get<std::string>(doc.at("a").at("s").value), "literal \\n");
  EXPECT_EQ(std::get<std::string>(doc.at("a").at("b").value), "esc \"q\" \t");
  EXPECT_DOUBLE_EQ(std::get<double>(doc.at("a").at("n").value), -150.0);
  EXPECT_TRUE(std::get<bool>(doc.at("a").at("t").value));
  const auto& arr = std::get<ConfigArray>(doc.at("a").at("arr").value);
  ASSERT_EQ(arr.size(), 2u);
  EXPECT_DOUBLE_EQ(std::get<double>(std::get<ConfigArray>(arr[1].value)[0].value), 2.5);
  EXPECT_EQ(doc.at("a").at("t").line, 7u);
}

TEST(ConfigDocument, Rejects) {
  EXPECT_THROW(parse_config_document("[a\n"), ConfigError);
  EXPECT_THROW(parse_config_document("x\n"), ConfigError);
  EXPECT_THROW(parse_config_document("x = 1\nx = 2\n"), ConfigError);
  EXPECT_THROW(parse_config_document("[a]\n[a]\n"), ConfigError);
  EXPECT_THROW(parse_config_document("x = \"open\n"), ConfigError);
}

TEST(SurveyConfig, DefaultsAndPaths) {
  TempDir dir;
  write_file(dir / "town.osm", "<osm/>");
  const SurveyConfig c = parse_survey_config("[osm]\nextract = \"town.osm\"\n", dir.path());
  EXPECT_EQ(c.name, "survey");
  EXPECT_EQ(*c.extract, dir / "town.osm");
  EXPECT_EQ(c.output_dir, dir / "out");
  EXPECT_EQ(c.imagery.cache_dir, dir / "out" / "cache");
  EXPECT_EQ(c.imagery.mode, ImageryMode::kOffline);
  EXPECT_DOUBLE_EQ(c.min_confidence, kDefaultMinConfidence);
  EXPECT_DOUBLE_EQ(c.plan.margin_m, 20.0);
  EXPECT_DOUBLE_EQ(c.plan.interval_m, 10.0);
  EXPECT_EQ(c.shoulder.min_frames, 5u);
  EXPECT_DOUBLE_EQ(c.shoulder.min_detect_fraction, 0.80);
  EXPECT_FALSE(c.restrict_to_surveyed);
}

TEST(SurveyConfig, Sections) {
  TempDir dir;
  const SurveyConfig c = parse_survey_config(R"(
name = "x"
output_dir = "/tmp/elsewhere"
[imagery]
mode = "network"
width = 320
height = 240
concurrency = 2
[detector]
adapter = "run-model"
min_confidence = 0.6
mask = [[0, 0], [1, 0], [1, 0.5]]
[support]
radius_m = 40
required = 3
[inference]
max_gap = 2
[dashcam]
fps_source = 30
fps_sampled = 3
[shoulder]
min_frames = 7
[compare]
restrict_to_surveyed = true
)",
                                             dir.path());
  EXPECT_EQ(c.output_dir, "/tmp/elsewhere");
  EXPECT_EQ(c.imagery.mode, ImageryMode::kNetwork);
  EXPECT_EQ(c.fetch.width, 320);
  EXPECT_EQ(c.fetch.concurrency, 2u);
  EXPECT_EQ(c.detector_adapter, "run-model");
  EXPECT_DOUBLE_EQ(c.min_confidence, 0.6);
  EXPECT_EQ(c.mask.polygon.size(), 3u);
  EXPECT_DOUBLE_EQ(c.support.radius_m, 40.0);
  EXPECT_EQ(c.support.required, 3);
  EXPECT_EQ(c.inference.max_gap, 2);
  EXPECT_DOUBLE_EQ(c.fps_sampled, 3.0);
  EXPECT_EQ(c.shoulder.min_frames, 7u);
  EXPECT_TRUE(c.restrict_to_surveyed);
}

TEST(SurveyConfig, Errors) {
  TempDir dir;
  auto bad = [&](const std::string& text) {
    EXPECT_THROW(parse_survey_config(text, dir.path()), ConfigError) << text;
  };
  bad("[nonsense]\n");
  bad("[plan]\nspeed = 1\n");
  bad("[osm]\nextract = \"missing.osm\"\n");
  bad("[plan]\ninterval_m = \"ten\"\n");
  bad("[imagery]\nmode = \"carrier-pigeon\"\n");
  bad("[imagery]\nwidth = 700\n");
  bad("[detector]\nmin_confidence = 1.5\n");
  bad("[inference]\nmax_gap = 1.5\n");
  bad("[dashcam]\nfps_source = 5\nfps_sampled = 10\n");
  bad("[support]\nradius_m = 5\nmin_separation_m = 10\n");
  bad("[detector]\nmask = [1, 2]\n");
  EXPECT_THROW(load_survey_config(dir / "absent.toml"), ConfigError);
}

TEST(SurveyConfig, LoadResolvesAgainstFileDirectory) {
  TempDir dir;
  std::filesystem::create_directories(dir / "conf");
  write_file(dir / "conf" / "labels.txt", "1 BikeLaneMarker\n");
  write_file(dir / "conf" / "s.toml", "[detector]\nlabel_map = \"labels.txt\"\n");
  const SurveyConfig c = load_survey_config(dir / "conf" / "s.toml");
  EXPECT_EQ(*c.label_map, dir / "conf" / "labels.txt");
  EXPECT_EQ(c.base_dir, dir / "conf");
}
