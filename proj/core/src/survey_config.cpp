#include "lanesurvey/survey_config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "lanesurvey/errors.hpp"

namespace lanesurvey {
namespace {

class ValueParser {
 public:
  ValueParser(std::string_view s, std::size_t line) : s_(s), line_(line) {}

  ConfigValue parse_all() {
    ConfigValue v = parse();
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] != '#') fail("trailing characters after value");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(fmt::format("config line {}: {}", line_, msg));
  }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  ConfigValue parse() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return {basic_string(), line_};
    if (c == '\'') return {literal_string(), line_};
    if (c == '[') return {array(), line_};
    if (s_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return {true, line_};
    }
    if (s_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return {false, line_};
    }
    return {number(), line_};
  }

  std::string basic_string() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) break;
        const char e = s_[pos_++];
        switch (e) {
          case 'n':
            c = '\n';
            break;
          case 't':
            c = '\t';
            break;
          case '"':
          case '\\':
            c = e;
            break;
          default:
            fail(std::string("unsupported escape \\") + e);
        }
      }
      out += c;
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  std::string literal_string() {
    ++pos_;
    const auto end = s_.find('\'', pos_);
    if (end == std::string_view::npos) fail("unterminated string");
    std::string out(s_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return out;
  }

  ConfigArray array() {
    ++pos_;
    ConfigArray out;
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return out;
    }
    while (true) {
      out.push_back(parse());
      skip_ws();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ']') {
          ++pos_;
          return out;
        }
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return out;
      }
      fail("expected ',' or ']' in array");
    }
  }

  double number() {
    std::size_t end = pos_;
    while (end < s_.size() && std::string_view("+-0123456789.eE_").find(s_[end]) != std::string_view::npos) ++end;
    std::string text;
    for (std::size_t i = pos_; i < end; ++i) {
      if (s_[i] != '_') text += s_[i];
    }
    if (text.empty()) fail("expected a value");
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != text.size() || !std::isfinite(v)) fail("bad number '" + text + "'");
    pos_ = end;
    return v;
  }

  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

// Typed access with unknown-key detection.
class Reader {
 public:
  Reader(const ConfigDocument& doc, std::filesystem::path base) : doc_(doc), base_(std::move(base)) {}

  void section(const std::string& name, const std::function<void()>& body) {
    current_ = name;
    body();
    auto it = doc_.find(name);
    if (it == doc_.end()) return;
    for (const auto& [key, value] : it->second) {
      if (!used_.contains(name + "." + key)) {
        throw ConfigError(fmt::format("config line {}: unknown key '{}'{}", value.line, key,
                                      name.empty() ? "" : " in [" + name + "]"));
      }
    }
  }

  void check_sections(const std::set<std::string>& known) const {
    for (const auto& [name, keys] : doc_) {
      if (!known.contains(name)) throw ConfigError("unknown config section [" + name + "]");
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const ConfigValue* v = find(key)) out = as<std::string>(*v, key, "a string");
  }

  void number(const std::string& key, double& out) {
    if (const ConfigValue* v = find(key)) out = as<double>(*v, key, "a number");
  }

  void integer(const std::string& key, int& out) {
    double d = out;
    number(key, d);
    if (d != std::floor(d) || std::fabs(d) > 1e9) throw ConfigError(where(key) + " must be an integer");
    out = static_cast<int>(d);
  }

  void boolean(const std::string& key, bool& out) {
    if (const ConfigValue* v = find(key)) out = as<bool>(*v, key, "a boolean");
  }

  void path(const std::string& key, std::optional<std::filesystem::path>& out, bool must_exist) {
    const ConfigValue* v = find(key);
    if (!v) return;
    const std::string s = as<std::string>(*v, key, "a path string");
    if (s.empty()) {
      out.reset();
      return;
    }
    std::filesystem::path p(s);
    if (p.is_relative()) p = base_ / p;
    if (must_exist && !std::filesystem::exists(p)) {
      throw ConfigError(fmt::format("{}: path does not exist: {}", where(key), p.string()));
    }
    out = p.lexically_normal();
  }

  void polygon(const std::string& key, std::vector<std::pair<double, double>>& out) {
    const ConfigValue* v = find(key);
    if (!v) return;
    const auto& arr = as<ConfigArray>(*v, key, "an array of [x, y] pairs");
    std::vector<std::pair<double, double>> poly;
    for (const ConfigValue& pt : arr) {
      const auto* xy = std::get_if<ConfigArray>(&pt.value);
      if (!xy || xy->size() != 2 || !std::holds_alternative<double>((*xy)[0].value) ||
          !std::holds_alternative<double>((*xy)[1].value)) {
        throw ConfigError(where(key) + " must be an array of [x, y] pairs");
      }
      poly.emplace_back(std::get<double>((*xy)[0].value), std::get<double>((*xy)[1].value));
    }
    out = std::move(poly);
  }

 private:
  std::string where(const std::string& key) const {
    return current_.empty() ? "'" + key + "'" : "[" + current_ + "] " + key;
  }

  const ConfigValue* find(const std::string& key) {
    used_.insert(current_ + "." + key);
    auto s = doc_.find(current_);
    if (s == doc_.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }

  template <typename T>
  const T& as(const ConfigValue& v, const std::string& key, const char* what) const {
    const T* p = std::get_if<T>(&v.value);
    if (!p) throw ConfigError(fmt::format("config line {}: {} must be {}", v.line, where(key), what));
    return *p;
  }

  const ConfigDocument& doc_;
  std::filesystem::path base_;
  std::string current_;
  std::set<std::string> used_;
};

}  // namespace

ConfigDocument parse_config_document(std::string_view text) {
  ConfigDocument doc;
  doc[""];
  std::string section;
  std::set<std::string> declared;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view raw = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') {
      if (end == text.size()) break;
      continue;
    }
    if (line[0] == '[') {
      const auto close = line.find(']');
      if (close == std::string::npos) throw ConfigError(fmt::format("config line {}: unterminated section", line_no));
      const std::string rest = trim(std::string_view(line).substr(close + 1));
      if (!rest.empty() && rest[0] != '#') {
        throw ConfigError(fmt::format("config line {}: trailing text after section", line_no));
      }
      section = trim(std::string_view(line).substr(1, close - 1));
      if (!valid_key(section)) throw ConfigError(fmt::format("config line {}: bad section name", line_no));
      if (!declared.insert(section).second) {
        throw ConfigError(fmt::format("config line {}: duplicate section [{}]", line_no, section));
      }
      doc[section];
    } else {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(fmt::format("config line {}: expected key = value", line_no));
      const std::string key = trim(std::string_view(line).substr(0, eq));
      if (!valid_key(key)) throw ConfigError(fmt::format("config line {}: bad key '{}'", line_no, key));
      auto& table = doc[section];
      if (table.contains(key)) throw ConfigError(fmt::format("config line {}: duplicate key '{}'", line_no, key));
      table[key] = ValueParser(std::string_view(line).substr(eq + 1), line_no).parse_all();
    }
    if (end == text.size()) break;
  }
  return doc;
}

void SurveyConfig::validate() const {
  plan.validate();
  inference.validate();
  shoulder.validate();
  mask.validate();
  if (!(min_confidence >= 0.0 && min_confidence <= 1.0)) throw ConfigError("min_confidence must be in [0, 1]");
  if (support.radius_m < 0.0 || support.min_separation_m < 0.0 || support.required < 0) {
    throw ConfigError("support filter values must be non-negative");
  }
  if (support.min_separation_m > support.radius_m && support.radius_m > 0.0) {
    throw ConfigError("support min_separation_m must not exceed radius_m");
  }
  if (!(match.max_distance_m > 0.0)) throw ConfigError("match max_distance_m must be positive");
  if (fetch.width < 1 || fetch.height < 1 || fetch.width > kMaxImageSide || fetch.height > kMaxImageSide) {
    throw ConfigError(fmt::format("image size must be within 1..{}", kMaxImageSide));
  }
  if (fetch.concurrency < 1) throw ConfigError("imagery concurrency must be >= 1");
  if (!(fps_source > 0.0) || !(fps_sampled > 0.0) || fps_sampled > fps_source) {
    throw ConfigError("dashcam frame rates must satisfy 0 < fps_sampled <= fps_source");
  }
  if (!(vision.canny.low < vision.canny.high)) throw ConfigError("canny low must be below high");
  if (vision.hough.vote_threshold < 1) throw ConfigError("hough vote_threshold must be >= 1");
  if (vision.own_mask.size() < 3) throw ConfigError("own-lane mask needs at least 3 vertices");
  if (!(vision.upper_row_frac > 0.0 && vision.upper_row_frac < 1.0)) {
    throw ConfigError("upper_row_frac must be in (0, 1)");
  }
}

SurveyConfig parse_survey_config(std::string_view text, const std::filesystem::path& base_dir) {
  const ConfigDocument doc = parse_config_document(text);
  SurveyConfig cfg;
  cfg.base_dir = base_dir;
  Reader r(doc, base_dir);
  r.check_sections({"", "osm", "plan", "imagery", "detector", "support", "inference", "match", "dashcam", "vision",
                    "shoulder", "compare"});

  r.section("", [&] {
    r.string("name", cfg.name);
    std::optional<std::filesystem::path> out;
    r.path("output_dir", out, false);
    cfg.output_dir = out ? *out : base_dir / "out";
  });
  r.section("osm", [&] {
    r.path("extract", cfg.extract, true);
    r.path("margin_extract", cfg.margin_extract, true);
  });
  r.section("plan", [&] {
    r.number("margin_m", cfg.plan.margin_m);
    r.number("interval_m", cfg.plan.interval_m);
    r.number("dedupe_radius_m", cfg.plan.dedupe_radius_m);
  });
  r.section("imagery", [&] {
    std::string mode = "offline";
    r.string("mode", mode);
    if (mode == "offline") {
      cfg.imagery.mode = ImageryMode::kOffline;
    } else if (mode == "network") {
      cfg.imagery.mode = ImageryMode::kNetwork;
    } else {
      throw ConfigError("[imagery] mode must be 'network' or 'offline'");
    }
    r.string("endpoint", cfg.imagery.endpoint);
    r.path("key_file", cfg.api_key_file, true);
    std::optional<std::filesystem::path> cache, fixtures;
    r.path("cache_dir", cache, false);
    cfg.imagery.cache_dir = cache ? *cache : cfg.output_dir / "cache";
    r.path("fixture_dir", fixtures, true);
    if (fixtures) cfg.imagery.fixture_dir = *fixtures;
    r.integer("max_retries", cfg.imagery.max_retries);
    r.number("max_retry_wait_s", cfg.imagery.max_retry_wait_s);
    r.integer("width", cfg.fetch.width);
    r.integer("height", cfg.fetch.height);
    int conc = static_cast<int>(cfg.fetch.concurrency);
    r.integer("concurrency", conc);
    if (conc < 1) throw ConfigError("[imagery] concurrency must be >= 1");
    cfg.fetch.concurrency = static_cast<unsigned>(conc);
  });
  r.section("detector", [&] {
    r.string("adapter", cfg.detector_adapter);
    r.path("label_map", cfg.label_map, true);
    r.number("min_confidence", cfg.min_confidence);
    r.polygon("mask", cfg.mask.polygon);
  });
  r.section("support", [&] {
    r.number("radius_m", cfg.support.radius_m);
    r.number("min_separation_m", cfg.support.min_separation_m);
    r.integer("required", cfg.support.required);
  });
  r.section("inference", [&] { r.integer("max_gap", cfg.inference.max_gap); });
  r.section("match", [&] { r.number("max_distance_m", cfg.match.max_distance_m); });
  r.section("dashcam", [&] {
    r.path("footage_dir", cfg.footage_dir, true);
    r.number("fps_source", cfg.fps_source);
    r.number("fps_sampled", cfg.fps_sampled);
    r.path("calibration", cfg.calibration, true);
  });
  r.section("vision", [&] {
    r.number("canny_low", cfg.vision.canny.low);
    r.number("canny_high", cfg.vision.canny.high);
    r.number("gaussian_sigma", cfg.vision.canny.sigma);
    r.integer("hough_votes", cfg.vision.hough.vote_threshold);
    r.number("hough_theta_deg", cfg.vision.hough.theta_step_deg);
    r.number("hough_rho_px", cfg.vision.hough.rho_step_px);
    r.number("min_abs_slope", cfg.vision.min_abs_slope);
    r.number("shoulder_gap_px", cfg.vision.shoulder_gap_px);
    r.number("upper_row_frac", cfg.vision.upper_row_frac);
    r.number("lower_row_frac", cfg.vision.lower_row_frac);
    r.polygon("own_mask", cfg.vision.own_mask);
  });
  r.section("shoulder", [&] {
    r.number("min_detect_fraction", cfg.shoulder.min_detect_fraction);
    r.number("min_mean_width_px", cfg.shoulder.min_mean_width_px);
    r.number("max_stddev_px", cfg.shoulder.max_stddev_px);
    r.number("intersection_exclusion_m", cfg.shoulder.intersection_exclusion_m);
    int min_frames = static_cast<int>(cfg.shoulder.min_frames);
    r.integer("min_frames", min_frames);
    if (min_frames < 0) throw ConfigError("[shoulder] min_frames must be >= 0");
    cfg.shoulder.min_frames = static_cast<std::size_t>(min_frames);
  });
  r.section("compare", [&] {
    r.path("overlay", cfg.overlay, true);
    r.boolean("restrict_to_surveyed", cfg.restrict_to_surveyed);
  });
  cfg.validate();
  return cfg;
}

SurveyConfig load_survey_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_survey_config(ss.str(), std::filesystem::absolute(path).parent_path());
}

}  // namespace lanesurvey
