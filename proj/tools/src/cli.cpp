#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "lanesurvey/csv.hpp"
#include "lanesurvey/dashcam_ingest.hpp"
#include "lanesurvey/detector_gateway.hpp"
#include "lanesurvey/geo_compare.hpp"
#include "lanesurvey/image_io.hpp"
#include "lanesurvey/imagery_cache.hpp"
#include "lanesurvey/lane_vision.hpp"
#include "lanesurvey/map_match.hpp"
#include "lanesurvey/osm_network.hpp"
#include "lanesurvey/route_infer.hpp"
#include "lanesurvey/shoulder_map.hpp"
#include "lanesurvey/survey_config.hpp"
#include "lanesurvey/survey_plan.hpp"

namespace lanesurvey::cli {
namespace fs = std::filesystem;

namespace {

constexpr const char* kFormats = R"(File formats:
  config          TOML subset: [osm] extract, margin_extract; [plan] margin_m, interval_m,
                  dedupe_radius_m; [imagery] mode (offline|network), endpoint, key_file,
                  cache_dir, fixture_dir, width, height, concurrency, max_retries;
                  [detector] adapter, label_map, min_confidence, mask; [support] radius_m,
                  min_separation_m, required; [inference] max_gap; [match] max_distance_m;
                  [dashcam] footage_dir, fps_source, fps_sampled, calibration; [vision] ...;
                  [shoulder] min_detect_fraction, min_mean_width_px, max_stddev_px,
                  intersection_exclusion_m, min_frames; [compare] overlay, restrict_to_surveyed.
                  Relative paths resolve against the config file's directory.
  batch.csv       point_id,lat,lon,heading_deg,fov_deg,pitch_deg,way_id,node_id,offset_m
  images.csv      image_ref,path,lat,lon,heading_deg,way_id,node_id,provenance
  adapter         invoked as <adapter> <manifest> <output> <label_map>; manifest is one image
                  path per line; output rows are
                  image_ref,class_label,confidence,x_min,y_min,x_max,y_max (normalized bbox)
  detection log   image_ref,lat,lon,class,confidence,x_min,y_min,x_max,y_max,way_id,node_id
  footage         <footage_dir>/<name>.nmea (NMEA 0183 RMC/GGA) with
                  <footage_dir>/<name>/frames.csv (frame_index,relative_path)
  metadata.csv    image_path,lat,lon,heading,timestamp
  evidence.csv    chain,name,position,node_id,lat,lon,flagged
  calibration     key = value lines: fx, fy, cx, cy, k1, k2, k3, p1, p2
Environment:
  LANESURVEY_API_KEY_FILE  path of a file holding the imagery API key
  LANESURVEY_API_KEY       the key itself (used when no key file is configured)
Exit codes: 0 ok, 2 config, 3 missing upstream artifact, 4 bad input, 5 I/O,
  6 external tool or service, 7 numerical precondition, 1 unexpected.)";

struct Context {
  std::string config_path;
  std::string output_dir;
  bool verbose = false;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;

  SurveyConfig cfg;

  fs::path dir() const { return cfg.output_dir; }
  fs::path artifact(const std::string& name) const { return cfg.output_dir / name; }

  void diagnostics(const std::vector<std::string>& diags, std::string_view what) const {
    if (diags.empty()) return;
    *err << fmt::format("{}: {} diagnostic(s)\n", what, diags.size());
    const std::size_t shown = verbose ? diags.size() : std::min<std::size_t>(diags.size(), 5);
    for (std::size_t i = 0; i < shown; ++i) *err << "  " << diags[i] << '\n';
    if (shown < diags.size()) *err << fmt::format("  ... {} more (use --verbose)\n", diags.size() - shown);
  }
};

void require(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) throw UpstreamError(path.string(), producer);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

RoadNetwork load_extract(const Context& ctx) {
  if (!ctx.cfg.extract) throw ConfigError("[osm] extract is not configured");
  RoadNetwork net = load_network_file(ctx.cfg.extract->string());
  ctx.diagnostics(net.diagnostics, "osm extract");
  return net;
}

std::optional<std::int64_t> parse_id(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t used = 0;
  const long long v = std::stoll(s, &used);
  if (used != s.size()) throw InputError("bad id '" + s + "'");
  return v;
}

double parse_num(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw InputError("bad number '" + s + "'");
  return v;
}

// ---- commands -------------------------------------------------------------

void cmd_parse_osm(Context& ctx) {
  const RoadNetwork net = load_extract(ctx);
  ensure_dir(ctx.artifact("osm"));
  RouteLayer roads;
  roads.name = "roads";
  for (const NamedChain& chain : net.chains) {
    roads.polylines.push_back(chain_polyline(net, chain, 0, chain.edge_count()));
  }
  write_geojson(ctx.artifact("osm/roads.geojson"), roads);
  const RouteLayer cycle = cycleway_layer(net);
  write_geojson(ctx.artifact("osm/cycleway.geojson"), cycle);
  std::size_t road_ways = 0, cycle_ways = 0;
  for (const auto& [id, w] : net.ways) {
    road_ways += w.is_road;
    cycle_ways += w.is_road && w.has_cycleway;
  }
  *ctx.out << fmt::format("nodes: {}\nways: {}\nroad ways: {}\ncycleway-tagged road ways: {}\nchains: {}\n",
                          net.nodes.size(), net.ways.size(), road_ways, cycle_ways, net.chains.size());
  *ctx.out << fmt::format("cycleway length: {} m\n", std::llround(cycle.length_m()));
}

void cmd_find_intersections(Context& ctx) {
  const RoadNetwork net = load_extract(ctx);
  ensure_dir(ctx.dir());
  std::ofstream out(ctx.artifact("intersections.csv"), std::ios::binary);
  if (!out) throw IoError("cannot write intersections.csv");
  out << "node_id,lat,lon,roads\n";
  for (NodeId id : net.intersections) {
    std::set<std::string> names;
    for (const WayPosition& m : net.node_memberships.at(id)) {
      const OsmWay& w = net.way(m.way);
      if (!w.is_road) continue;
      names.insert(w.name ? *w.name : (w.tag("ref") ? "ref:" + *w.tag("ref") : std::string("(unnamed)")));
    }
    std::string joined;
    for (const auto& n : names) joined += (joined.empty() ? "" : ";") + n;
    const GeoPoint p = net.point(id);
    csv::write_row(out, {std::to_string(id), fmt::format("{:.7f}", p.lat), fmt::format("{:.7f}", p.lon), joined});
  }
  if (!out) throw IoError("write failed: intersections.csv");
  *ctx.out << fmt::format("intersections: {}\n", net.intersections.size());
}

ImageryClient make_client(const Context& ctx) {
  ImageryConfig ic = ctx.cfg.imagery;
  if (ic.mode == ImageryMode::kNetwork) ic.api_key = load_api_key(ctx.cfg.api_key_file);
  return ImageryClient(ic);
}

void cmd_plan_samples(Context& ctx, bool dry_run) {
  const RoadNetwork net = load_extract(ctx);
  std::vector<SamplePoint> plan;
  if (ctx.cfg.margin_extract) {
    const RoadNetwork margin = load_network_file(ctx.cfg.margin_extract->string());
    plan = plan_samples(net, margin, ctx.cfg.plan);
  } else {
    plan = plan_samples(net, ctx.cfg.plan);
  }
  BatchFile batch;
  batch.rows = batch_rows(plan);
  ImageryClient client = make_client(ctx);
  FetchOptions opts = ctx.cfg.fetch;
  opts.dry_run = true;
  const BatchFetchResult est = fetch_batch(batch, client, opts);
  *ctx.out << fmt::format("sample points: {}\nimage requests: {}\nuncached requests: {}\nestimated cost: ${:.2f}\n",
                          plan.size(), batch.rows.size(), est.planned_requests, est.estimated_cost_usd);
  if (dry_run) {
    *ctx.out << "dry run: nothing written\n";
    return;
  }
  ensure_dir(ctx.dir());
  emit_batch(ctx.artifact("batch.csv"), plan);
  *ctx.out << fmt::format("wrote {}\n", ctx.artifact("batch.csv").string());
}

void cmd_fetch_images(Context& ctx) {
  const fs::path batch_path = ctx.artifact("batch.csv");
  require(batch_path, "plan-samples");
  const BatchFile batch = read_batch(batch_path);
  ctx.diagnostics(batch.diagnostics, "batch.csv");
  ImageryClient client = make_client(ctx);
  const BatchFetchResult res = fetch_batch(batch, client, ctx.cfg.fetch);
  ctx.diagnostics(res.diagnostics, "fetch");

  std::ofstream out(ctx.artifact("images.csv"), std::ios::binary);
  if (!out) throw IoError("cannot write images.csv");
  out << "image_ref,path,lat,lon,heading_deg,way_id,node_id,provenance\n";
  std::size_t ok = 0;
  for (const BatchEntry& e : res.entries) {
    if (!e.image) continue;
    ++ok;
    const std::string path = fs::absolute(*e.image).lexically_normal().string();
    csv::write_row(out, {path, path, fmt::format("{:.7f}", e.row.point.lat), fmt::format("{:.7f}", e.row.point.lon),
                         fmt::format("{:.1f}", e.row.heading.degrees()), std::to_string(e.row.way_id),
                         std::to_string(e.row.node_id), std::string(to_string(e.provenance))});
  }
  if (!out) throw IoError("write failed: images.csv");
  const CostLedger l = res.ledger;
  *ctx.out << fmt::format("images: {} of {}\nsent: {}\ncached: {}\nfixture: {}\ncost so far: ${:.2f}\n", ok,
                          res.entries.size(), l.requests_sent, l.requests_cached, l.requests_fixture,
                          l.estimated_cost_usd());
}

std::vector<ImageEntry> read_images_csv(const fs::path& path) {
  const csv::Table t = csv::read_file(path);
  const std::string src = path.string();
  const auto c_ref = t.require_column("image_ref", src), c_path = t.require_column("path", src),
             c_lat = t.require_column("lat", src), c_lon = t.require_column("lon", src),
             c_way = t.require_column("way_id", src), c_node = t.require_column("node_id", src);
  std::vector<ImageEntry> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const csv::Row& r = t.rows[i];
    try {
      if (r.size() < t.header.size()) throw InputError("short row");
      out.push_back({r[c_ref], r[c_path], {parse_num(r[c_lat]), parse_num(r[c_lon])}, parse_id(r[c_way]),
                     parse_id(r[c_node])});
    } catch (const std::exception& e) {
      throw InputError(fmt::format("{} line {}: {}", src, t.line_numbers[i], e.what()));
    }
  }
  return out;
}

std::vector<ImageEntry> dashcam_images(const Context& ctx, const std::vector<GeotaggedFrame>& frames) {
  if (!ctx.cfg.footage_dir) throw ConfigError("[dashcam] footage_dir is not configured");
  std::vector<ImageEntry> out;
  for (const GeotaggedFrame& f : frames) {
    const std::string path = (*ctx.cfg.footage_dir / f.image_path).lexically_normal().string();
    out.push_back({path, path, f.point, std::nullopt, std::nullopt});
  }
  return out;
}

void cmd_detect(Context& ctx, std::string source, std::optional<double> min_conf) {
  if (split_command(ctx.cfg.detector_adapter).empty()) throw ConfigError("[detector] adapter is not configured");
  if (!ctx.cfg.label_map) throw ConfigError("[detector] label_map is not configured");
  const fs::path images_csv = ctx.artifact("images.csv");
  const fs::path metadata_csv = ctx.artifact("metadata.csv");
  if (source == "auto") {
    if (fs::exists(images_csv)) {
      source = "gsv";
    } else if (fs::exists(metadata_csv)) {
      source = "dashcam";
    } else {
      throw UpstreamError(images_csv.string(), "fetch-images");
    }
  }
  std::vector<ImageEntry> images;
  if (source == "gsv") {
    require(images_csv, "fetch-images");
    images = read_images_csv(images_csv);
  } else {
    require(metadata_csv, "geotag-dashcam");
    images = dashcam_images(ctx, read_metadata(metadata_csv));
  }
  const bool dashcam = source == "dashcam";

  const fs::path dir = ctx.artifact("detections");
  ensure_dir(dir);
  std::vector<std::string> refs;
  for (const auto& img : images) refs.push_back(img.image_ref);
  write_manifest(dir / "manifest.txt", refs);
  const auto raw = run_detector(dir / "manifest.txt", ctx.cfg.detector_adapter, *ctx.cfg.label_map,
                                dir / "adapter_output.csv");

  std::vector<Detection> kept = apply_threshold(raw, min_conf.value_or(ctx.cfg.min_confidence));
  if (dashcam) kept = apply_mask(kept, ctx.cfg.mask);
  LocateResult located = locate(kept, images);
  ctx.diagnostics(located.diagnostics, "detections");
  const std::vector<DetectionRecord> filtered =
      dashcam ? support_filter(located.records, ctx.cfg.support) : located.records;

  const PartitionResult part = partition_outputs(located.records, images, dir, dashcam ? &ctx.cfg.mask : nullptr);
  ctx.diagnostics(part.diagnostics, "hits/miss partition");
  write_detection_log(dir / "detection_log.csv", located.records);
  write_detection_log(dir / "detection_log_filtered.csv", filtered);
  *ctx.out << fmt::format(
      "source: {}\nimages: {}\nraw detections: {}\naccepted detections: {}\nafter support filter: {}\nhit images: "
      "{}\nmiss images: {}\n",
      source, images.size(), raw.size(), located.records.size(), filtered.size(), part.hits, part.misses);
}

void cmd_geotag(Context& ctx) {
  if (!ctx.cfg.footage_dir) throw ConfigError("[dashcam] footage_dir is not configured");
  const GeotagResult res = ingest_footage_dir(*ctx.cfg.footage_dir, ctx.cfg.fps_source);
  ctx.diagnostics(res.diagnostics, "geotag");
  ensure_dir(ctx.dir());
  write_metadata(ctx.artifact("metadata.csv"), res.frames);
  *ctx.out << fmt::format("geotagged frames: {}\n", res.frames.size());
}

void write_evidence(const fs::path& path, const RoadNetwork& net, const std::vector<IntersectionEvidence>& ev) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "chain,name,position,node_id,lat,lon,flagged\n";
  for (const auto& e : ev) {
    for (std::size_t i = 0; i < e.nodes.size(); ++i) {
      const GeoPoint p = net.point(e.nodes[i]);
      csv::write_row(out, {std::to_string(e.chain), e.name, std::to_string(e.positions[i]), std::to_string(e.nodes[i]),
                           fmt::format("{:.7f}", p.lat), fmt::format("{:.7f}", p.lon), e.flags[i] ? "1" : "0"});
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::set<NodeId> read_flagged(const fs::path& path) {
  const csv::Table t = csv::read_file(path);
  const auto c_node = t.require_column("node_id", path.string());
  const auto c_flag = t.require_column("flagged", path.string());
  std::set<NodeId> flagged;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const csv::Row& r = t.rows[i];
    if (r.size() <= std::max(c_node, c_flag)) {
      throw InputError(fmt::format("{} line {}: short row", path.string(), t.line_numbers[i]));
    }
    if (r[c_flag] == "1") flagged.insert(*parse_id(r[c_node]));
  }
  return flagged;
}

void cmd_infer_routes(Context& ctx, std::optional<int> max_gap) {
  const fs::path log = ctx.artifact("detections/detection_log_filtered.csv");
  require(log, "detect");
  const RoadNetwork net = load_extract(ctx);
  const SpatialIndex index(net);
  const auto records = read_detection_log(log);
  const EvidenceResult ev = collect_evidence(records, index, ctx.cfg.match);
  ctx.diagnostics(ev.diagnostics, "evidence");
  InferenceConfig ic = ctx.cfg.inference;
  if (max_gap) ic.max_gap = *max_gap;
  const RouteLayer routes = infer_routes(net, ev.evidence, ic);
  write_evidence(ctx.artifact("evidence.csv"), net, ev.evidence);
  write_geojson(ctx.artifact("detected_routes.geojson"), routes);
  *ctx.out << fmt::format("flagged intersections: {}\nroutes: {}\nroute length: {} m\n", ev.flagged.size(),
                          routes.polylines.size(), std::llround(routes.length_m()));
}

void cmd_compare(Context& ctx, std::optional<int> max_gap) {
  const fs::path ev_path = ctx.artifact("evidence.csv");
  require(ev_path, "infer-routes");
  const RoadNetwork net = load_extract(ctx);
  CompareOptions opts;
  opts.inference = ctx.cfg.inference;
  if (max_gap) opts.inference.max_gap = *max_gap;
  if (ctx.cfg.restrict_to_surveyed) {
    const fs::path meta = ctx.artifact("metadata.csv");
    require(meta, "geotag-dashcam");
    const SpatialIndex index(net);
    opts.surveyed = surveyed_chains(index, read_metadata(meta), ctx.cfg.match);
  }
  const ComparisonReport report = compare(net, evidence_for(net, read_flagged(ev_path)), opts);
  const fs::path dir = ctx.artifact("comparison");
  write_comparison(dir, report, ctx.cfg.name);
  if (ctx.cfg.overlay) write_geojson(dir / "overlay.geojson", load_overlay(*ctx.cfg.overlay));
  *ctx.out << report_text(report, ctx.cfg.name);
}

void cmd_shoulder_scan(Context& ctx) {
  const fs::path meta = ctx.artifact("metadata.csv");
  require(meta, "geotag-dashcam");
  if (!ctx.cfg.footage_dir) throw ConfigError("[dashcam] footage_dir is not configured");
  const std::vector<GeotaggedFrame> frames = read_metadata(meta);
  std::optional<DistortionModel> model;
  if (ctx.cfg.calibration) model = read_calibration(*ctx.cfg.calibration);

  std::vector<LaneObservation> obs(frames.size());
  std::vector<std::string> errors(frames.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < frames.size(); i = next++) {
      try {
        const GrayImage img = read_gray(*ctx.cfg.footage_dir / frames[i].image_path);
        obs[i] = analyze_frame(img, frames[i].image_path, ctx.cfg.vision, model ? &*model : nullptr);
      } catch (const std::exception& e) {
        obs[i].frame_ref = frames[i].image_path;
        errors[i] = fmt::format("{}: {}", frames[i].image_path, e.what());
      }
    }
  };
  {
    const unsigned n = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  std::vector<std::string> diags;
  for (auto& e : errors) {
    if (!e.empty()) diags.push_back(std::move(e));
  }
  ctx.diagnostics(diags, "frame analysis");

  const RoadNetwork net = load_extract(ctx);
  const SpatialIndex index(net);
  const AggregateResult agg = aggregate(frames, obs, index, ctx.cfg.shoulder, ctx.cfg.match);
  ctx.diagnostics(agg.diagnostics, "segments");
  const fs::path dir = ctx.artifact("shoulder");
  ensure_dir(dir);
  write_observations(dir / "observations.csv", obs);
  write_summary(dir / "metadata_with_summary.csv", frames, obs, agg, ctx.cfg.shoulder);
  const RouteLayer layer = shoulder_layer(agg.segments, net, ctx.cfg.shoulder);
  write_geojson(dir / "shoulder.geojson", layer);
  std::map<ShoulderStatus, int> counts;
  for (const auto& s : agg.segments) ++counts[assess(s, ctx.cfg.shoulder)];
  *ctx.out << fmt::format("frames: {}\nsegments: {}\nshoulder: {}\nno shoulder: {}\ninsufficient data: {}\n",
                          frames.size(), agg.segments.size(), counts[ShoulderStatus::kShoulder],
                          counts[ShoulderStatus::kNoShoulder], counts[ShoulderStatus::kInsufficientData]);
  *ctx.out << fmt::format("shoulder length: {} m\n", std::llround(layer.length_m()));
}

std::size_t data_rows(const fs::path& p) { return fs::exists(p) ? csv::read_file(p).rows.size() : 0; }

void cmd_report(Context& ctx) {
  std::string text = fmt::format("survey: {}\n", ctx.cfg.name);
  auto line = [&](std::string_view label, const fs::path& p, std::string_view producer) {
    if (fs::exists(p)) {
      text += fmt::format("{:<28}{}\n", label, data_rows(p));
    } else {
      text += fmt::format("{:<28}not produced (run `lanesurvey {}`)\n", label, producer);
    }
  };
  line("batch requests", ctx.artifact("batch.csv"), "plan-samples");
  line("images", ctx.artifact("images.csv"), "fetch-images");
  line("geotagged frames", ctx.artifact("metadata.csv"), "geotag-dashcam");
  line("detections", ctx.artifact("detections/detection_log.csv"), "detect");
  line("supported detections", ctx.artifact("detections/detection_log_filtered.csv"), "detect");
  const fs::path routes = ctx.artifact("detected_routes.geojson");
  if (fs::exists(routes)) {
    std::ifstream in(routes, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    const RouteLayer layer = layer_from_geojson(ss.str(), "detected");
    text += fmt::format("{:<28}{} ({} m)\n", "inferred routes", layer.polylines.size(), std::llround(layer.length_m()));
  } else {
    text += fmt::format("{:<28}not produced (run `lanesurvey infer-routes`)\n", "inferred routes");
  }
  const fs::path cmp = ctx.artifact("comparison/report.txt");
  if (fs::exists(cmp)) {
    std::ifstream in(cmp, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    text += "comparison:\n" + ss.str();
  } else {
    text += fmt::format("{:<28}not produced (run `lanesurvey compare`)\n", "comparison");
  }
  const fs::path summary = ctx.artifact("shoulder/metadata_with_summary.csv");
  if (fs::exists(summary)) {
    const csv::Table t = csv::read_file(summary);
    const auto c_status = t.require_column("seg_status", summary.string());
    std::map<std::string, std::size_t> frames_by_status;
    for (const auto& r : t.rows) {
      if (c_status < r.size() && !r[c_status].empty()) ++frames_by_status[r[c_status]];
    }
    text += "shoulder frames by segment status:\n";
    for (const auto& [k, v] : frames_by_status) text += fmt::format("  {:<26}{}\n", k, v);
  } else {
    text += fmt::format("{:<28}not produced (run `lanesurvey shoulder-scan`)\n", "shoulder scan");
  }
  ensure_dir(ctx.dir());
  write_text(ctx.artifact("report.txt"), text);
  *ctx.out << text;
}

}  // namespace

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kConfig:
      return 2;
    case ErrorCategory::kUpstream:
      return 3;
    case ErrorCategory::kInput:
      return 4;
    case ErrorCategory::kIo:
      return 5;
    case ErrorCategory::kExternal:
      return 6;
    case ErrorCategory::kDomain:
      return 7;
  }
  return kExitUnexpected;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Context ctx;
  ctx.out = &out;
  ctx.err = &err;

  CLI::App app{"Bicycle-lane and paved-shoulder survey pipeline", "lanesurvey"};
  app.footer(kFormats);
  app.require_subcommand(1);
  app.add_option("-c,--config", ctx.config_path, "Survey config file")->required();
  app.add_option("-o,--output-dir", ctx.output_dir, "Override the configured output directory");
  app.add_flag("-v,--verbose", ctx.verbose, "Print every diagnostic");

  std::function<void()> action;

  app.add_subcommand("parse-osm", "Parse the OSM extract; write osm/roads.geojson and osm/cycleway.geojson")
      ->callback([&] { action = [&] { cmd_parse_osm(ctx); }; });
  app.add_subcommand("find-intersections", "Write intersections.csv (node_id,lat,lon,roads)")
      ->callback([&] { action = [&] { cmd_find_intersections(ctx); }; });

  auto* plan = app.add_subcommand("plan-samples", "Plan sample points and write batch.csv");
  bool dry_run = false;
  std::optional<double> margin, interval;
  plan->add_flag("--dry-run", dry_run, "Print point count and cost estimate; write nothing");
  plan->add_option("--margin-m", margin, "Override [plan] margin_m");
  plan->add_option("--interval-m", interval, "Override [plan] interval_m");
  plan->callback([&] {
    action = [&] {
      if (margin) ctx.cfg.plan.margin_m = *margin;
      if (interval) ctx.cfg.plan.interval_m = *interval;
      cmd_plan_samples(ctx, dry_run);
    };
  });

  app.add_subcommand("fetch-images", "Resolve batch.csv through the cache/fixtures/network; write images.csv")
      ->callback([&] { action = [&] { cmd_fetch_images(ctx); }; });

  auto* detect = app.add_subcommand("detect", "Run the detector adapter and write detections/");
  std::string source = "auto";
  std::optional<double> min_conf;
  detect->add_option("--source", source, "Image source: auto, gsv or dashcam")
      ->check(CLI::IsMember({"auto", "gsv", "dashcam"}));
  detect->add_option("--min-confidence", min_conf, "Override [detector] min_confidence")->check(CLI::Range(0.0, 1.0));
  detect->callback([&] { action = [&] { cmd_detect(ctx, source, min_conf); }; });

  app.add_subcommand("geotag-dashcam", "Geotag sampled dash-cam frames; write metadata.csv")
      ->callback([&] { action = [&] { cmd_geotag(ctx); }; });

  std::optional<int> max_gap;
  auto* infer = app.add_subcommand("infer-routes", "Write evidence.csv and detected_routes.geojson");
  infer->add_option("--max-gap", max_gap, "Override [inference] max_gap")->check(CLI::NonNegativeNumber);
  infer->callback([&] { action = [&] { cmd_infer_routes(ctx, max_gap); }; });

  auto* cmp = app.add_subcommand("compare", "Compare inferred routes with OSM cycleway tags; write comparison/");
  cmp->add_option("--max-gap", max_gap, "Override [inference] max_gap")->check(CLI::NonNegativeNumber);
  cmp->callback([&] { action = [&] { cmd_compare(ctx, max_gap); }; });

  app.add_subcommand("shoulder-scan", "Analyse dash-cam frames for paved shoulders; write shoulder/")
      ->callback([&] { action = [&] { cmd_shoulder_scan(ctx); }; });
  app.add_subcommand("report", "Summarize every artifact produced so far; write report.txt")
      ->callback([&] { action = [&] { cmd_report(ctx); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(ErrorCategory::kConfig);
  }

  try {
    ctx.cfg = load_survey_config(ctx.config_path);
    if (!ctx.output_dir.empty()) {
      const fs::path default_cache = ctx.cfg.output_dir / "cache";
      ctx.cfg.output_dir = fs::absolute(ctx.output_dir);
      if (ctx.cfg.imagery.cache_dir == default_cache) ctx.cfg.imagery.cache_dir = ctx.cfg.output_dir / "cache";
    }
    if (action) action();
    return kExitOk;
  } catch (const Error& e) {
    err << "error (" << to_string(e.category()) << "): " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUnexpected;
  }
}

}  // namespace lanesurvey::cli
