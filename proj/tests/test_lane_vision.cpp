#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "lanesurvey/errors.hpp"
#include "lanesurvey/lane_vision.hpp"
#include "test_support.hpp"

using namespace lanesurvey;
using lanesurvey::testing::RoadScene;
using lanesurvey::testing::TempDir;

namespace {

// Boundary of a rendered scene in pixel-index coordinates.
double scene_x(const RoadScene& s, double slope_x, double y) { return s.vp_x - 0.5 + slope_x * (y + 0.5 - s.vp_y); }

GrayImage gradient_image(int w, int h) {
  GrayImage img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) img.at(x, y) = static_cast<std::uint8_t>((x * 7 + y * 13) % 256);
  }
  return img;
}

GrayImage draw_edges(int w, int h, const std::vector<Line2D>& lines) {
  GrayImage img(w, h, 0);
  for (const Line2D& l : lines) {
    if (l.x_of_y) {
      for (int y = 0; y < h; ++y) {
        const int x = static_cast<int>(std::lround(*l.x_at(y)));
        if (img.contains(x, y)) img.at(x, y) = 255;
      }
    } else {
      for (int x = 0; x < w; ++x) {
        const int y = static_cast<int>(std::lround(*l.y_at(x)));
        if (img.contains(x, y)) img.at(x, y) = 255;
      }
    }
  }
  return img;
}

HoughLine hl(double x_slope, double x_icept, int votes) { return {Line2D{x_slope, x_icept, true}.canonical(), votes}; }

}  // namespace

TEST(Calibration, ParsesAndRejects) {
  const DistortionModel m = parse_calibration("# lens\nfx = 500\nfy=510\ncx = 320 # centre\ncy = 240\nk1 = -0.1\n");
  EXPECT_DOUBLE_EQ(m.fx, 500);
  EXPECT_DOUBLE_EQ(m.fy, 510);
  EXPECT_DOUBLE_EQ(m.cx, 320);
  EXPECT_DOUBLE_EQ(m.k1, -0.1);
  EXPECT_DOUBLE_EQ(m.k2, 0.0);
  EXPECT_THROW(parse_calibration("fx = 1\n"), InputError);
  EXPECT_THROW(parse_calibration("fx = 1\nfy = 1\nzz = 3\n"), InputError);
  EXPECT_THROW(parse_calibration("fx = 1\nfy = abc\n"), InputError);
  EXPECT_THROW(parse_calibration("fx = -1\nfy = 1\n"), ConfigError);
}

TEST(Undistort, IdentityIsPixelIdentical) {
  const GrayImage img = gradient_image(97, 61);
  DistortionModel m;
  m.fx = m.fy = 400;
  m.cx = 48;
  m.cy = 30;
  EXPECT_EQ(undistort(img, m), img);
}

TEST(Undistort, RecoversStraightGridAfterDistortion) {
  DistortionModel m;
  m.fx = m.fy = 300;
  m.cx = 160;
  m.cy = 120;
  m.k1 = -0.12;
  m.k2 = 0.02;
  m.p1 = 0.001;
  // Distorted image of a grid: pixel (u, v) shows ideal point inverse(u, v).
  // Rendering samples the ideal grid at the distort() of every ideal pixel.
  const int w = 320, h = 240;
  GrayImage distorted(w, h, 0);
  std::vector<std::vector<double>> acc(h, std::vector<double>(w, 0.0));
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const bool line = (u % 40 == 0) || (v % 40 == 0);
      if (!line) continue;
      for (double du : {-0.25, 0.25}) {
        for (double dv : {-0.25, 0.25}) {
          const auto [x, y] = m.distort(u + du, v + dv);
          const int xi = static_cast<int>(std::lround(x)), yi = static_cast<int>(std::lround(y));
          if (distorted.contains(xi, yi)) distorted.at(xi, yi) = 255;
        }
      }
    }
  }
  const GrayImage fixed = undistort(distorted, m);
  // Along each ideal vertical grid line the bright pixels cluster within 1 px.
  int checked = 0;
  for (int gx = 40; gx < w - 40; gx += 40) {
    for (int v = 40; v < h - 40; v += 7) {
      if (v % 40 == 0) continue;
      int best = -1, best_val = 0;
      for (int u = gx - 4; u <= gx + 4; ++u) {
        if (fixed.at(u, v) > best_val) {
          best_val = fixed.at(u, v);
          best = u;
        }
      }
      ASSERT_GT(best_val, 0) << gx << "," << v;
      EXPECT_LE(std::abs(best - gx), 1) << gx << "," << v;
      ++checked;
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(Undistort, PrincipalShiftIsTranslation) {
  const GrayImage img = gradient_image(80, 60);
  DistortionModel m;
  m.fx = m.fy = 200;
  m.cx = 40;
  m.cy = 30;
  const GrayImage out = undistort(img, m, std::pair{37.0, 32.0});
  // Output (u, v) samples the source at (u + 3, v - 2).
  for (int v = 2; v < 60; ++v) {
    for (int u = 0; u + 3 < 80; ++u) ASSERT_EQ(out.at(u, v), img.at(u + 3, v - 2)) << u << "," << v;
  }
  EXPECT_EQ(out.at(79, 30), 0);
  EXPECT_EQ(out.at(10, 0), 0);
}

TEST(Canny, UniformImageHasNoEdges) {
  const GrayImage edges = canny(GrayImage(64, 48, 123));
  for (auto p : edges.pixels) ASSERT_EQ(p, 0);
}

TEST(Canny, VerticalStepGivesOneColumn) {
  GrayImage img(64, 48, 30);
  for (int y = 0; y < 48; ++y) {
    for (int x = 32; x < 64; ++x) img.at(x, y) = 200;
  }
  const GrayImage edges = canny(img);
  for (int y = 3; y < 45; ++y) {
    int count = 0;
    for (int x = 0; x < 64; ++x) {
      if (edges.at(x, y)) {
        ++count;
        EXPECT_LE(std::abs(x - 32), 1) << x << "," << y;
      }
    }
    EXPECT_EQ(count, 1) << "row " << y;
  }
}

TEST(Canny, CircleEdgesLieOnRadius) {
  const int n = 101;
  const double cx = 50.0, cy = 50.0, r = 30.0;
  GrayImage img(n, n, 20);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (std::hypot(x - cx, y - cy) <= r) img.at(x, y) = 220;
    }
  }
  const GrayImage edges = canny(img);
  int count = 0;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (!edges.at(x, y)) continue;
      ++count;
      EXPECT_NEAR(std::hypot(x - cx, y - cy), r, 1.5) << x << "," << y;
    }
  }
  EXPECT_GT(count, static_cast<int>(2 * std::numbers::pi * r * 0.8));
}

TEST(Canny, RejectsBadThresholds) {
  CannyConfig c;
  c.low = 100;
  c.high = 50;
  EXPECT_THROW(canny(GrayImage(8, 8), c), ConfigError);
}

TEST(Line2D, Conversions) {
  const Line2D l{0.5, 100.0, false};
  EXPECT_DOUBLE_EQ(*l.y_at(10), 105.0);
  EXPECT_DOUBLE_EQ(*l.x_at(105), 10.0);
  const Line2D x = *l.as_x_of_y();
  EXPECT_TRUE(x.x_of_y);
  EXPECT_DOUBLE_EQ(x.slope, 2.0);
  EXPECT_DOUBLE_EQ(x.intercept, -200.0);
  EXPECT_DOUBLE_EQ(l.image_slope(), 0.5);
  EXPECT_DOUBLE_EQ(x.image_slope(), 0.5);
  EXPECT_FALSE(x.canonical().x_of_y);
  EXPECT_FALSE((Line2D{0.0, 5.0, false}.as_x_of_y()));
  EXPECT_TRUE(std::isinf((Line2D{0.0, 5.0, true}.image_slope())));
}

TEST(Polygon, Contains) {
  const Polygon tri{{0, 0}, {10, 0}, {0, 10}};
  EXPECT_TRUE(polygon_contains(tri, 2, 2));
  EXPECT_FALSE(polygon_contains(tri, 8, 8));
  EXPECT_FALSE(polygon_contains({{0, 0}, {1, 1}}, 0.5, 0.5));
}

TEST(Hough, RecoversSingleLine) {
  const GrayImage edges = draw_edges(400, 300, {Line2D{0.5, 100.0, false}});
  const auto lines = hough_lines(edges, {});
  ASSERT_FALSE(lines.empty());
  const Line2D l = lines.front().line.canonical();
  ASSERT_FALSE(l.x_of_y);
  EXPECT_NEAR(l.slope, 0.5, 0.05);
  EXPECT_NEAR(l.intercept, 100.0, 3.0);
  EXPECT_GE(lines.front().votes, 100);
  EXPECT_EQ(lines.size(), 1u);
}

TEST(Hough, EmptyEdgeMap) { EXPECT_TRUE(hough_lines(GrayImage(50, 50), {}).empty()); }

TEST(Hough, TwoCrossingLines) {
  const GrayImage edges = draw_edges(400, 400, {Line2D{0.8, 20.0, true}, Line2D{-0.9, 380.0, true}});
  const auto lines = hough_lines(edges, {});
  ASSERT_GE(lines.size(), 2u);
  bool a = false, b = false;
  for (const auto& h : lines) {
    const Line2D l = *h.line.as_x_of_y();
    a |= std::fabs(l.slope - 0.8) < 0.05 && std::fabs(l.intercept - 20.0) < 3.0;
    b |= std::fabs(l.slope + 0.9) < 0.05 && std::fabs(l.intercept - 380.0) < 3.0;
  }
  EXPECT_TRUE(a);
  EXPECT_TRUE(b);
}

TEST(Hough, MaskLimitsVotes) {
  const GrayImage edges = draw_edges(400, 300, {Line2D{0.5, 100.0, false}});
  const Polygon far_corner{{0, 0}, {50, 0}, {50, 50}, {0, 50}};
  EXPECT_TRUE(hough_lines(edges, far_corner).empty());
}

TEST(OwnLane, SplitsBySignAndAverages) {
  // Symmetric pair about x = 320.
  const OwnLane lane = detect_own_lane({hl(-1.0, 520.0, 100), hl(1.0, 120.0, 100)});
  ASSERT_TRUE(lane.left && lane.right);
  for (double y : {250.0, 350.0, 450.0}) {
    EXPECT_NEAR(320.0 - *lane.left->x_at(y), *lane.right->x_at(y) - 320.0, 2.0);
  }
  const OwnLane only_left = detect_own_lane({hl(-1.0, 520.0, 100)});
  EXPECT_TRUE(only_left.left);
  EXPECT_FALSE(only_left.right);
}

TEST(OwnLane, RejectsFlatAndVerticalClutter) {
  const std::vector<HoughLine> lines{hl(-1.2, 600.0, 80), {Line2D{0.05, 300.0, false}, 500},
                                     {Line2D{0.0, 77.0, true}, 400}};
  const OwnLane lane = detect_own_lane(lines);
  ASSERT_TRUE(lane.left);
  EXPECT_FALSE(lane.right);
  EXPECT_NEAR(*lane.left->x_at(300), -1.2 * 300 + 600.0, 1e-9);
}

TEST(OwnLane, VoteWeightedAverage) {
  const auto avg = average_lines({hl(-1.0, 500.0, 300), hl(-2.0, 800.0, 100)});
  ASSERT_TRUE(avg);
  const Line2D x = *avg->as_x_of_y();
  EXPECT_NEAR(x.slope, -1.25, 1e-9);
  EXPECT_NEAR(x.intercept, 575.0, 1e-9);
  EXPECT_FALSE(average_lines({}));
}

TEST(Measure, ParallelAndCrossing) {
  const Measurement par = measure(Line2D{-1.0, 500.0, true}, Line2D{-1.0, 400.0, true}, 300.0);
  EXPECT_DOUBLE_EQ(par.width_px, 100.0);
  EXPECT_FALSE(par.intersection);
  const Line2D a{-0.8, 480.0, true}, b{-1.5, 620.0, true};
  const Measurement m = measure(a, b, 300.0);
  EXPECT_NEAR(m.width_px, std::fabs((-0.8 * 300 + 480) - (-1.5 * 300 + 620)), 1e-9);
  ASSERT_TRUE(m.intersection);
  EXPECT_NEAR(m.intersection->second, 200.0, 1e-9);
  EXPECT_NEAR(m.intersection->first, 320.0, 1e-9);
  EXPECT_DOUBLE_EQ(measure(a, a, 250.0).width_px, 0.0);
  EXPECT_THROW(measure(Line2D{0.0, 10.0, false}, a, 100.0), DomainError);
}

TEST(AnalyzeFrame, SceneWithShoulder) {
  const RoadScene s;
  const LaneObservation obs = analyze_frame(lanesurvey::testing::render_scene(s), "f");
  ASSERT_TRUE(obs.left_own && obs.right_own);
  for (double y : {300.0, 420.0}) {
    EXPECT_NEAR(*obs.left_own->x_at(y), scene_x(s, s.left_slope_x, y), 3.0) << y;
    EXPECT_NEAR(*obs.right_own->x_at(y), scene_x(s, s.right_slope_x, y), 3.0) << y;
  }
  ASSERT_TRUE(obs.shoulder_left);
  const Line2D sh = *obs.shoulder_left->as_x_of_y();
  EXPECT_NEAR(sh.slope, *s.shoulder_slope_x, 0.05);
  const double row = 0.6 * s.height;
  const double expected = scene_x(s, s.left_slope_x, row) - scene_x(s, *s.shoulder_slope_x, row);
  ASSERT_TRUE(obs.width_at_upper_row_px);
  EXPECT_NEAR(*obs.width_at_upper_row_px, expected, 4.0);
  ASSERT_TRUE(obs.boundary_intersection);
  EXPECT_NEAR(obs.boundary_intersection->first, s.vp_x, 8.0);
  EXPECT_NEAR(obs.boundary_intersection->second, s.vp_y, 8.0);
}

TEST(AnalyzeFrame, SceneWithoutShoulder) {
  RoadScene s;
  s.shoulder_slope_x.reset();
  const LaneObservation obs = analyze_frame(lanesurvey::testing::render_scene(s), "f");
  ASSERT_TRUE(obs.left_own);
  EXPECT_FALSE(obs.shoulder_left);
  EXPECT_FALSE(obs.width_at_upper_row_px);
}

TEST(AnalyzeFrame, RandomScenesWithinTolerance) {
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> own(0.55, 1.0), extra(0.6, 1.2), vx(-6, 6), vy(-10, 0);
  for (int i = 0; i < 20; ++i) {
    RoadScene s;
    s.vp_x += vx(rng);
    s.vp_y += vy(rng);  // at or above the mask apex
    s.left_slope_x = -own(rng);
    s.right_slope_x = own(rng);
    s.shoulder_slope_x = s.left_slope_x - extra(rng);
    const LaneObservation obs = analyze_frame(lanesurvey::testing::render_scene(s), "r");
    SCOPED_TRACE(i);
    ASSERT_TRUE(obs.left_own && obs.shoulder_left);
    EXPECT_NEAR(obs.left_own->as_x_of_y()->slope, s.left_slope_x, 0.05);
    EXPECT_NEAR(obs.shoulder_left->as_x_of_y()->slope, *s.shoulder_slope_x, 0.05);
    EXPECT_NEAR(obs.left_own->as_x_of_y()->intercept, scene_x(s, s.left_slope_x, 0.0), 3.0);
    EXPECT_NEAR(obs.shoulder_left->as_x_of_y()->intercept, scene_x(s, *s.shoulder_slope_x, 0.0), 3.0);
    const double row = 0.6 * s.height;
    ASSERT_TRUE(obs.width_at_upper_row_px);
    EXPECT_NEAR(*obs.width_at_upper_row_px,
                scene_x(s, s.left_slope_x, row) - scene_x(s, *s.shoulder_slope_x, row), 4.0);
  }
}

TEST(Observations, RoundTrip) {
  TempDir dir;
  std::vector<LaneObservation> obs(2);
  obs[0].frame_ref = "a/frame_000001.png";
  obs[0].left_own = Line2D{-0.75, 470.25, true};
  obs[0].right_own = Line2D{0.8, 160.0, true};
  obs[0].shoulder_left = Line2D{-1.8, 680.0, true};
  obs[0].width_at_upper_row_px = 91.5;
  obs[0].boundary_intersection = std::pair{318.0, 201.0};
  obs[1].frame_ref = "b,with comma.png";
  write_observations(dir / "obs.csv", obs);
  const auto back = read_observations(dir / "obs.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].frame_ref, obs[0].frame_ref);
  EXPECT_NEAR(back[0].left_own->as_x_of_y()->slope, -0.75, 1e-6);
  EXPECT_NEAR(back[0].left_own->as_x_of_y()->intercept, 470.25, 1e-6);
  EXPECT_NEAR(back[0].shoulder_left->as_x_of_y()->intercept, 680.0, 1e-6);
  EXPECT_NEAR(*back[0].width_at_upper_row_px, 91.5, 1e-6);
  EXPECT_NEAR(back[0].boundary_intersection->second, 201.0, 1e-6);
  EXPECT_EQ(back[1].frame_ref, obs[1].frame_ref);
  EXPECT_FALSE(back[1].left_own);
  EXPECT_FALSE(back[1].boundary_intersection);
}

TEST(Canny, InvariantUnderOffsetAndScaledThresholds) {
  RoadScene s;
  s.sky = s.grass = 10;
  s.shoulder = 60;
  s.lane = 120;
  const GrayImage base = lanesurvey::testing::render_scene(s);
  GrayImage shifted = base, doubled = base;
  for (auto& p : shifted.pixels) p = static_cast<std::uint8_t>(p + 10);
  for (auto& p : doubled.pixels) p = static_cast<std::uint8_t>(p * 2);
  const CannyConfig cfg{30.0, 90.0, 1.4};
  const GrayImage edges = canny(base, cfg);
  EXPECT_EQ(canny(shifted, cfg), edges);
  EXPECT_EQ(canny(doubled, CannyConfig{60.0, 180.0, 1.4}), edges);
}

TEST(Hough, RasterizedLineCoversInputEdges) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> slope(-2.5, 2.5), icept(50, 250);
  for (int trial = 0; trial < 20; ++trial) {
    const Line2D planted{slope(rng), icept(rng), trial % 2 == 0};
    const GrayImage edges = draw_edges(320, 300, {planted});
    if (std::count(edges.pixels.begin(), edges.pixels.end(), 255) < 150) continue;  // mostly off-frame
    const auto lines = hough_lines(edges, {});
    ASSERT_FALSE(lines.empty()) << trial;
    const GrayImage redrawn = draw_edges(320, 300, {lines.front().line});
    int total = 0, covered = 0;
    for (int y = 0; y < 300; ++y) {
      for (int x = 0; x < 320; ++x) {
        if (!edges.at(x, y)) continue;
        ++total;
        bool hit = false;
        for (int dy = -1; dy <= 1 && !hit; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) hit |= redrawn.contains(x + dx, y + dy) && redrawn.at(x + dx, y + dy);
        }
        covered += hit;
      }
    }
    EXPECT_GE(covered, 0.9 * total) << trial;
  }
}

TEST(OwnLane, SignPartitionIsExhaustiveAndDisjoint) {
  std::mt19937 rng(61);
  std::uniform_real_distribution<double> m(-8.0, 8.0), c(-200, 800);
  std::uniform_int_distribution<int> votes(50, 400);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<HoughLine> lines, neg, pos;
    for (int i = 0; i < 6; ++i) {
      const HoughLine h = hl(m(rng), c(rng), votes(rng));
      lines.push_back(h);
      const OwnLane single = detect_own_lane({h});
      const double s = h.line.image_slope();
      const bool kept = std::isfinite(s) && std::fabs(s) >= 0.2;
      EXPECT_EQ(static_cast<int>(single.left.has_value()) + static_cast<int>(single.right.has_value()), kept ? 1 : 0);
      if (kept) (s < 0.0 ? neg : pos).push_back(h);
    }
    const OwnLane lane = detect_own_lane(lines);
    const auto l = average_lines(neg), r = average_lines(pos);
    ASSERT_EQ(lane.left.has_value(), l.has_value());
    ASSERT_EQ(lane.right.has_value(), r.has_value());
    if (l) EXPECT_NEAR(*lane.left->x_at(300), *l->x_at(300), 1e-9);
    if (r) EXPECT_NEAR(*lane.right->x_at(300), *r->x_at(300), 1e-9);
  }
}
