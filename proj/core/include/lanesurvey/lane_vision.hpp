#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lanesurvey/image_io.hpp"

namespace lanesurvey {

/// Brown-Conrady lens model in pixel units.
struct DistortionModel {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  double k1 = 0.0, k2 = 0.0, k3 = 0.0;
  double p1 = 0.0, p2 = 0.0;

  void validate() const;
  /// Ideal (undistorted) pixel to the pixel the lens actually images it at.
  std::pair<double, double> distort(double u, double v) const;
};

/// key = value lines: fx, fy, cx, cy, k1, k2, k3, p1, p2 ('#' comments).
DistortionModel parse_calibration(std::string_view text);
DistortionModel read_calibration(const std::filesystem::path& path);

/// Inverse remap with bilinear sampling; pixels mapping outside the source are
/// black. `principal` optionally moves the principal point of the output.
GrayImage undistort(const GrayImage& img, const DistortionModel& model,
                    std::optional<std::pair<double, double>> principal = std::nullopt);

struct CannyConfig {
  double low = 50.0;
  double high = 150.0;
  double sigma = 1.4;
};

/// Binary edge map (255 = edge).
GrayImage canny(const GrayImage& img, const CannyConfig& cfg = {});

/// A straight line in image coordinates (x right, y down). When x_of_y is
/// false, y = slope * x + intercept; otherwise x = slope * y + intercept.
struct Line2D {
  double slope = 0.0;
  double intercept = 0.0;
  bool x_of_y = false;

  std::optional<double> x_at(double y) const;
  std::optional<double> y_at(double x) const;
  /// Same line as x = m*y + c; absent for horizontal lines.
  std::optional<Line2D> as_x_of_y() const;
  /// Same line as y = m*x + c; absent for vertical lines.
  std::optional<Line2D> as_y_of_x() const;
  /// The orientation with |slope| <= 1.
  Line2D canonical() const;
  /// dy/dx; infinite for vertical lines.
  double image_slope() const;
};

using Polygon = std::vector<std::pair<double, double>>;

bool polygon_contains(const Polygon& poly, double x, double y);

struct HoughConfig {
  double theta_step_deg = 1.0;
  double rho_step_px = 1.0;
  int vote_threshold = 50;
  int max_lines = 32;
  double refine_band_px = 2.0;
  double merge_theta_deg = 3.0;
  double merge_rho_px = 8.0;
};

struct HoughLine {
  Line2D line;
  int votes = 0;
  double theta_deg = 0.0;
  double rho_px = 0.0;
};

/// Standard Hough accumulator over edge pixels inside `mask` (pixel
/// coordinates; empty = whole frame). Peaks above the vote threshold are
/// refined by least squares on edge pixels near them. Strongest first.
std::vector<HoughLine> hough_lines(const GrayImage& edges, const Polygon& mask, const HoughConfig& cfg = {});

struct LaneVisionConfig {
  CannyConfig canny;
  HoughConfig hough;
  Polygon own_mask{{0.05, 1.0}, {0.5, 0.42}, {0.95, 1.0}};  // normalized
  double min_abs_slope = 0.2;
  double shoulder_gap_px = 12.0;
  double band_top_frac = 0.42;
  double upper_row_frac = 0.6;
  double lower_row_frac = 0.92;
};

struct OwnLane {
  std::optional<Line2D> left;
  std::optional<Line2D> right;
};

/// Vote-weighted mean of a set of lines in x = m*y + c form.
std::optional<Line2D> average_lines(const std::vector<HoughLine>& lines);

/// Negative image slope (rising to the right) is the left boundary, positive
/// the right; lines with |dy/dx| < min_abs_slope are discarded.
OwnLane detect_own_lane(const std::vector<HoughLine>& lines, double min_abs_slope = 0.2);

/// Second Hough pass over a band left of `left_own`.
std::optional<Line2D> detect_shoulder(const GrayImage& edges, const Line2D& left_own, const LaneVisionConfig& cfg = {});

struct Measurement {
  double width_px = 0.0;
  std::optional<std::pair<double, double>> intersection;
};

/// Horizontal separation at `row` and the crossing point of the two lines.
Measurement measure(const Line2D& left_own, const Line2D& shoulder, double row);

struct LaneObservation {
  std::string frame_ref;
  std::optional<Line2D> left_own;
  std::optional<Line2D> right_own;
  std::optional<Line2D> shoulder_left;
  std::optional<double> width_at_upper_row_px;
  std::optional<std::pair<double, double>> boundary_intersection;
};

LaneObservation analyze_frame(const GrayImage& frame, std::string frame_ref, const LaneVisionConfig& cfg = {},
                              const DistortionModel* model = nullptr);

/// Frame-level analysis file, one row per frame.
void write_observations(const std::filesystem::path& path, const std::vector<LaneObservation>& obs);
std::vector<LaneObservation> read_observations(const std::filesystem::path& path);

}  // namespace lanesurvey
