#include "lanesurvey/lane_vision.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "lanesurvey/csv.hpp"
#include "lanesurvey/errors.hpp"

namespace lanesurvey {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<float> gaussian_blur(const GrayImage& img, double sigma) {
  const int w = img.width, h = img.height;
  std::vector<float> src(img.pixels.begin(), img.pixels.end());
  if (sigma <= 0.0) return src;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
  for (double& v : k) v /= sum;
  std::vector<float> tmp(src.size()), out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * src[y * w + std::clamp(x + i, 0, w - 1)];
      tmp[y * w + x] = static_cast<float>(acc);
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp[std::clamp(y + i, 0, h - 1) * w + x];
      out[y * w + x] = static_cast<float>(acc);
    }
  }
  return out;
}

struct Fit {
  double nx, ny, rho;  // unit normal and offset: nx*x + ny*y = rho
  double mx, my;       // centroid
  std::size_t count;
};

// Total least squares through the points within `band` of the line.
std::optional<Fit> refine(const std::vector<std::pair<int, int>>& pts, double nx, double ny, double rho, double band) {
  std::optional<Fit> fit;
  for (int iter = 0; iter < 4; ++iter) {
    double sx = 0, sy = 0;
    std::size_t n = 0;
    for (const auto& [x, y] : pts) {
      if (std::fabs(x * nx + y * ny - rho) <= band) {
        sx += x;
        sy += y;
        ++n;
      }
    }
    if (n < 2) return fit;
    const double mx = sx / n, my = sy / n;
    double cxx = 0, cxy = 0, cyy = 0;
    for (const auto& [x, y] : pts) {
      if (std::fabs(x * nx + y * ny - rho) <= band) {
        const double dx = x - mx, dy = y - my;
        cxx += dx * dx;
        cxy += dx * dy;
        cyy += dy * dy;
      }
    }
    // Normal is the eigenvector of the smaller eigenvalue.
    const double angle = 0.5 * std::atan2(2.0 * cxy, cxx - cyy);  // principal direction
    const double dirx = std::cos(angle), diry = std::sin(angle);
    double nnx = -diry, nny = dirx;
    if (nnx * nx + nny * ny < 0) {
      nnx = -nnx;
      nny = -nny;
    }
    nx = nnx;
    ny = nny;
    rho = mx * nx + my * ny;
    fit = Fit{nx, ny, rho, mx, my, n};
  }
  return fit;
}

Line2D line_from_normal(double nx, double ny, double mx, double my) {
  // Direction (-ny, nx).
  const double dx = -ny, dy = nx;
  Line2D l;
  if (std::fabs(dy) > std::fabs(dx)) {
    l.x_of_y = true;
    l.slope = dx / dy;
    l.intercept = mx - l.slope * my;
  } else {
    l.x_of_y = false;
    l.slope = dy / dx;
    l.intercept = my - l.slope * mx;
  }
  return l;
}

bool near_peak(double t1, double r1, double t2, double r2, double mt, double mr) {
  const double dt = std::fabs(t1 - t2);
  if (dt <= mt && std::fabs(r1 - r2) <= mr) return true;
  return 180.0 - dt <= mt && std::fabs(r1 + r2) <= mr;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt::format("{:.6f}", *v) : std::string(); }

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size() || !std::isfinite(v)) throw InputError("bad number '" + s + "'");
  return v;
}

}  // namespace

void DistortionModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("focal lengths must be positive");
  for (double v : {cx, cy, k1, k2, k3, p1, p2}) {
    if (!std::isfinite(v)) throw ConfigError("distortion coefficients must be finite");
  }
}

std::pair<double, double> DistortionModel::distort(double u, double v) const {
  const double x = (u - cx) / fx;
  const double y = (v - cy) / fy;
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
  const double xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
  const double yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
  return {fx * xd + cx, fy * yd + cy};
}

DistortionModel parse_calibration(std::string_view text) {
  DistortionModel m;
  std::map<std::string, double*> fields{{"fx", &m.fx}, {"fy", &m.fy}, {"cx", &m.cx}, {"cy", &m.cy}, {"k1", &m.k1},
                                        {"k2", &m.k2}, {"k3", &m.k3}, {"p1", &m.p1}, {"p2", &m.p2}};
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  bool seen_fx = false, seen_fy = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw InputError(fmt::format("calibration line {}: expected key = value", line_no));
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    auto it = fields.find(key);
    if (it == fields.end()) throw InputError(fmt::format("calibration line {}: unknown key '{}'", line_no, key));
    try {
      std::size_t used = 0;
      *it->second = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw InputError(fmt::format("calibration line {}: bad value '{}'", line_no, value));
    }
    seen_fx |= key == "fx";
    seen_fy |= key == "fy";
  }
  if (!seen_fx || !seen_fy) throw InputError("calibration must define fx and fy");
  m.validate();
  return m;
}

DistortionModel read_calibration(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read calibration " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_calibration(ss.str());
}

GrayImage undistort(const GrayImage& img, const DistortionModel& model,
                    std::optional<std::pair<double, double>> principal) {
  model.validate();
  const int w = img.width, h = img.height;
  GrayImage out(w, h, 0);
  const double shift_x = principal ? model.cx - principal->first : 0.0;
  const double shift_y = principal ? model.cy - principal->second : 0.0;
  auto snap = [](double v) {
    const double r = std::round(v);
    return std::fabs(v - r) < 1e-6 ? r : v;
  };
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      auto [us, vs] = model.distort(u + shift_x, v + shift_y);
      us = snap(us);
      vs = snap(vs);
      if (!(us >= 0.0 && vs >= 0.0 && us <= w - 1 && vs <= h - 1)) continue;
      const int x0 = static_cast<int>(us), y0 = static_cast<int>(vs);
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double ax = us - x0, ay = vs - y0;
      const double top = (1 - ax) * img.at(x0, y0) + ax * img.at(x1, y0);
      const double bottom = (1 - ax) * img.at(x0, y1) + ax * img.at(x1, y1);
      out.at(u, v) = static_cast<std::uint8_t>(std::clamp(std::lround((1 - ay) * top + ay * bottom), 0L, 255L));
    }
  }
  return out;
}

GrayImage canny(const GrayImage& img, const CannyConfig& cfg) {
  if (!(cfg.low < cfg.high)) throw ConfigError("canny requires low < high");
  const int w = img.width, h = img.height;
  GrayImage edges(w, h, 0);
  if (w < 3 || h < 3) return edges;
  const std::vector<float> s = gaussian_blur(img, cfg.sigma);
  auto px = [&](int x, int y) { return s[std::clamp(y, 0, h - 1) * w + std::clamp(x, 0, w - 1)]; };

  std::vector<float> mag(s.size(), 0.0f);
  std::vector<std::uint8_t> dir(s.size(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
      const double gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
      mag[y * w + x] = static_cast<float>(std::hypot(gx, gy));
      double a = std::atan2(gy, gx) / kDeg;
      if (a < 0) a += 180.0;
      dir[y * w + x] = a < 22.5 || a >= 157.5 ? 0 : a < 67.5 ? 1 : a < 112.5 ? 2 : 3;
    }
  }

  // Non-maximum suppression; ties keep the pixel on the low-index side only.
  std::vector<std::uint8_t> state(s.size(), 0);  // 0 none, 1 weak, 2 strong
  static constexpr int kDx[4] = {1, 1, 0, -1};
  static constexpr int kDy[4] = {0, 1, 1, 1};
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const float m = mag[y * w + x];
      if (m < cfg.low) continue;
      const int d = dir[y * w + x];
      const float ahead = mag[(y + kDy[d]) * w + x + kDx[d]];
      const float behind = mag[(y - kDy[d]) * w + x - kDx[d]];
      if (m >= ahead && m > behind) state[y * w + x] = m >= cfg.high ? 2 : 1;
    }
  }

  std::vector<int> stack;
  for (int i = 0; i < w * h; ++i) {
    if (state[i] == 2) stack.push_back(i);
  }
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    edges.pixels[i] = 255;
    const int x = i % w, y = i / w;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const int j = ny * w + nx;
        if (state[j] == 1) {
          state[j] = 2;
          stack.push_back(j);
        }
      }
    }
  }
  return edges;
}

std::optional<double> Line2D::x_at(double y) const {
  if (x_of_y) return slope * y + intercept;
  if (slope == 0.0) return std::nullopt;
  return (y - intercept) / slope;
}

std::optional<double> Line2D::y_at(double x) const {
  if (!x_of_y) return slope * x + intercept;
  if (slope == 0.0) return std::nullopt;
  return (x - intercept) / slope;
}

std::optional<Line2D> Line2D::as_x_of_y() const {
  if (x_of_y) return *this;
  if (slope == 0.0) return std::nullopt;
  return Line2D{1.0 / slope, -intercept / slope, true};
}

std::optional<Line2D> Line2D::as_y_of_x() const {
  if (!x_of_y) return *this;
  if (slope == 0.0) return std::nullopt;
  return Line2D{1.0 / slope, -intercept / slope, false};
}

Line2D Line2D::canonical() const {
  if (std::fabs(slope) <= 1.0) return *this;
  return x_of_y ? *as_y_of_x() : *as_x_of_y();
}

double Line2D::image_slope() const {
  if (!x_of_y) return slope;
  if (slope == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / slope;
}

bool polygon_contains(const Polygon& poly, double x, double y) {
  bool inside = false;
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto [xi, yi] = poly[i];
    const auto [xj, yj] = poly[j];
    if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) inside = !inside;
  }
  return inside;
}

std::vector<HoughLine> hough_lines(const GrayImage& edges, const Polygon& mask, const HoughConfig& cfg) {
  if (!(cfg.theta_step_deg > 0.0) || !(cfg.rho_step_px > 0.0)) throw ConfigError("hough steps must be positive");
  std::vector<std::pair<int, int>> pts;
  for (int y = 0; y < edges.height; ++y) {
    for (int x = 0; x < edges.width; ++x) {
      if (edges.at(x, y) && (mask.empty() || polygon_contains(mask, x, y))) pts.emplace_back(x, y);
    }
  }
  std::vector<HoughLine> result;
  if (pts.empty()) return result;

  const int n_theta = static_cast<int>(std::lround(180.0 / cfg.theta_step_deg));
  const double diag = std::hypot(edges.width, edges.height);
  const int rho_off = static_cast<int>(std::ceil(diag / cfg.rho_step_px)) + 1;
  const int n_rho = 2 * rho_off + 1;
  std::vector<double> cs(n_theta), sn(n_theta);
  for (int t = 0; t < n_theta; ++t) {
    cs[t] = std::cos(t * cfg.theta_step_deg * kDeg);
    sn[t] = std::sin(t * cfg.theta_step_deg * kDeg);
  }
  std::vector<int> acc(static_cast<std::size_t>(n_theta) * n_rho, 0);
  for (const auto& [x, y] : pts) {
    for (int t = 0; t < n_theta; ++t) {
      const int r = static_cast<int>(std::lround((x * cs[t] + y * sn[t]) / cfg.rho_step_px)) + rho_off;
      ++acc[static_cast<std::size_t>(t) * n_rho + r];
    }
  }

  struct Peak {
    int votes, t, r;
  };
  std::vector<Peak> peaks;
  for (int t = 0; t < n_theta; ++t) {
    for (int r = 0; r < n_rho; ++r) {
      const int v = acc[static_cast<std::size_t>(t) * n_rho + r];
      if (v < cfg.vote_threshold) continue;
      bool is_max = true;
      for (int dt = -1; dt <= 1 && is_max; ++dt) {
        for (int dr = -1; dr <= 1; ++dr) {
          if (!dt && !dr) continue;
          const int tt = t + dt, rr = r + dr;
          if (tt < 0 || tt >= n_theta || rr < 0 || rr >= n_rho) continue;
          const int o = acc[static_cast<std::size_t>(tt) * n_rho + rr];
          // Plateaus: keep only the first cell in scan order.
          if (o > v || (o == v && (dt < 0 || (dt == 0 && dr < 0)))) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) peaks.push_back({v, t, r});
    }
  }
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    return std::tie(b.votes, a.t, a.r) < std::tie(a.votes, b.t, b.r);
  });

  std::vector<std::pair<double, double>> accepted;  // (theta deg, rho) of refined lines
  for (const Peak& p : peaks) {
    if (static_cast<int>(result.size()) >= cfg.max_lines) break;
    const double theta = p.t * cfg.theta_step_deg;
    const double rho = (p.r - rho_off) * cfg.rho_step_px;
    bool dup = false;
    for (const auto& [at, ar] : accepted) {
      if (near_peak(theta, rho, at, ar, cfg.merge_theta_deg, cfg.merge_rho_px)) dup = true;
    }
    if (dup) continue;
    const auto fit = refine(pts, cs[p.t], sn[p.t], rho, cfg.refine_band_px);
    if (!fit) continue;
    double ft = std::atan2(fit->ny, fit->nx) / kDeg;
    double fr = fit->rho;
    if (ft < 0.0) {
      ft += 180.0;
      fr = -fr;
    }
    if (ft >= 180.0) {
      ft -= 180.0;
      fr = -fr;
    }
    for (const auto& [at, ar] : accepted) {
      if (near_peak(ft, fr, at, ar, cfg.merge_theta_deg, cfg.merge_rho_px)) dup = true;
    }
    if (dup) continue;
    accepted.emplace_back(theta, rho);
    accepted.emplace_back(ft, fr);
    result.push_back({line_from_normal(fit->nx, fit->ny, fit->mx, fit->my), p.votes, ft, fr});
  }
  return result;
}

std::optional<Line2D> average_lines(const std::vector<HoughLine>& lines) {
  double wsum = 0, m = 0, c = 0;
  for (const HoughLine& h : lines) {
    const auto l = h.line.as_x_of_y();
    if (!l) continue;
    m += h.votes * l->slope;
    c += h.votes * l->intercept;
    wsum += h.votes;
  }
  if (wsum <= 0.0) return std::nullopt;
  return Line2D{m / wsum, c / wsum, true}.canonical();
}

OwnLane detect_own_lane(const std::vector<HoughLine>& lines, double min_abs_slope) {
  std::vector<HoughLine> left, right;
  for (const HoughLine& h : lines) {
    const double s = h.line.image_slope();
    if (!std::isfinite(s) || std::fabs(s) < min_abs_slope) continue;
    (s < 0.0 ? left : right).push_back(h);
  }
  return {average_lines(left), average_lines(right)};
}

std::optional<Line2D> detect_shoulder(const GrayImage& edges, const Line2D& left_own, const LaneVisionConfig& cfg) {
  const auto own = left_own.as_x_of_y();
  if (!own) return std::nullopt;
  const double y_top = cfg.band_top_frac * edges.height;
  const double y_bot = cfg.lower_row_frac * edges.height;
  const double x_top = *own->x_at(y_top) - cfg.shoulder_gap_px;
  const double x_bot = *own->x_at(y_bot) - cfg.shoulder_gap_px;
  if (x_top < 0.0 && x_bot < 0.0) return std::nullopt;
  const Polygon band{{-1.0, y_top}, {x_top, y_top}, {x_bot, y_bot}, {-1.0, y_bot}};
  std::vector<HoughLine> left;
  for (const HoughLine& h : hough_lines(edges, band, cfg.hough)) {
    const double s = h.line.image_slope();
    if (std::isfinite(s) && s < 0.0 && std::fabs(s) >= cfg.min_abs_slope) left.push_back(h);
  }
  return average_lines(left);
}

Measurement measure(const Line2D& left_own, const Line2D& shoulder, double row) {
  const auto a = left_own.as_x_of_y();
  const auto b = shoulder.as_x_of_y();
  if (!a || !b) throw DomainError("cannot measure horizontal lines");
  Measurement m;
  m.width_px = std::fabs(*a->x_at(row) - *b->x_at(row));
  const double dm = a->slope - b->slope;
  if (std::fabs(dm) > 1e-12) {
    const double y = (b->intercept - a->intercept) / dm;
    m.intersection = std::pair{a->slope * y + a->intercept, y};
  }
  return m;
}

LaneObservation analyze_frame(const GrayImage& frame, std::string frame_ref, const LaneVisionConfig& cfg,
                              const DistortionModel* model) {
  LaneObservation obs;
  obs.frame_ref = std::move(frame_ref);
  const GrayImage img = model ? undistort(frame, *model) : frame;
  const GrayImage edges = canny(img, cfg.canny);
  Polygon mask;
  for (const auto& [x, y] : cfg.own_mask) mask.emplace_back(x * img.width, y * img.height);
  const OwnLane own = detect_own_lane(hough_lines(edges, mask, cfg.hough), cfg.min_abs_slope);
  obs.left_own = own.left;
  obs.right_own = own.right;
  if (own.left) {
    obs.shoulder_left = detect_shoulder(edges, *own.left, cfg);
    if (obs.shoulder_left) {
      const Measurement m = measure(*own.left, *obs.shoulder_left, cfg.upper_row_frac * img.height);
      obs.width_at_upper_row_px = m.width_px;
      obs.boundary_intersection = m.intersection;
    }
  }
  return obs;
}

namespace {

const std::vector<std::string> kObservationColumns{
    "frame_ref", "left_own_m", "left_own_c", "right_own_m", "right_own_c", "shoulder_m",
    "shoulder_c", "width_px",  "ix",         "iy"};

void put_line(csv::Row& row, const std::optional<Line2D>& l) {
  const auto x = l ? l->as_x_of_y() : std::nullopt;
  row.push_back(x ? fmt::format("{:.6f}", x->slope) : "");
  row.push_back(x ? fmt::format("{:.6f}", x->intercept) : "");
}

std::optional<Line2D> get_line(const std::string& m, const std::string& c) {
  const auto sm = parse_opt(m), sc = parse_opt(c);
  if (!sm || !sc) return std::nullopt;
  return Line2D{*sm, *sc, true}.canonical();
}

}  // namespace

void write_observations(const std::filesystem::path& path, const std::vector<LaneObservation>& obs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  csv::write_row(out, kObservationColumns);
  for (const auto& o : obs) {
    csv::Row row{o.frame_ref};
    put_line(row, o.left_own);
    put_line(row, o.right_own);
    put_line(row, o.shoulder_left);
    row.push_back(fmt_opt(o.width_at_upper_row_px));
    row.push_back(o.boundary_intersection ? fmt::format("{:.6f}", o.boundary_intersection->first) : "");
    row.push_back(o.boundary_intersection ? fmt::format("{:.6f}", o.boundary_intersection->second) : "");
    csv::write_row(out, row);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<LaneObservation> read_observations(const std::filesystem::path& path) {
  const csv::Table table = csv::read_file(path);
  std::vector<std::size_t> idx;
  for (const auto& c : kObservationColumns) idx.push_back(table.require_column(c, path.string()));
  std::vector<LaneObservation> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const csv::Row& row = table.rows[i];
    auto f = [&](std::size_t k) -> std::string { return idx[k] < row.size() ? row[idx[k]] : ""; };
    try {
      LaneObservation o;
      o.frame_ref = f(0);
      o.left_own = get_line(f(1), f(2));
      o.right_own = get_line(f(3), f(4));
      o.shoulder_left = get_line(f(5), f(6));
      o.width_at_upper_row_px = parse_opt(f(7));
      const auto ix = parse_opt(f(8)), iy = parse_opt(f(9));
      if (ix && iy) o.boundary_intersection = std::pair{*ix, *iy};
      out.push_back(std::move(o));
    } catch (const std::exception& e) {
      throw InputError(fmt::format("{} line {}: {}", path.string(), table.line_numbers[i], e.what()));
    }
  }
  return out;
}

}  // namespace lanesurvey
