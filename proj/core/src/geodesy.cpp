#include "lanesurvey/geodesy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "lanesurvey/errors.hpp"

namespace lanesurvey {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

double normalize_degrees(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r < 0.0) r += 360.0;
  // fmod of a tiny negative value can round to exactly 360.
  if (r >= 360.0) r = 0.0;
  return r;
}

}  // namespace

bool is_valid(const GeoPoint& p) {
  return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 && p.lat <= 90.0 &&
         p.lon >= -180.0 && p.lon <= 180.0;
}

Heading::Heading(double degrees) : degrees_(normalize_degrees(degrees)) {
  if (!std::isfinite(degrees)) throw DomainError("heading must be finite");
}

double Heading::separation(Heading other) const {
  double d = std::fabs(degrees_ - other.degrees_);
  return d > 180.0 ? 360.0 - d : d;
}

double distance_m(const GeoPoint& a, const GeoPoint& b) {
  const double phi1 = a.lat * kDegToRad;
  const double phi2 = b.lat * kDegToRad;
  const double dphi = (b.lat - a.lat) * kDegToRad;
  const double dlambda = (b.lon - a.lon) * kDegToRad;
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

Heading bearing(const GeoPoint& a, const GeoPoint& b) {
  if (a == b) throw DomainError("bearing undefined for coincident points");
  const double phi1 = a.lat * kDegToRad;
  const double phi2 = b.lat * kDegToRad;
  const double dlambda = (b.lon - a.lon) * kDegToRad;
  const double y = std::sin(dlambda) * std::cos(phi2);
  const double x = std::cos(phi1) * std::sin(phi2) - std::sin(phi1) * std::cos(phi2) * std::cos(dlambda);
  if (x == 0.0 && y == 0.0) throw DomainError("bearing undefined for coincident points");
  return Heading(std::atan2(y, x) * kRadToDeg);
}

GeoPoint offset_point(const GeoPoint& p, Heading h, double d) {
  if (!(d >= 0.0)) throw DomainError("offset distance must be non-negative");
  if (d == 0.0) return p;
  const double delta = d / kEarthRadiusM;
  const double theta = h.degrees() * kDegToRad;
  const double phi1 = p.lat * kDegToRad;
  const double lambda1 = p.lon * kDegToRad;
  const double sin_phi2 =
      std::sin(phi1) * std::cos(delta) + std::cos(phi1) * std::sin(delta) * std::cos(theta);
  const double phi2 = std::asin(std::clamp(sin_phi2, -1.0, 1.0));
  const double lambda2 =
      lambda1 + std::atan2(std::sin(theta) * std::sin(delta) * std::cos(phi1),
                           std::cos(delta) - std::sin(phi1) * sin_phi2);
  double lon = lambda2 * kRadToDeg;
  lon = std::fmod(lon + 540.0, 360.0) - 180.0;
  return {phi2 * kRadToDeg, lon};
}

Heading circular_mean(std::span<const Heading> headings) {
  if (headings.empty()) throw DomainError("circular mean of an empty set");
  double s = 0.0;
  double c = 0.0;
  for (const Heading& h : headings) {
    s += std::sin(h.degrees() * kDegToRad);
    c += std::cos(h.degrees() * kDegToRad);
  }
  if (std::hypot(s, c) < 1e-12 * static_cast<double>(headings.size())) {
    throw DomainError("circular mean undefined for opposing headings");
  }
  return Heading(std::atan2(s, c) * kRadToDeg);
}

Heading interpolate(Heading a, Heading b, double t) {
  double diff = b.degrees() - a.degrees();
  if (diff > 180.0) diff -= 360.0;
  if (diff < -180.0) diff += 360.0;
  return Heading(a.degrees() + t * diff);
}

Heading node_heading(std::span<const GeoPoint> path, std::size_t index) {
  if (index >= path.size()) throw DomainError("node index out of range");
  const GeoPoint& here = path[index];

  std::vector<Heading> bearings;
  for (std::size_t i = index; i-- > 0;) {
    if (!(path[i] == here)) {
      bearings.push_back(bearing(path[i], here));
      break;
    }
  }
  for (std::size_t i = index + 1; i < path.size(); ++i) {
    if (!(path[i] == here)) {
      bearings.push_back(bearing(here, path[i]));
      break;
    }
  }
  if (bearings.empty()) throw DomainError("node has no distinct neighbour");
  if (bearings.size() == 1) return bearings.front();
  // A hairpin reversal cancels exactly; fall back to the outgoing bearing.
  try {
    return circular_mean(bearings);
  } catch (const DomainError&) {
    return bearings.back();
  }
}

double polyline_length_m(std::span<const GeoPoint> path) {
  double total = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) total += distance_m(path[i - 1], path[i]);
  return total;
}

}  // namespace lanesurvey
