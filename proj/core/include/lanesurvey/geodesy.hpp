#pragma once

#include <cstddef>
#include <span>

namespace lanesurvey {

/// Mean earth radius (IUGG R1) used by every spherical computation.
inline constexpr double kEarthRadiusM = 6371008.8;

struct GeoPoint {
  double lat = 0.0;  // degrees, WGS84
  double lon = 0.0;  // degrees, WGS84

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

bool is_valid(const GeoPoint& p);

/// Compass heading, degrees clockwise from true north, always in [0, 360).
class Heading {
 public:
  constexpr Heading() = default;
  explicit Heading(double degrees);

  double degrees() const noexcept { return degrees_; }

  Heading operator+(double delta) const { return Heading(degrees_ + delta); }

  /// Smallest absolute angular difference, in [0, 180].
  double separation(Heading other) const;

  friend bool operator==(const Heading&, const Heading&) = default;

 private:
  double degrees_ = 0.0;
};

/// Great-circle (haversine) distance in metres.
double distance_m(const GeoPoint& a, const GeoPoint& b);

/// Initial great-circle bearing from a to b. Throws DomainError for coincident points.
Heading bearing(const GeoPoint& a, const GeoPoint& b);

/// Destination reached by travelling d metres from p along heading h.
GeoPoint offset_point(const GeoPoint& p, Heading h, double d);

/// Circular mean of headings. Throws DomainError for an empty set or when the
/// headings cancel exactly (e.g. 0 and 180).
Heading circular_mean(std::span<const Heading> headings);

/// Circular interpolation from a to b along the shorter arc, t in [0, 1].
Heading interpolate(Heading a, Heading b, double t);

/// Road heading at path[index]: circular mean of the bearing from the previous
/// node and the bearing to the next node; endpoints use the single bearing
/// available. Coincident neighbours are skipped. Throws DomainError when no
/// distinct neighbour exists.
Heading node_heading(std::span<const GeoPoint> path, std::size_t index);

/// Sum of pairwise distances along a polyline.
double polyline_length_m(std::span<const GeoPoint> path);

}  // namespace lanesurvey
