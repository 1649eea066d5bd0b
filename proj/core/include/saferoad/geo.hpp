#pragma once

namespace saferoad {

// Mean Earth radius (IUGG), meters.
inline constexpr double kEarthRadiusMeters = 6'371'008.8;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
  friend bool operator==(const LatLon&, const LatLon&) = default;
};

double haversine_meters(LatLon a, LatLon b) noexcept;

bool valid_latlon(LatLon p) noexcept;

// Axis-aligned lat/lon rectangle. Does not wrap the antimeridian.
struct BoundingBox {
  double min_lat = 0.0;
  double min_lon = 0.0;
  double max_lat = 0.0;
  double max_lon = 0.0;

  bool contains(LatLon p) const noexcept {
    return p.lat >= min_lat && p.lat <= max_lat && p.lon >= min_lon && p.lon <= max_lon;
  }
  bool degenerate() const noexcept { return !(max_lat > min_lat) || !(max_lon > min_lon); }
};

}  // namespace saferoad
