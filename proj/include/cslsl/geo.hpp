#pragma once

#include <cstdint>
#include <span>

namespace cslsl::geo {

inline constexpr double kEarthRadiusKm = 6371.0;
// Meters per degree of latitude on the mean-radius sphere, rounded.
inline constexpr double kMetersPerDegree = 111195.0;

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

bool is_valid(const GeoPoint& p);

// Great-circle distance on a sphere of radius kEarthRadiusKm.
double haversine_km(const GeoPoint& a, const GeoPoint& b);

struct GridSpec {
  GeoPoint origin;  // south-west corner of the area of interest
  double cell_m = 500.0;
};

struct GridCell {
  std::int64_t row = 0;
  std::int64_t col = 0;

  friend auto operator<=>(const GridCell&, const GridCell&) = default;
};

// Local equirectangular projection about the grid origin. Points south or
// west of the origin get negative indices.
GridCell grid_index(const GeoPoint& p, const GridSpec& grid);

// Grid whose origin is the south-west corner of the bounding box of `points`.
GridSpec bounding_grid(std::span<const GeoPoint> points, double cell_m = 500.0);

// Largest pairwise haversine distance. O(n^2).
double diameter_km(std::span<const GeoPoint> points);

}  // namespace cslsl::geo
