#include "cslsl/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cslsl::geo {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

bool is_valid(const GeoPoint& p) {
  return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 && p.lat <= 90.0 &&
         p.lon >= -180.0 && p.lon <= 180.0;
}

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  const double phi1 = a.lat * kDegToRad;
  const double phi2 = b.lat * kDegToRad;
  const double dphi = (b.lat - a.lat) * kDegToRad;
  const double dlambda = (b.lon - a.lon) * kDegToRad;
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

GridCell grid_index(const GeoPoint& p, const GridSpec& grid) {
  if (!(grid.cell_m > 0.0)) {
    throw std::invalid_argument("grid cell size must be positive");
  }
  const double north_m = (p.lat - grid.origin.lat) * kMetersPerDegree;
  const double east_m =
      (p.lon - grid.origin.lon) * kMetersPerDegree * std::cos(grid.origin.lat * kDegToRad);
  return {static_cast<std::int64_t>(std::floor(north_m / grid.cell_m)),
          static_cast<std::int64_t>(std::floor(east_m / grid.cell_m))};
}

GridSpec bounding_grid(std::span<const GeoPoint> points, double cell_m) {
  GridSpec grid;
  grid.cell_m = cell_m;
  if (points.empty()) {
    return grid;
  }
  grid.origin = points.front();
  for (const auto& p : points) {
    grid.origin.lat = std::min(grid.origin.lat, p.lat);
    grid.origin.lon = std::min(grid.origin.lon, p.lon);
  }
  return grid;
}

double diameter_km(std::span<const GeoPoint> points) {
  double best = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      best = std::max(best, haversine_km(points[i], points[j]));
    }
  }
  return best;
}

}  // namespace cslsl::geo
