#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "cslsl/geo.hpp"

using namespace cslsl::geo;

namespace {

// Chord length between unit vectors, converted to an arc.
double chord_oracle_km(GeoPoint a, GeoPoint b) {
  const double k = M_PI / 180.0;
  const double ax = std::cos(a.lat * k) * std::cos(a.lon * k), ay = std::cos(a.lat * k) * std::sin(a.lon * k),
               az = std::sin(a.lat * k);
  const double bx = std::cos(b.lat * k) * std::cos(b.lon * k), by = std::cos(b.lat * k) * std::sin(b.lon * k),
               bz = std::sin(b.lat * k);
  const double c = std::sqrt((ax - bx) * (ax - bx) + (ay - by) * (ay - by) + (az - bz) * (az - bz));
  return 2.0 * 6371.0 * std::asin(c / 2.0);
}

GeoPoint random_point(std::mt19937_64& rng, double lat_lo, double lat_hi) {
  std::uniform_real_distribution<double> lat(lat_lo, lat_hi), lon(-180.0, 180.0);
  return {lat(rng), lon(rng)};
}

}  // namespace

TEST_CASE("haversine identity and one degree of longitude on the equator") {
  CHECK(haversine_km({40.7, -74.0}, {40.7, -74.0}) == 0.0);
  CHECK(haversine_km({0, 0}, {0, 1}) == doctest::Approx(6371.0 * M_PI / 180.0).epsilon(1e-12));
  CHECK(std::abs(haversine_km({0, 0}, {0, 1}) - 111.195) < 1e-3);
}

TEST_CASE("haversine New York to Tokyo matches the chord oracle") {
  const GeoPoint nyc{40.7128, -74.0060}, tokyo{35.6895, 139.6917};
  const double oracle = chord_oracle_km(nyc, tokyo);
  CHECK(std::abs(haversine_km(nyc, tokyo) - oracle) / oracle < 1e-6);
}

TEST_CASE("haversine is symmetric and obeys the triangle inequality") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const GeoPoint a = random_point(rng, 0, 89), b = random_point(rng, 0, 89), c = random_point(rng, 0, 89);
    CHECK(haversine_km(a, b) == haversine_km(b, a));
    CHECK(haversine_km(a, b) >= 0.0);
    CHECK(haversine_km(a, c) <= haversine_km(a, b) + haversine_km(b, c) + 1e-9);
    CHECK(std::abs(haversine_km(a, b) - chord_oracle_km(a, b)) < 1e-6);
  }
}

TEST_CASE("grid_index follows the local projection") {
  const GridSpec g{{40.0, -74.0}, 500.0};
  CHECK(grid_index(g.origin, g) == GridCell{0, 0});
  CHECK(grid_index({40.0 + 750.0 / kMetersPerDegree, -74.0}, g) == GridCell{1, 0});
  const double east_499 = 499.0 / (kMetersPerDegree * std::cos(40.0 * M_PI / 180.0));
  CHECK(grid_index({40.0, -74.0 + east_499}, g) == GridCell{0, 0});
  CHECK(grid_index({40.0 - 1.0 / kMetersPerDegree, -74.0}, g).row == -1);
  CHECK_THROWS(grid_index(g.origin, GridSpec{g.origin, 0.0}));
}

TEST_CASE("moving one cell north increments the row") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> off(0.0, 0.2);
  const GridSpec g{{40.0, -74.0}, 500.0};
  for (int trial = 0; trial < 200; ++trial) {
    // Stay away from cell boundaries so rounding cannot flip the floor.
    const double rows = std::floor(off(rng) * 40.0) + 0.5;
    const GeoPoint p{40.0 + rows * 500.0 / kMetersPerDegree, -74.0 + off(rng)};
    const GeoPoint q{p.lat + 500.0 / kMetersPerDegree, p.lon};
    CHECK(grid_index(q, g).row == grid_index(p, g).row + 1);
    CHECK(grid_index(q, g).col == grid_index(p, g).col);
  }
}

TEST_CASE("bounding grid and diameter") {
  const std::vector<GeoPoint> pts{{40.1, -73.9}, {40.0, -73.8}, {40.2, -74.0}};
  const GridSpec g = bounding_grid(pts);
  CHECK(g.origin == GeoPoint{40.0, -74.0});
  CHECK(g.cell_m == 500.0);
  for (const auto& p : pts) {
    const auto c = grid_index(p, g);
    CHECK(c.row >= 0);
    CHECK(c.col >= 0);
  }
  double brute = 0.0;
  for (const auto& a : pts)
    for (const auto& b : pts) brute = std::max(brute, haversine_km(a, b));
  CHECK(diameter_km(pts) == brute);
}
