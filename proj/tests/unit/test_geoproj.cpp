#include "catch2/catch_amalgamated.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <random>

#include "kiloland/error.hpp"
#include "kiloland/geoproj.hpp"
#include "kiloland/rng.hpp"

using namespace kiloland;
using namespace kiloland::geo;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

LccParams clarke1866_snyder() {
  // Snyder (1987), worked example for the two-parallel ellipsoidal LCC.
  LccParams p;
  p.lat_origin = 23.0;
  p.lon_origin = -96.0;
  p.std_parallel_1 = 33.0;
  p.std_parallel_2 = 45.0;
  const double e2 = 0.00676866;
  p.ellipsoid = {6378206.4, 1.0 / (1.0 - std::sqrt(1.0 - e2))};
  return p;
}

// Scale along the parallel estimated from finite differences of lcc_forward.
double fd_parallel_scale(double lat, const LccParams& p) {
  const double dlon = 1e-5;
  const auto a = lcc_forward({lat, p.lon_origin - dlon}, p);
  const auto b = lcc_forward({lat, p.lon_origin + dlon}, p);
  const double e = p.ellipsoid.eccentricity();
  const double s = std::sin(lat * kDeg);
  const double n_radius = p.ellipsoid.semi_major_axis / std::sqrt(1.0 - e * e * s * s);
  const double ground = n_radius * std::cos(lat * kDeg) * 2.0 * dlon * kDeg;
  return std::hypot(b.x - a.x, b.y - a.y) / ground;
}

// Scale along the meridian from finite differences; meridional arc radius M.
double fd_meridian_scale(double lat, const LccParams& p) {
  const double dlat = 1e-5;
  const auto a = lcc_forward({lat - dlat, p.lon_origin}, p);
  const auto b = lcc_forward({lat + dlat, p.lon_origin}, p);
  const double e = p.ellipsoid.eccentricity();
  const double s = std::sin(lat * kDeg);
  const double m_radius = p.ellipsoid.semi_major_axis * (1.0 - e * e) / std::pow(1.0 - e * e * s * s, 1.5);
  return std::hypot(b.x - a.x, b.y - a.y) / (m_radius * 2.0 * dlat * kDeg);
}

}  // namespace

TEST_CASE("projection origin maps to the false origin", "[geoproj]") {
  LccParams p;
  const auto xy = lcc_forward({42.5, p.lon_origin}, p);
  CHECK(std::abs(xy.x) < 1e-9);
  CHECK(std::abs(xy.y) < 1e-9);

  const auto g = lcc_inverse({0.0, 0.0}, p);
  CHECK(g.lat == Catch::Approx(42.5).margin(1e-12));
  CHECK(g.lon == Catch::Approx(p.lon_origin).margin(1e-12));
}

TEST_CASE("round trip over North America", "[geoproj]") {
  for (const auto& ellipsoid : {Ellipsoid::sphere(), Ellipsoid::wgs84()}) {
    LccParams p;
    p.ellipsoid = ellipsoid;
    std::mt19937_64 rng(42);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const GeoPoint g{uniform(rng, 15.0, 80.0), uniform(rng, -170.0, -50.0)};
      const auto back = lcc_inverse(lcc_forward(g, p), p);
      worst = std::max({worst, std::abs(back.lat - g.lat), std::abs(back.lon - g.lon)});
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("Seward Peninsula round trip", "[geoproj]") {
  LccParams p;
  const auto back = lcc_inverse(lcc_forward({64.5, -165.0}, p), p);
  CHECK(std::abs(back.lat - 64.5) < 1e-9);
  CHECK(std::abs(back.lon + 165.0) < 1e-9);
}

TEST_CASE("unit scale on the standard parallels", "[geoproj]") {
  for (const auto& ellipsoid : {Ellipsoid::sphere(), Ellipsoid::wgs84()}) {
    LccParams p;
    p.ellipsoid = ellipsoid;
    for (double lat : {p.std_parallel_1, p.std_parallel_2}) {
      CHECK(std::abs(fd_parallel_scale(lat, p) - 1.0) < 1e-6);
      CHECK(std::abs(fd_meridian_scale(lat, p) - 1.0) < 1e-6);
      CHECK(std::abs(lcc_scale_factor(lat, p) - 1.0) < 1e-12);
    }
    // Between the parallels the cone is secant: scale below one.
    CHECK(fd_parallel_scale(42.5, p) < 1.0);
  }
}

TEST_CASE("published worked example", "[geoproj]") {
  const auto p = clarke1866_snyder();
  const auto xy = lcc_forward({35.0, -75.0}, p);
  CHECK(std::abs(xy.x - 1894410.9) < 0.1);
  CHECK(std::abs(xy.y - 1564649.5) < 0.1);
  const auto g = lcc_inverse({1894410.9, 1564649.5}, p);
  CHECK(std::abs(g.lat - 35.0) < 1e-6);
  CHECK(std::abs(g.lon + 75.0) < 1e-6);

  // Spherical form of the same example on the unit sphere.
  auto s = p;
  s.ellipsoid = Ellipsoid::sphere(1.0);
  const auto u = lcc_forward({35.0, -75.0}, s);
  CHECK(u.x == Catch::Approx(0.2966785).margin(1e-7));
  CHECK(u.y == Catch::Approx(0.2462112).margin(1e-7));
}

TEST_CASE("northing increases with latitude along the central meridian", "[geoproj]") {
  LccParams p;
  double prev = -std::numeric_limits<double>::infinity();
  for (double lat = -79.9; lat < 84.0; lat += 0.1) {
    const double y = lcc_forward({lat, p.lon_origin}, p).y;
    REQUIRE(y > prev);
    prev = y;
  }
}

TEST_CASE("degenerate and out-of-domain points", "[geoproj]") {
  LccParams p;
  CHECK_THROWS_AS(lcc_forward({-90.0, 0.0}, p), kiloland::ValidationError);
  // The apex (north pole for a northern cone) sits at rho = 0.
  const auto apex = lcc_forward({90.0, 10.0}, p);
  const auto g = lcc_inverse(apex, p);
  CHECK(g.lat == 90.0);
  CHECK(g.lon == p.lon_origin);

  LccParams bad;
  bad.std_parallel_1 = 30.0;
  bad.std_parallel_2 = -30.0;
  CHECK_THROWS_AS(bad.validate(), kiloland::ValidationError);
}

TEST_CASE("projection is deterministic and serializes its parameters", "[geoproj]") {
  LccParams p;
  p.false_easting = 1234.5;
  const auto a = lcc_forward({61.2, -149.9}, p);
  const auto b = lcc_forward({61.2, -149.9}, p);
  CHECK(std::memcmp(&a, &b, sizeof a) == 0);

  const auto back = LccParams::from_attributes(p.to_attributes());
  CHECK(back.false_easting == 1234.5);
  CHECK(back.std_parallel_2 == 60.0);
  CHECK(back.ellipsoid.spherical());
}
