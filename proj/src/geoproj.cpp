#include "kiloland/geoproj.hpp"

#include <cmath>
#include <numbers>

#include "kiloland/error.hpp"

namespace kiloland::geo {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Cone constants shared by the forward and inverse maps (Snyder 1987, ch. 15).
struct Cone {
  double e = 0.0;
  double n = 0.0;
  double big_f = 0.0;
  double rho0 = 0.0;
  double a = 0.0;
  double lon0 = 0.0;
};

double m_func(double phi, double e) {
  const double s = std::sin(phi);
  return std::cos(phi) / std::sqrt(1.0 - e * e * s * s);
}

double t_func(double phi, double e) {
  const double s = std::sin(phi);
  const double tan_term = std::tan(std::numbers::pi / 4.0 - phi / 2.0);
  if (e == 0.0) return tan_term;
  return tan_term / std::pow((1.0 - e * s) / (1.0 + e * s), e / 2.0);
}

Cone make_cone(const LccParams& params) {
  params.validate();
  Cone c;
  c.e = params.ellipsoid.eccentricity();
  c.a = params.ellipsoid.semi_major_axis;
  c.lon0 = params.lon_origin * kDeg;
  const double phi1 = params.std_parallel_1 * kDeg;
  const double phi2 = params.std_parallel_2 * kDeg;
  const double m1 = m_func(phi1, c.e);
  const double t1 = t_func(phi1, c.e);
  if (params.std_parallel_1 == params.std_parallel_2) {
    c.n = std::sin(phi1);
  } else {
    c.n = (std::log(m1) - std::log(m_func(phi2, c.e))) /
          (std::log(t1) - std::log(t_func(phi2, c.e)));
  }
  c.big_f = m1 / (c.n * std::pow(t1, c.n));
  c.rho0 = c.a * c.big_f * std::pow(t_func(params.lat_origin * kDeg, c.e), c.n);
  return c;
}

double wrap_pi(double angle) {
  angle = std::remainder(angle, 2.0 * std::numbers::pi);
  return angle;
}

}  // namespace

double Ellipsoid::eccentricity() const {
  if (spherical()) return 0.0;
  const double f = 1.0 / inverse_flattening;
  return std::sqrt(2.0 * f - f * f);
}

void LccParams::validate() const {
  if (!(ellipsoid.semi_major_axis > 0.0)) {
    throw ValidationError("lcc: semi_major_axis must be positive");
  }
  if (!(ellipsoid.inverse_flattening > 1.0)) {
    throw ValidationError("lcc: inverse_flattening must exceed 1 (or be infinite)");
  }
  if (!(std::abs(lat_origin) < 90.0)) {
    throw ValidationError("lcc: |lat_origin| must be below 90 degrees");
  }
  if (!(std::abs(std_parallel_1) < 90.0) || !(std::abs(std_parallel_2) < 90.0)) {
    throw ValidationError("lcc: standard parallels must lie strictly between the poles");
  }
  if (std_parallel_1 == -std_parallel_2) {
    throw ValidationError("lcc: std_parallel_1 == -std_parallel_2 does not define a cone");
  }
  if (!std::isfinite(lon_origin) || !std::isfinite(false_easting) || !std::isfinite(false_northing)) {
    throw ValidationError("lcc: non-finite origin or false offsets");
  }
}

std::map<std::string, double> LccParams::to_attributes() const {
  return {
      {"lcc_lat_origin", lat_origin},
      {"lcc_lon_origin", lon_origin},
      {"lcc_sp1", std_parallel_1},
      {"lcc_sp2", std_parallel_2},
      {"lcc_false_easting", false_easting},
      {"lcc_false_northing", false_northing},
      {"lcc_semi_major_axis", ellipsoid.semi_major_axis},
      {"lcc_inverse_flattening", ellipsoid.inverse_flattening},
  };
}

LccParams LccParams::from_attributes(const std::map<std::string, double>& attrs) {
  LccParams p;
  auto take = [&](const char* key, double& slot) {
    if (auto it = attrs.find(key); it != attrs.end()) slot = it->second;
  };
  take("lcc_lat_origin", p.lat_origin);
  take("lcc_lon_origin", p.lon_origin);
  take("lcc_sp1", p.std_parallel_1);
  take("lcc_sp2", p.std_parallel_2);
  take("lcc_false_easting", p.false_easting);
  take("lcc_false_northing", p.false_northing);
  take("lcc_semi_major_axis", p.ellipsoid.semi_major_axis);
  take("lcc_inverse_flattening", p.ellipsoid.inverse_flattening);
  p.validate();
  return p;
}

ProjPoint lcc_forward(const GeoPoint& p, const LccParams& params) {
  if (!(p.lat >= -90.0 && p.lat <= 90.0) || !(p.lon >= -180.0 && p.lon <= 180.0)) {
    throw ValidationError("lcc_forward: point outside the WGS84 coordinate range");
  }
  const Cone c = make_cone(params);
  // The pole opposite the cone apex maps to infinity.
  const double apex_sign = c.n > 0.0 ? 1.0 : -1.0;
  if (apex_sign * p.lat <= -90.0) {
    throw ValidationError("lcc_forward: latitude at the pole opposite the cone apex is out of domain");
  }
  const double phi = p.lat * kDeg;
  const double rho = c.a * c.big_f * std::pow(t_func(phi, c.e), c.n);
  const double theta = c.n * wrap_pi(p.lon * kDeg - c.lon0);
  return {rho * std::sin(theta) + params.false_easting,
          c.rho0 - rho * std::cos(theta) + params.false_northing};
}

GeoPoint lcc_inverse(const ProjPoint& p, const LccParams& params) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
    throw ValidationError("lcc_inverse: non-finite projected point");
  }
  const Cone c = make_cone(params);
  const double sign = c.n > 0.0 ? 1.0 : -1.0;
  const double x = p.x - params.false_easting;
  const double dy = c.rho0 - (p.y - params.false_northing);
  const double rho = sign * std::hypot(x, dy);
  if (rho == 0.0) {
    return {sign * 90.0, params.lon_origin};
  }
  const double theta = std::atan2(sign * x, sign * dy);
  const double t = std::pow(rho / (c.a * c.big_f), 1.0 / c.n);

  double phi = std::numbers::pi / 2.0 - 2.0 * std::atan(t);
  if (c.e != 0.0) {
    for (int iter = 0; iter < 64; ++iter) {
      const double s = std::sin(phi);
      const double next = std::numbers::pi / 2.0 -
                          2.0 * std::atan(t * std::pow((1.0 - c.e * s) / (1.0 + c.e * s), c.e / 2.0));
      const double delta = std::abs(next - phi);
      phi = next;
      if (delta < 1e-15) break;
    }
  }
  double lon = (theta / c.n + c.lon0) / kDeg;
  lon = std::remainder(lon, 360.0);
  return {phi / kDeg, lon};
}

double lcc_scale_factor(double lat_deg, const LccParams& params) {
  const Cone c = make_cone(params);
  const double phi = lat_deg * kDeg;
  const double rho = c.a * c.big_f * std::pow(t_func(phi, c.e), c.n);
  return rho * c.n / (c.a * m_func(phi, c.e));
}

}  // namespace kiloland::geo
