#pragma once

#include <limits>
#include <map>
#include <string>

namespace kiloland::geo {

struct Ellipsoid {
  double semi_major_axis = 6378137.0;  // meters
  // Infinity selects the spherical formulation with radius = semi_major_axis.
  double inverse_flattening = std::numeric_limits<double>::infinity();

  bool spherical() const { return !(inverse_flattening < std::numeric_limits<double>::infinity()); }
  double eccentricity() const;

  static Ellipsoid sphere(double radius = 6378137.0) { return {radius, std::numeric_limits<double>::infinity()}; }
  static Ellipsoid wgs84() { return {6378137.0, 298.257223563}; }
};

/// Lambert conformal conic with two standard parallels. Angles in degrees,
/// offsets in meters. Defaults follow the Daymet North America grid.
struct LccParams {
  double lat_origin = 42.5;
  double lon_origin = -100.0;
  double std_parallel_1 = 25.0;
  double std_parallel_2 = 60.0;
  double false_easting = 0.0;
  double false_northing = 0.0;
  Ellipsoid ellipsoid{};

  /// Throws ValidationError when the cone is undefined or the origin is a pole.
  void validate() const;

  /// Serialized with the lcc_* key names used in config files and domain attributes.
  std::map<std::string, double> to_attributes() const;
  static LccParams from_attributes(const std::map<std::string, double>& attrs);
};

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
};

struct ProjPoint {
  double x = 0.0;
  double y = 0.0;
};

ProjPoint lcc_forward(const GeoPoint& p, const LccParams& params);
GeoPoint lcc_inverse(const ProjPoint& p, const LccParams& params);

/// Analytic scale factor along parallels (equal to meridional scale for a conformal map).
double lcc_scale_factor(double lat_deg, const LccParams& params);

}  // namespace kiloland::geo
