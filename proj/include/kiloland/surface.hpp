#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kiloland/domain.hpp"

namespace kiloland::surface {

using ExtraDims = std::vector<std::pair<std::string, std::size_t>>;

/// A source variable on the coarse grid, values laid out [extra..., lat, lon].
struct CoarseVar {
  ExtraDims extra_dims;
  std::vector<double> values;

  std::size_t n_planes() const;
};

/// Regular lat/lon source grid (e.g. 0.5 degree). Axes strictly monotone.
struct CoarseGrid {
  std::vector<double> lat;
  std::vector<double> lon;
  std::map<std::string, CoarseVar> vars;

  std::size_t n_points() const { return lat.size() * lon.size(); }
  void validate() const;
};

enum class Method { nearest, bilinear };

/// "nearest", "bilinear" or "linear"; "spline" and anything else are rejected.
Method parse_method(const std::string& name);
const char* method_name(Method m);

/// Flat source index (lat_i * n_lon + lon_j) of the great-circle nearest
/// source center per target; ties go to the lower index.
std::vector<std::int64_t> nearest_indices(const CoarseGrid& src, std::span<const double> lat,
                                          std::span<const double> lon);

/// Interpolated values laid out [extra..., target].
std::vector<double> interp_nearest(const CoarseGrid& src, const CoarseVar& var, std::span<const double> lat,
                                   std::span<const double> lon);
std::vector<double> interp_bilinear(const CoarseGrid& src, const CoarseVar& var, std::span<const double> lat,
                                    std::span<const double> lon);

struct SubgridSpec {
  int max_topounits = 1;
  int max_landunits = 5;
  int max_columns_per_landunit = 2;
  int soil_layers = 15;
  int max_pfts = 17;
};

inline constexpr int kMonths = 12;

/// Land-compacted surface properties, values laid out [extra..., gridcell].
struct SurfaceDataset {
  std::int64_t n_land = 0;
  SubgridSpec subgrid;
  std::map<std::string, CoarseVar> vars;
  std::map<std::string, Method> methods;

  /// Throws ValidationError naming the first violated invariant.
  void check() const;
};

/// Land cell centers (lat, lon) of a domain; computed from the projection when
/// the domain carries no geometry.
std::pair<std::vector<double>, std::vector<double>> land_lat_lon(const domain::DomainSpec& d);

SurfaceDataset build_surface(const domain::DomainSpec& d, const CoarseGrid& src,
                             const std::map<std::string, Method>& methods);

/// Synthetic 0.5-degree-style source covering the box, with the four required
/// variables plus `n_extra` scalar fields SYN_001...
CoarseGrid synth_coarse(std::uint64_t seed, double lat_min, double lat_max, double lon_min, double lon_max,
                        double spacing = 0.5, int n_extra = 0);
/// Source box enclosing the domain's land cells with a one-cell margin.
CoarseGrid synth_coarse_for(std::uint64_t seed, const domain::DomainSpec& d, double spacing = 0.5, int n_extra = 0);

/// Writes 1D (land-compacted) and 2D (NaN-filled grid) forms of every variable.
void write_surface_file(const std::filesystem::path& path, const SurfaceDataset& s, const domain::DomainSpec& d);

}  // namespace kiloland::surface
