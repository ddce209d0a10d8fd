#include "kiloland/surface.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>

#include "kiloland/cdf5.hpp"
#include "kiloland/error.hpp"
#include "kiloland/rng.hpp"

namespace kiloland::surface {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
const std::set<std::string> kRequired{"PCT_CLAY", "FMAX", "PCT_PFT", "MONTHLY_LAI"};

double central_angle(double lat1, double lon1, double lat2, double lon2) {
  const double s_lat = std::sin((lat2 - lat1) * kDeg / 2.0);
  const double s_lon = std::sin(std::remainder(lon2 - lon1, 360.0) * kDeg / 2.0);
  const double h = s_lat * s_lat + std::cos(lat1 * kDeg) * std::cos(lat2 * kDeg) * s_lon * s_lon;
  return 2.0 * std::asin(std::min(1.0, std::sqrt(h)));
}

bool ascending(const std::vector<double>& axis) { return axis.size() < 2 || axis[1] > axis[0]; }

void check_extent(const std::vector<double>& axis, double t, const char* what) {
  if (axis.size() < 2) return;
  const double lo = std::min(axis.front(), axis.back());
  const double hi = std::max(axis.front(), axis.back());
  const double half = std::abs(axis[1] - axis[0]) / 2.0;
  if (t < lo - half || t > hi + half) {
    throw ValidationError(fmt::format("surface: target {} {} lies outside the source grid [{}, {}]", what, t, lo, hi));
  }
}

/// Index i and weight w with t = (1-w)*axis[i] + w*axis[i+1]; t must lie within the axis.
std::pair<std::size_t, double> bracket(const std::vector<double>& axis, double t, const char* what) {
  const double lo = std::min(axis.front(), axis.back());
  const double hi = std::max(axis.front(), axis.back());
  if (t < lo || t > hi) {
    throw ValidationError(fmt::format("surface: bilinear target {} {} outside the source extent [{}, {}]", what, t, lo, hi));
  }
  std::size_t i;
  if (ascending(axis)) {
    i = static_cast<std::size_t>(std::upper_bound(axis.begin(), axis.end(), t) - axis.begin());
  } else {
    i = static_cast<std::size_t>(std::upper_bound(axis.begin(), axis.end(), t, std::greater<>()) - axis.begin());
  }
  i = std::clamp<std::size_t>(i, 1, axis.size() - 1) - 1;
  return {i, (t - axis[i]) / (axis[i + 1] - axis[i])};
}

std::size_t plane_count(const ExtraDims& dims) {
  std::size_t n = 1;
  for (const auto& d : dims) n *= d.second;
  return n;
}

}  // namespace

std::size_t CoarseVar::n_planes() const { return plane_count(extra_dims); }

void CoarseGrid::validate() const {
  if (lat.empty() || lon.empty()) throw ValidationError("surface: empty source grid");
  for (std::size_t i = 1; i < lat.size(); ++i) {
    if ((lat[i] - lat[i - 1]) * (lat[1] - lat[0]) <= 0.0) throw ValidationError("surface: latitude axis not monotone");
  }
  for (std::size_t i = 1; i < lon.size(); ++i) {
    if (lon[i] <= lon[i - 1]) throw ValidationError("surface: longitude axis must be strictly increasing");
  }
  for (const auto& [name, v] : vars) {
    if (v.values.size() != v.n_planes() * n_points()) {
      throw ValidationError(fmt::format("surface: source variable {} has {} values, expected {}", name,
                                        v.values.size(), v.n_planes() * n_points()));
    }
  }
}

Method parse_method(const std::string& name) {
  if (name == "nearest") return Method::nearest;
  if (name == "bilinear" || name == "linear") return Method::bilinear;
  if (name == "spline") {
    throw ValidationError("surface: spline interpolation is not supported; use nearest or bilinear");
  }
  throw ValidationError("surface: unknown interpolation method '" + name + "'");
}

const char* method_name(Method m) { return m == Method::nearest ? "nearest" : "bilinear"; }

std::vector<std::int64_t> nearest_indices(const CoarseGrid& src, std::span<const double> lat,
                                          std::span<const double> lon) {
  src.validate();
  if (lat.size() != lon.size()) throw ValidationError("surface: target lat/lon lengths differ");
  const auto n_lat = src.lat.size();
  const auto n_lon = src.lon.size();
  std::vector<std::int64_t> out(lat.size());
  std::vector<std::size_t> rows(n_lat);
  for (std::size_t t = 0; t < lat.size(); ++t) {
    check_extent(src.lat, lat[t], "latitude");
    check_extent(src.lon, lon[t], "longitude");
    // Rows by increasing latitude distance; |dlat| bounds the great-circle angle from below.
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
      return std::abs(src.lat[a] - lat[t]) < std::abs(src.lat[b] - lat[t]);
    });
    const auto k = static_cast<std::size_t>(std::lower_bound(src.lon.begin(), src.lon.end(), lon[t]) - src.lon.begin());
    const std::size_t cand[4] = {k > 0 ? k - 1 : 0, std::min(k, n_lon - 1), 0, n_lon - 1};
    double best = std::numeric_limits<double>::infinity();
    std::int64_t best_idx = -1;
    for (auto i : rows) {
      if (std::abs(src.lat[i] - lat[t]) * kDeg > best) break;
      for (auto j : cand) {
        const double a = central_angle(lat[t], lon[t], src.lat[i], src.lon[j]);
        const auto idx = static_cast<std::int64_t>(i * n_lon + j);
        if (a < best || (a == best && idx < best_idx)) {
          best = a;
          best_idx = idx;
        }
      }
    }
    out[t] = best_idx;
  }
  return out;
}

std::vector<double> interp_nearest(const CoarseGrid& src, const CoarseVar& var, std::span<const double> lat,
                                   std::span<const double> lon) {
  const auto idx = nearest_indices(src, lat, lon);
  const auto n_pts = src.n_points();
  const auto planes = var.n_planes();
  std::vector<double> out(planes * idx.size());
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t t = 0; t < idx.size(); ++t) out[p * idx.size() + t] = var.values[p * n_pts + static_cast<std::size_t>(idx[t])];
  }
  return out;
}

std::vector<double> interp_bilinear(const CoarseGrid& src, const CoarseVar& var, std::span<const double> lat,
                                    std::span<const double> lon) {
  src.validate();
  if (src.lat.size() < 2 || src.lon.size() < 2) throw ValidationError("surface: bilinear needs at least 2x2 sources");
  if (lat.size() != lon.size()) throw ValidationError("surface: target lat/lon lengths differ");
  const auto n_pts = src.n_points();
  const auto n_lon = src.lon.size();
  const auto planes = var.n_planes();
  const auto n = lat.size();
  std::vector<double> out(planes * n);
  for (std::size_t t = 0; t < n; ++t) {
    const auto [i, wy] = bracket(src.lat, lat[t], "latitude");
    const auto [j, wx] = bracket(src.lon, lon[t], "longitude");
    for (std::size_t p = 0; p < planes; ++p) {
      const double* f = var.values.data() + p * n_pts;
      const double f00 = f[i * n_lon + j], f01 = f[i * n_lon + j + 1];
      const double f10 = f[(i + 1) * n_lon + j], f11 = f[(i + 1) * n_lon + j + 1];
      const double v = (1.0 - wy) * ((1.0 - wx) * f00 + wx * f01) + wy * ((1.0 - wx) * f10 + wx * f11);
      out[p * n + t] = std::clamp(v, std::min({f00, f01, f10, f11}), std::max({f00, f01, f10, f11}));
    }
  }
  return out;
}

void SurfaceDataset::check() const {
  for (const auto& name : kRequired) {
    if (!vars.count(name)) throw ValidationError("surface: dataset lacks required variable " + name);
  }
  const auto n = static_cast<std::size_t>(n_land);
  for (const auto& [name, v] : vars) {
    if (v.values.size() != v.n_planes() * n) throw ValidationError("surface: " + name + " has the wrong length");
    if (name.rfind("PCT_", 0) == 0) {
      for (double x : v.values) {
        if (!(x >= 0.0 && x <= 100.0)) throw ValidationError(fmt::format("surface: {} value {} outside [0,100]", name, x));
      }
    }
  }
  const auto& lai = vars.at("MONTHLY_LAI");
  if (lai.extra_dims != ExtraDims{{"month", kMonths}, {"pft", static_cast<std::size_t>(subgrid.max_pfts)}}) {
    throw ValidationError("surface: MONTHLY_LAI must have dims (month, pft, gridcell)");
  }
  for (double x : lai.values) {
    if (!(x >= 0.0)) throw ValidationError("surface: negative MONTHLY_LAI");
  }
  if (vars.at("PCT_CLAY").extra_dims != ExtraDims{{"layer", static_cast<std::size_t>(subgrid.soil_layers)}}) {
    throw ValidationError("surface: PCT_CLAY must have dims (layer, gridcell)");
  }
  const auto& pft = vars.at("PCT_PFT");
  if (pft.extra_dims != ExtraDims{{"pft", static_cast<std::size_t>(subgrid.max_pfts)}}) {
    throw ValidationError("surface: PCT_PFT must have dims (pft, gridcell)");
  }
  for (std::size_t c = 0; c < n; ++c) {
    double sum = 0.0;
    for (std::size_t p = 0; p < pft.n_planes(); ++p) sum += pft.values[p * n + c];
    if (std::abs(sum - 100.0) > 1e-6) throw ValidationError(fmt::format("surface: PCT_PFT sums to {} in cell {}", sum, c));
  }
}

std::pair<std::vector<double>, std::vector<double>> land_lat_lon(const domain::DomainSpec& d) {
  std::vector<double> lat, lon;
  lat.reserve(d.land_index.size());
  lon.reserve(d.land_index.size());
  for (auto flat : d.land_index) {
    if (d.has_geometry()) {
      lat.push_back(d.yc[static_cast<std::size_t>(flat)]);
      lon.push_back(d.xc[static_cast<std::size_t>(flat)]);
    } else {
      const auto g = geo::lcc_inverse(d.cell_center(flat), d.grid.lcc);
      lat.push_back(g.lat);
      lon.push_back(g.lon);
    }
  }
  return {lat, lon};
}

SurfaceDataset build_surface(const domain::DomainSpec& d, const CoarseGrid& src,
                             const std::map<std::string, Method>& methods) {
  src.validate();
  for (const auto& name : kRequired) {
    if (!src.vars.count(name)) throw ValidationError("surface: source lacks required variable " + name);
  }
  SurfaceDataset out;
  out.n_land = d.n_land();
  const auto [lat, lon] = land_lat_lon(d);
  for (const auto& [name, var] : src.vars) {
    const auto m = methods.find(name);
    if (m == methods.end()) throw ValidationError("surface: no interpolation method given for " + name);
    CoarseVar v;
    v.extra_dims = var.extra_dims;
    v.values = m->second == Method::nearest ? interp_nearest(src, var, lat, lon) : interp_bilinear(src, var, lat, lon);
    if (name.rfind("PCT_", 0) == 0) {
      for (auto& x : v.values) x = std::clamp(x, 0.0, 100.0);
    }
    out.vars[name] = std::move(v);
    out.methods[name] = m->second;
  }
  for (auto& x : out.vars["FMAX"].values) x = std::clamp(x, 0.0, 1.0);
  for (auto& x : out.vars["MONTHLY_LAI"].values) x = std::max(x, 0.0);

  auto& pft = out.vars["PCT_PFT"];
  const auto n = static_cast<std::size_t>(out.n_land);
  const auto np = pft.n_planes();
  for (std::size_t c = 0; c < n; ++c) {
    double sum = 0.0;
    for (std::size_t p = 0; p < np; ++p) sum += pft.values[p * n + c];
    if (sum > 0.0) {
      for (std::size_t p = 0; p < np; ++p) pft.values[p * n + c] *= 100.0 / sum;
    } else {
      pft.values[c] = 100.0;
    }
  }
  out.check();
  return out;
}

CoarseGrid synth_coarse(std::uint64_t seed, double lat_min, double lat_max, double lon_min, double lon_max,
                        double spacing, int n_extra) {
  if (!(spacing > 0.0) || lat_max < lat_min || lon_max < lon_min) throw ValidationError("surface: bad source box");
  CoarseGrid g;
  for (double x = lat_min; x <= lat_max + 1e-9; x += spacing) g.lat.push_back(x);
  for (double x = lon_min; x <= lon_max + 1e-9; x += spacing) g.lon.push_back(x);
  const auto n_pts = g.n_points();
  auto u = [&](std::uint64_t tag, std::size_t a, std::size_t b) {
    return hash_uniform01(hash_combine(hash_combine(hash_combine(seed, tag), a), b));
  };
  const SubgridSpec sub;

  CoarseVar clay{{{"layer", static_cast<std::size_t>(sub.soil_layers)}}, std::vector<double>(sub.soil_layers * n_pts)};
  for (int l = 0; l < sub.soil_layers; ++l) {
    for (std::size_t p = 0; p < n_pts; ++p) clay.values[l * n_pts + p] = std::min(100.0, 15.0 + 50.0 * u(1, p, 0) + 1.5 * l);
  }
  CoarseVar fmax{{}, std::vector<double>(n_pts)};
  for (std::size_t p = 0; p < n_pts; ++p) fmax.values[p] = 0.2 + 0.6 * u(2, p, 0);

  const auto n_pft = static_cast<std::size_t>(sub.max_pfts);
  CoarseVar pct{{{"pft", n_pft}}, std::vector<double>(n_pft * n_pts, 0.0)};
  for (std::size_t p = 0; p < n_pts; ++p) {
    double sum = 0.0;
    for (std::size_t k = 0; k < n_pft; ++k) {
      const double w = u(3, p, k);
      const double x = w < 0.55 ? 0.0 : w * w * w * w;
      pct.values[k * n_pts + p] = x;
      sum += x;
    }
    if (sum == 0.0) {
      pct.values[p] = 100.0;
      continue;
    }
    for (std::size_t k = 0; k < n_pft; ++k) pct.values[k * n_pts + p] *= 100.0 / sum;
  }

  CoarseVar lai{{{"month", kMonths}, {"pft", n_pft}}, std::vector<double>(kMonths * n_pft * n_pts)};
  for (int m = 0; m < kMonths; ++m) {
    const double season = std::max(0.0, std::sin(std::numbers::pi * (m - 2) / 9.0));
    for (std::size_t k = 0; k < n_pft; ++k) {
      for (std::size_t p = 0; p < n_pts; ++p) {
        const bool present = pct.values[k * n_pts + p] > 0.0;
        lai.values[(m * n_pft + k) * n_pts + p] = present ? (0.5 + 3.0 * u(4, k, 0)) * season * (0.7 + 0.3 * u(5, p, k)) : 0.0;
      }
    }
  }
  g.vars["PCT_CLAY"] = std::move(clay);
  g.vars["FMAX"] = std::move(fmax);
  g.vars["PCT_PFT"] = std::move(pct);
  g.vars["MONTHLY_LAI"] = std::move(lai);
  for (int e = 1; e <= n_extra; ++e) {
    CoarseVar v{{}, std::vector<double>(n_pts)};
    for (std::size_t p = 0; p < n_pts; ++p) v.values[p] = u(100 + static_cast<std::uint64_t>(e), p, 0);
    g.vars[fmt::format("SYN_{:03d}", e)] = std::move(v);
  }
  return g;
}

CoarseGrid synth_coarse_for(std::uint64_t seed, const domain::DomainSpec& d, double spacing, int n_extra) {
  const auto [lat, lon] = land_lat_lon(d);
  const auto [lat0, lat1] = std::minmax_element(lat.begin(), lat.end());
  const auto [lon0, lon1] = std::minmax_element(lon.begin(), lon.end());
  auto snap_down = [&](double x) { return std::floor(x / spacing) * spacing - spacing; };
  auto snap_up = [&](double x) { return std::ceil(x / spacing) * spacing + spacing; };
  return synth_coarse(seed, snap_down(*lat0), snap_up(*lat1), snap_down(*lon0), snap_up(*lon1), spacing, n_extra);
}

void write_surface_file(const std::filesystem::path& path, const SurfaceDataset& s, const domain::DomainSpec& d) {
  s.check();
  cdf::FileModel m;
  m.add_dim("gridcell", static_cast<std::uint64_t>(s.n_land));
  m.add_dim("nj", static_cast<std::uint64_t>(d.grid.n_rows));
  m.add_dim("ni", static_cast<std::uint64_t>(d.grid.n_cols));
  std::map<std::string, cdf::VarData> data;
  auto& ids = m.add_var("gridcell_id", cdf::Type::int64, {"gridcell"});
  cdf::set_attr(ids.attrs, "long_name", std::string("gridcell ID of each land cell"));
  data["gridcell_id"] = d.land_ids();
  for (const auto& [name, v] : s.vars) {
    std::vector<std::string> dims;
    for (const auto& [dn, len] : v.extra_dims) {
      if (!m.find_dim(dn)) m.add_dim(dn, len);
      dims.push_back(dn);
    }
    auto one = dims;
    one.push_back("gridcell");
    auto& v1 = m.add_var(name, cdf::Type::float64, one);
    cdf::set_attr(v1.attrs, "interp_method", std::string(method_name(s.methods.at(name))));
    data[name] = v.values;

    auto two = dims;
    two.push_back("nj");
    two.push_back("ni");
    auto& v2 = m.add_var(name + "_2d", cdf::Type::float64, two);
    cdf::set_attr(v2.attrs, "interp_method", std::string(method_name(s.methods.at(name))));
    cdf::set_attr(v2.attrs, "_FillValue", std::vector<double>{std::numeric_limits<double>::quiet_NaN()});
    data[name + "_2d"] = domain::expand<double>(std::span<const double>(v.values), d, std::numeric_limits<double>::quiet_NaN(), v.n_planes());
  }
  auto& g = m.global_attrs;
  cdf::set_attr(g, "title", std::string("surface properties interpolated to the land domain"));
  cdf::set_attr(g, "domain_fingerprint", std::vector<std::int64_t>{static_cast<std::int64_t>(d.fingerprint())});
  cdf::set_attr(g, "max_topounits", std::vector<std::int32_t>{s.subgrid.max_topounits});
  cdf::set_attr(g, "max_landunits", std::vector<std::int32_t>{s.subgrid.max_landunits});
  cdf::set_attr(g, "max_columns_per_landunit", std::vector<std::int32_t>{s.subgrid.max_columns_per_landunit});
  cdf::set_attr(g, "soil_layers", std::vector<std::int32_t>{s.subgrid.soil_layers});
  cdf::set_attr(g, "max_pfts", std::vector<std::int32_t>{s.subgrid.max_pfts});
  cdf::write_file(path, m, data);
}

}  // namespace kiloland::surface
