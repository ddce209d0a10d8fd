#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "kiloland/error.hpp"
#include "kiloland/geoproj.hpp"

namespace kiloland::domain {

/// Square-cell projected grid. Cell (row, col) is centered at
/// (origin_x + col * cell_size, origin_y + row * cell_size).
struct Grid2D {
  std::int64_t n_rows = 1;
  std::int64_t n_cols = 1;
  double cell_size = 1000.0;  // meters
  double origin_x = 0.0;
  double origin_y = 0.0;
  geo::LccParams lcc{};

  std::int64_t n_cells() const { return n_rows * n_cols; }
  void validate() const;
  geo::ProjPoint center(std::int64_t row, std::int64_t col) const {
    return {origin_x + static_cast<double>(col) * cell_size, origin_y + static_cast<double>(row) * cell_size};
  }
};

enum class Geometry {
  full,        // compute lon/lat centers, corners, areas and fractions
  index_only,  // mask and compaction map only (continental-size grids)
};

/// Source cell and copy number of each land cell of a replicated domain,
/// in land order.
struct Provenance {
  std::int32_t n_copies = 1;
  std::vector<std::int64_t> source_id;
  std::vector<std::int32_t> copy;
};

/// The land-model domain: projected grid, land mask, gridcell IDs, geometry and
/// the 2D -> 1D land compaction map. Immutable once built; share freely.
struct DomainSpec {
  Grid2D grid;
  // Rows per replica copy; equals grid.n_rows unless the domain was replicated.
  std::int64_t base_rows = 1;
  std::vector<std::uint8_t> mask;
  // Empty means identity (gridcell_id == flat row-major index).
  std::vector<std::int64_t> gridcell_id;
  std::vector<double> frac, area, xc, yc;
  // Corner arrays, layout [corner][cell], corners counterclockwise from lower-left.
  std::vector<double> xv, yv;
  // Flat row-major positions of land cells in this grid, ascending.
  std::vector<std::int64_t> land_index;
  std::optional<Provenance> provenance;

  std::int64_t n_cells() const { return grid.n_cells(); }
  std::int64_t n_land() const { return static_cast<std::int64_t>(land_index.size()); }
  bool has_geometry() const { return !xc.empty(); }
  std::int64_t id_at(std::int64_t flat) const { return gridcell_id.empty() ? flat : gridcell_id[flat]; }
  /// Gridcell IDs of the land cells, in land order.
  std::vector<std::int64_t> land_ids() const;
  /// Projected center of a flat cell, honoring replica row stacking.
  geo::ProjPoint cell_center(std::int64_t flat) const;
  /// CRC-32 of the land gridcell IDs; used to tie data files to their domain.
  std::uint32_t fingerprint() const;
};

DomainSpec build_domain(const Grid2D& grid, std::span<const std::uint8_t> mask, Geometry geometry = Geometry::full);

struct BBox {
  double x_min, x_max, y_min, y_max;  // projected meters, inclusive
};
using Selector = std::variant<BBox, std::vector<std::int64_t>>;

DomainSpec subset(const DomainSpec& d, const Selector& selector);
DomainSpec replicate(const DomainSpec& d, std::int64_t k);

struct SubgridCensus {
  std::int64_t gridcells = 0;
  std::int64_t topounits = 0;
  std::int64_t landunits = 0;
  std::int64_t columns = 0;
  std::int64_t pfts = 0;

  friend bool operator==(const SubgridCensus&, const SubgridCensus&) = default;
  friend SubgridCensus operator+(const SubgridCensus& a, const SubgridCensus& b) {
    return {a.gridcells + b.gridcells, a.topounits + b.topounits, a.landunits + b.landunits,
            a.columns + b.columns, a.pfts + b.pfts};
  }
};

SubgridCensus census(const SubgridCensus& base, std::int64_t k);

/// Subgrid inventory of the Seward Peninsula reference case.
inline constexpr SubgridCensus kAkspCensus{72083, 72083, 313123, 1178119, 2331447};

template <class T>
std::vector<T> compact(std::span<const T> field2d, const DomainSpec& d, std::size_t n_outer = 1) {
  const auto n_cells = static_cast<std::size_t>(d.n_cells());
  if (field2d.size() != n_outer * n_cells) {
    throw ValidationError("compact: field has " + std::to_string(field2d.size()) + " values, expected " +
                          std::to_string(n_outer * n_cells));
  }
  std::vector<T> out;
  out.reserve(n_outer * d.land_index.size());
  for (std::size_t o = 0; o < n_outer; ++o) {
    const T* plane = field2d.data() + o * n_cells;
    for (auto flat : d.land_index) out.push_back(plane[flat]);
  }
  return out;
}

template <class T>
std::vector<T> expand(std::span<const T> field1d, const DomainSpec& d, T fill, std::size_t n_outer = 1) {
  const auto n_land = d.land_index.size();
  if (field1d.size() != n_outer * n_land) {
    throw ValidationError("expand: field has " + std::to_string(field1d.size()) + " values, expected " +
                          std::to_string(n_outer * n_land));
  }
  const auto n_cells = static_cast<std::size_t>(d.n_cells());
  std::vector<T> out(n_outer * n_cells, fill);
  for (std::size_t o = 0; o < n_outer; ++o) {
    for (std::size_t k = 0; k < n_land; ++k) out[o * n_cells + d.land_index[k]] = field1d[o * n_land + k];
  }
  return out;
}

/// Deterministic land mask with exactly n_land land cells: the n_land highest
/// cells of a smooth seeded random relief (ties broken toward lower index).
std::vector<std::uint8_t> synth_land_mask(std::int64_t n_rows, std::int64_t n_cols, std::int64_t n_land,
                                          std::uint64_t seed);

/// Grid of rows x cols cells of the given size centered on a geographic point.
Grid2D centered_grid(std::int64_t n_rows, std::int64_t n_cols, double cell_size, const geo::GeoPoint& center,
                     const geo::LccParams& lcc = {});

/// 32 x 32 one-kilometer grid on the Seward Peninsula with 613 land cells.
DomainSpec aksp_mini(std::uint64_t seed = 7);

}  // namespace kiloland::domain
