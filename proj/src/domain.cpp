#include "kiloland/domain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include <boost/crc.hpp>

#include "kiloland/rng.hpp"

namespace kiloland::domain {

void Grid2D::validate() const {
  if (n_rows < 1 || n_cols < 1) throw ValidationError("grid: n_rows and n_cols must be >= 1");
  if (!(cell_size > 0.0)) throw ValidationError("grid: cell_size must be positive");
  if (n_rows > std::numeric_limits<std::int64_t>::max() / n_cols) {
    throw ValidationError("grid: cell count overflows the gridcell ID space");
  }
  lcc.validate();
}

std::vector<std::int64_t> DomainSpec::land_ids() const {
  std::vector<std::int64_t> ids;
  ids.reserve(land_index.size());
  for (auto flat : land_index) ids.push_back(id_at(flat));
  return ids;
}

geo::ProjPoint DomainSpec::cell_center(std::int64_t flat) const {
  const std::int64_t row = flat / grid.n_cols;
  return grid.center(row % base_rows, flat % grid.n_cols);
}

std::uint32_t DomainSpec::fingerprint() const {
  boost::crc_32_type crc;
  for (auto flat : land_index) {
    const std::int64_t id = id_at(flat);
    crc.process_bytes(&id, sizeof id);
  }
  if (provenance) {
    crc.process_bytes(provenance->source_id.data(), provenance->source_id.size() * sizeof(std::int64_t));
    crc.process_bytes(provenance->copy.data(), provenance->copy.size() * sizeof(std::int32_t));
  }
  return crc.checksum();
}

namespace {

void fill_geometry(DomainSpec& d) {
  const auto n = static_cast<std::size_t>(d.n_cells());
  const double h = d.grid.cell_size / 2.0;
  const double area_km2 = d.grid.cell_size * d.grid.cell_size / 1.0e6;
  d.frac.assign(n, 0.0);
  d.area.assign(n, area_km2);
  d.xc.resize(n);
  d.yc.resize(n);
  d.xv.resize(4 * n);
  d.yv.resize(4 * n);
  static constexpr double kCornerDx[4] = {-1.0, 1.0, 1.0, -1.0};
  static constexpr double kCornerDy[4] = {-1.0, -1.0, 1.0, 1.0};
  for (std::size_t flat = 0; flat < n; ++flat) {
    const auto c = d.cell_center(static_cast<std::int64_t>(flat));
    const auto g = geo::lcc_inverse(c, d.grid.lcc);
    d.xc[flat] = g.lon;
    d.yc[flat] = g.lat;
    for (std::size_t v = 0; v < 4; ++v) {
      const auto corner = geo::lcc_inverse({c.x + kCornerDx[v] * h, c.y + kCornerDy[v] * h}, d.grid.lcc);
      d.xv[v * n + flat] = corner.lon;
      d.yv[v * n + flat] = corner.lat;
    }
    if (d.mask[flat]) d.frac[flat] = 1.0;
  }
}

void index_land(DomainSpec& d) {
  d.land_index.clear();
  for (std::int64_t flat = 0; flat < d.n_cells(); ++flat) {
    if (d.mask[static_cast<std::size_t>(flat)]) d.land_index.push_back(flat);
  }
  if (d.land_index.empty()) throw ValidationError("empty land domain");
}

}  // namespace

DomainSpec build_domain(const Grid2D& grid, std::span<const std::uint8_t> mask, Geometry geometry) {
  grid.validate();
  if (static_cast<std::int64_t>(mask.size()) != grid.n_cells()) {
    throw ValidationError("build_domain: mask has " + std::to_string(mask.size()) + " cells, grid has " +
                          std::to_string(grid.n_cells()));
  }
  DomainSpec d;
  d.grid = grid;
  d.base_rows = grid.n_rows;
  d.mask.resize(mask.size());
  std::transform(mask.begin(), mask.end(), d.mask.begin(), [](std::uint8_t m) { return m ? 1 : 0; });
  index_land(d);
  if (geometry == Geometry::full) fill_geometry(d);
  return d;
}

DomainSpec subset(const DomainSpec& d, const Selector& selector) {
  const std::int64_t n = d.n_cells();
  std::vector<std::uint8_t> selected(static_cast<std::size_t>(n), 0);

  if (const auto* box = std::get_if<BBox>(&selector)) {
    if (d.base_rows != d.grid.n_rows) {
      throw ValidationError("subset: a projected bbox is ambiguous on a replicated domain; select by ID");
    }
    for (std::int64_t flat = 0; flat < n; ++flat) {
      const auto c = d.cell_center(flat);
      if (c.x >= box->x_min && c.x <= box->x_max && c.y >= box->y_min && c.y <= box->y_max) {
        selected[static_cast<std::size_t>(flat)] = 1;
      }
    }
  } else {
    const auto& ids = std::get<std::vector<std::int64_t>>(selector);
    std::unordered_set<std::int64_t> wanted(ids.begin(), ids.end());
    for (std::int64_t flat = 0; flat < n; ++flat) {
      if (wanted.contains(d.id_at(flat))) selected[static_cast<std::size_t>(flat)] = 1;
    }
  }

  std::int64_t r0 = d.grid.n_rows, r1 = -1, c0 = d.grid.n_cols, c1 = -1;
  bool any_land = false;
  for (std::int64_t flat = 0; flat < n; ++flat) {
    if (!selected[static_cast<std::size_t>(flat)]) continue;
    const std::int64_t r = flat / d.grid.n_cols, c = flat % d.grid.n_cols;
    r0 = std::min(r0, r);
    r1 = std::max(r1, r);
    c0 = std::min(c0, c);
    c1 = std::max(c1, c);
    any_land = any_land || d.mask[static_cast<std::size_t>(flat)];
  }
  if (r1 < 0) throw ValidationError("subset: selector does not intersect the domain");
  if (!any_land) throw ValidationError("subset: selection contains no land cells (empty land domain)");

  DomainSpec out;
  out.grid = d.grid;
  out.grid.n_rows = r1 - r0 + 1;
  out.grid.n_cols = c1 - c0 + 1;
  out.grid.origin_x = d.grid.origin_x + static_cast<double>(c0) * d.grid.cell_size;
  out.grid.origin_y = d.grid.origin_y + static_cast<double>(r0) * d.grid.cell_size;
  out.base_rows = out.grid.n_rows;
  const auto m = static_cast<std::size_t>(out.n_cells());
  const auto n_parent = static_cast<std::size_t>(n);
  out.mask.resize(m);
  out.gridcell_id.resize(m);
  const bool geometry = d.has_geometry();
  if (geometry) {
    out.frac.resize(m);
    out.area.resize(m);
    out.xc.resize(m);
    out.yc.resize(m);
    out.xv.resize(4 * m);
    out.yv.resize(4 * m);
  }
  for (std::int64_t r = 0; r < out.grid.n_rows; ++r) {
    for (std::int64_t c = 0; c < out.grid.n_cols; ++c) {
      const auto src = static_cast<std::size_t>((r + r0) * d.grid.n_cols + (c + c0));
      const auto dst = static_cast<std::size_t>(r * out.grid.n_cols + c);
      out.mask[dst] = static_cast<std::uint8_t>(d.mask[src] && selected[src]);
      out.gridcell_id[dst] = d.id_at(static_cast<std::int64_t>(src));
      if (geometry) {
        out.frac[dst] = out.mask[dst] ? d.frac[src] : 0.0;
        out.area[dst] = d.area[src];
        out.xc[dst] = d.xc[src];
        out.yc[dst] = d.yc[src];
        for (std::size_t v = 0; v < 4; ++v) {
          out.xv[v * m + dst] = d.xv[v * n_parent + src];
          out.yv[v * m + dst] = d.yv[v * n_parent + src];
        }
      }
    }
  }
  index_land(out);

  if (d.provenance) {
    // Carry provenance of the surviving land cells, matched by parent land order.
    std::vector<std::int64_t> parent_land_pos(n_parent, -1);
    for (std::size_t k = 0; k < d.land_index.size(); ++k) {
      parent_land_pos[static_cast<std::size_t>(d.land_index[k])] = static_cast<std::int64_t>(k);
    }
    Provenance p;
    p.n_copies = d.provenance->n_copies;
    for (auto flat : out.land_index) {
      const std::int64_t r = flat / out.grid.n_cols + r0, c = flat % out.grid.n_cols + c0;
      const auto k = static_cast<std::size_t>(parent_land_pos[static_cast<std::size_t>(r * d.grid.n_cols + c)]);
      p.source_id.push_back(d.provenance->source_id[k]);
      p.copy.push_back(d.provenance->copy[k]);
    }
    out.provenance = std::move(p);
  }
  return out;
}

DomainSpec replicate(const DomainSpec& d, std::int64_t k) {
  if (k < 1) throw ValidationError("replicate: k must be >= 1");
  constexpr auto kMax = std::numeric_limits<std::int64_t>::max();
  const std::int64_t prev_copies = d.provenance ? d.provenance->n_copies : 1;
  if (d.grid.n_rows > kMax / k || d.grid.n_rows * k > kMax / d.grid.n_cols || prev_copies > kMax / k ||
      prev_copies * k > std::numeric_limits<std::int32_t>::max()) {
    throw ValidationError("replicate: k = " + std::to_string(k) + " overflows the gridcell ID space");
  }

  DomainSpec out;
  out.grid = d.grid;
  out.grid.n_rows = d.grid.n_rows * k;
  out.base_rows = d.base_rows;
  const auto n = static_cast<std::size_t>(d.n_cells());
  const auto m = n * static_cast<std::size_t>(k);
  out.mask.resize(m);
  for (std::int64_t j = 0; j < k; ++j) {
    std::copy(d.mask.begin(), d.mask.end(), out.mask.begin() + static_cast<std::ptrdiff_t>(j * n));
  }
  // Copy j shifts IDs by j * id_span; with identity IDs this is the flat index
  // of the stacked grid.
  if (!d.gridcell_id.empty()) {
    const std::int64_t id_span = *std::max_element(d.gridcell_id.begin(), d.gridcell_id.end()) + 1;
    if (id_span > kMax / k) throw ValidationError("replicate: k = " + std::to_string(k) + " overflows the gridcell ID space");
    out.gridcell_id.resize(m);
    for (std::int64_t j = 0; j < k; ++j) {
      for (std::size_t i = 0; i < n; ++i) out.gridcell_id[static_cast<std::size_t>(j) * n + i] = d.gridcell_id[i] + j * id_span;
    }
  }
  if (d.has_geometry()) {
    auto tile = [&](const std::vector<double>& src, std::vector<double>& dst, std::size_t planes) {
      dst.resize(planes * m);
      for (std::size_t v = 0; v < planes; ++v) {
        for (std::int64_t j = 0; j < k; ++j) {
          std::copy(src.begin() + static_cast<std::ptrdiff_t>(v * n), src.begin() + static_cast<std::ptrdiff_t>((v + 1) * n),
                    dst.begin() + static_cast<std::ptrdiff_t>(v * m + static_cast<std::size_t>(j) * n));
        }
      }
    };
    tile(d.frac, out.frac, 1);
    tile(d.area, out.area, 1);
    tile(d.xc, out.xc, 1);
    tile(d.yc, out.yc, 1);
    tile(d.xv, out.xv, 4);
    tile(d.yv, out.yv, 4);
  }
  out.land_index.reserve(d.land_index.size() * static_cast<std::size_t>(k));
  for (std::int64_t j = 0; j < k; ++j) {
    for (auto flat : d.land_index) out.land_index.push_back(flat + j * static_cast<std::int64_t>(n));
  }

  Provenance p;
  p.n_copies = static_cast<std::int32_t>(prev_copies * k);
  p.source_id.reserve(out.land_index.size());
  p.copy.reserve(out.land_index.size());
  const auto src_ids = d.provenance ? d.provenance->source_id : d.land_ids();
  for (std::int64_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < d.land_index.size(); ++i) {
      p.source_id.push_back(src_ids[i]);
      const std::int32_t inner = d.provenance ? d.provenance->copy[i] : 0;
      p.copy.push_back(static_cast<std::int32_t>(j * prev_copies + inner));
    }
  }
  out.provenance = std::move(p);
  return out;
}

SubgridCensus census(const SubgridCensus& base, std::int64_t k) {
  if (k < 1) throw ValidationError("census: k must be >= 1");
  return {base.gridcells * k, base.topounits * k, base.landunits * k, base.columns * k, base.pfts * k};
}

std::vector<std::uint8_t> synth_land_mask(std::int64_t n_rows, std::int64_t n_cols, std::int64_t n_land,
                                          std::uint64_t seed) {
  if (n_rows < 1 || n_cols < 1) throw ValidationError("synth_land_mask: empty grid");
  const std::int64_t n = n_rows * n_cols;
  if (n_land < 1 || n_land > n) throw ValidationError("synth_land_mask: land count must be in [1, cells]");

  std::mt19937_64 rng(seed);
  const int n_bumps = 6;
  struct Bump {
    double r, c, sigma, amp;
  };
  std::vector<Bump> bumps;
  for (int b = 0; b < n_bumps; ++b) {
    bumps.push_back({uniform(rng, 0.0, static_cast<double>(n_rows)), uniform(rng, 0.0, static_cast<double>(n_cols)),
                     uniform(rng, 0.15, 0.35) * static_cast<double>(std::max(n_rows, n_cols)), uniform(rng, 0.5, 1.5)});
  }
  std::vector<double> relief(static_cast<std::size_t>(n));
  for (std::int64_t r = 0; r < n_rows; ++r) {
    for (std::int64_t c = 0; c < n_cols; ++c) {
      double z = 0.05 * uniform01(rng);
      for (const auto& b : bumps) {
        const double dr = static_cast<double>(r) - b.r, dc = static_cast<double>(c) - b.c;
        z += b.amp * std::exp(-(dr * dr + dc * dc) / (2.0 * b.sigma * b.sigma));
      }
      relief[static_cast<std::size_t>(r * n_cols + c)] = z;
    }
  }
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::int64_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return relief[static_cast<std::size_t>(a)] > relief[static_cast<std::size_t>(b)];
  });
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n), 0);
  for (std::int64_t i = 0; i < n_land; ++i) mask[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
  return mask;
}

Grid2D centered_grid(std::int64_t n_rows, std::int64_t n_cols, double cell_size, const geo::GeoPoint& center,
                     const geo::LccParams& lcc) {
  const auto c = geo::lcc_forward(center, lcc);
  Grid2D g;
  g.n_rows = n_rows;
  g.n_cols = n_cols;
  g.cell_size = cell_size;
  g.origin_x = c.x - 0.5 * static_cast<double>(n_cols - 1) * cell_size;
  g.origin_y = c.y - 0.5 * static_cast<double>(n_rows - 1) * cell_size;
  g.lcc = lcc;
  g.validate();
  return g;
}

DomainSpec aksp_mini(std::uint64_t seed) {
  const auto grid = centered_grid(32, 32, 1000.0, {65.2, -164.8});
  const auto mask = synth_land_mask(32, 32, 613, seed);
  return build_domain(grid, mask);
}

}  // namespace kiloland::domain
