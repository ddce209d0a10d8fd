#include "kiloland/domain_io.hpp"

#include <fmt/format.h>

#include "kiloland/error.hpp"

namespace kiloland::domain {

namespace {

constexpr const char* kIdConvention = "0-based row-major: gridcell_id = row * n_cols + col";

}  // namespace

void write_domain_file(const std::filesystem::path& path, const DomainSpec& d, cdf::Variant variant) {
  const auto n_cells = static_cast<std::size_t>(d.n_cells());
  cdf::FileModel m;
  m.variant = variant;
  m.add_dim("nj", static_cast<std::uint64_t>(d.grid.n_rows));
  m.add_dim("ni", static_cast<std::uint64_t>(d.grid.n_cols));
  m.add_dim("nv", 4);
  m.add_dim("gridcell", static_cast<std::uint64_t>(d.n_land()));
  std::map<std::string, cdf::VarData> data;

  auto add = [&](const std::string& name, cdf::Type type, std::vector<std::string> dims, cdf::VarData values,
                 const std::string& long_name, const std::string& units = "") -> cdf::Variable& {
    auto& v = m.add_var(name, type, dims);
    cdf::set_attr(v.attrs, "long_name", long_name);
    if (!units.empty()) cdf::set_attr(v.attrs, "units", units);
    data[name] = std::move(values);
    return v;
  };

  add("mask", cdf::Type::int32, {"nj", "ni"}, std::vector<std::int32_t>(d.mask.begin(), d.mask.end()), "land mask");
  std::vector<std::int64_t> ids(n_cells);
  for (std::size_t i = 0; i < n_cells; ++i) ids[i] = d.id_at(static_cast<std::int64_t>(i));
  add("gridcell_id", cdf::Type::int64, {"nj", "ni"}, std::move(ids), "gridcell ID");
  add("land_id", cdf::Type::int64, {"gridcell"}, d.land_ids(), "gridcell ID of each land cell");
  std::vector<std::int32_t> rows, cols;
  for (auto flat : d.land_index) {
    rows.push_back(static_cast<std::int32_t>(flat / d.grid.n_cols));
    cols.push_back(static_cast<std::int32_t>(flat % d.grid.n_cols));
  }
  add("land_row", cdf::Type::int32, {"gridcell"}, std::move(rows), "grid row of each land cell");
  add("land_col", cdf::Type::int32, {"gridcell"}, std::move(cols), "grid column of each land cell");

  if (d.has_geometry()) {
    add("frac", cdf::Type::float64, {"nj", "ni"}, d.frac, "land fraction", "1");
    auto& area = add("area", cdf::Type::float64, {"nj", "ni"}, d.area, "cell area", "km2");
    cdf::set_attr(area.attrs, "method", std::string("projected plane, cell_size squared"));
    add("xc", cdf::Type::float64, {"nj", "ni"}, d.xc, "longitude of cell center", "degrees_east");
    add("yc", cdf::Type::float64, {"nj", "ni"}, d.yc, "latitude of cell center", "degrees_north");
    add("xv", cdf::Type::float64, {"nv", "nj", "ni"}, d.xv, "longitude of cell corners", "degrees_east");
    add("yv", cdf::Type::float64, {"nv", "nj", "ni"}, d.yv, "latitude of cell corners", "degrees_north");
    add("land_xc", cdf::Type::float64, {"gridcell"}, compact<double>(d.xc, d), "longitude of land cell center",
        "degrees_east");
    add("land_yc", cdf::Type::float64, {"gridcell"}, compact<double>(d.yc, d), "latitude of land cell center",
        "degrees_north");
    add("land_area", cdf::Type::float64, {"gridcell"}, compact<double>(d.area, d), "land cell area", "km2");
    add("land_frac", cdf::Type::float64, {"gridcell"}, compact<double>(d.frac, d), "land cell fraction", "1");
  }
  if (d.provenance) {
    add("land_source_id", cdf::Type::int64, {"gridcell"}, d.provenance->source_id, "source gridcell of each replica cell");
    add("land_copy", cdf::Type::int32, {"gridcell"}, d.provenance->copy, "replica copy number");
  }

  auto& g = m.global_attrs;
  cdf::set_attr(g, "title", std::string("land model domain"));
  cdf::set_attr(g, "gridcell_id_convention", std::string(kIdConvention));
  cdf::set_attr(g, "cell_size", std::vector<double>{d.grid.cell_size});
  cdf::set_attr(g, "origin_x", std::vector<double>{d.grid.origin_x});
  cdf::set_attr(g, "origin_y", std::vector<double>{d.grid.origin_y});
  cdf::set_attr(g, "base_rows", std::vector<std::int64_t>{d.base_rows});
  cdf::set_attr(g, "n_land", std::vector<std::int64_t>{d.n_land()});
  cdf::set_attr(g, "n_copies", std::vector<std::int32_t>{d.provenance ? d.provenance->n_copies : 1});
  cdf::set_attr(g, "domain_fingerprint", std::vector<std::int64_t>{static_cast<std::int64_t>(d.fingerprint())});
  for (const auto& [key, value] : d.grid.lcc.to_attributes()) cdf::set_attr(g, key, std::vector<double>{value});
  cdf::write_file(path, m, data);
}

DomainSpec read_domain_file(const std::filesystem::path& path) {
  auto r = cdf::Reader::open(path);
  const auto& m = r.model();
  auto number = [&](const char* key) {
    const auto v = cdf::attr_number(m.global_attrs, key);
    if (!v) throw ValidationError(fmt::format("domain file {}: missing attribute {}", path.string(), key));
    return *v;
  };
  auto dim = [&](const char* name) {
    const auto i = m.find_dim(name);
    if (!i) throw ValidationError(fmt::format("domain file {}: missing dimension {}", path.string(), name));
    return static_cast<std::int64_t>(m.dims[*i].length);
  };

  DomainSpec d;
  d.grid.n_rows = dim("nj");
  d.grid.n_cols = dim("ni");
  d.grid.cell_size = number("cell_size");
  d.grid.origin_x = number("origin_x");
  d.grid.origin_y = number("origin_y");
  std::map<std::string, double> lcc;
  for (const auto& a : m.global_attrs) {
    if (a.name.rfind("lcc_", 0) == 0) lcc[a.name] = *cdf::attr_number(m.global_attrs, a.name);
  }
  d.grid.lcc = geo::LccParams::from_attributes(lcc);
  d.grid.validate();
  d.base_rows = static_cast<std::int64_t>(number("base_rows"));

  const auto mask = r.read_as<std::int32_t>("mask");
  d.mask.assign(mask.begin(), mask.end());
  auto ids = r.read_as<std::int64_t>("gridcell_id");
  bool identity = true;
  for (std::size_t i = 0; i < ids.size() && identity; ++i) identity = ids[i] == static_cast<std::int64_t>(i);
  if (!identity) d.gridcell_id = std::move(ids);
  for (std::size_t i = 0; i < d.mask.size(); ++i) {
    if (d.mask[i]) d.land_index.push_back(static_cast<std::int64_t>(i));
  }
  if (d.n_land() != dim("gridcell")) throw IntegrityError("domain file " + path.string() + ": mask disagrees with gridcell count");

  if (m.find_var("xc")) {
    d.frac = r.read_as<double>("frac");
    d.area = r.read_as<double>("area");
    d.xc = r.read_as<double>("xc");
    d.yc = r.read_as<double>("yc");
    d.xv = r.read_as<double>("xv");
    d.yv = r.read_as<double>("yv");
  }
  if (m.find_var("land_source_id")) {
    Provenance p;
    p.n_copies = static_cast<std::int32_t>(number("n_copies"));
    p.source_id = r.read_as<std::int64_t>("land_source_id");
    p.copy = r.read_as<std::int32_t>("land_copy");
    d.provenance = std::move(p);
  }
  if (static_cast<std::int64_t>(number("domain_fingerprint")) != static_cast<std::int64_t>(d.fingerprint())) {
    throw IntegrityError("domain file " + path.string() + ": fingerprint mismatch");
  }
  return d;
}

}  // namespace kiloland::domain
