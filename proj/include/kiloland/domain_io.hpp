#pragma once

#include <filesystem>

#include "kiloland/cdf5.hpp"
#include "kiloland/domain.hpp"

namespace kiloland::domain {

/// Domain file: 2D grid variables on (nj, ni), corners on (nv, nj, ni), and
/// land-compacted mirrors on (gridcell). Geometry variables are omitted for
/// index-only domains.
void write_domain_file(const std::filesystem::path& path, const DomainSpec& d,
                       cdf::Variant variant = cdf::Variant::cdf5);
DomainSpec read_domain_file(const std::filesystem::path& path);

}  // namespace kiloland::domain
