#include "kiloland/compare.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>

#include "kiloland/cdf5.hpp"
#include "kiloland/error.hpp"

namespace kiloland::compare {

namespace {

std::uint64_t type_bytes(cdf::Type t) {
  switch (t) {
    case cdf::Type::char_: return 1;
    case cdf::Type::int32:
    case cdf::Type::float32: return 4;
    case cdf::Type::float64:
    case cdf::Type::int64: return 8;
  }
  return 8;
}

template <class T>
bool same_bits(T a, T b) {
  if constexpr (std::is_floating_point_v<T>) {
    if (std::isnan(a) && std::isnan(b)) return true;
    if constexpr (sizeof(T) == 4) return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b);
    else return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
  } else {
    return a == b;
  }
}

template <class T>
void compare_span(const std::vector<T>& a, const std::vector<T>& b, std::uint64_t b_first, const Tolerance& tol,
                  VarReport& r, std::int64_t copy = -1) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (same_bits(a[i], b[i])) continue;
    if (r.first_diff_index < 0) {
      r.first_diff_index = static_cast<std::int64_t>(b_first + i);
      r.first_diff_copy = copy;
    }
    ++r.n_differing;
    const double x = static_cast<double>(a[i]), y = static_cast<double>(b[i]);
    if (std::isnan(x) || std::isnan(y)) {
      ++r.n_nan_mismatch;
      r.out_of_tolerance = true;
      r.max_abs_diff = r.max_rel_diff = std::numeric_limits<double>::infinity();
      continue;
    }
    const double diff = std::abs(x - y);
    const double rel = diff / std::max({std::abs(x), std::abs(y), 1e-30});
    r.max_abs_diff = std::max(r.max_abs_diff, diff);
    r.max_rel_diff = std::max(r.max_rel_diff, rel);
    switch (tol.kind) {
      case TolKind::bit_exact: r.out_of_tolerance = true; break;
      case TolKind::abs: r.out_of_tolerance |= !(diff <= tol.eps); break;
      case TolKind::rel: r.out_of_tolerance |= !(rel <= tol.eps); break;
    }
  }
}

void compare_data(const cdf::VarData& a, const cdf::VarData& b, std::uint64_t b_first, const Tolerance& tol, VarReport& r,
                  std::int64_t copy = -1) {
  std::visit(
      [&](const auto& va) {
        using V = std::decay_t<decltype(va)>;
        compare_span(va, std::get<V>(b), b_first, tol, r, copy);
      },
      a);
}

std::vector<std::uint64_t> shape_of(const cdf::FileModel& m, const cdf::Variable& v) { return m.shape(v); }

std::uint64_t product(const std::vector<std::uint64_t>& s) {
  std::uint64_t n = 1;
  for (auto x : s) n *= x;
  return n;
}

Verdict finish(CompareReport& rep) {
  bool any_diff = !rep.vars_only_in_a.empty() || !rep.vars_only_in_b.empty();
  bool out = any_diff;
  for (const auto& v : rep.vars) {
    if (v.shape_mismatch || v.out_of_tolerance) out = true;
    if (v.n_differing > 0 || v.shape_mismatch) any_diff = true;
  }
  rep.verdict = out ? Verdict::different : any_diff ? Verdict::within_tolerance : Verdict::identical;
  return rep.verdict;
}

void presence(const cdf::FileModel& a, const cdf::FileModel& b, CompareReport& rep) {
  for (const auto& v : a.vars) {
    if (!b.find_var(v.name)) rep.vars_only_in_a.push_back(v.name);
  }
  for (const auto& v : b.vars) {
    if (!a.find_var(v.name)) rep.vars_only_in_b.push_back(v.name);
  }
}

}  // namespace

Tolerance parse_tolerance(const std::string& text) {
  if (text == "bit_exact" || text == "exact") return {};
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const auto kind = text.substr(0, colon);
    const auto num = text.substr(colon + 1);
    double eps = 0.0;
    const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), eps);
    if (ec == std::errc() && ptr == num.data() + num.size() && eps >= 0.0 && std::isfinite(eps)) {
      if (kind == "abs") return {TolKind::abs, eps};
      if (kind == "rel") return {TolKind::rel, eps};
    }
  }
  throw UsageError("tolerance must be bit_exact, abs:<eps> or rel:<eps>, got '" + text + "'");
}

std::string tolerance_name(const Tolerance& t) {
  switch (t.kind) {
    case TolKind::bit_exact: return "bit_exact";
    case TolKind::abs: return fmt::format("abs:{:g}", t.eps);
    case TolKind::rel: return fmt::format("rel:{:g}", t.eps);
  }
  return "?";
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::identical: return "identical";
    case Verdict::within_tolerance: return "within_tolerance";
    case Verdict::different: return "different";
  }
  return "?";
}

std::string CompareReport::text() const {
  std::string s;
  for (const auto& v : vars) {
    if (v.shape_mismatch) {
      s += fmt::format("{}: type or shape differs\n", v.name);
    } else if (v.n_differing == 0) {
      s += fmt::format("{}: {} elements identical\n", v.name, v.n_elements);
    } else {
      s += fmt::format("{}: {} of {} elements differ, max abs {:.6g}, max rel {:.6g}, first at {}", v.name, v.n_differing,
                       v.n_elements, v.max_abs_diff, v.max_rel_diff, v.first_diff_index);
      if (v.first_diff_copy >= 0) s += fmt::format(" (copy {})", v.first_diff_copy);
      if (v.n_nan_mismatch) s += fmt::format(", {} NaN mismatches", v.n_nan_mismatch);
      s += v.out_of_tolerance ? "\n" : " (within tolerance)\n";
    }
  }
  for (const auto& n : vars_only_in_a) s += fmt::format("{}: only in first file\n", n);
  for (const auto& n : vars_only_in_b) s += fmt::format("{}: only in second file\n", n);
  s += fmt::format("verdict: {}\n", verdict_name(verdict));
  return s;
}

std::string CompareReport::csv() const {
  std::string s = "variable,n_elements,n_differing,max_abs_diff,max_rel_diff,first_diff_index,status\n";
  for (const auto& v : vars) {
    const char* status = v.shape_mismatch ? "shape_mismatch" : v.out_of_tolerance ? "different"
                                                         : v.n_differing ? "within_tolerance"
                                                                         : "identical";
    s += fmt::format("{},{},{},{:.17g},{:.17g},{},{}\n", v.name, v.n_elements, v.n_differing, v.max_abs_diff,
                     v.max_rel_diff, v.first_diff_index, status);
  }
  for (const auto& n : vars_only_in_a) s += fmt::format("{},,,,,,only_in_a\n", n);
  for (const auto& n : vars_only_in_b) s += fmt::format("{},,,,,,only_in_b\n", n);
  return s;
}

CompareReport compare_files(const std::filesystem::path& a, const std::filesystem::path& b, const Tolerance& tol,
                            std::uint64_t slab_bytes) {
  auto ra = cdf::Reader::open(a);
  auto rb = cdf::Reader::open(b);
  const auto& ma = ra.model();
  const auto& mb = rb.model();
  CompareReport rep;
  presence(ma, mb, rep);
  for (const auto& va : ma.vars) {
    if (!mb.find_var(va.name)) continue;
    const auto& vb = mb.var(va.name);
    VarReport r;
    r.name = va.name;
    const auto sa = shape_of(ma, va), sb = shape_of(mb, vb);
    if (va.type != vb.type || sa != sb) {
      r.shape_mismatch = true;
      rep.vars.push_back(r);
      continue;
    }
    r.n_elements = product(sa);
    const auto chunk = std::max<std::uint64_t>(1, slab_bytes / type_bytes(va.type));
    for (std::uint64_t first = 0; first < r.n_elements; first += chunk) {
      const auto count = std::min(chunk, r.n_elements - first);
      compare_data(ra.read_flat(va.name, first, count), rb.read_flat(va.name, first, count), first, tol, r);
    }
    rep.vars.push_back(r);
  }
  finish(rep);
  return rep;
}

CompareReport check_replication(const std::filesystem::path& base, const std::filesystem::path& replica, std::int64_t k,
                                std::uint64_t slab_bytes) {
  if (k < 1) throw ValidationError("check_replication: k must be >= 1");
  auto rb = cdf::Reader::open(base);
  auto rr = cdf::Reader::open(replica);
  const auto& mb = rb.model();
  const auto& mr = rr.model();
  const auto gb = mb.find_dim("gridcell"), gr = mr.find_dim("gridcell");
  if (!gb || !gr) throw ValidationError("check_replication: both files need a gridcell dimension");
  const auto n = mb.dims[*gb].length;
  if (mr.dims[*gr].length != n * static_cast<std::uint64_t>(k)) {
    throw ValidationError(fmt::format("check_replication: replica has {} gridcells, expected {} x {}", mr.dims[*gr].length,
                                      k, n));
  }
  const Tolerance exact{};
  CompareReport rep;
  presence(mb, mr, rep);
  for (const auto& vb : mb.vars) {
    if (!mr.find_var(vb.name)) continue;
    const auto& vr = mr.var(vb.name);
    VarReport r;
    r.name = vb.name;
    const auto sb = shape_of(mb, vb), sr = shape_of(mr, vr);
    const bool tiled = !vb.dimids.empty() && vb.dimids.back() == *gb;
    auto expected = sb;
    if (tiled) expected.back() *= static_cast<std::uint64_t>(k);
    if (vb.type != vr.type || sr != expected || (tiled && vr.dimids.back() != *gr)) {
      r.shape_mismatch = true;
      rep.vars.push_back(r);
      continue;
    }
    const auto chunk = std::max<std::uint64_t>(1, slab_bytes / type_bytes(vb.type));
    if (!tiled) {
      r.n_elements = product(sb);
      for (std::uint64_t first = 0; first < r.n_elements; first += chunk) {
        const auto count = std::min(chunk, r.n_elements - first);
        compare_data(rb.read_flat(vb.name, first, count), rr.read_flat(vb.name, first, count), first, exact, r);
      }
    } else {
      const auto rows = product(sb) / std::max<std::uint64_t>(n, 1);
      const auto kk = static_cast<std::uint64_t>(k);
      r.n_elements = rows * n * kk;
      for (std::uint64_t o = 0; o < rows; ++o) {
        for (std::uint64_t i0 = 0; i0 < n; i0 += chunk) {
          const auto count = std::min(chunk, n - i0);
          const auto want = rb.read_flat(vb.name, o * n + i0, count);
          for (std::uint64_t j = 0; j < kk; ++j) {
            const auto at = o * n * kk + j * n + i0;
            compare_data(want, rr.read_flat(vb.name, at, count), at, exact, r, static_cast<std::int64_t>(j));
          }
        }
      }
    }
    rep.vars.push_back(r);
  }
  finish(rep);
  return rep;
}

}  // namespace kiloland::compare
