#include "catch2/catch_amalgamated.hpp"

#include <cmath>
#include <filesystem>
#include <random>

#include "kiloland/cdf5.hpp"
#include "kiloland/compare.hpp"
#include "kiloland/error.hpp"
#include "kiloland/rng.hpp"

using namespace kiloland;
using namespace kiloland::compare;
namespace fs = std::filesystem;

namespace {

struct History {
  std::vector<double> time{24.0, 48.0};
  std::vector<float> h2osoi, tlai;
  std::vector<std::int64_t> ids;
};

History make_history(std::uint64_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  History h;
  for (std::uint64_t i = 0; i < 2 * n; ++i) {
    h.h2osoi.push_back(static_cast<float>(uniform(rng, 0.0, 200.0)));
    h.tlai.push_back(static_cast<float>(uniform01(rng)));
  }
  for (std::uint64_t i = 0; i < n; ++i) h.ids.push_back(static_cast<std::int64_t>(i * 3));
  return h;
}

History tile(const History& h, std::uint64_t n, std::uint64_t k) {
  History out;
  out.time = h.time;
  for (std::uint64_t t = 0; t < 2; ++t) {
    for (std::uint64_t j = 0; j < k; ++j) {
      out.h2osoi.insert(out.h2osoi.end(), h.h2osoi.begin() + static_cast<std::ptrdiff_t>(t * n),
                        h.h2osoi.begin() + static_cast<std::ptrdiff_t>((t + 1) * n));
      out.tlai.insert(out.tlai.end(), h.tlai.begin() + static_cast<std::ptrdiff_t>(t * n),
                      h.tlai.begin() + static_cast<std::ptrdiff_t>((t + 1) * n));
    }
  }
  for (std::uint64_t j = 0; j < k; ++j) out.ids.insert(out.ids.end(), h.ids.begin(), h.ids.end());
  return out;
}

fs::path write_history(const std::string& name, const History& h, bool with_tlai = true) {
  const auto path = fs::temp_directory_path() / ("kiloland_cmp_" + name + ".nc");
  cdf::FileModel m;
  m.add_dim("time", 0);
  m.add_dim("gridcell", h.ids.size());
  m.add_var("time", cdf::Type::float64, {"time"});
  m.add_var("gridcell_id", cdf::Type::int64, {"gridcell"});
  m.add_var("H2OSOI", cdf::Type::float32, {"time", "gridcell"});
  std::map<std::string, cdf::VarData> data{{"time", h.time}, {"gridcell_id", h.ids}, {"H2OSOI", h.h2osoi}};
  if (with_tlai) {
    m.add_var("TLAI", cdf::Type::float32, {"time", "gridcell"});
    data["TLAI"] = h.tlai;
  }
  cdf::write_file(path, m, data);
  return path;
}

const VarReport& var(const CompareReport& r, const std::string& name) {
  for (const auto& v : r.vars) {
    if (v.name == name) return v;
  }
  throw std::runtime_error("no variable " + name);
}

}  // namespace

TEST_CASE("tolerance parsing", "[compare]") {
  CHECK(parse_tolerance("bit_exact").kind == TolKind::bit_exact);
  CHECK(parse_tolerance("rel:1e-12").eps == 1e-12);
  CHECK(parse_tolerance("abs:0.5").kind == TolKind::abs);
  CHECK(tolerance_name(parse_tolerance("rel:1e-12")) == "rel:1e-12");
  CHECK_THROWS_AS(parse_tolerance("rel:x"), UsageError);
  CHECK_THROWS_AS(parse_tolerance("loose"), UsageError);
}

TEST_CASE("a file equals itself", "[compare]") {
  const auto a = write_history("self", make_history(50, 1));
  const auto r = compare_files(a, a);
  CHECK(r.verdict == Verdict::identical);
  CHECK(r.vars.size() == 4);
  for (const auto& v : r.vars) CHECK(v.n_differing == 0);
  CHECK(r.text().find("verdict: identical") != std::string::npos);
}

TEST_CASE("one ulp is different bit-exact and within a relative tolerance", "[compare]") {
  auto h = make_history(50, 2);
  const auto a = write_history("ulp_a", h);
  h.tlai[61] = std::nextafter(h.tlai[61], 2.0f);
  const auto b = write_history("ulp_b", h);

  const auto exact = compare_files(a, b);
  CHECK(exact.verdict == Verdict::different);
  CHECK(var(exact, "TLAI").n_differing == 1);
  CHECK(var(exact, "TLAI").first_diff_index == 61);
  CHECK(var(exact, "H2OSOI").n_differing == 0);

  const auto rel = compare_files(a, b, parse_tolerance("rel:1e-6"));
  CHECK(rel.verdict == Verdict::within_tolerance);
  CHECK(var(rel, "TLAI").max_rel_diff > 0.0);
  CHECK(var(rel, "TLAI").max_rel_diff < 1e-6);
  CHECK(compare_files(a, b, parse_tolerance("rel:1e-9")).verdict == Verdict::different);
  CHECK(exact.csv().find("TLAI,100,1,") != std::string::npos);

  // Double-precision ulp against the 1e-12 tolerance.
  auto d = make_history(10, 5);
  const auto da = write_history("ulp_da", d);
  d.time[1] = std::nextafter(d.time[1], 100.0);
  const auto db = write_history("ulp_db", d);
  CHECK(compare_files(da, db).verdict == Verdict::different);
  CHECK(compare_files(da, db, parse_tolerance("rel:1e-12")).verdict == Verdict::within_tolerance);
}

TEST_CASE("missing variables and NaNs", "[compare]") {
  auto h = make_history(20, 3);
  const auto a = write_history("miss_a", h);
  const auto b = write_history("miss_b", h, false);
  const auto r = compare_files(a, b);
  CHECK(r.vars_only_in_a == std::vector<std::string>{"TLAI"});
  CHECK(r.vars_only_in_b.empty());
  CHECK(r.verdict == Verdict::different);
  CHECK(compare_files(b, a).vars_only_in_b == std::vector<std::string>{"TLAI"});

  h.h2osoi[3] = NAN;
  const auto na = write_history("nan_a", h);
  CHECK(compare_files(na, na).verdict == Verdict::identical);
  const auto nr = compare_files(a, na, parse_tolerance("abs:1e9"));
  CHECK(nr.verdict == Verdict::different);
  CHECK(var(nr, "H2OSOI").n_nan_mismatch == 1);

  auto small = make_history(19, 3);
  const auto s = write_history("shape", small);
  CHECK(var(compare_files(a, s), "H2OSOI").shape_mismatch);
  CHECK_THROWS_AS(compare_files(a, fs::temp_directory_path() / "kiloland_cmp_absent.nc"), IoError);
}

TEST_CASE("bit-exact verdict is symmetric and slab size does not matter", "[compare][property]") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    auto h = make_history(1 + rng() % 300, rng());
    const auto a = write_history("sym_a", h);
    const auto flips = rng() % 3;
    for (std::uint64_t i = 0; i < flips; ++i) {
      auto& x = h.h2osoi[rng() % h.h2osoi.size()];
      x = std::nextafter(x, 1e9f);
    }
    const auto b = write_history("sym_b", h);
    const auto ab = compare_files(a, b), ba = compare_files(b, a);
    REQUIRE(ab.verdict == ba.verdict);
    REQUIRE((ab.verdict == Verdict::identical) == (flips == 0));
    const auto small = compare_files(a, b, {}, 12);
    REQUIRE(var(small, "H2OSOI").n_differing == var(ab, "H2OSOI").n_differing);
    REQUIRE(var(small, "H2OSOI").first_diff_index == var(ab, "H2OSOI").first_diff_index);
  }
}

TEST_CASE("replication check", "[compare]") {
  const std::uint64_t n = 37;
  const auto base = make_history(n, 4);
  const auto b = write_history("rep_base", base);

  SECTION("k = 1 is a bit-exact comparison") {
    CHECK(check_replication(b, b, 1).verdict == Verdict::identical);
  }
  SECTION("concatenated copies are identical for any k") {
    for (std::uint64_t k : {2u, 3u, 10u}) {
      const auto r = write_history("rep_k", tile(base, n, k));
      CHECK(check_replication(b, r, static_cast<std::int64_t>(k)).verdict == Verdict::identical);
      CHECK(check_replication(b, r, static_cast<std::int64_t>(k), 16).verdict == Verdict::identical);
    }
  }
  SECTION("a corrupted element in copy 7 is located") {
    auto rep = tile(base, n, 10);
    rep.tlai[n * 10 + 7 * n + 5] += 0.25f;  // second record, copy 7, cell 5
    const auto r = write_history("rep_bad", rep);
    const auto rr = check_replication(b, r, 10);
    CHECK(rr.verdict == Verdict::different);
    const auto& t = var(rr, "TLAI");
    CHECK(t.n_differing == 1);
    CHECK(t.first_diff_copy == 7);
    CHECK(t.first_diff_index == static_cast<std::int64_t>(n * 10 + 7 * n + 5));
  }
  SECTION("wrong replica size is rejected") {
    const auto r = write_history("rep_k3", tile(base, n, 3));
    CHECK_THROWS_AS(check_replication(b, r, 4), ValidationError);
  }
}
