#include "catch2/catch_amalgamated.hpp"

#include <filesystem>
#include <fstream>
#include <random>

#include "kiloland/cdf5.hpp"
#include "kiloland/decomp.hpp"
#include "kiloland/rng.hpp"

using namespace kiloland;
using namespace kiloland::decomp;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::int64_t> sizes(const Partition& p) {
  std::vector<std::int64_t> out;
  for (const auto& l : p.local_lists) out.push_back(static_cast<std::int64_t>(l.size()));
  return out;
}

}  // namespace

TEST_CASE("partition examples", "[decomp]") {
  const auto rr = partition(10, 3, Scheme::round_robin);
  CHECK(rr.local_lists[0] == std::vector<std::int64_t>{0, 3, 6, 9});
  CHECK(rr.local_lists[2] == std::vector<std::int64_t>{2, 5, 8});

  const auto bl = partition(10, 3, Scheme::block);
  CHECK(sizes(bl) == std::vector<std::int64_t>{4, 3, 3});
  CHECK(bl.local_lists[0] == std::vector<std::int64_t>{0, 1, 2, 3});
  CHECK(bl.local_lists[2] == std::vector<std::int64_t>{7, 8, 9});

  const auto brr = partition(12, 2, Scheme::block_round_robin, 3);
  CHECK(brr.local_lists[0] == std::vector<std::int64_t>{0, 1, 2, 6, 7, 8});
  CHECK(brr.local_lists[1] == std::vector<std::int64_t>{3, 4, 5, 9, 10, 11});

  const auto wide = partition(3, 5, Scheme::block);
  CHECK(wide.empty_ranks() == 2);
  CHECK_NOTHROW(wide.validate());

  CHECK_THROWS_AS(partition(0, 2, Scheme::block), ValidationError);
  CHECK_THROWS_AS(partition(5, 0, Scheme::block), ValidationError);
  CHECK_THROWS_AS(partition(5, 2, Scheme::block_round_robin, 0), ValidationError);
  CHECK(parse_scheme("block_round_robin") == Scheme::block_round_robin);
  CHECK_THROWS_AS(parse_scheme("hilbert"), ValidationError);
}

TEST_CASE("partition coverage and balance", "[decomp][property]") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = static_cast<std::int64_t>(1 + rng() % 2000);
    const auto p = static_cast<int>(1 + rng() % 40);
    const auto b = static_cast<std::int64_t>(1 + rng() % 100);
    for (auto scheme : {Scheme::round_robin, Scheme::block, Scheme::block_round_robin}) {
      const auto part = partition(n, p, scheme, b);
      REQUIRE_NOTHROW(part.validate());
      const auto s = sizes(part);
      const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
      const auto bound = scheme == Scheme::block_round_robin ? b : 1;
      REQUIRE(*hi - *lo <= bound);
      for (const auto& l : part.local_lists) REQUIRE(std::is_sorted(l.begin(), l.end()));
    }
  }
}

TEST_CASE("iodecomp examples", "[decomp]") {
  const auto one = build_iodecomp(partition(5, 1, Scheme::block));
  CHECK(one.offsets[0] == std::vector<std::uint64_t>{0, 1, 2, 3, 4});

  const auto rr = build_iodecomp(partition(4, 2, Scheme::round_robin),
                                 std::vector<std::pair<std::string, std::uint64_t>>{{"gridcell", 4}});
  CHECK(rr.offsets[0] == std::vector<std::uint64_t>{0, 2});
  CHECK(rr.offsets[1] == std::vector<std::uint64_t>{1, 3});

  // Record dimension skipped, pft axis outer.
  const auto pft = build_iodecomp(partition(4, 2, Scheme::round_robin),
                                  std::vector<std::pair<std::string, std::uint64_t>>{{"time", 0}, {"pft", 3}, {"gridcell", 4}});
  CHECK(pft.total() == 12);
  CHECK(pft.offsets[1] == std::vector<std::uint64_t>{1, 3, 5, 7, 9, 11});
  CHECK_NOTHROW(pft.validate());

  using Dims = std::vector<std::pair<std::string, std::uint64_t>>;
  CHECK_THROWS_AS(build_iodecomp(partition(4, 2, Scheme::block), Dims{{"nj", 2}, {"ni", 2}}), ValidationError);
  CHECK_THROWS_AS(build_iodecomp(partition(4, 2, Scheme::block), Dims{{"gridcell", 5}}), ValidationError);
}

TEST_CASE("scatter and gather are inverse", "[decomp][property]") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::int64_t>(1 + rng() % 1000);
    const auto p = static_cast<int>(1 + rng() % 7);
    const auto scheme = static_cast<Scheme>(rng() % 3);
    const auto outer = 1 + rng() % 3;
    const auto iod = build_iodecomp(partition(n, p, scheme, static_cast<std::int64_t>(1 + rng() % 20)), outer);
    REQUIRE_NOTHROW(iod.validate());
    std::vector<double> x(iod.total());
    for (auto& v : x) v = uniform01(rng);
    const auto local = scatter<double>(iod, x);
    REQUIRE(gather(iod, local) == x);
  }
}

TEST_CASE("aggregator plans", "[decomp]") {
  const auto p = make_plan(10, 3, 8);
  CHECK(p.ranges == std::vector<std::pair<std::uint64_t, std::uint64_t>>{{0, 4}, {4, 7}, {7, 10}});
  CHECK(p.owner(0) == 0);
  CHECK(p.owner(4) == 1);
  CHECK(p.owner(9) == 2);
  CHECK(p.buffer_limit == 64ull * 1024 * 1024);
  CHECK_THROWS_AS(make_plan(10, 9, 8), ValidationError);
  CHECK_THROWS_AS(make_plan(10, 0, 8), ValidationError);
  CHECK_THROWS_AS(make_plan(10, 2, 8, 0), ValidationError);
}

TEST_CASE("aggregated writes are bit-identical to a serial write", "[decomp]") {
  const auto dir = std::filesystem::temp_directory_path();
  constexpr std::int64_t kCells = 3001;
  constexpr std::uint64_t kPft = 3;
  constexpr int kRecords = 2;

  cdf::FileModel m;
  m.add_dim("time", 0);
  m.add_dim("pft", kPft);
  m.add_dim("gridcell", kCells);
  m.add_var("A", cdf::Type::float64, {"gridcell"});
  m.add_var("B", cdf::Type::float32, {"time", "pft", "gridcell"});

  std::mt19937_64 rng(12);
  std::vector<double> a(kCells);
  for (auto& v : a) v = uniform(rng, -1e6, 1e6);
  std::vector<std::vector<float>> b(kRecords, std::vector<float>(kPft * kCells));
  for (auto& rec : b) {
    for (auto& v : rec) v = static_cast<float>(uniform01(rng));
  }
  std::vector<float> b_all;
  for (const auto& rec : b) b_all.insert(b_all.end(), rec.begin(), rec.end());
  const auto serial = dir / "kiloland_decomp_serial.nc";
  cdf::write_file(serial, m, {{"A", a}, {"B", b_all}});
  const auto reference = slurp(serial);

  for (auto scheme : {Scheme::round_robin, Scheme::block, Scheme::block_round_robin}) {
    for (int aggs : {1, 2, 4}) {
      for (std::uint64_t limit : {std::uint64_t{1024}, kDefaultBufferLimit}) {
        const int ranks = 8;
        const auto part = partition(kCells, ranks, scheme, 17);
        const auto iod_a = build_iodecomp(part);
        const auto iod_b = build_iodecomp(part, kPft);
        const auto path = dir / "kiloland_decomp_agg.nc";
        {
          cdf::Writer w(path, m);
          const auto s = rearrange_write(scatter<double>(iod_a, a), iod_a, make_plan(iod_a.total(), aggs, ranks, limit), w, "A");
          CHECK(s.bytes == kCells * 8u);
          CHECK(s.per_aggregator_bytes.size() == static_cast<std::size_t>(aggs));
          if (limit == 1024) CHECK(s.flushes >= kCells * 8u / 1024u);
          for (int r = 0; r < kRecords; ++r) {
            rearrange_write(scatter<float>(iod_b, b[static_cast<std::size_t>(r)]), iod_b,
                            make_plan(iod_b.total(), aggs, ranks, limit), w, "B", static_cast<std::uint64_t>(r));
          }
          w.close();
        }
        REQUIRE(slurp(path) == reference);
      }
    }
  }
  {
    // A = P = 1.
    const auto part = partition(kCells, 1, Scheme::block);
    const auto iod_a = build_iodecomp(part), iod_b = build_iodecomp(part, kPft);
    const auto path = dir / "kiloland_decomp_one.nc";
    cdf::Writer w(path, m);
    rearrange_write(std::vector<std::vector<double>>{a}, iod_a, make_plan(iod_a.total(), 1, 1), w, "A");
    for (int r = 0; r < kRecords; ++r) {
      rearrange_write(std::vector<std::vector<float>>{b[static_cast<std::size_t>(r)]}, iod_b, make_plan(iod_b.total(), 1, 1),
                      w, "B", static_cast<std::uint64_t>(r));
    }
    w.close();
    CHECK(slurp(path) == reference);
  }
  std::filesystem::remove(serial);
}

TEST_CASE("rearrangement detects missing and duplicate elements", "[decomp]") {
  const auto path = std::filesystem::temp_directory_path() / "kiloland_decomp_bad.nc";
  cdf::FileModel m;
  m.add_dim("gridcell", 10);
  m.add_var("A", cdf::Type::float64, {"gridcell"});
  auto iod = build_iodecomp(partition(10, 2, Scheme::round_robin));
  const std::vector<double> x(10, 1.0);

  auto dup = iod;
  dup.offsets[1][2] = 4;  // rank 1 claims offset 4 instead of 5
  {
    cdf::Writer w(path, m);
    CHECK_THROWS_WITH(rearrange_write(scatter<double>(iod, x), dup, make_plan(10, 2, 2), w, "A"),
                      Catch::Matchers::ContainsSubstring("offset 4 delivered twice"));
  }
  auto gap = iod;
  gap.offsets[1].pop_back();
  {
    cdf::Writer w(path, m);
    auto local = scatter<double>(iod, x);
    local[1].pop_back();
    CHECK_THROWS_WITH(rearrange_write(local, gap, make_plan(10, 1, 2), w, "A"),
                      Catch::Matchers::ContainsSubstring("offset 9 missing"));
  }
  std::filesystem::remove(path);
}

TEST_CASE("write stats CSV", "[decomp]") {
  const auto path = std::filesystem::temp_directory_path() / "kiloland_stats.csv";
  std::filesystem::remove(path);
  WriteStats s;
  s.variable = "H2OSOI";
  s.bytes = 1048576;
  s.seconds = 0.5;
  s.aggregators = 2;
  s.buffer_limit = kDefaultBufferLimit;
  append_stats_csv(path, "aksp_mini", {s});
  append_stats_csv(path, "aksp_mini", {s});
  const auto text = slurp(path);
  CHECK(text.rfind("case,variable,bytes,seconds,MiB_per_s,aggregators,buffer_limit\n", 0) == 0);
  CHECK(text.find("aksp_mini,H2OSOI,1048576,0.500000,2.000,2,67108864\n") != std::string::npos);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  std::filesystem::remove(path);
}
