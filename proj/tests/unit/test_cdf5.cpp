#include "catch2/catch_amalgamated.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>

#include "kiloland/cdf5.hpp"
#include "kiloland/rng.hpp"

using namespace kiloland;
using namespace kiloland::cdf;
namespace fs = std::filesystem;

namespace {

std::vector<std::byte> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "kiloland_unit";
  fs::create_directories(dir);
  return dir / name;
}

std::uint64_t pad4(std::uint64_t n) { return (n + 3) / 4 * 4; }

// Header size computed independently from the grammar of the classic format.
std::uint64_t oracle_header_size(const FileModel& m) {
  const std::uint64_t nn = m.variant == Variant::cdf5 ? 8 : 4;
  auto name = [&](const std::string& s) { return nn + pad4(s.size()); };
  auto attrs = [&](const AttrList& list) {
    std::uint64_t n = 4 + nn;
    for (const auto& a : list) n += name(a.name) + 4 + nn + pad4(a.size() * type_size(a.type()));
    return n;
  };
  std::uint64_t n = 4 + nn;
  n += 4 + nn;
  for (const auto& d : m.dims) n += name(d.name) + nn;
  n += attrs(m.global_attrs);
  n += 4 + nn;
  for (const auto& v : m.vars) n += name(v.name) + nn + nn * v.dimids.size() + attrs(v.attrs) + 4 + nn + 8;
  return n;
}

struct RandomFile {
  FileModel model;
  std::map<std::string, VarData> data;
};

RandomFile random_file(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };
  RandomFile f;
  f.model.variant = pick(2) ? Variant::cdf5 : Variant::cdf2;
  const bool has_record = pick(2);
  const std::uint64_t nrec = has_record ? 1 + pick(4) : 0;
  if (has_record) f.model.add_dim("time", 0);
  const int ndims = 1 + pick(3);
  for (int i = 0; i < ndims; ++i) f.model.add_dim("d" + std::to_string(i), 1 + pick(7));
  set_attr(f.model.global_attrs, "title", std::string("random ") + std::to_string(seed));
  set_attr(f.model.global_attrs, "version", std::vector<std::int32_t>{1, 2, 3});

  const int nvars = 1 + pick(5);
  for (int i = 0; i < nvars; ++i) {
    std::vector<std::string> dn;
    const bool rec = has_record && pick(2);
    if (rec) dn.push_back("time");
    const int rank = pick(ndims + 1);
    for (int k = 0; k < rank; ++k) dn.push_back("d" + std::to_string((k + i) % ndims));
    std::vector<Type> types{Type::int32, Type::float32, Type::float64};
    if (f.model.variant == Variant::cdf5) types.push_back(Type::int64);
    const Type t = types[static_cast<std::size_t>(pick(static_cast<int>(types.size())))];
    auto& v = f.model.add_var("v" + std::to_string(i), t, dn);
    set_attr(v.attrs, "units", std::string(pick(2) ? "K" : "kg m-2"));
    set_attr(v.attrs, "scale", std::vector<double>{uniform01(rng)});
  }
  f.model.numrecs = nrec;
  for (const auto& v : f.model.vars) {
    const auto n = f.model.total_elements(v);
    switch (v.type) {
      case Type::int32: {
        std::vector<std::int32_t> x(n);
        for (auto& e : x) e = static_cast<std::int32_t>(rng());
        f.data[v.name] = x;
        break;
      }
      case Type::int64: {
        std::vector<std::int64_t> x(n);
        for (auto& e : x) e = static_cast<std::int64_t>(rng());
        f.data[v.name] = x;
        break;
      }
      case Type::float32: {
        std::vector<float> x(n);
        for (auto& e : x) e = static_cast<float>(uniform(rng, -1e6, 1e6));
        f.data[v.name] = x;
        break;
      }
      default: {
        std::vector<double> x(n);
        for (auto& e : x) e = uniform(rng, -1e300, 1e300);
        f.data[v.name] = x;
        break;
      }
    }
  }
  return f;
}

}  // namespace

TEST_CASE("empty headers match the frozen fixtures", "[cdf5]") {
  FileModel m5;
  const auto h5 = encode_header(m5);
  CHECK(h5.size() == 48);
  CHECK(h5 == slurp(fs::path(KILOLAND_FIXTURES) / "empty_cdf5.nc"));
  CHECK(write_file(m5, {}) == h5);

  FileModel m2;
  m2.variant = Variant::cdf2;
  const auto h2 = encode_header(m2);
  CHECK(h2.size() == 32);
  CHECK(h2 == slurp(fs::path(KILOLAND_FIXTURES) / "empty_cdf2.nc"));
}

TEST_CASE("a one-variable header has the expected bytes", "[cdf5]") {
  FileModel m;
  m.add_dim("x", 3);
  m.add_var("a", Type::int32, {"x"});
  const auto bytes = write_file(m, {{"a", std::vector<std::int32_t>{1, 2, 3}}});
  // magic, numrecs, dim list (tag, count, name, len), absent gatts,
  // var list (tag, count, name, rank, dimid, absent atts, type, vsize, begin), data
  std::vector<std::uint8_t> expect{'C', 'D', 'F', 5, 0, 0, 0, 0, 0, 0, 0, 0};
  auto u32 = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) expect.push_back(static_cast<std::uint8_t>(v >> s));
  };
  auto u64 = [&](std::uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) expect.push_back(static_cast<std::uint8_t>(v >> s));
  };
  u32(0x0A); u64(1); u64(1); expect.insert(expect.end(), {'x', 0, 0, 0}); u64(3);
  u32(0); u64(0);
  u32(0x0B); u64(1); u64(1); expect.insert(expect.end(), {'a', 0, 0, 0}); u64(1); u64(0);
  u32(0); u64(0); u32(4); u64(12);
  const std::uint64_t begin = expect.size() + 8;
  u64(begin);
  u32(1); u32(2); u32(3);
  REQUIRE(bytes.size() == expect.size());
  CHECK(std::memcmp(bytes.data(), expect.data(), expect.size()) == 0);
}

TEST_CASE("random files round trip and obey the size identity", "[cdf5][property]") {
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    auto f = random_file(seed);
    const auto bytes = write_file(f.model, f.data);
    const auto size = compute_size(f.model);
    REQUIRE(size.header_bytes == oracle_header_size(f.model));
    REQUIRE(size.total_bytes == size.header_bytes + size.fixed_bytes + size.numrecs * size.record_size);
    REQUIRE(bytes.size() == size.total_bytes);

    auto r = Reader::from_bytes(bytes);
    REQUIRE(r.header_bytes() == size.header_bytes);
    REQUIRE(r.model().numrecs == f.model.numrecs);
    REQUIRE(r.model().dims == f.model.dims);
    REQUIRE(r.model().global_attrs == f.model.global_attrs);
    for (const auto& v : f.model.vars) {
      INFO("seed " << seed << " var " << v.name);
      REQUIRE(r.read_all(v.name) == f.data.at(v.name));
      REQUIRE(r.model().var(v.name).attrs == v.attrs);
    }
    // Re-encoding the parsed model reproduces the file header.
    auto again = r.model();
    REQUIRE(encode_header(again) == std::vector<std::byte>(bytes.begin(), bytes.begin() + static_cast<long>(size.header_bytes)));
  }
}

TEST_CASE("record variables with zero records may start at end of file", "[cdf5]") {
  FileModel m;
  m.add_dim("time", 0);
  m.add_dim("x", 3);
  m.add_var("fixed", Type::float64, {"x"});
  m.add_var("a", Type::float32, {"time", "x"});
  m.add_var("b", Type::int64, {"time"});
  const auto bytes = write_file(m, {{"fixed", std::vector<double>{1, 2, 3}}, {"a", std::vector<float>{}}, {"b", std::vector<std::int64_t>{}}});
  REQUIRE(bytes.size() == compute_size(m).total_bytes);
  auto r = Reader::from_bytes(bytes);
  CHECK(r.model().var("b").begin > bytes.size());
  CHECK(r.read_all("a") == VarData{std::vector<float>{}});
  CHECK(r.read_all("fixed") == VarData{std::vector<double>{1, 2, 3}});
}

TEST_CASE("size of a land-vector variable", "[cdf5]") {
  FileModel m;
  m.add_dim("gridcell", 72083);
  m.add_var("ID", Type::int64, {"gridcell"});
  m.finalize();
  CHECK(m.vars[0].vsize == 576664);
  const auto s = compute_size(m);
  CHECK(s.fixed_bytes == 576664);
  CHECK(s.total_bytes == s.header_bytes + 576664);
}

TEST_CASE("slabs agree with full reads", "[cdf5]") {
  FileModel m;
  m.add_dim("time", 0);
  m.add_dim("y", 5);
  m.add_dim("x", 7);
  m.add_var("fixed", Type::float64, {"y", "x"});
  m.add_var("rec", Type::float32, {"time", "y", "x"});
  m.add_var("series", Type::int32, {"time"});
  m.numrecs = 4;
  std::vector<double> fixed(35);
  std::vector<float> rec(4 * 35);
  std::vector<std::int32_t> series{10, 11, 12, 13};
  for (std::size_t i = 0; i < fixed.size(); ++i) fixed[i] = static_cast<double>(i) * 0.5;
  for (std::size_t i = 0; i < rec.size(); ++i) rec[i] = static_cast<float>(i);
  auto r = Reader::from_bytes(write_file(m, {{"fixed", fixed}, {"rec", rec}, {"series", series}}));

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint64_t t0 = rng() % 4, y0 = rng() % 5, x0 = rng() % 7;
    const std::uint64_t nt = 1 + rng() % (4 - t0), ny = 1 + rng() % (5 - y0), nx = 1 + rng() % (7 - x0);
    const auto got = r.read_slab_as<float>("rec", {t0, y0, x0}, {nt, ny, nx});
    std::vector<float> expect;
    for (auto t = t0; t < t0 + nt; ++t)
      for (auto y = y0; y < y0 + ny; ++y)
        for (auto x = x0; x < x0 + nx; ++x) expect.push_back(rec[(t * 5 + y) * 7 + x]);
    REQUIRE(got == expect);

    const auto gf = r.read_slab_as<double>("fixed", {y0, x0}, {ny, nx});
    std::vector<double> ef;
    for (auto y = y0; y < y0 + ny; ++y)
      for (auto x = x0; x < x0 + nx; ++x) ef.push_back(fixed[y * 7 + x]);
    REQUIRE(gf == ef);
  }
  CHECK(r.read_slab_as<std::int32_t>("series", {1}, {2}) == std::vector<std::int32_t>{11, 12});
  CHECK(std::get<std::vector<float>>(r.read_flat("rec", 33, 5)) ==
        std::vector<float>{33.f, 34.f, 35.f, 36.f, 37.f});
  CHECK_THROWS_AS(r.read_slab("fixed", {4, 0}, {2, 7}), ValidationError);
  CHECK_THROWS(r.read_all("nope"));
}

TEST_CASE("malformed input is rejected", "[cdf5]") {
  FileModel m;
  m.add_dim("n", 4);
  m.add_var("v", Type::float64, {"n"});
  auto bytes = write_file(m, {{"v", std::vector<double>{1, 2, 3, 4}}});

  auto bad = bytes;
  bad[3] = std::byte{0x01};
  CHECK_THROWS_WITH(Reader::from_bytes(bad), Catch::Matchers::ContainsSubstring("unsupported variant"));
  bad[0] = std::byte{'X'};
  CHECK_THROWS_WITH(Reader::from_bytes(bad), Catch::Matchers::ContainsSubstring("bad magic"));

  CHECK_THROWS_AS(Reader::from_bytes(std::vector<std::byte>(bytes.begin(), bytes.begin() + 30)), IntegrityError);
  CHECK_THROWS_AS(Reader::from_bytes(std::vector<std::byte>(bytes.begin(), bytes.end() - 8)), IntegrityError);

  FileModel m2;
  m2.variant = Variant::cdf2;
  m2.add_dim("n", 4);
  m2.add_var("id", Type::int64, {"n"});
  CHECK_THROWS_AS(m2.validate(), ValidationError);

  FileModel twice;
  twice.add_dim("a", 0);
  twice.add_dim("b", 0);
  CHECK_THROWS_AS(twice.validate(), ValidationError);

  FileModel dup;
  dup.add_dim("a", 1);
  CHECK_THROWS_AS(dup.add_dim("a", 2), ValidationError);
}

TEST_CASE("CDF-2 large-variable rule", "[cdf5]") {
  FileModel m;
  m.variant = Variant::cdf2;
  m.add_dim("n", 600'000'000);
  m.add_var("small", Type::float32, {"n"});
  m.add_var("big", Type::float64, {"n"});
  CHECK_NOTHROW(m.validate());
  m.finalize();
  CHECK(m.vars[1].vsize > 0xFFFFFFFFull);
  FileModel swapped;
  swapped.variant = Variant::cdf2;
  swapped.add_dim("n", 600'000'000);
  swapped.add_var("big", Type::float64, {"n"});
  swapped.add_var("small", Type::float32, {"n"});
  CHECK_THROWS_AS(swapped.validate(), ValidationError);
  swapped.variant = Variant::cdf5;
  CHECK_NOTHROW(swapped.validate());
}

TEST_CASE("streaming writer enforces coverage", "[cdf5]") {
  FileModel m;
  m.add_dim("time", 0);
  m.add_dim("n", 1000);
  m.add_var("w", Type::float64, {"time", "n"});
  m.add_var("id", Type::int64, {"n"});
  const auto path = temp_path("writer.nc");

  {
    Writer w(path, m);
    std::vector<std::int64_t> ids(1000);
    std::iota(ids.begin(), ids.end(), 0);
    w.write<std::int64_t>("id", 0, 0, ids);
    std::vector<std::thread> pool;
    for (int t = 0; t < 4; ++t) {
      pool.emplace_back([&, t] {
        for (std::uint64_t rec = 0; rec < 3; ++rec) {
          std::vector<double> vals(250);
          for (std::size_t i = 0; i < 250; ++i) vals[i] = static_cast<double>(rec * 1000 + t * 250 + i);
          w.write<double>("w", rec, static_cast<std::uint64_t>(t) * 250, vals);
        }
      });
    }
    for (auto& th : pool) th.join();
    CHECK_THROWS_AS(w.write<double>("w", 0, 10, std::vector<double>(5)), IntegrityError);
    const auto total = w.close();
    CHECK(total == fs::file_size(path));
  }
  auto r = Reader::open(path);
  CHECK(r.model().numrecs == 3);
  const auto all = r.read_as<double>("w");
  for (std::size_t i = 0; i < all.size(); ++i) REQUIRE(all[i] == static_cast<double>(i));

  Writer partial(path, m);
  partial.write<std::int64_t>("id", 0, 0, std::vector<std::int64_t>(1000));
  partial.write<double>("w", 0, 0, std::vector<double>(999));
  CHECK_THROWS_WITH(partial.close(), Catch::Matchers::ContainsSubstring("first missing element 999"));
}

TEST_CASE("checksums and header dumps are stable", "[cdf5]") {
  const VarData a = std::vector<double>{1.0, 2.0};
  const VarData b = std::vector<double>{1.0, 2.0000000000000004};
  CHECK(data_checksum(a) == data_checksum(a));
  CHECK(data_checksum(a) != data_checksum(b));

  FileModel m;
  m.add_dim("gridcell", 2);
  auto& v = m.add_var("T", Type::float32, {"gridcell"});
  set_attr(v.attrs, "units", std::string("K"));
  const auto text = dump_header(m);
  CHECK_THAT(text, Catch::Matchers::ContainsSubstring("gridcell = 2"));
  CHECK_THAT(text, Catch::Matchers::ContainsSubstring("float T(gridcell)"));
  CHECK(attr_text(v.attrs, "units") == "K");
}
