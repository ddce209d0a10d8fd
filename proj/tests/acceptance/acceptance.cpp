// Acceptance criteria, one per invocation: `acceptance <n>` or `acceptance all`.
// Exit status: 0 pass, 1 fail, 77 skipped (machine too small).

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <thread>

#include "kiloland/cdf5.hpp"
#include "kiloland/compare.hpp"
#include "kiloland/decomp.hpp"
#include "kiloland/domain.hpp"
#include "kiloland/forcing.hpp"
#include "kiloland/landsim.hpp"
#include "kiloland/perf.hpp"
#include "kiloland/rng.hpp"

using namespace kiloland;
namespace fs = std::filesystem;

namespace {

enum class Status { pass, fail, skip };

struct Outcome {
  Status status = Status::pass;
  std::string detail;
};

Outcome pass(std::string d) { return {Status::pass, std::move(d)}; }
Outcome fail(std::string d) { return {Status::fail, std::move(d)}; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path fresh(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "kiloland_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

landsim::CaseConfig mini_case(const fs::path& out, int days = 5) {
  landsim::CaseConfig c;
  c.name = "aksp_mini";
  c.n_days = days;
  c.out_dir = out;
  c.seed = 1;
  return c;
}

std::vector<fs::path> outputs_of(const landsim::RunResult& r) {
  auto all = r.history_files;
  all.insert(all.end(), r.restart_files.begin(), r.restart_files.end());
  return all;
}

int cores() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// 1. Replication equivalence.
Outcome replication() {
  const auto base = domain::aksp_mini();
  const auto a = fresh("c1_base"), b = fresh("c1_x10");
  const auto rb = landsim::run_case(mini_case(a), base);
  auto cfg = mini_case(b);
  cfg.set_workers(std::min(4, cores()));
  const auto rr = landsim::run_case(cfg, domain::replicate(base, 10));
  const auto fb = outputs_of(rb), fr = outputs_of(rr);
  if (fb.size() != fr.size()) return fail("different file sets");
  for (std::size_t i = 0; i < fb.size(); ++i) {
    const auto rep = compare::check_replication(fb[i], fr[i], 10);
    if (rep.verdict != compare::Verdict::identical) return fail(fr[i].filename().string() + ": " + rep.text());
  }
  return pass(fmt::format("{} files are 10 exact copies ({} -> {} land cells)", fb.size(), rb.n_land, rr.n_land));
}

// 2. Partition and worker invariance.
Outcome workers() {
  const auto d = domain::aksp_mini();
  const auto ref_dir = fresh("c2_ref");
  const auto ref = landsim::run_case(mini_case(ref_dir), d);
  int runs = 0;
  for (auto scheme : {decomp::Scheme::round_robin, decomp::Scheme::block, decomp::Scheme::block_round_robin}) {
    for (int w : {1, 2, 4, 8}) {
      for (int aggs : {1, std::min(w, 2)}) {
        const auto dir = fresh("c2_run");
        auto cfg = mini_case(dir);
        cfg.set_workers(w);
        cfg.scheme = scheme;
        cfg.block_size = 32;
        cfg.aggregators = aggs;
        cfg.buffer_limit = aggs == 1 ? decomp::kDefaultBufferLimit : 4096;
        landsim::run_case(cfg, d);
        ++runs;
        for (const auto& f : outputs_of(ref)) {
          if (slurp(dir / f.filename()) != slurp(f)) {
            return fail(fmt::format("{} differs at {} workers, scheme {}, {} aggregators", f.filename().string(), w,
                                    decomp::scheme_name(scheme), aggs));
          }
        }
      }
    }
  }
  return pass(fmt::format("{} runs bit-identical to the 1-worker reference", runs));
}

// 3. Restart transparency.
Outcome restart() {
  const auto d = domain::aksp_mini();
  const auto whole = fresh("c3_whole"), split = fresh("c3_split");
  const auto rw = landsim::run_case(mini_case(whole), d);
  auto cfg = mini_case(split, 3);
  landsim::run_case(cfg, d);
  landsim::resume_case(cfg, d, 2);
  for (const auto& f : outputs_of(rw)) {
    if (slurp(split / f.filename()) != slurp(f)) return fail(f.filename().string() + " differs after 3+2 split");
  }
  return pass(fmt::format("{} files equal the 5-day run byte for byte", outputs_of(rw).size()));
}

// 4. Daily-value preservation.
Outcome daily() {
  double worst_rel = 0.0;
  std::int64_t checked = 0;
  for (std::uint64_t seed = 101; seed <= 110; ++seed) {
    std::vector<std::int64_t> keys(40);
    for (std::size_t i = 0; i < keys.size(); ++i) keys[i] = static_cast<std::int64_t>(seed * 1000 + i);
    const auto sf = forcing::synth_forcing(seed, keys, {2014, 1, 1}, 31);
    const auto m = forcing::downscale_month(sf.daily, sf.profiles, 2014, 1);
    for (const auto& vs : forcing::standard_variables()) {
      const int v = static_cast<int>(vs.var);
      for (int day = 0; day < 31; ++day) {
        for (std::int64_t c = 0; c < m.n_land; ++c) {
          std::vector<double> steps(forcing::kStepsPerDay);
          for (int k = 0; k < forcing::kStepsPerDay; ++k) steps[k] = m.at(vs.var, day * forcing::kStepsPerDay + k, c);
          const double got = forcing::daily_aggregate(steps, vs.downscale);
          const double want = sf.daily.at(vs.var, day, c);
          ++checked;
          if (vs.downscale == forcing::DownscaleMode::additive) {
            if (got != want) return fail(fmt::format("seed {} {} day {} cell {}: {} != {}", seed, vs.name, day, c, got, want));
          } else {
            const double rel = std::abs(got - want) / std::max(std::abs(want), 1e-300);
            worst_rel = std::max(worst_rel, rel);
            if (rel > 1e-12) return fail(fmt::format("seed {} {} day {} cell {}: rel {:.3g}", seed, vs.name, day, c, rel));
          }
        }
        (void)v;
      }
    }
  }
  return pass(fmt::format("{} cell-days over 10 seeds, worst relative error {:.3g}", checked, worst_rel));
}

// 5. Codec correctness.
struct RandomFile {
  cdf::FileModel model;
  std::map<std::string, cdf::VarData> data;
};

RandomFile random_file(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };
  RandomFile f;
  f.model.variant = pick(2) ? cdf::Variant::cdf5 : cdf::Variant::cdf2;
  const bool has_record = pick(2);
  if (has_record) f.model.add_dim("time", 0);
  const int ndims = 1 + pick(3);
  for (int i = 0; i < ndims; ++i) f.model.add_dim("d" + std::to_string(i), 1 + pick(9));
  cdf::set_attr(f.model.global_attrs, "title", "random " + std::to_string(seed));
  const int nvars = 1 + pick(6);
  for (int i = 0; i < nvars; ++i) {
    std::vector<std::string> dn;
    if (has_record && pick(2)) dn.push_back("time");
    const int rank = pick(ndims + 1);
    for (int k = 0; k < rank; ++k) dn.push_back("d" + std::to_string((k + i) % ndims));
    std::vector<cdf::Type> types{cdf::Type::int32, cdf::Type::float32, cdf::Type::float64};
    if (f.model.variant == cdf::Variant::cdf5) types.push_back(cdf::Type::int64);
    const auto t = types[static_cast<std::size_t>(pick(static_cast<int>(types.size())))];
    auto& v = f.model.add_var("v" + std::to_string(i), t, dn);
    cdf::set_attr(v.attrs, "units", std::string(pick(2) ? "K" : "mm"));
  }
  f.model.numrecs = has_record ? static_cast<std::uint64_t>(pick(4)) : 0;
  for (const auto& v : f.model.vars) {
    const auto n = f.model.total_elements(v);
    switch (v.type) {
      case cdf::Type::int32: {
        std::vector<std::int32_t> x(n);
        for (auto& e : x) e = static_cast<std::int32_t>(rng());
        f.data[v.name] = x;
        break;
      }
      case cdf::Type::int64: {
        std::vector<std::int64_t> x(n);
        for (auto& e : x) e = static_cast<std::int64_t>(rng());
        f.data[v.name] = x;
        break;
      }
      case cdf::Type::float32: {
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

Outcome codec() {
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    const auto f = random_file(seed);
    const auto bytes = cdf::write_file(f.model, f.data);
    if (bytes.size() != cdf::compute_size(f.model).total_bytes) return fail(fmt::format("seed {}: size mismatch", seed));
    try {
      auto r = cdf::Reader::from_bytes(bytes);
      for (const auto& v : f.model.vars) {
        if (r.read_all(v.name) != f.data.at(v.name)) return fail(fmt::format("seed {}: {} did not round trip", seed, v.name));
      }
    } catch (const std::exception& e) {
      return fail(fmt::format("seed {}: {}", seed, e.what()));
    }
  }

  // Every file written by a run has exactly its accounted size.
  const auto dir = fresh("c5_run");
  const auto run = landsim::run_case(mini_case(dir, 2), domain::aksp_mini());
  int corpus = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".nc") continue;
    auto r = cdf::Reader::open(e.path());
    if (fs::file_size(e.path()) != cdf::compute_size(r.model()).total_bytes) return fail(e.path().string() + " size");
    ++corpus;
  }

  const fs::path fixtures = KILOLAND_FIXTURES;
  cdf::FileModel m5, m2;
  m2.variant = cdf::Variant::cdf2;
  auto as_string = [](const std::vector<std::byte>& b) { return std::string(reinterpret_cast<const char*>(b.data()), b.size()); };
  if (as_string(cdf::encode_header(m5)) != slurp(fixtures / "empty_cdf5.nc")) return fail("empty CDF-5 header");
  if (as_string(cdf::encode_header(m2)) != slurp(fixtures / "empty_cdf2.nc")) return fail("empty CDF-2 header");
  const auto golden = fixtures / "golden" / "aksp_mini.elm.h0.2014-01-01-00000.nc";
  const auto gdir = fresh("c5_golden");
  const auto g = landsim::run_case(mini_case(gdir), domain::aksp_mini());
  if (slurp(g.history_files.at(0)) != slurp(golden)) return fail("history differs from the golden fixture");
  {
    auto r = cdf::Reader::open(golden);
    const auto hdr = as_string(cdf::encode_header(r.model()));
    if (slurp(golden).compare(0, hdr.size(), hdr) != 0) return fail("golden header does not re-encode");
  }

  // Aggregated writes against a serial reference.
  constexpr std::int64_t kCells = 2047;
  cdf::FileModel m;
  m.add_dim("time", 0);
  m.add_dim("gridcell", kCells);
  m.add_var("A", cdf::Type::float64, {"gridcell"});
  m.add_var("B", cdf::Type::float32, {"time", "gridcell"});
  std::mt19937_64 rng(5);
  std::vector<double> a(kCells);
  for (auto& v : a) v = uniform(rng, -1e3, 1e3);
  std::vector<float> b(2 * kCells);
  for (auto& v : b) v = static_cast<float>(uniform01(rng));
  const auto ref_path = gdir / "serial.nc";
  cdf::write_file(ref_path, m, {{"A", a}, {"B", b}});
  const auto reference = slurp(ref_path);
  int configs = 0;
  for (int aggs : {1, 2, 4}) {
    for (std::uint64_t limit : {std::uint64_t{1024}, std::uint64_t{64} << 20}) {
      const int ranks = 8;
      const auto part = decomp::partition(kCells, ranks, decomp::Scheme::round_robin);
      const auto iod = decomp::build_iodecomp(part);
      const auto plan = decomp::make_plan(iod.total(), aggs, ranks, limit);
      const auto path = gdir / "agg.nc";
      {
        cdf::Writer w(path, m);
        decomp::rearrange_write(decomp::scatter<double>(iod, a), iod, plan, w, "A");
        for (std::uint64_t r = 0; r < 2; ++r) {
          const std::vector<float> rec(b.begin() + static_cast<long>(r * kCells), b.begin() + static_cast<long>((r + 1) * kCells));
          decomp::rearrange_write(decomp::scatter<float>(iod, rec), iod, plan, w, "B", r);
        }
        w.close();
      }
      if (slurp(path) != reference) return fail(fmt::format("aggregated write differs (A={}, buffer={})", aggs, limit));
      ++configs;
    }
  }
  (void)run;
  return pass(fmt::format("1000 random files round trip, {} run files sized exactly, fixtures match, {} aggregated configs",
                          corpus, configs));
}

// 6. Strong-scaling table metrics.
Outcome table5() {
  struct Pair {
    const char* row;
    double seconds, sypd;
  };
  const std::vector<Pair> pairs{
      {"ATM 6300", 132.749, 8.92},   {"ATM 12600", 52.85, 22.35},   {"ATM 25200", 48.765, 24.27},
      {"ATM 50400", 31.120, 38.03},  {"ATM 100800", 68.089, 17.38}, {"CPL 6300", 142.032, 8.33},
      {"CPL 12600", 39.008, 30.34},  {"CPL 25200", 3.886, 304.57},  {"CPL 50400", 3.32, 366.51},
      {"CPL 100800", 1.573, 752},    {"LND 6300", 939.447, 1.26},   {"LND 12600", 388.043, 3.05},
      {"LND 25200", 185.725, 6.37},  {"LND 50400", 134.960, 8.7},   {"LND 100800", 102.042, 11.60}};
  std::vector<std::string> misses;
  for (const auto& p : pairs) {
    const double got = perf::compute_sypd(p.seconds, 5);
    const bool ok = p.sypd < 50 ? std::abs(got - p.sypd) <= 0.01 : std::abs(got - p.sypd) <= 0.01 * p.sypd;
    if (!ok) misses.push_back(fmt::format("{} s -> {:.4f} (published {})", p.seconds, got, p.sypd));
  }
  auto rec = [](std::int64_t c, double t) {
    perf::ScalingRecord r;
    r.cores = c;
    r.run_seconds = t;
    return r;
  };
  const auto t = perf::speedup_table({rec(6300, 939.447), rec(12600, 388.043), rec(25200, 185.725), rec(50400, 134.960),
                                      rec(100800, 102.042)});
  const double e50 = 100.0 * t.efficiency[3], e100 = 100.0 * t.efficiency[4];
  const bool eff_ok = std::abs(e50 - 87.0) <= 1.0 && std::abs(e100 - 58.0) <= 1.0;
  std::string detail = fmt::format("{}/15 pairs in tolerance; efficiency {:.1f}% and {:.1f}%", 15 - misses.size(), e50, e100);
  for (const auto& m : misses) detail += "; " + m;
  return misses.empty() && eff_ok ? pass(detail) : fail(detail);
}

// 7. Weak-scaling table.
Outcome table6() {
  std::vector<perf::ScalingRecord> r;
  const std::vector<std::pair<std::int64_t, double>> runs{{42, 316.927}, {420, 374.488}, {4200, 392.896}, {12600, 388.043}};
  for (const auto& [c, t] : runs) {
    perf::ScalingRecord x;
    x.cores = c;
    x.run_seconds = t;
    x.cells_per_core = 1716;
    r.push_back(x);
  }
  const auto e = perf::weak_efficiency(r);
  const std::vector<double> want{100.0, 84.6, 80.7, 81.7};
  std::string detail;
  bool ok = true;
  for (std::size_t i = 0; i < e.size(); ++i) {
    detail += fmt::format("{}{:.2f}%", i ? ", " : "", 100.0 * e[i]);
    ok = ok && std::abs(100.0 * e[i] - want[i]) <= 0.5;
  }
  return ok ? pass(detail) : fail(detail);
}

// 8. Bandwidth.
Outcome bandwidth() {
  const auto a = perf::bandwidth(15.14, 21.51);
  const auto b = perf::bandwidth(4540.54, 503.12);
  const bool ok = std::abs(a.mib_per_s - 671.8) / 671.8 <= 0.005 && std::abs(b.gib_per_s - 8.4) / 8.4 <= 0.005;
  const auto detail = fmt::format("{:.1f} MiB/s, {:.3f} GiB/s", a.mib_per_s, b.gib_per_s);
  return ok ? pass(detail) : fail(detail);
}

// 9 and 10. Desk scaling; needs four cores.
Outcome desk_scaling(perf::SuiteMode mode) {
  if (cores() < 4) return {Status::skip, fmt::format("needs 4 cores, machine has {}", cores())};
  perf::SuiteConfig sc;
  sc.mode = mode;
  sc.workers = {1, 2, 4};
  sc.n_cells = 100000;
  sc.cells_per_worker = 1700;
  sc.base.n_days = 5;
  sc.out_dir = fresh(mode == perf::SuiteMode::strong ? "c9" : "c10");
  const auto r = perf::run_scaling_suite(sc);
  const auto& t = r.tables.at("LND");
  std::string detail;
  for (std::size_t i = 0; i < t.records.size(); ++i) {
    detail += fmt::format("{}{}w {:.3f} s", i ? ", " : "", t.records[i].cores, t.records[i].run_seconds);
  }
  if (!r.outputs_equivalent) return fail("outputs differ across worker counts; " + detail);
  bool ok = true;
  if (mode == perf::SuiteMode::strong) {
    for (std::size_t i = 1; i < t.records.size(); ++i) ok = ok && t.records[i].run_seconds < t.records[i - 1].run_seconds;
    ok = ok && t.speedup.back() >= 2.0;
    detail += fmt::format("; speedup at 4 workers {:.2f}", t.speedup.back());
  } else {
    for (const auto& x : t.records) ok = ok && std::abs(x.run_seconds / t.records[0].run_seconds - 1.0) <= 0.25;
  }
  return ok ? pass(detail) : fail(detail);
}

// 11. Size proportionality.
std::uint64_t gridcell_payload(const fs::path& file) {
  auto r = cdf::Reader::open(file);
  auto m = r.model();
  const auto g = m.find_dim("gridcell");
  std::uint64_t bytes = 0;
  for (const auto& v : m.vars) {
    if (!g || v.dimids.empty() || v.dimids.back() != *g) continue;
    const bool rec = m.dims[v.dimids.front()].is_record();
    bytes += v.vsize * (rec ? m.numrecs : 1);
  }
  return bytes;
}

Outcome proportionality() {
  const auto base = domain::aksp_mini();
  const auto a = fresh("c11_x1"), b = fresh("c11_x10");
  const auto r1 = landsim::run_case(mini_case(a, 1), base);
  const auto r10 = landsim::run_case(mini_case(b, 1), domain::replicate(base, 10));
  const auto f1 = outputs_of(r1), f10 = outputs_of(r10);
  std::string detail;
  for (std::size_t i = 0; i < f1.size(); ++i) {
    const auto p1 = gridcell_payload(f1[i]), p10 = gridcell_payload(f10[i]);
    auto r = cdf::Reader::open(f10[i]);
    if (fs::file_size(f10[i]) != cdf::compute_size(r.model()).total_bytes) return fail(f10[i].string() + " size");
    const auto name = f1[i].filename().string();
    const bool per_cell = name.find(".elm.h0.") != std::string::npos || name.find(".elm.r.") != std::string::npos;
    if ((per_cell && p1 == 0) || p10 != 10 * p1) return fail(fmt::format("{}: {} vs {}", f1[i].filename().string(), p10, p1));
    detail += fmt::format("{}{} {}->{}", i ? ", " : "", f1[i].filename().string().substr(10), p1, p10);
  }
  return pass(detail);
}

// 12. Spin-up convergence.
Outcome spinup() {
  const landsim::ToyParams p;
  const landsim::CellForcing f{290.0, 5.0, 200.0};
  landsim::CellState s;
  const auto hours = static_cast<std::int64_t>(std::ceil(5.0 / p.k_leaf));
  landsim::StepResult last{s, {}};
  for (std::int64_t h = 0; h < hours; ++h) last = landsim::step_cell(last.state, f, p, 1.0);
  const double fixed = p.alloc * last.diag.gpp / p.k_leaf;
  const double rel = std::abs(last.state.c_leaf - fixed) / fixed;
  const auto detail = fmt::format("c_leaf {:.4f} vs fixed point {:.4f} after {} h (rel {:.4f})", last.state.c_leaf, fixed, hours, rel);
  return rel <= 0.01 ? pass(detail) : fail(detail);
}

const std::vector<std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Outcome()>>> list{
      {"replication equivalence", replication},
      {"partition and worker invariance", workers},
      {"restart transparency", restart},
      {"daily-value preservation", daily},
      {"codec correctness", codec},
      {"strong-scaling table metrics", table5},
      {"weak-scaling table efficiency", table6},
      {"bandwidth", bandwidth},
      {"desk strong scaling", [] { return desk_scaling(perf::SuiteMode::strong); }},
      {"desk weak scaling", [] { return desk_scaling(perf::SuiteMode::weak); }},
      {"size proportionality", proportionality},
      {"spin-up convergence", spinup}};
  return list;
}

int run_one(std::size_t n) {
  const auto& [name, fn] = criteria().at(n - 1);
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = fail(std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::fail ? "FAIL" : "SKIP";
  std::cout << fmt::format("criterion {:>2} {:<32} {} ({:.1f} s) {}", n, name, tag, secs, o.detail) << std::endl;
  return o.status == Status::pass ? 0 : o.status == Status::fail ? 1 : 77;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: acceptance <1-" << criteria().size() << "|all>\n";
    return 2;
  }
  if (std::strcmp(argv[1], "all") == 0) {
    int worst = 0;
    for (std::size_t n = 1; n <= criteria().size(); ++n) {
      const int rc = run_one(n);
      if (rc == 1) worst = 1;
    }
    return worst;
  }
  const int n = std::atoi(argv[1]);
  if (n < 1 || n > static_cast<int>(criteria().size())) {
    std::cerr << "no criterion " << argv[1] << "\n";
    return 2;
  }
  return run_one(static_cast<std::size_t>(n));
}
