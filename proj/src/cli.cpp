#include "kiloland/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <boost/crc.hpp>
#include <boost/version.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "kiloland/compare.hpp"
#include "kiloland/config.hpp"
#include "kiloland/domain.hpp"
#include "kiloland/domain_io.hpp"
#include "kiloland/error.hpp"
#include "kiloland/forcing.hpp"
#include "kiloland/landsim.hpp"
#include "kiloland/perf.hpp"
#include "kiloland/surface.hpp"

namespace kiloland::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

fs::path resolve_out_dir(const std::string& flag, const std::string& config_value) {
  if (!flag.empty()) return flag;
  if (!config_value.empty()) return config_value;
  if (const char* env = std::getenv("KILOLAND_OUT"); env && *env) return env;
  return ".";
}

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> workers;
  std::string log_level = "warn";
};

std::uint32_t crc_of(const std::string& text) {
  boost::crc_32_type crc;
  crc.process_bytes(text.data(), text.size());
  return crc.checksum();
}

std::vector<std::string> args_of(int argc, const char* const* argv) {
  std::vector<std::string> v;
  for (int i = 0; i < argc; ++i) v.emplace_back(argv[i]);
  return v;
}

/// Provenance record written next to every artifact.
void write_provenance(const fs::path& path, const std::string& command, const std::vector<std::string>& args,
                      const std::string& config_text, std::uint64_t seed, const std::vector<fs::path>& outputs) {
  json j;
  j["command"] = command;
  j["argv"] = args;
  j["config_hash"] = fmt::format("{:08x}", crc_of(config_text));
  j["seed"] = seed;
  j["versions"] = {{"kiloland", kVersion},
                   {"compiler", fmt::format("gcc {}.{}.{}", __GNUC__, __GNUC_MINOR__, __GNUC_PATCHLEVEL__)},
                   {"cxx_standard", __cplusplus},
                   {"fmt", FMT_VERSION},
                   {"spdlog", fmt::format("{}.{}.{}", SPDLOG_VER_MAJOR, SPDLOG_VER_MINOR, SPDLOG_VER_PATCH)},
                   {"boost", BOOST_LIB_VERSION},
                   {"cli11", CLI11_VERSION}};
  j["created_utc"] = fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(std::chrono::system_clock::now())));
  std::vector<std::string> outs;
  for (const auto& o : outputs) outs.push_back(o.string());
  j["outputs"] = outs;
  if (!config_text.empty()) j["config"] = config_text;
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

domain::DomainSpec load_domain(const std::string& spec) {
  if (spec == "aksp_mini") return domain::aksp_mini();
  return domain::read_domain_file(spec);
}

cdf::Variant parse_variant(const std::string& s) {
  if (s == "cdf5") return cdf::Variant::cdf5;
  if (s == "cdf2") return cdf::Variant::cdf2;
  throw UsageError("--format must be cdf5 or cdf2");
}

template <class T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      if constexpr (std::is_floating_point_v<T>) out.push_back(static_cast<T>(std::stod(item, &used)));
      else out.push_back(static_cast<T>(std::stoll(item, &used)));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("cannot parse '" + item + "' in list '" + text + "'");
    }
  }
  if (out.empty()) throw UsageError("empty list '" + text + "'");
  return out;
}

std::string component_table(const landsim::RunResult& r, double sim_days) {
  std::string s = fmt::format("{:<5} {:>12} {:>12} {:>12}\n", "comp", "init_s", "run_s", "sypd");
  for (const auto& [name, t] : r.components) {
    s += fmt::format("{:<5} {:>12.4f} {:>12.4f} {:>12.2f}\n", name, t.init, t.run,
                     t.run > 0.0 ? perf::compute_sypd(t.run, sim_days) : 0.0);
  }
  return s;
}

class App {
 public:
  App(std::vector<std::string> args, std::ostream& out, std::ostream& err) : args_(std::move(args)), out_(out), err_(err) {}

  int run();

 private:
  Config load_config(const std::string& path) const {
    if (path.empty()) return {};
    return Config::load(path);
  }
  fs::path out_dir(const std::string& config_value = {}) const {
    auto dir = resolve_out_dir(g_.out, config_value);
    fs::create_directories(dir);
    return dir;
  }
  std::uint64_t seed_or(std::uint64_t fallback) const { return g_.seed.value_or(fallback); }
  void provenance(const fs::path& path, const std::string& command, const std::string& config_text, std::uint64_t seed,
                  const std::vector<fs::path>& outputs) const {
    write_provenance(path, command, args_, config_text, seed, outputs);
  }

  landsim::CaseConfig case_config(const std::string& path, Config& raw) const {
    const auto src = path.empty() ? g_.config : path;
    if (src.empty()) throw UsageError("a case config is required (--case or --config)");
    raw = Config::load(src);
    auto cfg = landsim::CaseConfig::from_config(raw);
    if (g_.seed) cfg.seed = *g_.seed;
    if (g_.workers) cfg.set_workers(*g_.workers);
    cfg.aggregators = std::min(cfg.aggregators, cfg.lnd_workers);
    cfg.out_dir = out_dir(raw.has("io.out_dir") ? cfg.out_dir.string() : std::string());
    cfg.validate();
    return cfg;
  }

  void report_run(const landsim::CaseConfig& cfg, const landsim::RunResult& r, const std::string& command,
                  const Config& raw) {
    const double days = static_cast<double>(r.end_step - r.first_step) * cfg.dt_hours / 24.0;
    out_ << fmt::format("case {}: {} land cells, steps {}..{}, wall {:.3f} s\n", cfg.name, r.n_land, r.first_step,
                        r.end_step, r.wall_seconds);
    if (days > 0.0) out_ << component_table(r, days);
    std::vector<fs::path> outputs = r.history_files;
    outputs.insert(outputs.end(), r.restart_files.begin(), r.restart_files.end());
    for (const auto& f : outputs) out_ << "wrote " << f.string() << "\n";
    const auto timing = cfg.out_dir / fmt::format("{}.timing.txt", cfg.name);
    std::ofstream(timing) << perf::render(r.timers);
    decomp::append_stats_csv(cfg.out_dir / "io_stats.csv", cfg.name, r.write_stats);
    outputs.push_back(timing);
    provenance(cfg.out_dir / fmt::format("{}.{}.provenance.json", cfg.name, command), command, raw.text(), cfg.seed,
               outputs);
  }

  std::vector<std::string> args_;
  std::ostream& out_;
  std::ostream& err_;
  Globals g_;
};

int App::run() {
  CLI::App app{"kiloland: kilometer-scale land simulation workflow on a desk machine", "kiloland"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  app.add_option("--config", g_.config, "Case config file (key = value)");
  app.add_option("--seed", g_.seed, "Random seed override");
  app.add_option("--out", g_.out, "Output directory (default $KILOLAND_OUT or .)");
  app.add_option("--workers", g_.workers, "Worker count for every component")->check(CLI::PositiveNumber);
  app.add_option("--log-level", g_.log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));

  std::function<void()> action;

  // make-domain
  auto* md = app.add_subcommand("make-domain", "Build a synthetic domain file");
  std::int64_t rows = 32, cols = 32;
  double land_fraction = 0.6, cell_size = 1000.0, center_lat = 65.2, center_lon = -164.8;
  std::string preset, geometry = "full", format = "cdf5", output;
  md->add_option("--rows", rows, "Grid rows")->check(CLI::PositiveNumber);
  md->add_option("--cols", cols, "Grid columns")->check(CLI::PositiveNumber);
  md->add_option("--land-fraction", land_fraction, "Fraction of land cells")->check(CLI::Range(0.0, 1.0));
  md->add_option("--cell-size", cell_size, "Cell size in meters")->check(CLI::PositiveNumber);
  md->add_option("--center-lat", center_lat, "Grid center latitude");
  md->add_option("--center-lon", center_lon, "Grid center longitude");
  md->add_option("--preset", preset, "Named domain (aksp_mini)")->check(CLI::IsMember({"aksp_mini"}));
  md->add_option("--geometry", geometry, "full or index_only")->check(CLI::IsMember({"full", "index_only"}));
  md->add_option("--format", format, "cdf5 or cdf2")->check(CLI::IsMember({"cdf5", "cdf2"}));
  md->add_option("-o,--output", output, "Domain file (default <out>/domain.nc)");
  md->callback([&] {
    action = [&] {
      const auto seed = seed_or(7);
      domain::DomainSpec d;
      if (!preset.empty()) {
        d = domain::aksp_mini(seed);
      } else {
        const auto grid = domain::centered_grid(rows, cols, cell_size, {center_lat, center_lon});
        const auto n_land = static_cast<std::int64_t>(std::llround(land_fraction * static_cast<double>(rows * cols)));
        const auto mask = domain::synth_land_mask(rows, cols, n_land, seed);
        d = domain::build_domain(grid, mask, geometry == "full" ? domain::Geometry::full : domain::Geometry::index_only);
      }
      const fs::path path = output.empty() ? out_dir() / "domain.nc" : fs::path(output);
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      domain::write_domain_file(path, d, parse_variant(format));
      out_ << fmt::format("wrote {}: {} x {} grid, {} land cells, fingerprint {:08x}\n", path.string(), d.grid.n_rows,
                          d.grid.n_cols, d.n_land(), d.fingerprint());
      provenance(fs::path(path.string() + ".provenance.json"), "make-domain", "", seed, {path});
    };
  });

  // gen-forcing
  auto* gf = app.add_subcommand("gen-forcing", "Generate synthetic 3-hourly forcing files");
  std::string gf_domain = "aksp_mini", gf_start = "2014-01-01", gf_dir;
  int gf_days = 5;
  gf->add_option("--domain", gf_domain, "Domain file or aksp_mini");
  gf->add_option("--start", gf_start, "First day (YYYY-MM-DD)");
  gf->add_option("--days", gf_days, "Number of days")->check(CLI::PositiveNumber);
  gf->add_option("-o,--output", gf_dir, "Forcing directory (default <out>/forcing)");
  gf->callback([&] {
    action = [&] {
      const auto seed = seed_or(1);
      const auto d = load_domain(gf_domain);
      const fs::path dir = gf_dir.empty() ? out_dir() / "forcing" : fs::path(gf_dir);
      const auto files = forcing::gen_forcing(dir, seed, d, parse_date(gf_start), gf_days);
      for (const auto& f : files) out_ << "wrote " << f.string() << "\n";
      provenance(dir / "forcing.provenance.json", "gen-forcing", "", seed, files);
    };
  });

  // gen-surface
  auto* gs = app.add_subcommand("gen-surface", "Interpolate a synthetic coarse surface dataset onto a domain");
  std::string gs_domain = "aksp_mini", gs_method = "nearest", gs_out;
  double gs_spacing = 0.5;
  int gs_extra = 0;
  gs->add_option("--domain", gs_domain, "Domain file or aksp_mini");
  gs->add_option("--method", gs_method, "nearest or bilinear");
  gs->add_option("--spacing", gs_spacing, "Coarse grid spacing in degrees")->check(CLI::PositiveNumber);
  gs->add_option("--extra", gs_extra, "Extra synthetic scalar fields")->check(CLI::NonNegativeNumber);
  gs->add_option("-o,--output", gs_out, "Surface file (default <out>/surface.nc)");
  gs->callback([&] {
    action = [&] {
      const auto seed = seed_or(3);
      const auto d = load_domain(gs_domain);
      const auto src = surface::synth_coarse_for(seed, d, gs_spacing, gs_extra);
      const auto method = surface::parse_method(gs_method);
      std::map<std::string, surface::Method> methods;
      for (const auto& [name, v] : src.vars) methods[name] = method;
      const auto s = surface::build_surface(d, src, methods);
      const fs::path path = gs_out.empty() ? out_dir() / "surface.nc" : fs::path(gs_out);
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      surface::write_surface_file(path, s, d);
      out_ << fmt::format("wrote {}: {} variables on {} land cells\n", path.string(), s.vars.size(), s.n_land);
      provenance(fs::path(path.string() + ".provenance.json"), "gen-surface", "", seed, {path});
    };
  });

  // subset
  auto* ss = app.add_subcommand("subset", "Cut a domain by bounding box or gridcell IDs");
  std::string ss_domain = "aksp_mini", ss_ids, ss_bbox, ss_out;
  ss->add_option("--domain", ss_domain, "Domain file or aksp_mini");
  ss->add_option("--ids", ss_ids, "Comma-separated gridcell IDs");
  ss->add_option("--bbox", ss_bbox, "x_min,x_max,y_min,y_max in projected meters");
  ss->add_option("-o,--output", ss_out, "Domain file (default <out>/subset.nc)");
  ss->callback([&] {
    action = [&] {
      if (ss_ids.empty() == ss_bbox.empty()) throw UsageError("subset needs exactly one of --ids or --bbox");
      const auto d = load_domain(ss_domain);
      domain::Selector sel;
      if (!ss_ids.empty()) {
        sel = parse_list<std::int64_t>(ss_ids);
      } else {
        const auto b = parse_list<double>(ss_bbox);
        if (b.size() != 4) throw UsageError("--bbox needs four numbers");
        sel = domain::BBox{b[0], b[1], b[2], b[3]};
      }
      const auto s = domain::subset(d, sel);
      const fs::path path = ss_out.empty() ? out_dir() / "subset.nc" : fs::path(ss_out);
      domain::write_domain_file(path, s);
      out_ << fmt::format("wrote {}: {} land cells\n", path.string(), s.n_land());
      provenance(fs::path(path.string() + ".provenance.json"), "subset", "", 0, {path});
    };
  });

  // replicate
  auto* rp = app.add_subcommand("replicate", "Stack k copies of a domain");
  std::string rp_domain = "aksp_mini", rp_out;
  std::int64_t rp_k = 10;
  rp->add_option("--domain", rp_domain, "Domain file or aksp_mini");
  rp->add_option("-k,--copies", rp_k, "Number of copies")->check(CLI::PositiveNumber);
  rp->add_option("-o,--output", rp_out, "Domain file (default <out>/replica.nc)");
  rp->callback([&] {
    action = [&] {
      const auto r = domain::replicate(load_domain(rp_domain), rp_k);
      const fs::path path = rp_out.empty() ? out_dir() / "replica.nc" : fs::path(rp_out);
      domain::write_domain_file(path, r);
      out_ << fmt::format("wrote {}: {} land cells\n", path.string(), r.n_land());
      provenance(fs::path(path.string() + ".provenance.json"), "replicate", "", 0, {path});
    };
  });

  // run
  auto* run = app.add_subcommand("run", "Run a case");
  std::string run_case;
  run->add_option("--case", run_case, "Case config file");
  run->callback([&] {
    action = [&] {
      Config raw;
      const auto cfg = case_config(run_case, raw);
      const auto r = landsim::run_case(cfg);
      report_run(cfg, r, "run", raw);
    };
  });

  // resume
  auto* rs = app.add_subcommand("resume", "Continue a case from its restart bundle");
  std::string rs_case;
  int rs_days = 0;
  rs->add_option("--case", rs_case, "Case config file");
  rs->add_option("--days", rs_days, "Extra days to run")->check(CLI::NonNegativeNumber);
  rs->callback([&] {
    action = [&] {
      Config raw;
      const auto cfg = case_config(rs_case, raw);
      const auto r = landsim::resume_case(cfg, rs_days);
      report_run(cfg, r, "resume", raw);
    };
  });

  // compare
  auto* cp = app.add_subcommand("compare", "Compare two files element by element");
  std::string cp_a, cp_b, cp_tol = "bit_exact", cp_csv;
  std::int64_t cp_k = 0;
  cp->add_option("a", cp_a, "First file")->required();
  cp->add_option("b", cp_b, "Second file")->required();
  cp->add_option("--tol", cp_tol, "bit_exact, abs:<eps> or rel:<eps>");
  cp->add_option("--replication", cp_k, "Treat b as k copies of a")->check(CLI::PositiveNumber);
  cp->add_option("--csv", cp_csv, "Write the machine-readable report here");
  std::optional<int> compare_exit;
  cp->callback([&] {
    action = [&] {
      const auto tol = compare::parse_tolerance(cp_tol);
      const auto rep = cp_k > 0 ? compare::check_replication(cp_a, cp_b, cp_k) : compare::compare_files(cp_a, cp_b, tol);
      out_ << rep.text();
      if (!cp_csv.empty()) {
        std::ofstream f(cp_csv);
        if (!f) throw IoError("cannot write " + cp_csv);
        f << rep.csv();
      }
      compare_exit = rep.verdict == compare::Verdict::different ? 1 : 0;
    };
  });

  // bench
  auto* bn = app.add_subcommand("bench", "Strong or weak scaling experiment on this machine");
  std::string bn_mode = "strong", bn_workers = "1,2,4";
  std::int64_t bn_cells = 100000, bn_cpw = 1700;
  int bn_days = 5;
  bool bn_over = false, bn_nocheck = false;
  bn->add_option("--mode", bn_mode, "strong or weak")->check(CLI::IsMember({"strong", "weak"}));
  bn->add_option("--worker-list", bn_workers, "Comma-separated worker counts");
  bn->add_option("--cells", bn_cells, "Land cells (strong mode)")->check(CLI::PositiveNumber);
  bn->add_option("--cells-per-worker", bn_cpw, "Land cells per worker (weak mode)")->check(CLI::PositiveNumber);
  bn->add_option("--days", bn_days, "Simulated days per run")->check(CLI::PositiveNumber);
  bn->add_flag("--oversubscribe", bn_over, "Allow more workers than cores (records labeled oversubscribed)");
  bn->add_flag("--no-check", bn_nocheck, "Skip output equivalence checks");
  bn->callback([&] {
    action = [&] {
      perf::SuiteConfig sc;
      sc.mode = perf::parse_suite_mode(bn_mode);
      sc.workers = parse_list<int>(bn_workers);
      sc.n_cells = bn_cells;
      sc.cells_per_worker = bn_cpw;
      sc.base.n_days = bn_days;
      sc.base.seed = seed_or(1);
      sc.out_dir = out_dir();
      sc.oversubscribe = bn_over;
      sc.check_outputs = !bn_nocheck;
      const auto r = perf::run_scaling_suite(sc);
      for (const auto& [comp, t] : r.tables) {
        for (std::size_t i = 0; i < t.records.size(); ++i) {
          const auto& x = t.records[i];
          out_ << fmt::format("{} {} cores={} init={:.4f} run={:.4f} speedup={:.3f} efficiency={:.1f}% {}\n", comp,
                              x.case_name, x.cores, x.init_seconds, x.run_seconds, t.speedup[i], 100.0 * t.efficiency[i],
                              x.source);
        }
      }
      for (const auto& e : r.equivalence) out_ << "equivalence: " << e << "\n";
      out_ << "wrote " << r.csv.string() << "\nwrote " << r.svg.string() << "\n";
      provenance(sc.out_dir / "bench.provenance.json", "bench", "", sc.base.seed, {r.csv, r.svg});
      if (!r.outputs_equivalent) throw IntegrityError("scaling runs produced different outputs");
    };
  });

  // predict
  auto* pr = app.add_subcommand("predict", "Extrapolate land run time with the calibrated cost model");
  std::string pr_cal, pr_cores = "6300,12600,25200,50400,100800";
  std::int64_t pr_cells = 21600000, pr_steps = 120, pr_cal_cells = 0, pr_cal_steps = 120;
  std::optional<double> pr_c_cell, pr_c_sync;
  pr->add_option("--calibration", pr_cal, "Scaling CSV with measured LND run times");
  pr->add_option("--calibration-cells", pr_cal_cells, "Land cells of the calibration case");
  pr->add_option("--calibration-steps", pr_cal_steps, "Steps of the calibration case");
  pr->add_option("--c-cell", pr_c_cell, "Seconds per cell-step");
  pr->add_option("--c-sync", pr_c_sync, "Seconds per step per log2(P)");
  pr->add_option("--cells", pr_cells, "Land cells to predict for")->check(CLI::PositiveNumber);
  pr->add_option("--steps", pr_steps, "Steps to predict for")->check(CLI::PositiveNumber);
  pr->add_option("--cores", pr_cores, "Comma-separated core counts");
  pr->callback([&] {
    action = [&] {
      perf::CostModel m;
      if (!pr_cal.empty()) {
        std::vector<perf::ScalingRecord> lnd;
        for (const auto& r : perf::read_scaling_csv(pr_cal)) {
          if (r.component == "LND" && r.source != "model") lnd.push_back(r);
        }
        if (lnd.empty()) throw ValidationError(pr_cal + " holds no measured LND runs");
        std::int64_t cells = pr_cal_cells;
        if (cells == 0) cells = static_cast<std::int64_t>(lnd.front().cells_per_core * static_cast<double>(lnd.front().cores));
        if (cells <= 0) throw UsageError("--calibration-cells is required for this CSV");
        m = perf::calibrate(lnd, cells, pr_cal_steps);
      }
      if (pr_c_cell) {
        m.c_cell = *pr_c_cell;
        m.calibrated = true;
      }
      if (pr_c_sync) m.c_sync = *pr_c_sync;
      const auto t = perf::predict_times(m, pr_cells, pr_steps, parse_list<std::int64_t>(pr_cores),
                                         static_cast<double>(pr_steps) / 24.0, "prediction");
      out_ << fmt::format("model: c_cell={:.6g} s, c_sync={:.6g} s\n", m.c_cell, m.c_sync);
      for (std::size_t i = 0; i < t.records.size(); ++i) {
        const auto& r = t.records[i];
        out_ << fmt::format("model cores={} cells/core={:.0f} run={:.3f} s speedup={:.3f} efficiency={:.1f}%\n", r.cores,
                            r.cells_per_core, r.run_seconds, t.speedup[i], 100.0 * t.efficiency[i]);
      }
      const auto dir = out_dir();
      perf::write_scaling_csv(dir / "prediction.csv", {t});
      std::ofstream(dir / "prediction.svg") << perf::speedup_svg(t, "LND strong scaling (model)");
      out_ << "wrote " << (dir / "prediction.csv").string() << "\n";
      provenance(dir / "prediction.provenance.json", "predict", "", 0, {dir / "prediction.csv", dir / "prediction.svg"});
    };
  });

  // dump
  auto* dp = app.add_subcommand("dump", "Print a file header, optionally with variable values");
  std::string dp_file, dp_var;
  std::size_t dp_limit = 20;
  dp->add_option("file", dp_file, "File to dump")->required();
  dp->add_option("--var", dp_var, "Print values of this variable");
  dp->add_option("--limit", dp_limit, "Maximum values printed");
  dp->callback([&] {
    action = [&] {
      auto r = cdf::Reader::open(dp_file);
      out_ << cdf::dump_header(r.model());
      if (!dp_var.empty()) {
        const auto v = r.read_as<double>(dp_var);
        out_ << dp_var << " =";
        for (std::size_t i = 0; i < std::min(dp_limit, v.size()); ++i) out_ << fmt::format(" {:.9g}", v[i]);
        if (v.size() > dp_limit) out_ << fmt::format(" ... ({} values)", v.size());
        out_ << "\n";
      }
    };
  });

  // report
  auto* rpt = app.add_subcommand("report", "Render a scaling CSV as a speedup chart");
  std::string rpt_csv, rpt_comp = "LND", rpt_mode = "strong", rpt_svg;
  rpt->add_option("csv", rpt_csv, "Scaling CSV")->required();
  rpt->add_option("--component", rpt_comp, "ATM, CPL or LND");
  rpt->add_option("--mode", rpt_mode, "strong or weak")->check(CLI::IsMember({"strong", "weak"}));
  rpt->add_option("-o,--output", rpt_svg, "SVG file (default next to the CSV)");
  rpt->callback([&] {
    action = [&] {
      std::vector<perf::ScalingRecord> recs;
      for (const auto& r : perf::read_scaling_csv(rpt_csv)) {
        if (r.component == rpt_comp) recs.push_back(r);
      }
      if (recs.empty()) throw ValidationError("no " + rpt_comp + " records in " + rpt_csv);
      const auto t = perf::parse_suite_mode(rpt_mode) == perf::SuiteMode::strong ? perf::speedup_table(recs)
                                                                                 : perf::weak_table(recs);
      const fs::path svg = rpt_svg.empty() ? fs::path(rpt_csv).replace_extension(".svg") : fs::path(rpt_svg);
      std::ofstream f(svg);
      if (!f) throw IoError("cannot write " + svg.string());
      f << perf::speedup_svg(t, fmt::format("{} {} scaling", rpt_comp, rpt_mode));
      for (std::size_t i = 0; i < t.records.size(); ++i) {
        out_ << fmt::format("{} cores={} run={:.3f} s speedup={:.3f} efficiency={:.1f}% {}\n", rpt_comp, t.records[i].cores,
                            t.records[i].run_seconds, t.speedup[i], 100.0 * t.efficiency[i], t.records[i].source);
      }
      out_ << "wrote " << svg.string() << "\n";
    };
  });

  std::vector<std::string> reversed(args_.rbegin(), args_.rend() - 1);
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out_, err_);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out_, err_);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out_, err_);
  } catch (const CLI::ParseError& e) {
    err_ << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }
  spdlog::set_level(spdlog::level::from_str(g_.log_level));
  try {
    action();
  } catch (const Error& e) {
    err_ << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err_ << "error: " << e.what() << "\n";
    return 3;
  }
  return compare_exit.value_or(0);
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty()) throw std::invalid_argument("dispatch: argv[0] is required");
  App app(args, out, err);
  return app.run();
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  return dispatch(args_of(argc, argv), out, err);
}

}  // namespace kiloland::cli
