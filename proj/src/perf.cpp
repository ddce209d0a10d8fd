#include "kiloland/perf.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "kiloland/compare.hpp"
#include "kiloland/error.hpp"

namespace kiloland::perf {

double compute_sypd(double wall_seconds, double sim_days) {
  if (!(wall_seconds > 0.0) || !std::isfinite(wall_seconds)) {
    throw ValidationError(fmt::format("compute_sypd: wall time must be positive, got {}", wall_seconds));
  }
  return (sim_days / 365.0) / (wall_seconds / 86400.0);
}

namespace {

void check_table_input(const std::vector<ScalingRecord>& records, std::size_t baseline) {
  if (records.empty()) throw ValidationError("scaling table: no records");
  if (baseline >= records.size()) throw ValidationError("scaling table: baseline index out of range");
  std::set<std::int64_t> cores;
  for (const auto& r : records) {
    if (r.component != records[baseline].component) throw ValidationError("scaling table: records mix components");
    if (r.cores < 1 || !(r.run_seconds > 0.0)) throw ValidationError("scaling table: cores and run seconds must be positive");
    if (!cores.insert(r.cores).second) throw ValidationError(fmt::format("scaling table: duplicate core count {}", r.cores));
  }
}

}  // namespace

ScalingTable speedup_table(std::vector<ScalingRecord> records, std::size_t baseline) {
  check_table_input(records, baseline);
  ScalingTable t;
  t.baseline = baseline;
  const auto& b = records[baseline];
  for (const auto& r : records) {
    const double s = b.run_seconds / r.run_seconds;
    const double ideal = static_cast<double>(r.cores) / static_cast<double>(b.cores);
    t.speedup.push_back(s);
    t.ideal.push_back(ideal);
    t.efficiency.push_back(s / ideal);
  }
  t.records = std::move(records);
  return t;
}

std::vector<double> weak_efficiency(const std::vector<ScalingRecord>& records, std::size_t baseline) {
  check_table_input(records, baseline);
  const auto& b = records[baseline];
  std::vector<double> out;
  for (const auto& r : records) {
    if (b.cells_per_core > 0.0 && r.cells_per_core > 0.0 &&
        std::abs(r.cells_per_core - b.cells_per_core) > 0.05 * b.cells_per_core) {
      throw ValidationError(fmt::format("weak_efficiency: {} cells per core differs from the baseline {} by more than 5%",
                                        r.cells_per_core, b.cells_per_core));
    }
    out.push_back(b.run_seconds / r.run_seconds);
  }
  return out;
}

ScalingTable weak_table(std::vector<ScalingRecord> records, std::size_t baseline) {
  const auto eff = weak_efficiency(records, baseline);
  ScalingTable t;
  t.baseline = baseline;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double ideal = static_cast<double>(records[i].cores) / static_cast<double>(records[baseline].cores);
    t.ideal.push_back(ideal);
    t.speedup.push_back(ideal * eff[i]);
    t.efficiency.push_back(eff[i]);
  }
  t.records = std::move(records);
  return t;
}

Bandwidth bandwidth(double decimal_gb, double seconds) {
  if (!(decimal_gb > 0.0) || !(seconds > 0.0)) throw ValidationError("bandwidth: inputs must be positive");
  const double bytes_per_s = decimal_gb * 1e9 / seconds;
  return {bytes_per_s / 1048576.0, bytes_per_s / 1073741824.0};
}

double CostModel::io_read(std::int64_t p) const {
  if (c_io_read.empty()) return 0.0;
  if (p <= c_io_read.front().first) return c_io_read.front().second;
  if (p >= c_io_read.back().first) return c_io_read.back().second;
  for (std::size_t i = 1; i < c_io_read.size(); ++i) {
    const auto [p1, t1] = c_io_read[i];
    const auto [p0, t0] = c_io_read[i - 1];
    if (p <= p1) return t0 + (t1 - t0) * static_cast<double>(p - p0) / static_cast<double>(p1 - p0);
  }
  return c_io_read.back().second;
}

CostModel calibrate(const std::vector<ScalingRecord>& lnd_runs, std::int64_t n_cells, std::int64_t n_steps) {
  if (lnd_runs.empty()) throw ValidationError("calibrate: at least one measured run is needed");
  if (n_cells < 1 || n_steps < 1) throw ValidationError("calibrate: cells and steps must be positive");
  const double s = static_cast<double>(n_steps);
  const double n = static_cast<double>(n_cells);
  CostModel m;
  m.calibrated = true;
  auto work = [&](const ScalingRecord& r) { return n * s / static_cast<double>(r.cores); };
  auto sync = [&](const ScalingRecord& r) { return s * std::log2(std::max<double>(static_cast<double>(r.cores), 2.0)); };
  if (lnd_runs.size() == 1) {
    m.c_cell = lnd_runs[0].run_seconds / work(lnd_runs[0]);
    return m;
  }
  // Nonnegative least squares in two unknowns.
  double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
  for (const auto& r : lnd_runs) {
    const double x = work(r), y = sync(r);
    a11 += x * x;
    a12 += x * y;
    a22 += y * y;
    b1 += x * r.run_seconds;
    b2 += y * r.run_seconds;
  }
  const double det = a11 * a22 - a12 * a12;
  double c_cell = det != 0.0 ? (b1 * a22 - b2 * a12) / det : b1 / a11;
  double c_sync = det != 0.0 ? (a11 * b2 - a12 * b1) / det : 0.0;
  if (c_sync < 0.0 || det == 0.0) {
    c_sync = 0.0;
    c_cell = b1 / a11;
  } else if (c_cell < 0.0) {
    c_cell = 0.0;
    c_sync = b2 / a22;
  }
  m.c_cell = c_cell;
  m.c_sync = c_sync;
  return m;
}

ScalingTable predict_times(const CostModel& model, std::int64_t n_cells, std::int64_t n_steps,
                           const std::vector<std::int64_t>& cores, double sim_days, const std::string& case_name) {
  if (!model.calibrated) throw ValidationError("predict_times: the cost model is not calibrated");
  if (model.c_cell < 0.0 || model.c_sync < 0.0) throw ValidationError("predict_times: negative cost coefficients");
  std::vector<ScalingRecord> recs;
  for (auto p : cores) {
    if (p < 1) throw ValidationError("predict_times: core counts must be positive");
    ScalingRecord r;
    r.case_name = case_name;
    r.component = "LND";
    r.cores = p;
    r.sim_days = sim_days;
    r.cells_per_core = static_cast<double>(n_cells) / static_cast<double>(p);
    r.run_seconds = model.c_cell * static_cast<double>(n_cells) * static_cast<double>(n_steps) / static_cast<double>(p) +
                    model.c_sync * static_cast<double>(n_steps) * std::log2(std::max<double>(static_cast<double>(p), 2.0));
    r.init_seconds = model.io_read(p);
    r.source = "model";
    recs.push_back(r);
  }
  return speedup_table(std::move(recs), 0);
}

void write_scaling_csv(const std::filesystem::path& path, const std::vector<ScalingTable>& tables) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "case,component,phase,cores,seconds,sypd,speedup,efficiency,source\n";
  for (const auto& t : tables) {
    const auto& b = t.records[t.baseline];
    for (std::size_t i = 0; i < t.records.size(); ++i) {
      const auto& r = t.records[i];
      if (r.init_seconds > 0.0) {
        const double s = b.init_seconds > 0.0 ? b.init_seconds / r.init_seconds : 0.0;
        const double ideal = t.ideal[i];
        out << fmt::format("{},{},init,{},{:.6f},{:.4f},{:.4f},{:.4f},{}\n", r.case_name, r.component, r.cores,
                           r.init_seconds, compute_sypd(r.init_seconds, r.sim_days), s, s / ideal, r.source);
      }
      out << fmt::format("{},{},run,{},{:.6f},{:.4f},{:.4f},{:.4f},{}\n", r.case_name, r.component, r.cores,
                         r.run_seconds, r.sypd(), t.speedup[i], t.efficiency[i], r.source);
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<ScalingRecord> read_scaling_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("case,component,phase,cores,seconds,sypd", 0) != 0) {
    throw ValidationError(path.string() + " is not a scaling CSV");
  }
  std::vector<ScalingRecord> out;
  auto find = [&](const ScalingRecord& key) -> ScalingRecord* {
    for (auto& r : out) {
      if (r.case_name == key.case_name && r.component == key.component && r.cores == key.cores && r.source == key.source) {
        return &r;
      }
    }
    return nullptr;
  };
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() < 8) throw ValidationError(fmt::format("{}:{}: expected at least 8 columns", path.string(), line_no));
    ScalingRecord r;
    r.case_name = f[0];
    r.component = f[1];
    double seconds = 0.0, sypd = 0.0;
    try {
      r.cores = std::stoll(f[3]);
      seconds = std::stod(f[4]);
      sypd = std::stod(f[5]);
    } catch (const std::exception&) {
      throw ValidationError(fmt::format("{}:{}: malformed number", path.string(), line_no));
    }
    r.source = f.size() > 8 ? f[8] : "measured";
    r.sim_days = sypd * 365.0 * seconds / 86400.0;
    auto* slot = find(r);
    if (!slot) {
      out.push_back(r);
      slot = &out.back();
    }
    if (f[2] == "init") {
      slot->init_seconds = seconds;
    } else {
      slot->run_seconds = seconds;
      slot->sim_days = r.sim_days;
    }
  }
  return out;
}

std::string speedup_svg(const ScalingTable& table, const std::string& title) {
  const double width = 720, height = 420, left = 70, right = 20, top = 60, bottom = 60;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  double y_max = 1.0;
  for (std::size_t i = 0; i < table.records.size(); ++i) y_max = std::max({y_max, table.ideal[i], table.speedup[i]});
  y_max *= 1.1;
  const auto n = table.records.size();
  const double group = plot_w / static_cast<double>(n);
  const double bar = group * 0.35;
  auto y = [&](double v) { return top + plot_h * (1.0 - v / y_max); };

  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n",
      width, height);
  s += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", width, height);
  s += fmt::format("<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n", width / 2, title);
  const bool model = std::any_of(table.records.begin(), table.records.end(), [](const auto& r) { return r.source == "model"; });
  if (model) s += fmt::format("<text x=\"{}\" y=\"42\" text-anchor=\"middle\" fill=\"#555\">model prediction</text>\n", width / 2);
  for (int k = 0; k <= 5; ++k) {
    const double v = y_max * k / 5.0;
    s += fmt::format("<line x1=\"{}\" x2=\"{}\" y1=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n", left, width - right, y(v), y(v));
    s += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.1f}</text>\n", left - 6, y(v) + 4, v);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = left + group * static_cast<double>(i) + group * 0.15;
    s += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"#3b6fb6\"/>\n", x0,
                     y(table.ideal[i]), bar, y(0) - y(table.ideal[i]));
    s += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"#c0392b\"/>\n", x0 + bar,
                     y(table.speedup[i]), bar, y(0) - y(table.speedup[i]));
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.0f}%</text>\n", x0 + bar,
                     std::min(y(table.ideal[i]), y(table.speedup[i])) - 6, 100.0 * table.efficiency[i]);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", x0 + bar, y(0) + 18,
                     table.records[i].cores);
  }
  s += fmt::format("<line x1=\"{}\" x2=\"{}\" y1=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"black\"/>\n", left, width - right, y(0), y(0));
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">cores</text>\n", left + plot_w / 2, height - 14);
  s += fmt::format("<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">speedup</text>\n",
                   top + plot_h / 2, top + plot_h / 2);
  s += fmt::format("<rect x=\"{}\" y=\"48\" width=\"12\" height=\"10\" fill=\"#3b6fb6\"/><text x=\"{}\" y=\"57\">ideal</text>\n",
                   width - 170, width - 154);
  s += fmt::format("<rect x=\"{}\" y=\"48\" width=\"12\" height=\"10\" fill=\"#c0392b\"/><text x=\"{}\" y=\"57\">actual</text>\n",
                   width - 100, width - 84);
  s += "</svg>\n";
  return s;
}

SuiteMode parse_suite_mode(const std::string& s) {
  if (s == "strong") return SuiteMode::strong;
  if (s == "weak") return SuiteMode::weak;
  throw UsageError("bench mode must be strong or weak, got '" + s + "'");
}

domain::DomainSpec synthetic_domain(std::int64_t n_land, std::uint64_t seed) {
  if (n_land < 1) throw ValidationError("synthetic_domain: n_land must be positive");
  const std::int64_t cols = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(std::sqrt(n_land / 0.6))));
  const std::int64_t rows = static_cast<std::int64_t>(std::ceil(static_cast<double>(n_land) / (0.6 * static_cast<double>(cols))));
  const auto grid = domain::centered_grid(rows, cols, 1000.0, {65.2, -164.8});
  const auto mask = domain::synth_land_mask(rows, cols, n_land, seed);
  return domain::build_domain(grid, mask, domain::Geometry::index_only);
}

SuiteResult run_scaling_suite(const SuiteConfig& cfg) {
  if (cfg.workers.empty()) throw ValidationError("scaling suite: no worker counts");
  const auto cores = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  for (int w : cfg.workers) {
    if (w < 1) throw ValidationError("scaling suite: worker counts must be positive");
    if (w > cores && !cfg.oversubscribe) {
      throw ValidationError(fmt::format("scaling suite: {} workers requested but this machine has {} cores", w, cores));
    }
  }
  std::filesystem::create_directories(cfg.out_dir);
  const bool strong = cfg.mode == SuiteMode::strong;
  const auto base_domain = synthetic_domain(strong ? cfg.n_cells : cfg.cells_per_worker, cfg.base.seed + 11);
  const std::string case_name = strong ? fmt::format("strong{}", cfg.n_cells) : fmt::format("weak{}", cfg.cells_per_worker);

  std::map<std::string, std::vector<ScalingRecord>> per_component;
  SuiteResult result;
  std::filesystem::path ref_hist, ref_restart;
  int ref_workers = 0;
  for (int w : cfg.workers) {
    auto c = cfg.base;
    c.name = case_name;
    c.set_workers(w);
    c.aggregators = std::min(c.aggregators, w);
    c.out_dir = cfg.out_dir / fmt::format("{}_w{}", case_name, w);
    std::filesystem::remove_all(c.out_dir);
    const auto d = strong ? base_domain : domain::replicate(base_domain, w);
    spdlog::info("{}: {} workers, {} land cells", case_name, w, d.n_land());
    const auto run = landsim::run_case(c, d);
    for (const auto& [comp, timing] : run.components) {
      ScalingRecord r;
      r.case_name = case_name;
      r.component = comp;
      r.cores = w;
      r.init_seconds = timing.init;
      r.run_seconds = std::max(timing.run, 1e-9);
      r.sim_days = c.n_days;
      r.cells_per_core = static_cast<double>(d.n_land()) / w;
      r.source = w > cores ? "oversubscribed" : "measured";
      per_component[comp].push_back(r);
    }
    if (!cfg.check_outputs || run.history_files.empty()) continue;
    const auto hist = run.history_files.front();
    const auto restart = c.out_dir / landsim::restart_file_name(c.name, "elm.r", c.start, c.total_steps() * static_cast<std::int64_t>(c.dt_hours));
    if (ref_workers == 0) {
      ref_workers = w;
      ref_hist = hist;
      ref_restart = restart;
      continue;
    }
    for (const auto& [ref, got] : {std::pair{ref_hist, hist}, std::pair{ref_restart, restart}}) {
      if (!std::filesystem::exists(ref) || !std::filesystem::exists(got)) continue;
      compare::CompareReport rep;
      if (strong) {
        rep = compare::compare_files(ref, got);
      } else if (w % ref_workers == 0) {
        rep = compare::check_replication(ref, got, w / ref_workers);
      } else {
        continue;
      }
      result.equivalence.push_back(fmt::format("{} workers {}: {}", w, got.filename().string(), compare::verdict_name(rep.verdict)));
      if (rep.verdict != compare::Verdict::identical) result.outputs_equivalent = false;
    }
  }

  std::vector<ScalingTable> tables;
  for (auto& [comp, recs] : per_component) {
    auto t = strong ? speedup_table(recs, 0) : weak_table(recs, 0);
    result.tables[comp] = t;
    tables.push_back(t);
  }
  result.csv = cfg.out_dir / fmt::format("{}_scaling.csv", case_name);
  write_scaling_csv(result.csv, tables);
  result.svg = cfg.out_dir / fmt::format("{}_speedup.svg", case_name);
  std::ofstream(result.svg) << speedup_svg(result.tables.at("LND"),
                                           fmt::format("LND {} scaling, {}", strong ? "strong" : "weak", case_name));
  return result;
}

}  // namespace kiloland::perf
