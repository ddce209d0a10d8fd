#include "kiloland/landsim.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

#include "kiloland/domain_io.hpp"
#include "kiloland/error.hpp"

namespace kiloland::landsim {

using forcing::Var;

StepResult step_cell(const CellState& s, const CellForcing& f, const ToyParams& p, double dt) {
  if (!std::isfinite(f.tbot) || !std::isfinite(f.prect) || !std::isfinite(f.fsds)) {
    throw ValidationError("step_cell: non-finite forcing");
  }
  StepResult r;
  auto& d = r.diag;
  auto& n = r.state;
  const double precip = f.prect * dt;
  d.snow = f.tbot < p.rain_snow_threshold ? precip : 0.0;
  d.rain = precip - d.snow;
  d.melt = std::min(s.swe + d.snow, p.melt_factor * std::max(f.tbot - 273.15, 0.0) * dt);
  const double wetness = s.soil_water / p.w_cap;
  const double available = s.soil_water + d.rain + d.melt;
  d.et = std::min(p.et_coeff * f.fsds * wetness * dt, available);
  const double w = available - d.et;
  n.soil_water = std::clamp(w, 0.0, p.w_cap);
  d.runoff = std::max(w - p.w_cap, 0.0);
  n.swe = s.swe + d.snow - d.melt;
  n.soil_temp = s.soil_temp + (f.tbot - s.soil_temp) * dt / p.temp_tau;
  d.gpp = p.gpp_coeff * f.fsds * wetness;
  n.c_leaf = s.c_leaf + (p.alloc * d.gpp - p.k_leaf * s.c_leaf) * dt;
  n.c_soil = s.c_soil + ((1.0 - p.alloc) * d.gpp + p.k_leaf * s.c_leaf * 0.5 - p.k_soil * s.c_soil) * dt;
  d.fsno = n.swe / (n.swe + p.snow_cover_scale);
  d.tlai = p.lai_per_c * n.c_leaf;
  d.h2osoi = n.soil_water;
  d.tsoi = n.soil_temp;
  d.qrunoff = d.runoff / dt;
  return r;
}

void ToyParams::validate() const {
  for (const auto& [k, v] : to_map()) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(fmt::format("toy parameter {} must be positive, got {}", k, v));
  }
  if (alloc > 1.0) throw ValidationError("toy parameter alloc must not exceed 1");
}

std::map<std::string, double> ToyParams::to_map() const {
  return {{"melt_factor", melt_factor}, {"w_cap", w_cap},         {"et_coeff", et_coeff},
          {"temp_tau", temp_tau},       {"gpp_coeff", gpp_coeff}, {"alloc", alloc},
          {"k_leaf", k_leaf},           {"k_soil", k_soil},       {"lai_per_c", lai_per_c},
          {"snow_cover_scale", snow_cover_scale}, {"rain_snow_threshold", rain_snow_threshold}};
}

ToyParams ToyParams::from_map(const std::map<std::string, double>& values) {
  ToyParams p;
  std::map<std::string, double*> slots{{"melt_factor", &p.melt_factor}, {"w_cap", &p.w_cap},
                                       {"et_coeff", &p.et_coeff},       {"temp_tau", &p.temp_tau},
                                       {"gpp_coeff", &p.gpp_coeff},     {"alloc", &p.alloc},
                                       {"k_leaf", &p.k_leaf},           {"k_soil", &p.k_soil},
                                       {"lai_per_c", &p.lai_per_c},     {"snow_cover_scale", &p.snow_cover_scale},
                                       {"rain_snow_threshold", &p.rain_snow_threshold}};
  for (const auto& [k, v] : values) {
    const auto it = slots.find(k);
    if (it == slots.end()) throw ValidationError("unknown toy parameter " + k);
    *it->second = v;
  }
  return p;
}

HistoryInterval parse_history_interval(const std::string& s) {
  if (s == "end_of_run") return HistoryInterval::end_of_run;
  if (s == "daily") return HistoryInterval::daily;
  if (s == "hourly") return HistoryInterval::hourly;
  if (s == "none") return HistoryInterval::none;
  throw ValidationError("history interval must be end_of_run, daily, hourly or none, got '" + s + "'");
}

const char* history_interval_name(HistoryInterval h) {
  switch (h) {
    case HistoryInterval::end_of_run: return "end_of_run";
    case HistoryInterval::daily: return "daily";
    case HistoryInterval::hourly: return "hourly";
    case HistoryInterval::none: return "none";
  }
  return "?";
}

RestartInterval parse_restart_interval(const std::string& s) {
  if (s == "end_of_run") return {RestartKind::end_of_run, 0};
  if (s == "none") return {RestartKind::none, 0};
  int n = 0;
  char tail[8] = {};
  if (std::sscanf(s.c_str(), "every_%d_day%7s", &n, tail) == 2 && n > 0 && (std::string(tail) == "s" || std::string(tail) == "")) {
    return {RestartKind::every_n_days, n};
  }
  if (std::sscanf(s.c_str(), "every_%d_day", &n) == 1 && n == 1 && s == "every_1_day") return {RestartKind::every_n_days, 1};
  throw ValidationError("restart interval must be end_of_run, none or every_<n>_days, got '" + s + "'");
}

std::string restart_interval_name(const RestartInterval& r) {
  switch (r.kind) {
    case RestartKind::end_of_run: return "end_of_run";
    case RestartKind::none: return "none";
    case RestartKind::every_n_days: return fmt::format("every_{}_days", r.n_days);
  }
  return "?";
}

void CaseConfig::validate() const {
  const auto dt = static_cast<std::int64_t>(dt_hours);
  if (dt_hours != static_cast<double>(dt) || dt < 1 || 24 % dt != 0) {
    throw ValidationError(fmt::format("dt_hours = {} must be a whole number of hours dividing 24", dt_hours));
  }
  if (history == HistoryInterval::hourly && dt != 1) throw ValidationError("hourly history needs dt_hours = 1");
  if (n_days < 0) throw ValidationError("n_days must be >= 0");
  if (restart.kind == RestartKind::every_n_days && restart.n_days < 1) throw ValidationError("restart every n days needs n >= 1");
  if (atm_workers < 1 || cpl_workers < 1 || lnd_workers < 1) throw ValidationError("worker counts must be >= 1");
  if (aggregators < 1) throw ValidationError("io.aggregators must be >= 1");
  if (buffer_limit == 0) throw ValidationError("io.buffer_limit must be positive");
  if (replicate < 1) throw ValidationError("case.replicate must be >= 1");
  if (block_size < 1) throw ValidationError("case.block_size must be >= 1");
  if (name.empty() || name.find('/') != std::string::npos) throw ValidationError("case.name must be a plain file name");
  params.validate();
}

CaseConfig CaseConfig::from_config(const Config& c) {
  static const std::set<std::string> known{
      "case.name",        "case.compset", "case.domain",   "case.forcing",     "case.surface",     "case.start",
      "case.n_days",      "case.dt_hours", "case.history", "case.restart",     "case.workers",     "case.atm_workers",
      "case.cpl_workers", "case.lnd_workers", "case.scheme", "case.block_size", "case.replicate",   "case.seed",
      "io.aggregators",   "io.buffer_limit", "io.format",  "io.out_dir"};
  CaseConfig cfg;
  std::map<std::string, double> params = cfg.params.to_map();
  for (const auto& [k, v] : c.values()) {
    if (k.rfind("case.param.", 0) == 0) {
      const auto name = k.substr(11);
      if (!params.count(name)) throw ValidationError("unknown toy parameter key " + k);
      params[name] = c.number(k, 0.0);
    } else if (!known.count(k) && k.rfind("perf.", 0) != 0) {
      throw ValidationError("unknown config key " + k);
    }
  }
  cfg.params = ToyParams::from_map(params);
  cfg.name = c.get_or("case.name", cfg.name);
  cfg.compset = c.get_or("case.compset", cfg.compset);
  cfg.domain = c.get_or("case.domain", cfg.domain);
  if (cfg.domain != "aksp_mini") cfg.domain = c.path("case.domain").string();
  cfg.forcing_dir = c.path("case.forcing");
  cfg.surface_file = c.path("case.surface");
  if (auto s = c.get("case.start")) cfg.start = parse_date(*s);
  cfg.n_days = static_cast<int>(c.integer("case.n_days", cfg.n_days));
  cfg.dt_hours = c.number("case.dt_hours", cfg.dt_hours);
  if (auto s = c.get("case.history")) cfg.history = parse_history_interval(*s);
  if (auto s = c.get("case.restart")) cfg.restart = parse_restart_interval(*s);
  cfg.set_workers(static_cast<int>(c.integer("case.workers", 1)));
  cfg.atm_workers = static_cast<int>(c.integer("case.atm_workers", cfg.atm_workers));
  cfg.cpl_workers = static_cast<int>(c.integer("case.cpl_workers", cfg.cpl_workers));
  cfg.lnd_workers = static_cast<int>(c.integer("case.lnd_workers", cfg.lnd_workers));
  if (auto s = c.get("case.scheme")) cfg.scheme = decomp::parse_scheme(*s);
  cfg.block_size = c.integer("case.block_size", cfg.block_size);
  cfg.replicate = c.integer("case.replicate", cfg.replicate);
  cfg.seed = static_cast<std::uint64_t>(c.integer("case.seed", static_cast<std::int64_t>(cfg.seed)));
  cfg.aggregators = static_cast<int>(c.integer("io.aggregators", cfg.aggregators));
  cfg.buffer_limit = static_cast<std::uint64_t>(c.integer("io.buffer_limit", static_cast<std::int64_t>(cfg.buffer_limit)));
  const auto fmt_name = c.get_or("io.format", "cdf5");
  if (fmt_name == "cdf5") cfg.variant = cdf::Variant::cdf5;
  else if (fmt_name == "cdf2") cfg.variant = cdf::Variant::cdf2;
  else throw ValidationError("io.format must be cdf5 or cdf2");
  if (c.has("io.out_dir")) cfg.out_dir = c.path("io.out_dir");
  cfg.validate();
  return cfg;
}

Config CaseConfig::to_config() const {
  Config c;
  c.set("case.name", name);
  c.set("case.compset", compset);
  c.set("case.domain", domain);
  if (!forcing_dir.empty()) c.set("case.forcing", forcing_dir.string());
  if (!surface_file.empty()) c.set("case.surface", surface_file.string());
  c.set("case.start", format_date(start));
  c.set("case.n_days", std::to_string(n_days));
  c.set("case.dt_hours", fmt::format("{}", dt_hours));
  c.set("case.history", history_interval_name(history));
  c.set("case.restart", restart_interval_name(restart));
  c.set("case.atm_workers", std::to_string(atm_workers));
  c.set("case.cpl_workers", std::to_string(cpl_workers));
  c.set("case.lnd_workers", std::to_string(lnd_workers));
  c.set("case.scheme", decomp::scheme_name(scheme));
  c.set("case.block_size", std::to_string(block_size));
  c.set("case.replicate", std::to_string(replicate));
  c.set("case.seed", std::to_string(seed));
  for (const auto& [k, v] : params.to_map()) c.set("case.param." + k, fmt::format("{}", v));
  c.set("io.aggregators", std::to_string(aggregators));
  c.set("io.buffer_limit", std::to_string(buffer_limit));
  c.set("io.format", variant == cdf::Variant::cdf5 ? "cdf5" : "cdf2");
  c.set("io.out_dir", out_dir.string());
  return c;
}

domain::DomainSpec load_case_domain(const CaseConfig& cfg) {
  auto d = cfg.domain == "aksp_mini" ? domain::aksp_mini() : domain::read_domain_file(cfg.domain);
  if (cfg.replicate > 1) d = domain::replicate(d, cfg.replicate);
  return d;
}

namespace {

std::string stamp_at(const Date& start, std::int64_t hours) { return time_stamp(start, hours); }

}  // namespace

std::string history_file_name(const std::string& case_name, const Date& start, std::int64_t hours) {
  return fmt::format("{}.elm.h0.{}.nc", case_name, stamp_at(start, hours));
}

std::string restart_file_name(const std::string& case_name, const std::string& component, const Date& start,
                              std::int64_t hours) {
  return fmt::format("{}.{}.{}.nc", case_name, component, stamp_at(start, hours));
}

namespace {

constexpr int kX2l = forcing::kNumVars;  // forcing fields delivered by the coupler
constexpr std::array<const char*, 2> kL2xNames{"QRUNOFF", "GPP"};

std::int64_t checksum_of(const cdf::VarData& v) { return static_cast<std::int64_t>(cdf::data_checksum(v)); }

/// Non-timer state of one case instance across segments.
class Case {
 public:
  Case(const CaseConfig& cfg, const domain::DomainSpec& d) : cfg_(cfg), d_(d) {
    cfg_.validate();
    n_land_ = d_.n_land();
    dt_ = static_cast<std::int64_t>(cfg_.dt_hours);
    n_threads_ = std::max({cfg_.atm_workers, cfg_.cpl_workers, cfg_.lnd_workers});
    trees_.resize(static_cast<std::size_t>(n_threads_));
  }

  void init() {
    perf::TimerTree::Scope scope(main_tree_, "init");
    auto& ti = main_tree_;
    std::filesystem::create_directories(cfg_.out_dir);

    ti.start("lnd");
    check_surface();
    part_ = decomp::partition(n_land_, cfg_.lnd_workers, cfg_.scheme, cfg_.block_size);
    iod_ = decomp::build_iodecomp(part_);
    plan_ = decomp::make_plan(static_cast<std::uint64_t>(n_land_), std::min(cfg_.aggregators, cfg_.lnd_workers),
                              cfg_.lnd_workers, cfg_.buffer_limit);
    const auto n_lnd = static_cast<std::size_t>(cfg_.lnd_workers);
    state_.resize(n_lnd);
    sums_.resize(n_lnd);
    import_.resize(n_lnd);
    for (std::size_t r = 0; r < n_lnd; ++r) {
      const auto n = part_.local_lists[r].size();
      state_[r].assign(n, cfg_.initial.value_or(CellState{}));
      for (auto& s : sums_[r]) s.assign(n, 0.0);
      for (auto& f : import_[r]) f.assign(n, 0.0);
    }
    source_id_ = d_.provenance ? d_.provenance->source_id : d_.land_ids();
    ids_ = d_.land_ids();
    for (auto& v : l2x_) v.assign(static_cast<std::size_t>(n_land_), 0.0);
    ti.stop("lnd");

    ti.start("atm");
    std::unique_ptr<forcing::ForcingSource> src;
    if (cfg_.forcing_dir.empty()) {
      src = std::make_unique<forcing::SyntheticForcingSource>(cfg_.seed, forcing::forcing_keys(d_), cfg_.start);
    } else {
      src = std::make_unique<forcing::FileForcingSource>(cfg_.forcing_dir, cfg_.start, d_.fingerprint(), n_land_);
    }
    const auto atm_part = decomp::partition(n_land_, cfg_.atm_workers, decomp::Scheme::block);
    for (const auto& cells : atm_part.local_lists) {
      if (cells.empty()) {
        streams_.push_back(nullptr);
        continue;
      }
      streams_.push_back(std::make_unique<forcing::ForcingStream>(src->clone(), cells.front(), cells.back() + 1));
    }
    for (auto& v : x2l_) v.assign(static_cast<std::size_t>(n_land_), 0.0);
    ti.stop("atm");

    ti.start("cpl");
    // Coupler worker w routes fields to land ranks r with r % cpl_workers == w.
    cpl_routes_.resize(static_cast<std::size_t>(cfg_.cpl_workers));
    for (int r = 0; r < cfg_.lnd_workers; ++r) cpl_routes_[static_cast<std::size_t>(r % cfg_.cpl_workers)].push_back(r);
    ti.stop("cpl");
  }

  void start_fresh() {
    nstep_ = 0;
    hist_count_ = 0;
    hist_window_start_ = 0;
  }

  void load_restart();
  void advance(std::int64_t end_step, bool final_restart);
  RunResult result(std::int64_t first_step, double wall);

 private:
  void check_surface() const;
  void run_steps(std::int64_t n0, std::int64_t n1);
  void flush_history();
  void write_restart();
  std::vector<std::vector<double>> local_field(const std::function<double(std::size_t, std::size_t)>& f) const;
  decomp::WriteStats write_global(cdf::Writer& w, const std::string& name, const std::vector<double>& global);
  std::string where(std::int64_t cell, std::int64_t step) const {
    return fmt::format("gridcell {} at {}", ids_[static_cast<std::size_t>(cell)], stamp_at(cfg_.start, step * dt_));
  }

  CaseConfig cfg_;
  const domain::DomainSpec& d_;
  std::int64_t n_land_ = 0;
  std::int64_t dt_ = 1;
  int n_threads_ = 1;

  decomp::Partition part_;
  decomp::IoDecomp iod_;
  decomp::AggregatorPlan plan_;
  std::vector<std::unique_ptr<forcing::ForcingStream>> streams_;
  std::vector<std::vector<int>> cpl_routes_;

  // Land-rank-owned state, local order.
  std::vector<std::vector<CellState>> state_;
  std::vector<std::array<std::vector<double>, kHistVars>> sums_;
  std::vector<std::array<std::vector<double>, 3>> import_;  // TBOT, PRECT (mm/h), FSDS
  // Exchange buffers in global land order; each slot has one writer per phase.
  std::array<std::vector<double>, kX2l> x2l_;
  std::array<std::vector<double>, 2> l2x_;
  std::vector<std::int64_t> source_id_, ids_;

  std::int64_t nstep_ = 0;
  std::int64_t hist_count_ = 0;
  std::int64_t hist_window_start_ = 0;

  std::vector<perf::TimerTree> trees_;
  perf::TimerTree main_tree_;
  std::vector<std::filesystem::path> history_files_, restart_files_;
  std::vector<decomp::WriteStats> stats_;
};

void Case::check_surface() const {
  if (cfg_.surface_file.empty()) return;
  auto r = cdf::Reader::open(cfg_.surface_file);
  const auto fp = cdf::attr_number(r.model().global_attrs, "domain_fingerprint");
  if (!fp || static_cast<std::uint32_t>(*fp) != d_.fingerprint()) {
    throw ValidationError("surface file " + cfg_.surface_file.string() + " was built for a different domain");
  }
}

void Case::run_steps(std::int64_t n0, std::int64_t n1) {
  if (n1 <= n0) return;
  std::barrier sync(n_threads_);
  std::atomic<bool> failed{false};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_threads_));
  const auto& p = cfg_.params;
  const double dt = cfg_.dt_hours;

  auto worker = [&](int w) {
    auto& tree = trees_[static_cast<std::size_t>(w)];
    const auto wi = static_cast<std::size_t>(w);
    tree.start("run");
    for (std::int64_t n = n0; n < n1; ++n) {
      const double t = static_cast<double>(n * dt_);
      if (w < cfg_.atm_workers && streams_[wi]) {
        perf::TimerTree::Scope s(tree, "atm");
        try {
          auto& stream = *streams_[wi];
          const auto& rec = stream.at(t);
          const auto c0 = static_cast<std::size_t>(stream.c0());
          for (int v = 0; v < forcing::kNumVars; ++v) {
            const double per_hour = v == static_cast<int>(Var::PRECT) ? forcing::kHoursPerStep : 1.0;
            const auto& src = rec[static_cast<std::size_t>(v)];
            auto* dst = x2l_[static_cast<std::size_t>(v)].data() + c0;
            for (std::size_t k = 0; k < src.size(); ++k) dst[k] = src[k] / per_hour;
          }
        } catch (...) {
          errors[wi] = std::current_exception();
          failed = true;
        }
      }
      {
        perf::TimerTree::Scope s(tree, "barrier");
        sync.arrive_and_wait();
      }
      if (failed) break;
      if (w < cfg_.cpl_workers) {
        perf::TimerTree::Scope s(tree, "cpl");
        for (int r : cpl_routes_[wi]) {
          const auto& cells = part_.local_lists[static_cast<std::size_t>(r)];
          auto& imp = import_[static_cast<std::size_t>(r)];
          const std::array<Var, 3> fields{Var::TBOT, Var::PRECT, Var::FSDS};
          for (std::size_t f = 0; f < 3; ++f) {
            const auto& src = x2l_[static_cast<std::size_t>(fields[f])];
            for (std::size_t k = 0; k < cells.size(); ++k) imp[f][k] = src[static_cast<std::size_t>(cells[k])];
          }
        }
      }
      {
        perf::TimerTree::Scope s(tree, "barrier");
        sync.arrive_and_wait();
      }
      if (w < cfg_.lnd_workers) {
        perf::TimerTree::Scope s(tree, "lnd");
        const auto& cells = part_.local_lists[wi];
        auto& st = state_[wi];
        auto& sums = sums_[wi];
        const auto& imp = import_[wi];
        try {
          for (std::size_t k = 0; k < cells.size(); ++k) {
            const CellForcing f{imp[0][k], imp[1][k], imp[2][k]};
            if (!std::isfinite(f.tbot) || !std::isfinite(f.prect) || !std::isfinite(f.fsds)) {
              throw ValidationError("non-finite forcing at " + where(cells[k], n));
            }
            const auto r = step_cell(st[k], f, p, dt);
            st[k] = r.state;
            const auto h = hist_values(r.diag);
            for (int v = 0; v < kHistVars; ++v) sums[static_cast<std::size_t>(v)][k] += h[static_cast<std::size_t>(v)];
            const auto c = static_cast<std::size_t>(cells[k]);
            l2x_[0][c] = r.diag.qrunoff;
            l2x_[1][c] = r.diag.gpp;
          }
        } catch (...) {
          errors[wi] = std::current_exception();
          failed = true;
        }
      }
    }
    tree.stop("run");
  };

  std::vector<std::thread> threads;
  for (int w = 1; w < n_threads_; ++w) threads.emplace_back(worker, w);
  worker(0);
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  nstep_ = n1;
  hist_count_ += n1 - n0;
}

std::vector<std::vector<double>> Case::local_field(const std::function<double(std::size_t, std::size_t)>& f) const {
  std::vector<std::vector<double>> out(state_.size());
  for (std::size_t r = 0; r < state_.size(); ++r) {
    out[r].resize(state_[r].size());
    for (std::size_t k = 0; k < out[r].size(); ++k) out[r][k] = f(r, k);
  }
  return out;
}

decomp::WriteStats Case::write_global(cdf::Writer& w, const std::string& name, const std::vector<double>& global) {
  return decomp::rearrange_write(decomp::scatter<double>(iod_, global), iod_, plan_, w, name);
}

void Case::flush_history() {
  perf::TimerTree::Scope scope(main_tree_, "history");
  if (hist_count_ == 0) return;
  const auto path = cfg_.out_dir / history_file_name(cfg_.name, cfg_.start, hist_window_start_ * dt_);
  cdf::FileModel m;
  m.variant = cfg_.variant;
  m.add_dim("time", 0);
  m.add_dim("gridcell", static_cast<std::uint64_t>(n_land_));
  auto& time = m.add_var("time", cdf::Type::float64, {"time"});
  cdf::set_attr(time.attrs, "units", "hours since " + format_date(cfg_.start) + " 00:00:00");
  cdf::set_attr(time.attrs, "long_name", std::string("end of the averaging window"));
  for (int v = 0; v < kHistVars; ++v) {
    auto& var = m.add_var(kHistNames[static_cast<std::size_t>(v)], cdf::Type::float32, {"time", "gridcell"});
    cdf::set_attr(var.attrs, "units", std::string(kHistUnits[static_cast<std::size_t>(v)]));
    cdf::set_attr(var.attrs, "cell_methods", std::string("time: mean"));
  }
  auto& g = m.global_attrs;
  cdf::set_attr(g, "case", cfg_.name);
  cdf::set_attr(g, "compset", cfg_.compset);
  cdf::set_attr(g, "history_interval", std::string(history_interval_name(cfg_.history)));
  cdf::set_attr(g, "window_start", stamp_at(cfg_.start, hist_window_start_ * dt_));
  cdf::set_attr(g, "samples", std::vector<std::int64_t>{hist_count_});
  cdf::set_attr(g, "domain_fingerprint", std::vector<std::int64_t>{static_cast<std::int64_t>(d_.fingerprint())});

  cdf::Writer w(path, m);
  const std::vector<double> t{static_cast<double>(nstep_ * dt_)};
  w.write<double>("time", 0, 0, t);
  const double count = static_cast<double>(hist_count_);
  for (int v = 0; v < kHistVars; ++v) {
    std::vector<std::vector<float>> local(sums_.size());
    for (std::size_t r = 0; r < sums_.size(); ++r) {
      const auto& s = sums_[r][static_cast<std::size_t>(v)];
      local[r].resize(s.size());
      for (std::size_t k = 0; k < s.size(); ++k) local[r][k] = static_cast<float>(s[k] / count);
    }
    auto st = decomp::rearrange_write(local, iod_, plan_, w, kHistNames[static_cast<std::size_t>(v)], 0);
    stats_.push_back(st);
  }
  w.close();
  if (std::find(history_files_.begin(), history_files_.end(), path) == history_files_.end()) history_files_.push_back(path);

  if (cfg_.history != HistoryInterval::end_of_run) {
    for (auto& rank : sums_) {
      for (auto& s : rank) std::fill(s.begin(), s.end(), 0.0);
    }
    hist_count_ = 0;
    hist_window_start_ = nstep_;
  }
}

void Case::write_restart() {
  perf::TimerTree::Scope scope(main_tree_, "restart");
  const auto hours = nstep_ * dt_;
  const auto n = static_cast<std::uint64_t>(n_land_);

  auto common = [&](cdf::FileModel& m) {
    m.variant = cfg_.variant;
    auto& g = m.global_attrs;
    cdf::set_attr(g, "case", cfg_.name);
    cdf::set_attr(g, "compset", cfg_.compset);
    cdf::set_attr(g, "case_start", format_date(cfg_.start));
    cdf::set_attr(g, "restart_time", stamp_at(cfg_.start, hours));
    cdf::set_attr(g, "nstep", std::vector<std::int64_t>{nstep_});
    cdf::set_attr(g, "dt_hours", std::vector<double>{cfg_.dt_hours});
    cdf::set_attr(g, "n_land", std::vector<std::int64_t>{n_land_});
    cdf::set_attr(g, "domain_fingerprint", std::vector<std::int64_t>{static_cast<std::int64_t>(d_.fingerprint())});
  };

  // Variables in global land order, each with its checksum attribute.
  auto write_file = [&](const std::string& component, const std::vector<std::pair<std::string, cdf::VarData>>& vars,
                        const std::function<void(cdf::FileModel&)>& extra) {
    const auto path = cfg_.out_dir / restart_file_name(cfg_.name, component, cfg_.start, hours);
    cdf::FileModel m;
    common(m);
    extra(m);
    m.add_dim("gridcell", n);
    for (const auto& [name, data] : vars) {
      const bool scalar = cdf::element_count(data) == 1 && name.rfind("hist_", 0) == 0;
      const auto type = std::holds_alternative<std::vector<std::int64_t>>(data) ? cdf::Type::int64 : cdf::Type::float64;
      auto& v = m.add_var(name, type, scalar ? std::vector<std::string>{} : std::vector<std::string>{"gridcell"});
      cdf::set_attr(v.attrs, "checksum", std::vector<std::int64_t>{checksum_of(data)});
    }
    cdf::Writer w(path, m);
    for (const auto& [name, data] : vars) {
      if (m.var(name).dimids.empty()) {
        std::visit([&](const auto& vec) { w.write(name, 0, 0, std::span(vec)); }, data);
      } else if (const auto* dv = std::get_if<std::vector<double>>(&data)) {
        stats_.push_back(write_global(w, name, *dv));
      } else {
        const auto& iv = std::get<std::vector<std::int64_t>>(data);
        stats_.push_back(decomp::rearrange_write(decomp::scatter<std::int64_t>(iod_, iv), iod_, plan_, w, name));
      }
    }
    w.close();
    restart_files_.push_back(path);
    return path;
  };

  std::vector<std::pair<std::string, cdf::VarData>> elm;
  elm.emplace_back("source_id", source_id_);
  const std::array<double CellState::*, 5> members{&CellState::swe, &CellState::soil_water, &CellState::soil_temp,
                                                   &CellState::c_leaf, &CellState::c_soil};
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto m = members[i];
    elm.emplace_back(kStateNames[i], decomp::gather(iod_, local_field([&](auto r, auto k) { return state_[r][k].*m; })));
  }
  for (std::size_t v = 0; v < kHistVars; ++v) {
    elm.emplace_back(std::string("hsum_") + kHistNames[v],
                     decomp::gather(iod_, local_field([&](auto r, auto k) { return sums_[r][v][k]; })));
  }
  const auto elm_path = write_file("elm.r", elm, [&](cdf::FileModel& m) {
    cdf::set_attr(m.global_attrs, "hist_count", std::vector<std::int64_t>{hist_count_});
    for (const auto& [k, v] : cfg_.params.to_map()) cdf::set_attr(m.global_attrs, "toy_" + k, std::vector<double>{v});
  });

  std::vector<std::pair<std::string, cdf::VarData>> cpl;
  for (const auto& spec : forcing::standard_variables()) {
    cpl.emplace_back("x2l_" + std::string(spec.name), x2l_[static_cast<std::size_t>(spec.var)]);
  }
  for (std::size_t i = 0; i < 2; ++i) cpl.emplace_back(std::string("l2x_") + kL2xNames[i], l2x_[i]);
  write_file("cpl.r", cpl, [](cdf::FileModel&) {});

  const double t = static_cast<double>(hours);
  const auto lo = static_cast<std::int64_t>(std::floor(t / forcing::kHoursPerStep));
  write_file("datm.r",
             {{"hist_stream_hours", std::vector<double>{t}},
              {"hist_stream_lo_record", std::vector<std::int64_t>{lo}},
              {"hist_stream_hi_record", std::vector<std::int64_t>{lo + 1}}},
             [&](cdf::FileModel& m) {
               cdf::set_attr(m.global_attrs, "stream_start", format_date(cfg_.start));
               cdf::set_attr(m.global_attrs, "stream_source", std::string(cfg_.forcing_dir.empty() ? "synthetic" : "files"));
               cdf::set_attr(m.global_attrs, "seed", std::vector<std::int64_t>{static_cast<std::int64_t>(cfg_.seed)});
             });

  write_file("elm.rh0",
             {{"hist_count", std::vector<std::int64_t>{hist_count_}},
              {"hist_window_start", std::vector<std::int64_t>{hist_window_start_}}},
             [&](cdf::FileModel& m) {
               cdf::set_attr(m.global_attrs, "history_interval", std::string(history_interval_name(cfg_.history)));
               cdf::set_attr(m.global_attrs, "history_file",
                             history_file_name(cfg_.name, cfg_.start, hist_window_start_ * dt_));
             });

  std::ofstream ptr(cfg_.out_dir / "rpointer.lnd");
  if (!ptr) throw IoError("cannot write rpointer.lnd in " + cfg_.out_dir.string());
  ptr << elm_path.filename().string() << "\n" << stamp_at(cfg_.start, hours) << "\n";
}

void Case::load_restart() {
  perf::TimerTree::Scope scope(main_tree_, "restart_read");
  std::ifstream ptr(cfg_.out_dir / "rpointer.lnd");
  if (!ptr) throw IoError("no rpointer.lnd in " + cfg_.out_dir.string());
  std::string elm_name, stamp;
  std::getline(ptr, elm_name);
  std::getline(ptr, stamp);
  const std::string prefix = cfg_.name + ".elm.r.";
  if (elm_name.rfind(prefix, 0) != 0) {
    throw ValidationError("rpointer.lnd names " + elm_name + ", which does not belong to case " + cfg_.name);
  }
  auto open = [&](const std::string& component) {
    const auto path = cfg_.out_dir / fmt::format("{}.{}.{}.nc", cfg_.name, component, stamp);
    if (!std::filesystem::exists(path)) throw IoError("restart bundle incomplete: missing " + path.string());
    return cdf::Reader::open(path);
  };
  auto read_checked = [](cdf::Reader& r, const std::string& name) {
    const auto data = r.read_all(name);
    const auto want = cdf::attr_number(r.model().var(name).attrs, "checksum");
    if (!want || static_cast<std::int64_t>(*want) != checksum_of(data)) {
      throw IntegrityError(fmt::format("restart variable {} fails its checksum", name));
    }
    return data;
  };
  auto number = [](const cdf::Reader& r, const char* key) {
    const auto v = cdf::attr_number(r.model().global_attrs, key);
    if (!v) throw IntegrityError(std::string("restart file lacks attribute ") + key);
    return *v;
  };

  auto elm = open("elm.r");
  const auto& g = elm.model().global_attrs;
  if (cdf::attr_text(g, "case_start") != format_date(cfg_.start)) {
    throw ValidationError("restart bundle belongs to a case starting " + cdf::attr_text(g, "case_start").value_or("?"));
  }
  if (number(elm, "dt_hours") != cfg_.dt_hours) throw ValidationError("restart bundle used a different time step");
  if (static_cast<std::int64_t>(number(elm, "n_land")) != n_land_ ||
      static_cast<std::uint32_t>(number(elm, "domain_fingerprint")) != d_.fingerprint()) {
    throw ValidationError("restart bundle was written for a different domain");
  }
  for (const auto& [k, v] : cfg_.params.to_map()) {
    const auto got = cdf::attr_number(g, "toy_" + k);
    if (!got || *got != v) throw ValidationError("restart bundle comes from a different parameter set (" + k + ")");
  }
  nstep_ = static_cast<std::int64_t>(number(elm, "nstep"));
  hist_count_ = static_cast<std::int64_t>(number(elm, "hist_count"));

  if (cdf::Reader::convert<std::int64_t>(read_checked(elm, "source_id")) != source_id_) {
    throw ValidationError("restart bundle cell order differs from the domain");
  }
  const std::array<double CellState::*, 5> members{&CellState::swe, &CellState::soil_water, &CellState::soil_temp,
                                                   &CellState::c_leaf, &CellState::c_soil};
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto global = cdf::Reader::convert<double>(read_checked(elm, kStateNames[i]));
    const auto local = decomp::scatter<double>(iod_, global);
    for (std::size_t r = 0; r < local.size(); ++r) {
      for (std::size_t k = 0; k < local[r].size(); ++k) state_[r][k].*members[i] = local[r][k];
    }
  }
  for (std::size_t v = 0; v < kHistVars; ++v) {
    const auto global = cdf::Reader::convert<double>(read_checked(elm, std::string("hsum_") + kHistNames[v]));
    const auto local = decomp::scatter<double>(iod_, global);
    for (std::size_t r = 0; r < local.size(); ++r) sums_[r][v] = local[r];
  }

  auto cpl = open("cpl.r");
  for (const auto& spec : forcing::standard_variables()) {
    x2l_[static_cast<std::size_t>(spec.var)] = cdf::Reader::convert<double>(read_checked(cpl, "x2l_" + std::string(spec.name)));
  }
  for (std::size_t i = 0; i < 2; ++i) l2x_[i] = cdf::Reader::convert<double>(read_checked(cpl, std::string("l2x_") + kL2xNames[i]));

  auto datm = open("datm.r");
  const auto hours = cdf::Reader::convert<double>(read_checked(datm, "hist_stream_hours"));
  if (hours.at(0) != static_cast<double>(nstep_ * dt_)) throw IntegrityError("atmosphere restart disagrees with the land restart");

  auto rh0 = open("elm.rh0");
  const auto count = cdf::Reader::convert<std::int64_t>(read_checked(rh0, "hist_count"));
  if (count.at(0) != hist_count_) throw IntegrityError("history restart disagrees with the land restart");
  hist_window_start_ = cdf::Reader::convert<std::int64_t>(read_checked(rh0, "hist_window_start")).at(0);
  if (cdf::attr_text(rh0.model().global_attrs, "history_interval") != history_interval_name(cfg_.history)) {
    throw ValidationError("restart bundle used a different history interval");
  }
}

void Case::advance(std::int64_t end_step, bool final_restart) {
  const auto spd = cfg_.steps_per_day();
  auto history_due = [&](std::int64_t n) {
    switch (cfg_.history) {
      case HistoryInterval::end_of_run: return n == end_step;
      case HistoryInterval::daily: return n % spd == 0;
      case HistoryInterval::hourly: return true;
      case HistoryInterval::none: return false;
    }
    return false;
  };
  auto restart_due = [&](std::int64_t n) {
    if (final_restart && n == end_step) return true;
    switch (cfg_.restart.kind) {
      case RestartKind::end_of_run: return n == end_step;
      case RestartKind::every_n_days: return n % (cfg_.restart.n_days * spd) == 0;
      case RestartKind::none: return false;
    }
    return false;
  };
  if (nstep_ == end_step) {
    if (history_due(nstep_) && cfg_.history == HistoryInterval::end_of_run) flush_history();
    if (restart_due(nstep_)) write_restart();
    return;
  }
  while (nstep_ < end_step) {
    auto next = nstep_ + 1;
    while (next < end_step && !history_due(next) && !restart_due(next)) ++next;
    run_steps(nstep_, next);
    if (history_due(nstep_)) flush_history();
    if (restart_due(nstep_)) write_restart();
  }
}

RunResult Case::result(std::int64_t first_step, double wall) {
  RunResult r;
  r.n_land = n_land_;
  r.first_step = first_step;
  r.end_step = nstep_;
  r.history_files = history_files_;
  r.restart_files = restart_files_;
  r.write_stats = stats_;
  r.wall_seconds = wall;
  std::vector<perf::TimerTree> all{main_tree_};
  all.insert(all.end(), trees_.begin(), trees_.end());
  r.timers = perf::merge(all);
  auto max_of = [&](const std::string& path) {
    double m = 0.0;
    for (const auto& t : trees_) m = std::max(m, t.seconds(path));
    return m;
  };
  r.components["ATM"] = {main_tree_.seconds("init/atm"), max_of("run/atm")};
  r.components["CPL"] = {main_tree_.seconds("init/cpl"), max_of("run/cpl")};
  r.components["LND"] = {main_tree_.seconds("init/lnd"), max_of("run/lnd")};
  r.final_state.resize(static_cast<std::size_t>(n_land_));
  for (std::size_t rank = 0; rank < state_.size(); ++rank) {
    const auto& cells = part_.local_lists[rank];
    for (std::size_t k = 0; k < cells.size(); ++k) r.final_state[static_cast<std::size_t>(cells[k])] = state_[rank][k];
  }
  return r;
}

}  // namespace

RunResult run_case(const CaseConfig& cfg, const domain::DomainSpec& d) {
  const auto t0 = std::chrono::steady_clock::now();
  Case c(cfg, d);
  c.init();
  c.start_fresh();
  c.advance(cfg.total_steps(), false);
  return c.result(0, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

RunResult run_case(const CaseConfig& cfg) {
  cfg.validate();
  const auto d = load_case_domain(cfg);
  return run_case(cfg, d);
}

RunResult resume_case(const CaseConfig& cfg, const domain::DomainSpec& d, int extra_days) {
  if (extra_days < 0) throw ValidationError("extra_days must be >= 0");
  const auto t0 = std::chrono::steady_clock::now();
  Case c(cfg, d);
  c.init();
  c.load_restart();
  const auto first = c.result(0, 0.0).end_step;
  c.advance(first + extra_days * cfg.steps_per_day(), true);
  return c.result(first, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

RunResult resume_case(const CaseConfig& cfg, int extra_days) {
  cfg.validate();
  const auto d = load_case_domain(cfg);
  return resume_case(cfg, d, extra_days);
}

bool SpinupMetrics::converged(double tol) const {
  for (const auto& pool : rel_change) {
    if (pool.empty() || pool.back() > tol) return false;
  }
  return true;
}

SpinupMetrics spinup_check(const std::vector<std::vector<std::vector<double>>>& cycle_means,
                           std::vector<std::string> pools) {
  if (cycle_means.size() < 2) throw ValidationError("spinup_check needs at least two forcing cycles");
  SpinupMetrics m;
  m.pools = std::move(pools);
  m.rel_change.assign(m.pools.size(), {});
  for (std::size_t k = 1; k < cycle_means.size(); ++k) {
    for (std::size_t p = 0; p < m.pools.size(); ++p) {
      const auto& a = cycle_means[k - 1].at(p);
      const auto& b = cycle_means[k].at(p);
      if (a.size() != b.size()) throw ValidationError("spinup_check: cell count changes between cycles");
      double worst = 0.0;
      for (std::size_t c = 0; c < a.size(); ++c) worst = std::max(worst, std::abs(b[c] - a[c]) / std::max(std::abs(a[c]), 1e-30));
      m.rel_change[p].push_back(worst);
    }
  }
  return m;
}

std::vector<std::array<double, 2>> run_cell_cycles(CellState s, const std::vector<CellForcing>& forcing,
                                                   const ToyParams& p, double dt, int cycles) {
  if (forcing.empty()) throw ValidationError("run_cell_cycles: empty forcing cycle");
  std::vector<std::array<double, 2>> out;
  for (int c = 0; c < cycles; ++c) {
    std::array<double, 2> sum{0.0, 0.0};
    for (const auto& f : forcing) {
      s = step_cell(s, f, p, dt).state;
      sum[0] += s.c_leaf;
      sum[1] += s.c_soil;
    }
    out.push_back({sum[0] / static_cast<double>(forcing.size()), sum[1] / static_cast<double>(forcing.size())});
  }
  return out;
}

}  // namespace kiloland::landsim
