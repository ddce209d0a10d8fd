#pragma once

// Case driver: data atmosphere, coupler, an independent-column toy land model,
// history averaging and restart bundles.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kiloland/calendar.hpp"
#include "kiloland/cdf5.hpp"
#include "kiloland/config.hpp"
#include "kiloland/decomp.hpp"
#include "kiloland/domain.hpp"
#include "kiloland/forcing.hpp"
#include "kiloland/timer.hpp"

namespace kiloland::landsim {

struct ToyParams {
  double melt_factor = 0.2;       // mm/K/h
  double w_cap = 200.0;           // mm
  double et_coeff = 1e-3;         // mm m2/(W h)
  double temp_tau = 48.0;         // h
  double gpp_coeff = 5e-4;        // gC m2/(W h)
  double alloc = 0.5;
  double k_leaf = 1e-4;           // 1/h
  double k_soil = 1e-5;           // 1/h
  double lai_per_c = 0.02;        // m2/gC
  double snow_cover_scale = 10.0; // mm
  double rain_snow_threshold = 273.15;

  void validate() const;
  /// Named values, used as restart attributes ("toy_<name>") and config keys.
  std::map<std::string, double> to_map() const;
  static ToyParams from_map(const std::map<std::string, double>& values);
  friend bool operator==(const ToyParams&, const ToyParams&) = default;
};

struct CellState {
  double swe = 0.0;
  double soil_water = 100.0;
  double soil_temp = 273.15;
  double c_leaf = 10.0;
  double c_soil = 50.0;
  friend bool operator==(const CellState&, const CellState&) = default;
};

/// Forcing seen by one cell in one step; PRECT is a rate in mm/h.
struct CellForcing {
  double tbot = 273.15;
  double prect = 0.0;
  double fsds = 0.0;
};

struct Diagnostics {
  double fsno = 0.0;
  double h2osoi = 0.0;
  double tlai = 0.0;
  double tsoi = 0.0;
  double qrunoff = 0.0;  // mm/h
  double gpp = 0.0;      // gC/m2/h
  // Step totals in mm, for water accounting.
  double snow = 0.0, rain = 0.0, melt = 0.0, et = 0.0, runoff = 0.0;
};

struct StepResult {
  CellState state;
  Diagnostics diag;
};

/// One step of the toy column model. Evapotranspiration is limited to the
/// water available in the step, so water is conserved.
StepResult step_cell(const CellState& s, const CellForcing& f, const ToyParams& p, double dt);

inline constexpr int kHistVars = 6;
inline constexpr std::array<const char*, kHistVars> kHistNames{"FSNO", "H2OSOI", "TLAI", "TSOI", "QRUNOFF", "GPP"};
inline constexpr std::array<const char*, kHistVars> kHistUnits{"1", "mm", "m2/m2", "K", "mm/h", "gC/m2/h"};
inline constexpr std::array<const char*, 5> kStateNames{"swe", "soil_water", "soil_temp", "c_leaf", "c_soil"};

inline std::array<double, kHistVars> hist_values(const Diagnostics& d) {
  return {d.fsno, d.h2osoi, d.tlai, d.tsoi, d.qrunoff, d.gpp};
}

enum class HistoryInterval { end_of_run, daily, hourly, none };
enum class RestartKind { end_of_run, none, every_n_days };

HistoryInterval parse_history_interval(const std::string& s);
const char* history_interval_name(HistoryInterval h);

struct RestartInterval {
  RestartKind kind = RestartKind::end_of_run;
  int n_days = 0;
};
RestartInterval parse_restart_interval(const std::string& s);  // "end_of_run", "none", "every_<n>_days"
std::string restart_interval_name(const RestartInterval& r);

struct CaseConfig {
  std::string name = "case";
  std::string compset = "I1850-toy";
  /// "aksp_mini" selects the built-in mini domain; otherwise a domain file.
  std::string domain = "aksp_mini";
  std::filesystem::path forcing_dir;  // empty: synthetic forcing computed on the fly
  std::filesystem::path surface_file;  // optional; checked against the domain
  Date start{2014, 1, 1};
  int n_days = 5;
  double dt_hours = 1.0;
  HistoryInterval history = HistoryInterval::end_of_run;
  RestartInterval restart{};
  int atm_workers = 1;
  int cpl_workers = 1;
  int lnd_workers = 1;
  decomp::Scheme scheme = decomp::Scheme::round_robin;
  std::int64_t block_size = decomp::kDefaultBlockSize;
  int aggregators = 1;
  std::uint64_t buffer_limit = decomp::kDefaultBufferLimit;
  std::int64_t replicate = 1;
  std::uint64_t seed = 1;
  cdf::Variant variant = cdf::Variant::cdf5;
  ToyParams params{};
  std::optional<CellState> initial;  // default CellState when empty
  std::filesystem::path out_dir = ".";

  void validate() const;
  std::int64_t steps_per_day() const { return static_cast<std::int64_t>(24.0 / dt_hours); }
  std::int64_t total_steps() const { return n_days * steps_per_day(); }
  void set_workers(int n) { atm_workers = cpl_workers = lnd_workers = n; }

  /// Keys: case.name, case.compset, case.domain, case.forcing, case.surface,
  /// case.start, case.n_days, case.dt_hours, case.history, case.restart,
  /// case.workers, case.{atm,cpl,lnd}_workers, case.scheme, case.block_size,
  /// case.replicate, case.seed, case.param.<name>, io.aggregators,
  /// io.buffer_limit, io.format, io.out_dir.
  static CaseConfig from_config(const Config& c);
  Config to_config() const;
};

/// Domain named by the config, replicated as requested.
domain::DomainSpec load_case_domain(const CaseConfig& cfg);

struct ComponentTiming {
  double init = 0.0;
  double run = 0.0;
};

struct RunResult {
  std::int64_t n_land = 0;
  std::int64_t first_step = 0;
  std::int64_t end_step = 0;
  std::vector<std::filesystem::path> history_files;
  std::vector<std::filesystem::path> restart_files;
  std::map<std::string, ComponentTiming> components;  // ATM, CPL, LND
  std::vector<perf::MergedRegion> timers;
  std::vector<decomp::WriteStats> write_stats;
  std::vector<CellState> final_state;  // land order
  double wall_seconds = 0.0;
};

RunResult run_case(const CaseConfig& cfg);
/// Uses an already-built domain (the config's domain/replicate are ignored).
RunResult run_case(const CaseConfig& cfg, const domain::DomainSpec& d);

/// Continues the case from the restart named by <out_dir>/rpointer.lnd for
/// extra_days more days, ending with a restart bundle.
RunResult resume_case(const CaseConfig& cfg, int extra_days);
RunResult resume_case(const CaseConfig& cfg, const domain::DomainSpec& d, int extra_days);

std::string history_file_name(const std::string& case_name, const Date& start, std::int64_t hours);
std::string restart_file_name(const std::string& case_name, const std::string& component, const Date& start,
                              std::int64_t hours);

struct SpinupMetrics {
  // rel_change[pool][cycle - 1]: max over cells of |x_k - x_{k-1}| / max(|x_{k-1}|, 1e-30) for cycle means.
  std::vector<std::vector<double>> rel_change;
  std::vector<std::string> pools;
  bool converged(double tol) const;
};

/// `cycle_means[cycle][pool][cell]`: per-cycle mean of each pool.
SpinupMetrics spinup_check(const std::vector<std::vector<std::vector<double>>>& cycle_means,
                           std::vector<std::string> pools = {"c_leaf", "c_soil"});

/// Steps one cell through `forcing` repeated `cycles` times, returning per-cycle means of c_leaf and c_soil.
std::vector<std::array<double, 2>> run_cell_cycles(CellState s, const std::vector<CellForcing>& forcing,
                                                   const ToyParams& p, double dt, int cycles);

}  // namespace kiloland::landsim
