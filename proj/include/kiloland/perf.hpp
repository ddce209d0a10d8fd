#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "kiloland/landsim.hpp"

namespace kiloland::perf {

/// Simulated years per wall-clock day with a 365-day year.
double compute_sypd(double wall_seconds, double sim_days);

struct ScalingRecord {
  std::string case_name;
  std::string component = "LND";  // ATM, CPL or LND
  std::int64_t cores = 1;
  double init_seconds = 0.0;
  double run_seconds = 0.0;
  double sim_days = 5.0;
  double cells_per_core = 0.0;
  std::string source = "measured";  // measured, oversubscribed or model

  double sypd() const { return compute_sypd(run_seconds, sim_days); }
};

/// Speedup and efficiency of each record relative to the baseline run time.
struct ScalingTable {
  std::vector<ScalingRecord> records;
  std::size_t baseline = 0;
  std::vector<double> speedup;
  std::vector<double> ideal;
  std::vector<double> efficiency;
};

ScalingTable speedup_table(std::vector<ScalingRecord> records, std::size_t baseline = 0);

/// T_base / T_i per record; cells_per_core must agree within 5% when given.
std::vector<double> weak_efficiency(const std::vector<ScalingRecord>& records, std::size_t baseline = 0);

/// Weak-scaling table: ideal speedup P_i/P_base, actual (P_i/P_base)(T_base/T_i).
ScalingTable weak_table(std::vector<ScalingRecord> records, std::size_t baseline = 0);

struct Bandwidth {
  double mib_per_s = 0.0;
  double gib_per_s = 0.0;
};

/// Decimal gigabytes (1 GB = 1e9 B) over seconds, in binary units.
Bandwidth bandwidth(double decimal_gb, double seconds);

struct CostModel {
  double c_cell = 0.0;  // seconds per cell-step
  double c_sync = 0.0;  // seconds per step per log2(P)
  std::vector<std::pair<std::int64_t, double>> c_io_read;  // (P, seconds), piecewise linear in P
  bool calibrated = false;

  double io_read(std::int64_t p) const;
};

/// c_cell from the 1-worker run; c_sync from the multi-worker runs when present.
CostModel calibrate(const std::vector<ScalingRecord>& lnd_runs, std::int64_t n_cells, std::int64_t n_steps);

/// T(P) = c_cell N n_steps / P + c_sync n_steps log2(max(P, 2)) + io_read(P); records labeled "model".
ScalingTable predict_times(const CostModel& model, std::int64_t n_cells, std::int64_t n_steps,
                           const std::vector<std::int64_t>& cores, double sim_days = 5.0,
                           const std::string& case_name = "prediction");

/// Columns: case, component, phase, cores, seconds, sypd, speedup, efficiency, source.
void write_scaling_csv(const std::filesystem::path& path, const std::vector<ScalingTable>& tables);
std::vector<ScalingRecord> read_scaling_csv(const std::filesystem::path& path);

/// Bar chart of ideal vs actual speedup with efficiency labels.
std::string speedup_svg(const ScalingTable& table, const std::string& title);

enum class SuiteMode { strong, weak };
SuiteMode parse_suite_mode(const std::string& s);

struct SuiteConfig {
  SuiteMode mode = SuiteMode::strong;
  std::vector<int> workers{1, 2, 4};
  std::int64_t n_cells = 100000;          // strong mode, land cells
  std::int64_t cells_per_worker = 1700;   // weak mode
  landsim::CaseConfig base;               // days, dt, seed, params and output settings
  std::filesystem::path out_dir;
  bool check_outputs = true;
  /// Allows worker counts above the machine's core count; records are labeled "oversubscribed".
  bool oversubscribe = false;
};

struct SuiteResult {
  std::map<std::string, ScalingTable> tables;  // by component
  std::vector<std::string> equivalence;         // one verdict line per checked run
  bool outputs_equivalent = true;
  std::filesystem::path csv;
  std::filesystem::path svg;
};

/// Index-only synthetic domain with exactly n_land land cells.
domain::DomainSpec synthetic_domain(std::int64_t n_land, std::uint64_t seed = 11);

SuiteResult run_scaling_suite(const SuiteConfig& cfg);

}  // namespace kiloland::perf
