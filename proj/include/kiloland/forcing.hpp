#pragma once

// Atmospheric forcing: daily-to-3-hourly temporal downscaling, synthetic
// daily inputs, monthly land-compacted files and the interpolating stream
// read by the data atmosphere.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kiloland/calendar.hpp"
#include "kiloland/domain.hpp"

namespace kiloland::cdf {
class Reader;
}

namespace kiloland::forcing {

enum class Var : int { TBOT = 0, PSRF, QBOT, WIND, FLDS, FSDS, PRECT };
inline constexpr int kNumVars = 7;
inline constexpr int kStepsPerDay = 8;
inline constexpr int kHoursPerStep = 3;

enum class DownscaleMode { additive, multiplicative, sum_preserving };
enum class InterpMode { linear, nearest };

struct VariableSpec {
  Var var;
  std::string_view name;
  std::string_view units;  // units of the 3-hourly record
  std::string_view long_name;
  DownscaleMode downscale;
  InterpMode interp;
  std::string_view group;  // file group
};

const std::array<VariableSpec, kNumVars>& standard_variables();
const VariableSpec& spec(Var v);
std::optional<Var> find_variable(std::string_view name);
inline constexpr std::array<std::string_view, 3> kGroups{"TPQWL", "Solar", "Prec"};
std::vector<Var> group_variables(std::string_view group);

using Shape = std::array<double, kStepsPerDay>;

/// Spreads one daily value over the 8 three-hourly steps of the day.
Shape downscale_day(double daily, const Shape& shape, DownscaleMode mode);

/// The aggregate that downscaling preserves: left-to-right mean, or sum for
/// sum_preserving.
double daily_aggregate(std::span<const double> steps, DownscaleMode mode);

/// Daily inputs over a period: values[var][day * n_cells + cell].
struct DailyFields {
  Date start;
  int n_days = 0;
  std::int64_t n_cells = 0;
  std::array<std::vector<double>, kNumVars> values;

  double at(Var v, int day, std::int64_t cell) const {
    return values[static_cast<int>(v)][static_cast<std::size_t>(day * n_cells + cell)];
  }
};

/// Sub-daily reference shapes: shapes[var][day].
struct ShapeProfiles {
  Date start;
  int n_days = 0;
  std::string source = "synthetic";
  std::array<std::vector<Shape>, kNumVars> shapes;
};

/// One month of 3-hourly forcing: values[var][step * n_land + cell].
/// Held in double precision; files store FLOAT32.
struct ForcingMonth {
  int year = 0;
  int month = 0;
  int n_steps = 0;
  std::int64_t n_land = 0;
  std::array<std::vector<double>, kNumVars> values;
  std::vector<double> time;  // hours since the start of the month

  double at(Var v, int step, std::int64_t cell) const {
    return values[static_cast<int>(v)][static_cast<std::size_t>(step * n_land + cell)];
  }
};

/// Per-cell daily value of the synthetic generator. Pure in its arguments, so
/// replicated cells sharing a key receive identical forcing.
double synth_daily(std::uint64_t seed, Var v, std::int64_t key, const Date& date);
Shape synth_shape(std::uint64_t seed, Var v, const Date& date);

struct SynthForcing {
  DailyFields daily;
  ShapeProfiles profiles;
};

SynthForcing synth_forcing(std::uint64_t seed, std::span<const std::int64_t> keys, const Date& start, int n_days);
/// Keys are the land cells' source IDs (provenance) or gridcell IDs.
SynthForcing synth_forcing(std::uint64_t seed, const domain::DomainSpec& d, const Date& start, int n_days);
std::vector<std::int64_t> forcing_keys(const domain::DomainSpec& d);

/// Downscales every cell/day/variable of one calendar month. With a domain the
/// daily fields are full-grid and the result is land-compacted.
ForcingMonth downscale_month(const DailyFields& daily, const ShapeProfiles& profiles, int year, int month);
ForcingMonth downscale_month(const DailyFields& daily, const ShapeProfiles& profiles, int year, int month,
                             const domain::DomainSpec& d);

std::filesystem::path month_file(const std::filesystem::path& dir, std::string_view group, int year, int month);

struct FileTag {
  std::uint32_t domain_fingerprint = 0;
  std::int64_t n_land = 0;
  std::uint64_t seed = 0;
};

/// Writes the three group files of a month; returns their paths.
std::vector<std::filesystem::path> write_month(const std::filesystem::path& dir, const ForcingMonth& m,
                                               const FileTag& tag);
ForcingMonth read_month(const std::filesystem::path& dir, int year, int month);

/// Generates synthetic forcing files for every month touched by
/// [start, start + n_days] inclusive of the closing instant.
std::vector<std::filesystem::path> gen_forcing(const std::filesystem::path& dir, std::uint64_t seed,
                                               const domain::DomainSpec& d, const Date& start, int n_days);

using Record = std::array<std::vector<double>, kNumVars>;

/// Random access to 3-hourly records counted from 00:00 of the stream start date.
class ForcingSource {
 public:
  virtual ~ForcingSource() = default;
  virtual std::int64_t n_land() const = 0;
  virtual const Date& start() const = 0;
  /// Fills out[var][cell - c0] for cells [c0, c1) of record `rec`.
  virtual void read_record(std::int64_t rec, std::int64_t c0, std::int64_t c1, Record& out) = 0;
  /// Independent instance for use on another thread.
  virtual std::unique_ptr<ForcingSource> clone() const = 0;
};

/// Monthly files written by gen_forcing / write_month.
class FileForcingSource final : public ForcingSource {
 public:
  FileForcingSource(std::filesystem::path dir, const Date& start, std::uint32_t fingerprint, std::int64_t n_land);
  ~FileForcingSource() override;
  std::int64_t n_land() const override { return n_land_; }
  const Date& start() const override { return start_; }
  void read_record(std::int64_t rec, std::int64_t c0, std::int64_t c1, Record& out) override;
  std::unique_ptr<ForcingSource> clone() const override;

 private:
  void open_month(int year, int month);

  std::filesystem::path dir_;
  Date start_;
  std::uint32_t fingerprint_;
  std::int64_t n_land_;
  int open_year_ = 0, open_month_ = 0;
  std::vector<std::unique_ptr<cdf::Reader>> readers_;  // one per group
};

/// Computes records on the fly from synth_daily/synth_shape, rounded to FLOAT32
/// exactly as files store them.
class SyntheticForcingSource final : public ForcingSource {
 public:
  SyntheticForcingSource(std::uint64_t seed, std::vector<std::int64_t> keys, const Date& start);
  std::int64_t n_land() const override { return static_cast<std::int64_t>(keys_.size()); }
  const Date& start() const override { return start_; }
  void read_record(std::int64_t rec, std::int64_t c0, std::int64_t c1, Record& out) override;
  std::unique_ptr<ForcingSource> clone() const override;

 private:
  std::uint64_t seed_;
  std::vector<std::int64_t> keys_;
  Date start_;
};

/// Temporal interpolation over a cell range, caching the two bracketing records.
class ForcingStream {
 public:
  ForcingStream(std::unique_ptr<ForcingSource> source, std::int64_t c0, std::int64_t c1);

  /// Fields at `hours` after 00:00 of the stream start: linear between
  /// bracketing records, nearest (left-closed) for nearest-mode variables.
  const Record& at(double hours);
  std::int64_t c0() const { return c0_; }
  std::int64_t c1() const { return c1_; }
  const Date& start() const { return source_->start(); }

 private:
  const Record& record(std::int64_t rec);

  std::unique_ptr<ForcingSource> source_;
  std::int64_t c0_, c1_;
  std::array<std::int64_t, 2> cached_{-1, -1};
  std::array<Record, 2> cache_;
  int next_slot_ = 0;
  Record out_;
};

}  // namespace kiloland::forcing
