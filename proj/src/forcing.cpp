#include "kiloland/forcing.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "kiloland/cdf5.hpp"
#include "kiloland/error.hpp"
#include "kiloland/rng.hpp"

namespace kiloland::forcing {

namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

constexpr std::array<VariableSpec, kNumVars> kSpecs{{
    {Var::TBOT, "TBOT", "K", "air temperature at reference height", DownscaleMode::additive, InterpMode::linear,
     "TPQWL"},
    {Var::PSRF, "PSRF", "Pa", "surface pressure", DownscaleMode::additive, InterpMode::linear, "TPQWL"},
    {Var::QBOT, "QBOT", "kg/kg", "specific humidity", DownscaleMode::multiplicative, InterpMode::linear, "TPQWL"},
    {Var::WIND, "WIND", "m/s", "wind speed", DownscaleMode::multiplicative, InterpMode::linear, "TPQWL"},
    {Var::FLDS, "FLDS", "W/m2", "incident longwave radiation", DownscaleMode::multiplicative, InterpMode::linear,
     "TPQWL"},
    {Var::FSDS, "FSDS", "W/m2", "incident shortwave radiation", DownscaleMode::multiplicative, InterpMode::linear,
     "Solar"},
    {Var::PRECT, "PRECT", "mm/3h", "precipitation per 3-hour interval", DownscaleMode::sum_preserving,
     InterpMode::nearest, "Prec"},
}};

const char* mode_name(DownscaleMode m) {
  switch (m) {
    case DownscaleMode::additive:
      return "additive";
    case DownscaleMode::multiplicative:
      return "multiplicative";
    case DownscaleMode::sum_preserving:
      return "sum_preserving";
  }
  return "?";
}

double left_sum(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s;
}

std::uint64_t var_key(std::uint64_t seed, Var v) { return hash_combine(seed, 0x6b6c66ULL + static_cast<std::uint64_t>(v)); }

std::uint64_t day_number(const Date& d) { return static_cast<std::uint64_t>(to_sys(d).time_since_epoch().count() + 1000000); }

}  // namespace

const std::array<VariableSpec, kNumVars>& standard_variables() { return kSpecs; }

const VariableSpec& spec(Var v) { return kSpecs[static_cast<std::size_t>(v)]; }

std::optional<Var> find_variable(std::string_view name) {
  for (const auto& s : kSpecs) {
    if (s.name == name) return s.var;
  }
  return std::nullopt;
}

std::vector<Var> group_variables(std::string_view group) {
  std::vector<Var> out;
  for (const auto& s : kSpecs) {
    if (s.group == group) out.push_back(s.var);
  }
  return out;
}

double daily_aggregate(std::span<const double> steps, DownscaleMode mode) {
  const double sum = left_sum(steps);
  return mode == DownscaleMode::sum_preserving ? sum : sum / static_cast<double>(steps.size());
}

Shape downscale_day(double daily, const Shape& shape, DownscaleMode mode) {
  if (std::isnan(daily)) throw ValidationError("downscale_day: NaN daily value");
  for (double s : shape) {
    if (!std::isfinite(s)) throw ValidationError("downscale_day: non-finite shape value");
    if (mode != DownscaleMode::additive && s < 0.0) {
      throw ValidationError("downscale_day: negative shape value for a nonnegative mode");
    }
  }
  Shape out{};
  const double sum = left_sum(shape);
  switch (mode) {
    case DownscaleMode::additive: {
      const double mean = sum / kStepsPerDay;
      for (int i = 0; i < kStepsPerDay; ++i) out[i] = daily + (shape[i] - mean);
      // Close the residual on the last step so the mean reproduces the daily value
      // exactly; if the last step alone cannot reach it, perturb the one before.
      const double target = daily * kStepsPerDay;
      const double base6 = out[kStepsPerDay - 2];
      for (int attempt = 0; attempt < 32; ++attempt) {
        out[kStepsPerDay - 2] = base6;
        for (int k = 0; k < (attempt + 1) / 2; ++k) {
          out[kStepsPerDay - 2] = std::nextafter(out[kStepsPerDay - 2], attempt % 2 ? kInf : -kInf);
        }
        out[kStepsPerDay - 1] = target - left_sum(std::span(out).first(kStepsPerDay - 1));
        for (int iter = 0; iter < 8; ++iter) {
          const double agg = daily_aggregate(out, mode);
          if (agg == daily) break;
          out[kStepsPerDay - 1] = std::nextafter(out[kStepsPerDay - 1], agg > daily ? -kInf : kInf);
        }
        if (daily_aggregate(out, mode) == daily) break;
      }
      break;
    }
    case DownscaleMode::multiplicative: {
      const double mean = sum / kStepsPerDay;
      for (int i = 0; i < kStepsPerDay; ++i) out[i] = mean == 0.0 ? daily : daily * shape[i] / mean;
      break;
    }
    case DownscaleMode::sum_preserving: {
      for (int i = 0; i < kStepsPerDay; ++i) out[i] = sum == 0.0 ? daily / kStepsPerDay : daily * shape[i] / sum;
      break;
    }
  }
  return out;
}

double synth_daily(std::uint64_t seed, Var v, std::int64_t key, const Date& date) {
  const auto vk = var_key(seed, v);
  const double u_cell = hash_uniform01(hash_combine(vk, static_cast<std::uint64_t>(key)));
  const double u_day = hash_uniform01(hash_combine(hash_combine(vk, static_cast<std::uint64_t>(key)), day_number(date)));
  const double doy = day_of_year(date);
  const double season = std::sin(kTwoPi * (doy - 105.0) / 365.25);
  switch (v) {
    case Var::TBOT:
      return 265.0 + 20.0 * season + 10.0 * (u_cell - 0.5) + 8.0 * (u_day - 0.5);
    case Var::PSRF:
      return 101325.0 - 6000.0 * u_cell + 800.0 * (u_day - 0.5);
    case Var::QBOT:
      return 0.001 * (0.5 + 1.5 * u_day) * (1.6 + season);
    case Var::WIND:
      return 0.5 + 7.0 * u_day;
    case Var::FLDS:
      return 240.0 + 60.0 * season + 80.0 * (u_day - 0.5);
    case Var::FSDS:
      return std::max(0.0, 120.0 + 100.0 * std::sin(kTwoPi * (doy - 80.0) / 365.25)) * (0.3 + 0.7 * u_day);
    case Var::PRECT: {
      if (u_day < 0.6) return 0.0;
      const double x = (u_day - 0.6) / 0.4;
      return 25.0 * x * x * (0.5 + u_cell);
    }
  }
  return 0.0;
}

Shape synth_shape(std::uint64_t seed, Var v, const Date& date) {
  const auto h = hash_combine(var_key(seed, v) ^ 0x5368617065ULL, day_number(date));
  const double u = hash_uniform01(h);
  Shape s{};
  for (int i = 0; i < kStepsPerDay; ++i) {
    const double phase = kTwoPi * (i - 2.0) / kStepsPerDay;
    switch (v) {
      case Var::TBOT:
        s[i] = (4.0 + 2.0 * u) * std::sin(phase);
        break;
      case Var::PSRF:
        s[i] = 60.0 * std::cos(2.0 * kTwoPi * i / kStepsPerDay);
        break;
      case Var::QBOT:
      case Var::WIND:
      case Var::FLDS:
        s[i] = 1.0 + (0.1 + 0.1 * u) * std::sin(phase + 0.3 * u);
        break;
      case Var::FSDS:
        s[i] = std::max(0.0, std::sin(std::numbers::pi * (i - 1.5) / 6.0));
        break;
      case Var::PRECT: {
        const double w = hash_uniform01(hash_combine(h, static_cast<std::uint64_t>(i)));
        s[i] = w * w * w;
        break;
      }
    }
  }
  return s;
}

std::vector<std::int64_t> forcing_keys(const domain::DomainSpec& d) {
  return d.provenance ? d.provenance->source_id : d.land_ids();
}

SynthForcing synth_forcing(std::uint64_t seed, std::span<const std::int64_t> keys, const Date& start, int n_days) {
  if (n_days <= 0) throw ValidationError("synth_forcing: empty period");
  SynthForcing f;
  f.daily.start = start;
  f.daily.n_days = n_days;
  f.daily.n_cells = static_cast<std::int64_t>(keys.size());
  f.profiles.start = start;
  f.profiles.n_days = n_days;
  for (const auto& s : kSpecs) {
    const auto vi = static_cast<std::size_t>(s.var);
    auto& vals = f.daily.values[vi];
    vals.resize(static_cast<std::size_t>(n_days) * keys.size());
    for (int day = 0; day < n_days; ++day) {
      const Date date = add_days(start, day);
      for (std::size_t c = 0; c < keys.size(); ++c) vals[day * keys.size() + c] = synth_daily(seed, s.var, keys[c], date);
      f.profiles.shapes[vi].push_back(synth_shape(seed, s.var, date));
    }
  }
  return f;
}

SynthForcing synth_forcing(std::uint64_t seed, const domain::DomainSpec& d, const Date& start, int n_days) {
  const auto keys = forcing_keys(d);
  return synth_forcing(seed, keys, start, n_days);
}

ForcingMonth downscale_month(const DailyFields& daily, const ShapeProfiles& profiles, int year, int month) {
  const int n_days = days_in_month(year, month);
  const Date first{year, month, 1};
  const auto offset = days_between(daily.start, first);
  for (std::int64_t day : {offset, offset + n_days - 1}) {
    if (day < 0 || day >= daily.n_days) {
      throw ValidationError("downscale_month: daily fields miss " + format_date(add_days(daily.start, day)));
    }
    const auto poff = days_between(profiles.start, add_days(daily.start, day));
    if (poff < 0 || poff >= profiles.n_days) {
      throw ValidationError("downscale_month: shape profiles miss " + format_date(add_days(daily.start, day)));
    }
  }
  const auto prof_offset = days_between(profiles.start, first);

  ForcingMonth m;
  m.year = year;
  m.month = month;
  m.n_steps = n_days * kStepsPerDay;
  m.n_land = daily.n_cells;
  m.time.resize(static_cast<std::size_t>(m.n_steps));
  for (int s = 0; s < m.n_steps; ++s) m.time[s] = static_cast<double>(s * kHoursPerStep);
  const auto n = static_cast<std::size_t>(daily.n_cells);
  for (const auto& sp : kSpecs) {
    const auto vi = static_cast<std::size_t>(sp.var);
    if (daily.values[vi].size() != static_cast<std::size_t>(daily.n_days) * n) {
      throw ValidationError(fmt::format("downscale_month: daily {} has the wrong length", sp.name));
    }
    auto& out = m.values[vi];
    out.resize(static_cast<std::size_t>(m.n_steps) * n);
    for (int day = 0; day < n_days; ++day) {
      const auto& shape = profiles.shapes[vi][static_cast<std::size_t>(prof_offset + day)];
      const std::size_t src = static_cast<std::size_t>(offset + day) * n;
      for (std::size_t c = 0; c < n; ++c) {
        const auto steps = downscale_day(daily.values[vi][src + c], shape, sp.downscale);
        for (int i = 0; i < kStepsPerDay; ++i) out[(static_cast<std::size_t>(day) * kStepsPerDay + i) * n + c] = steps[i];
      }
    }
  }
  return m;
}

ForcingMonth downscale_month(const DailyFields& daily, const ShapeProfiles& profiles, int year, int month,
                             const domain::DomainSpec& d) {
  if (daily.n_cells != d.n_cells()) {
    throw ValidationError(fmt::format("downscale_month: daily fields have {} cells, grid has {}", daily.n_cells,
                                      d.n_cells()));
  }
  auto full = downscale_month(daily, profiles, year, month);
  ForcingMonth m = full;
  m.n_land = d.n_land();
  for (auto& v : m.values) {
    v = domain::compact<double>(std::span<const double>(v), d, static_cast<std::size_t>(m.n_steps));
  }
  return m;
}

fs::path month_file(const fs::path& dir, std::string_view group, int year, int month) {
  return dir / fmt::format("forcing_{}_{:04d}-{:02d}.nc", group, year, month);
}

std::vector<fs::path> write_month(const fs::path& dir, const ForcingMonth& m, const FileTag& tag) {
  fs::create_directories(dir);
  std::vector<fs::path> paths;
  for (auto group : kGroups) {
    cdf::FileModel model;
    model.add_dim("time", 0);
    model.add_dim("gridcell", static_cast<std::uint64_t>(m.n_land));
    auto& t = model.add_var("time", cdf::Type::float64, {"time"});
    cdf::set_attr(t.attrs, "units", fmt::format("hours since {:04d}-{:02d}-01 00:00:00", m.year, m.month));
    cdf::set_attr(t.attrs, "calendar", std::string("gregorian"));
    std::map<std::string, cdf::VarData> data;
    data["time"] = m.time;
    for (auto v : group_variables(group)) {
      const auto& sp = spec(v);
      auto& var = model.add_var(std::string(sp.name), cdf::Type::float32, {"time", "gridcell"});
      cdf::set_attr(var.attrs, "units", std::string(sp.units));
      cdf::set_attr(var.attrs, "long_name", std::string(sp.long_name));
      cdf::set_attr(var.attrs, "downscale_mode", std::string(mode_name(sp.downscale)));
      cdf::set_attr(var.attrs, "interp_mode", std::string(sp.interp == InterpMode::linear ? "linear" : "nearest"));
      const auto& src = m.values[static_cast<std::size_t>(v)];
      std::vector<float> f(src.size());
      std::transform(src.begin(), src.end(), f.begin(), [](double x) { return static_cast<float>(x); });
      data[std::string(sp.name)] = std::move(f);
    }
    auto& g = model.global_attrs;
    cdf::set_attr(g, "title", std::string("3-hourly land-compacted atmospheric forcing"));
    cdf::set_attr(g, "variable_group", std::string(group));
    cdf::set_attr(g, "year", std::vector<std::int32_t>{m.year});
    cdf::set_attr(g, "month", std::vector<std::int32_t>{m.month});
    cdf::set_attr(g, "steps_per_day", std::vector<std::int32_t>{kStepsPerDay});
    cdf::set_attr(g, "domain_fingerprint", std::vector<std::int64_t>{tag.domain_fingerprint});
    cdf::set_attr(g, "n_land", std::vector<std::int64_t>{tag.n_land});
    cdf::set_attr(g, "seed", std::vector<std::int64_t>{static_cast<std::int64_t>(tag.seed)});
    const auto path = month_file(dir, group, m.year, m.month);
    cdf::write_file(path, model, data);
    paths.push_back(path);
  }
  return paths;
}

ForcingMonth read_month(const fs::path& dir, int year, int month) {
  ForcingMonth m;
  m.year = year;
  m.month = month;
  for (auto group : kGroups) {
    const auto path = month_file(dir, group, year, month);
    if (!fs::exists(path)) throw IoError("forcing file not found: " + path.string());
    auto r = cdf::Reader::open(path);
    m.n_steps = static_cast<int>(r.model().numrecs);
    m.n_land = static_cast<std::int64_t>(r.model().dims[*r.model().find_dim("gridcell")].length);
    m.time = r.read_as<double>("time");
    for (auto v : group_variables(group)) {
      m.values[static_cast<std::size_t>(v)] = r.read_as<double>(std::string(spec(v).name));
    }
  }
  return m;
}

std::vector<fs::path> gen_forcing(const fs::path& dir, std::uint64_t seed, const domain::DomainSpec& d,
                                  const Date& start, int n_days) {
  if (n_days < 0) throw ValidationError("gen_forcing: negative day count");
  const Date last = add_days(start, n_days);
  const Date first_month{start.year, start.month, 1};
  const Date end_month{last.year, last.month, days_in_month(last.year, last.month)};
  const auto total_days = static_cast<int>(days_between(first_month, end_month)) + 1;
  const auto synth = synth_forcing(seed, d, first_month, total_days);
  const FileTag tag{d.fingerprint(), d.n_land(), seed};
  std::vector<fs::path> paths;
  for (Date m = first_month; m <= end_month; m = add_days(m, days_in_month(m.year, m.month))) {
    const auto month = downscale_month(synth.daily, synth.profiles, m.year, m.month);
    for (auto& p : write_month(dir, month, tag)) paths.push_back(std::move(p));
  }
  return paths;
}

// ---------------------------------------------------------------------------

FileForcingSource::FileForcingSource(fs::path dir, const Date& start, std::uint32_t fingerprint, std::int64_t n_land)
    : dir_(std::move(dir)), start_(start), fingerprint_(fingerprint), n_land_(n_land) {}

FileForcingSource::~FileForcingSource() = default;

std::unique_ptr<ForcingSource> FileForcingSource::clone() const {
  return std::make_unique<FileForcingSource>(dir_, start_, fingerprint_, n_land_);
}

void FileForcingSource::open_month(int year, int month) {
  if (year == open_year_ && month == open_month_) return;
  readers_.clear();
  for (auto group : kGroups) {
    const auto path = month_file(dir_, group, year, month);
    if (!fs::exists(path)) {
      throw IoError(fmt::format("forcing coverage gap: {:04d}-{:02d} has no file {}", year, month, path.string()));
    }
    auto r = std::make_unique<cdf::Reader>(cdf::Reader::open(path));
    const auto& g = r->model().global_attrs;
    const auto fp = cdf::attr_number(g, "domain_fingerprint");
    const auto nl = cdf::attr_number(g, "n_land");
    if (!fp || !nl || static_cast<std::uint32_t>(*fp) != fingerprint_ || static_cast<std::int64_t>(*nl) != n_land_) {
      throw ValidationError(fmt::format("forcing file {} was generated for a different domain", path.string()));
    }
    readers_.push_back(std::move(r));
  }
  open_year_ = year;
  open_month_ = month;
}

void FileForcingSource::read_record(std::int64_t rec, std::int64_t c0, std::int64_t c1, Record& out) {
  if (rec < 0) throw ValidationError("forcing: negative record index");
  const Date date = add_days(start_, rec / kStepsPerDay);
  const int step = static_cast<int>(rec % kStepsPerDay);
  open_month(date.year, date.month);
  const auto local = static_cast<std::uint64_t>((date.day - 1) * kStepsPerDay + step);
  for (std::size_t g = 0; g < kGroups.size(); ++g) {
    auto& r = *readers_[g];
    if (local >= r.model().numrecs) {
      throw ValidationError(fmt::format("forcing coverage gap: no record for {} step {}", format_date(date), step));
    }
    for (auto v : group_variables(kGroups[g])) {
      out[static_cast<std::size_t>(v)] = r.read_slab_as<double>(
          std::string(spec(v).name), {local, static_cast<std::uint64_t>(c0)}, {1, static_cast<std::uint64_t>(c1 - c0)});
    }
  }
}

SyntheticForcingSource::SyntheticForcingSource(std::uint64_t seed, std::vector<std::int64_t> keys, const Date& start)
    : seed_(seed), keys_(std::move(keys)), start_(start) {}

std::unique_ptr<ForcingSource> SyntheticForcingSource::clone() const {
  return std::make_unique<SyntheticForcingSource>(seed_, keys_, start_);
}

void SyntheticForcingSource::read_record(std::int64_t rec, std::int64_t c0, std::int64_t c1, Record& out) {
  if (rec < 0) throw ValidationError("forcing: negative record index");
  const Date date = add_days(start_, rec / kStepsPerDay);
  const int step = static_cast<int>(rec % kStepsPerDay);
  for (const auto& sp : kSpecs) {
    const auto shape = synth_shape(seed_, sp.var, date);
    auto& o = out[static_cast<std::size_t>(sp.var)];
    o.resize(static_cast<std::size_t>(c1 - c0));
    for (std::int64_t c = c0; c < c1; ++c) {
      const auto steps = downscale_day(synth_daily(seed_, sp.var, keys_[static_cast<std::size_t>(c)], date), shape,
                                       sp.downscale);
      o[static_cast<std::size_t>(c - c0)] = static_cast<double>(static_cast<float>(steps[step]));
    }
  }
}

ForcingStream::ForcingStream(std::unique_ptr<ForcingSource> source, std::int64_t c0, std::int64_t c1)
    : source_(std::move(source)), c0_(c0), c1_(c1) {
  if (c0 < 0 || c1 < c0 || c1 > source_->n_land()) throw ValidationError("forcing stream: bad cell range");
  for (auto& v : out_) v.resize(static_cast<std::size_t>(c1 - c0));
}

const Record& ForcingStream::record(std::int64_t rec) {
  for (int s = 0; s < 2; ++s) {
    if (cached_[s] == rec) {
      next_slot_ = 1 - s;
      return cache_[s];
    }
  }
  const int s = next_slot_;
  source_->read_record(rec, c0_, c1_, cache_[s]);
  cached_[s] = rec;
  next_slot_ = 1 - s;
  return cache_[s];
}

const Record& ForcingStream::at(double hours) {
  if (!(hours >= 0.0)) throw ValidationError(fmt::format("forcing: time {} h precedes the stream start", hours));
  const auto rec = static_cast<std::int64_t>(std::floor(hours / kHoursPerStep));
  const double frac = (hours - static_cast<double>(rec * kHoursPerStep)) / kHoursPerStep;
  const Record& lo = record(rec);
  // record() leaves next_slot_ pointing away from lo, so loading hi keeps lo cached.
  const Record* hi = frac > 0.0 ? &record(rec + 1) : nullptr;
  const auto n = static_cast<std::size_t>(c1_ - c0_);
  for (const auto& sp : kSpecs) {
    const auto vi = static_cast<std::size_t>(sp.var);
    auto& o = out_[vi];
    if (!hi || sp.interp == InterpMode::nearest) {
      std::copy_n(lo[vi].begin(), n, o.begin());
      continue;
    }
    const auto& a = lo[vi];
    const auto& b = (*hi)[vi];
    for (std::size_t c = 0; c < n; ++c) {
      const double v = a[c] + (b[c] - a[c]) * frac;
      o[c] = std::clamp(v, std::min(a[c], b[c]), std::max(a[c], b[c]));
    }
  }
  return out_;
}

}  // namespace kiloland::forcing
