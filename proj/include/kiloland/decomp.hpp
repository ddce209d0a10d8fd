#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <exception>
#include <functional>
#include <filesystem>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "kiloland/cdf5.hpp"
#include "kiloland/error.hpp"

namespace kiloland::decomp {

enum class Scheme { round_robin, block, block_round_robin };

Scheme parse_scheme(const std::string& name);
const char* scheme_name(Scheme s);

inline constexpr std::int64_t kDefaultBlockSize = 64;
inline constexpr std::uint64_t kDefaultBufferLimit = 64ull << 20;

struct Partition {
  Scheme scheme = Scheme::round_robin;
  std::int64_t n_cells = 0;
  int n_ranks = 1;
  std::int64_t block_size = kDefaultBlockSize;
  std::vector<std::int32_t> assignment;               // cell -> rank
  std::vector<std::vector<std::int64_t>> local_lists;  // rank -> ascending cells

  std::int64_t empty_ranks() const;
  /// Throws IntegrityError unless every cell is assigned exactly once.
  void validate() const;
};

/// Empty ranks (P > N) are allowed; a warning is logged.
Partition partition(std::int64_t n_cells, int n_ranks, Scheme scheme, std::int64_t block_size = kDefaultBlockSize);

/// Local layout per rank is [outer..., local cells]; element (o, k) of rank r
/// maps to file element o * n_cells + local_lists[r][k] within one record.
struct IoDecomp {
  std::int64_t n_cells = 0;
  std::uint64_t n_outer = 1;
  std::vector<std::vector<std::uint64_t>> offsets;

  int n_ranks() const { return static_cast<int>(offsets.size()); }
  std::uint64_t total() const { return n_outer * static_cast<std::uint64_t>(n_cells); }
  std::uint64_t local_size(int rank) const { return offsets[static_cast<std::size_t>(rank)].size(); }
  void validate() const;
};

/// `dims` are the variable's (name, length) pairs; a leading record dimension
/// (length 0) is skipped, the innermost must be "gridcell" of length n_cells.
IoDecomp build_iodecomp(const Partition& part, const std::vector<std::pair<std::string, std::uint64_t>>& dims);
IoDecomp build_iodecomp(const Partition& part, std::uint64_t n_outer = 1);

template <class T>
std::vector<T> gather(const IoDecomp& iod, const std::vector<std::vector<T>>& local) {
  if (local.size() != iod.offsets.size()) throw ValidationError("gather: rank count mismatch");
  std::vector<T> out(iod.total());
  for (std::size_t r = 0; r < local.size(); ++r) {
    if (local[r].size() != iod.offsets[r].size()) throw ValidationError(fmt::format("gather: rank {} has the wrong length", r));
    for (std::size_t k = 0; k < local[r].size(); ++k) out[iod.offsets[r][k]] = local[r][k];
  }
  return out;
}

template <class T>
std::vector<std::vector<T>> scatter(const IoDecomp& iod, std::span<const T> global) {
  if (global.size() != iod.total()) throw ValidationError("scatter: global length mismatch");
  std::vector<std::vector<T>> out(iod.offsets.size());
  for (std::size_t r = 0; r < out.size(); ++r) {
    out[r].reserve(iod.offsets[r].size());
    for (auto off : iod.offsets[r]) out[r].push_back(global[off]);
  }
  return out;
}

struct AggregatorPlan {
  std::uint64_t total = 0;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;  // [begin, end)
  std::uint64_t buffer_limit = kDefaultBufferLimit;

  int n_aggregators() const { return static_cast<int>(ranges.size()); }
  int owner(std::uint64_t offset) const;
  void validate() const;
};

/// Equal contiguous spans (sizes differ by at most one); requires 1 <= A <= P.
AggregatorPlan make_plan(std::uint64_t total, int n_aggregators, int n_ranks,
                         std::uint64_t buffer_limit = kDefaultBufferLimit);

struct WriteStats {
  std::string variable;
  std::uint64_t bytes = 0;
  double seconds = 0.0;
  int aggregators = 0;
  std::uint64_t buffer_limit = 0;
  std::uint64_t flushes = 0;
  std::vector<std::uint64_t> per_aggregator_bytes;

  double mib_per_s() const { return seconds > 0.0 ? static_cast<double>(bytes) / (1024.0 * 1024.0) / seconds : 0.0; }
  WriteStats& operator+=(const WriteStats& o);
};

/// Appends rows (case, variable, bytes, seconds, MiB_per_s, aggregators,
/// buffer_limit), writing the header when the file is new.
void append_stats_csv(const std::filesystem::path& path, const std::string& case_name,
                      const std::vector<WriteStats>& stats);

namespace detail {

template <class T>
struct Message {
  std::vector<std::uint64_t> offsets;
  std::vector<T> values;
};

void run_threads(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace detail

/// Rearranges rank-local data to aggregators and writes one record of a
/// variable through `writer`. Ranks and aggregators run as threads; each rank
/// sends one message per aggregator, each aggregator assembles its range in
/// buffer_limit chunks. Missing or duplicate elements raise IntegrityError.
template <class T>
WriteStats rearrange_write(const std::vector<std::vector<T>>& local, const IoDecomp& iod, const AggregatorPlan& plan,
                           cdf::Writer& writer, const std::string& variable, std::uint64_t record = 0) {
  const auto t0 = std::chrono::steady_clock::now();
  if (local.size() != iod.offsets.size()) throw ValidationError("rearrange_write: rank count mismatch");
  if (plan.total != iod.total()) {
    throw ValidationError(fmt::format("rearrange_write: plan covers {} elements, decomposition {}", plan.total, iod.total()));
  }
  plan.validate();
  const auto n_ranks = local.size();
  const auto n_agg = plan.ranges.size();

  // mailbox[a][r]: message from rank r to aggregator a; each slot has one writer.
  std::vector<std::vector<detail::Message<T>>> mailbox(n_agg, std::vector<detail::Message<T>>(n_ranks));
  detail::run_threads(n_ranks, [&](std::size_t r) {
    if (local[r].size() != iod.offsets[r].size()) {
      throw ValidationError(fmt::format("rearrange_write: rank {} holds {} elements, expected {}", r, local[r].size(),
                                        iod.offsets[r].size()));
    }
    for (std::size_t k = 0; k < local[r].size(); ++k) {
      const auto off = iod.offsets[r][k];
      if (off >= plan.total) throw IntegrityError(fmt::format("rearrange_write: element offset {} out of range", off));
      auto& msg = mailbox[static_cast<std::size_t>(plan.owner(off))][r];
      msg.offsets.push_back(off);
      msg.values.push_back(local[r][k]);
    }
    for (std::size_t a = 0; a < n_agg; ++a) {
      auto& msg = mailbox[a][r];
      if (std::is_sorted(msg.offsets.begin(), msg.offsets.end())) continue;
      std::vector<std::size_t> order(msg.offsets.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return msg.offsets[x] < msg.offsets[y]; });
      detail::Message<T> sorted;
      for (auto i : order) {
        sorted.offsets.push_back(msg.offsets[i]);
        sorted.values.push_back(msg.values[i]);
      }
      msg = std::move(sorted);
    }
  });

  const std::uint64_t chunk = std::max<std::uint64_t>(1, plan.buffer_limit / sizeof(T));
  std::vector<std::uint64_t> agg_bytes(n_agg, 0), agg_flushes(n_agg, 0);
  detail::run_threads(n_agg, [&](std::size_t a) {
    const auto [begin, end] = plan.ranges[a];
    auto& inbox = mailbox[a];
    std::vector<std::size_t> cursor(n_ranks, 0);
    std::vector<T> buffer;
    std::vector<std::uint8_t> filled;
    for (std::uint64_t lo = begin; lo < end; lo += chunk) {
      const auto hi = std::min(end, lo + chunk);
      buffer.assign(hi - lo, T{});
      filled.assign(hi - lo, 0);
      for (std::size_t r = 0; r < n_ranks; ++r) {
        auto& msg = inbox[r];
        auto& c = cursor[r];
        // A rank's offsets are ascending within one aggregator's range.
        while (c < msg.offsets.size() && msg.offsets[c] < hi) {
          const auto off = msg.offsets[c];
          if (off < lo) throw IntegrityError(fmt::format("rearrange_write: element offset {} delivered out of order", off));
          if (filled[off - lo]) throw IntegrityError(fmt::format("rearrange_write: element offset {} delivered twice", off));
          filled[off - lo] = 1;
          buffer[off - lo] = msg.values[c];
          ++c;
        }
      }
      for (std::uint64_t i = 0; i < hi - lo; ++i) {
        if (!filled[i]) throw IntegrityError(fmt::format("rearrange_write: element offset {} missing", lo + i));
      }
      writer.write<T>(variable, record, lo, std::span<const T>(buffer));
      agg_bytes[a] += (hi - lo) * sizeof(T);
      ++agg_flushes[a];
    }
  });

  WriteStats s;
  s.variable = variable;
  s.aggregators = static_cast<int>(n_agg);
  s.buffer_limit = plan.buffer_limit;
  s.per_aggregator_bytes = agg_bytes;
  for (std::size_t a = 0; a < n_agg; ++a) {
    s.bytes += agg_bytes[a];
    s.flushes += agg_flushes[a];
  }
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return s;
}

}  // namespace kiloland::decomp
