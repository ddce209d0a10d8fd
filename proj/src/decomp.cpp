#include "kiloland/decomp.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>

namespace kiloland::decomp {

Scheme parse_scheme(const std::string& name) {
  if (name == "round_robin") return Scheme::round_robin;
  if (name == "block") return Scheme::block;
  if (name == "block_round_robin") return Scheme::block_round_robin;
  throw ValidationError("unknown partition scheme '" + name + "' (round_robin, block, block_round_robin)");
}

const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::round_robin: return "round_robin";
    case Scheme::block: return "block";
    case Scheme::block_round_robin: return "block_round_robin";
  }
  return "?";
}

std::int64_t Partition::empty_ranks() const {
  return std::count_if(local_lists.begin(), local_lists.end(), [](const auto& l) { return l.empty(); });
}

void Partition::validate() const {
  if (static_cast<std::int64_t>(assignment.size()) != n_cells) throw IntegrityError("partition: assignment length mismatch");
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(n_cells), 0);
  for (std::size_t r = 0; r < local_lists.size(); ++r) {
    for (auto c : local_lists[r]) {
      if (c < 0 || c >= n_cells) throw IntegrityError(fmt::format("partition: cell {} out of range", c));
      if (seen[static_cast<std::size_t>(c)]++) throw IntegrityError(fmt::format("partition: cell {} assigned twice", c));
      if (assignment[static_cast<std::size_t>(c)] != static_cast<std::int32_t>(r)) {
        throw IntegrityError(fmt::format("partition: cell {} listed under rank {} but assigned to {}", c, r,
                                         assignment[static_cast<std::size_t>(c)]));
      }
    }
  }
  const auto missing = std::find(seen.begin(), seen.end(), 0);
  if (missing != seen.end()) throw IntegrityError(fmt::format("partition: cell {} unassigned", missing - seen.begin()));
}

Partition partition(std::int64_t n_cells, int n_ranks, Scheme scheme, std::int64_t block_size) {
  if (n_cells < 1) throw ValidationError("partition: need at least one cell");
  if (n_ranks < 1) throw ValidationError("partition: need at least one rank");
  if (scheme == Scheme::block_round_robin && block_size < 1) throw ValidationError("partition: block size must be >= 1");
  Partition p;
  p.scheme = scheme;
  p.n_cells = n_cells;
  p.n_ranks = n_ranks;
  p.block_size = block_size;
  p.assignment.resize(static_cast<std::size_t>(n_cells));
  p.local_lists.resize(static_cast<std::size_t>(n_ranks));
  const std::int64_t q = n_cells / n_ranks, rem = n_cells % n_ranks;
  for (std::int64_t i = 0; i < n_cells; ++i) {
    std::int64_t r = 0;
    switch (scheme) {
      case Scheme::round_robin: r = i % n_ranks; break;
      case Scheme::block: r = i < rem * (q + 1) ? i / (q + 1) : rem + (i - rem * (q + 1)) / q; break;
      case Scheme::block_round_robin: r = (i / block_size) % n_ranks; break;
    }
    p.assignment[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(r);
    p.local_lists[static_cast<std::size_t>(r)].push_back(i);
  }
  if (n_ranks > n_cells) {
    spdlog::warn("partition: {} ranks for {} cells leaves {} ranks empty", n_ranks, n_cells, p.empty_ranks());
  }
  return p;
}

void IoDecomp::validate() const {
  std::vector<std::uint8_t> seen(total(), 0);
  for (std::size_t r = 0; r < offsets.size(); ++r) {
    for (auto off : offsets[r]) {
      if (off >= total()) throw IntegrityError(fmt::format("iodecomp: offset {} of rank {} out of bounds", off, r));
      if (seen[off]++) throw IntegrityError(fmt::format("iodecomp: offset {} mapped twice", off));
    }
  }
  const auto missing = std::find(seen.begin(), seen.end(), 0);
  if (missing != seen.end()) throw IntegrityError(fmt::format("iodecomp: offset {} not covered", missing - seen.begin()));
}

IoDecomp build_iodecomp(const Partition& part, std::uint64_t n_outer) {
  IoDecomp iod;
  iod.n_cells = part.n_cells;
  iod.n_outer = n_outer;
  iod.offsets.resize(part.local_lists.size());
  const auto n = static_cast<std::uint64_t>(part.n_cells);
  for (std::size_t r = 0; r < part.local_lists.size(); ++r) {
    auto& offs = iod.offsets[r];
    offs.reserve(n_outer * part.local_lists[r].size());
    for (std::uint64_t o = 0; o < n_outer; ++o) {
      for (auto c : part.local_lists[r]) offs.push_back(o * n + static_cast<std::uint64_t>(c));
    }
  }
  return iod;
}

IoDecomp build_iodecomp(const Partition& part, const std::vector<std::pair<std::string, std::uint64_t>>& dims) {
  std::size_t first = 0;
  if (!dims.empty() && dims.front().second == 0) first = 1;
  if (dims.size() <= first || dims.back().first != "gridcell") {
    throw ValidationError("iodecomp: the innermost dimension must be gridcell");
  }
  if (dims.back().second != static_cast<std::uint64_t>(part.n_cells)) {
    throw ValidationError(fmt::format("iodecomp: gridcell dimension is {} but the partition has {} cells",
                                      dims.back().second, part.n_cells));
  }
  std::uint64_t outer = 1;
  for (std::size_t i = first; i + 1 < dims.size(); ++i) {
    if (dims[i].first == "gridcell") throw ValidationError("iodecomp: gridcell must appear once, innermost");
    outer *= dims[i].second;
  }
  return build_iodecomp(part, outer);
}

int AggregatorPlan::owner(std::uint64_t offset) const {
  const auto it = std::upper_bound(ranges.begin(), ranges.end(), offset,
                                   [](std::uint64_t v, const auto& range) { return v < range.second; });
  return static_cast<int>(it - ranges.begin());
}

void AggregatorPlan::validate() const {
  if (buffer_limit == 0) throw ValidationError("aggregator plan: buffer_limit must be positive");
  if (ranges.empty()) throw ValidationError("aggregator plan: no aggregators");
  std::uint64_t at = 0;
  for (const auto& [b, e] : ranges) {
    if (b != at || e < b) throw ValidationError("aggregator plan: ranges do not partition the variable");
    at = e;
  }
  if (at != total) throw ValidationError("aggregator plan: ranges do not cover the variable");
}

AggregatorPlan make_plan(std::uint64_t total, int n_aggregators, int n_ranks, std::uint64_t buffer_limit) {
  if (n_aggregators < 1 || n_aggregators > n_ranks) {
    throw ValidationError(fmt::format("aggregator plan: need 1 <= aggregators ({}) <= ranks ({})", n_aggregators, n_ranks));
  }
  AggregatorPlan p;
  p.total = total;
  p.buffer_limit = buffer_limit;
  const auto a = static_cast<std::uint64_t>(n_aggregators);
  std::uint64_t at = 0;
  for (std::uint64_t i = 0; i < a; ++i) {
    const auto len = total / a + (i < total % a ? 1 : 0);
    p.ranges.emplace_back(at, at + len);
    at += len;
  }
  p.validate();
  return p;
}

WriteStats& WriteStats::operator+=(const WriteStats& o) {
  bytes += o.bytes;
  seconds += o.seconds;
  flushes += o.flushes;
  aggregators = std::max(aggregators, o.aggregators);
  buffer_limit = std::max(buffer_limit, o.buffer_limit);
  per_aggregator_bytes.resize(std::max(per_aggregator_bytes.size(), o.per_aggregator_bytes.size()), 0);
  for (std::size_t i = 0; i < o.per_aggregator_bytes.size(); ++i) per_aggregator_bytes[i] += o.per_aggregator_bytes[i];
  return *this;
}

void append_stats_csv(const std::filesystem::path& path, const std::string& case_name,
                      const std::vector<WriteStats>& stats) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot open " + path.string());
  if (fresh) out << "case,variable,bytes,seconds,MiB_per_s,aggregators,buffer_limit\n";
  for (const auto& s : stats) {
    out << fmt::format("{},{},{},{:.6f},{:.3f},{},{}\n", case_name, s.variable, s.bytes, s.seconds, s.mib_per_s(),
                       s.aggregators, s.buffer_limit);
  }
}

namespace detail {

void run_threads(std::size_t n, const std::function<void(std::size_t)>& body) {
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> threads;
  threads.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    threads.emplace_back([&, i] {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

}  // namespace kiloland::decomp
