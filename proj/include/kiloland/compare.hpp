#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace kiloland::compare {

enum class TolKind { bit_exact, abs, rel };

struct Tolerance {
  TolKind kind = TolKind::bit_exact;
  double eps = 0.0;
};

/// "bit_exact", "abs:<eps>" or "rel:<eps>".
Tolerance parse_tolerance(const std::string& text);
std::string tolerance_name(const Tolerance& t);

enum class Verdict { identical, within_tolerance, different };
const char* verdict_name(Verdict v);

struct VarReport {
  std::string name;
  std::uint64_t n_elements = 0;
  std::uint64_t n_differing = 0;
  std::uint64_t n_nan_mismatch = 0;
  double max_abs_diff = 0.0;
  double max_rel_diff = 0.0;
  std::int64_t first_diff_index = -1;  // flat element index in the second file
  std::int64_t first_diff_copy = -1;   // replica copy holding the first difference
  bool shape_mismatch = false;
  bool out_of_tolerance = false;
};

struct CompareReport {
  std::vector<VarReport> vars;
  std::vector<std::string> vars_only_in_a;
  std::vector<std::string> vars_only_in_b;
  Verdict verdict = Verdict::identical;

  std::string text() const;
  /// variable,n_elements,n_differing,max_abs_diff,max_rel_diff,first_diff_index,status
  std::string csv() const;
};

inline constexpr std::uint64_t kDefaultSlabBytes = 64ull << 20;

/// Element-wise comparison of two classic files, variables matched by name.
/// Data is streamed in slabs of at most `slab_bytes` per file.
CompareReport compare_files(const std::filesystem::path& a, const std::filesystem::path& b, const Tolerance& tol = {},
                            std::uint64_t slab_bytes = kDefaultSlabBytes);

/// Checks that every variable of `replica` holds k bit-exact copies of the
/// matching `base` variable along the gridcell dimension.
CompareReport check_replication(const std::filesystem::path& base, const std::filesystem::path& replica, std::int64_t k,
                                std::uint64_t slab_bytes = kDefaultSlabBytes);

}  // namespace kiloland::compare
