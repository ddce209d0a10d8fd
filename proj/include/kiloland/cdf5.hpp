#pragma once

// Reader and writer for the NetCDF classic binary format, 64-bit offset
// (CDF-2) and 64-bit data (CDF-5) variants. Numeric types only: INT, INT64
// (CDF-5), FLOAT and DOUBLE variables; CHAR is accepted for attribute text.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "kiloland/error.hpp"

namespace kiloland::cdf {

enum class Variant : std::uint8_t { cdf2 = 2, cdf5 = 5 };

enum class Type : std::int32_t {
  char_ = 2,
  int32 = 4,
  float32 = 5,
  float64 = 6,
  int64 = 10,
};

std::size_t type_size(Type t);
const char* type_name(Type t);

template <class T>
constexpr Type type_of() {
  if constexpr (std::is_same_v<T, std::int32_t>) return Type::int32;
  else if constexpr (std::is_same_v<T, std::int64_t>) return Type::int64;
  else if constexpr (std::is_same_v<T, float>) return Type::float32;
  else if constexpr (std::is_same_v<T, double>) return Type::float64;
  else static_assert(sizeof(T) == 0, "unsupported element type");
}

struct Dimension {
  std::string name;
  std::uint64_t length = 0;  // 0 marks the record (unlimited) dimension
  bool is_record() const { return length == 0; }
  friend bool operator==(const Dimension&, const Dimension&) = default;
};

using AttrValue = std::variant<std::string, std::vector<std::int32_t>, std::vector<std::int64_t>,
                               std::vector<float>, std::vector<double>>;

struct Attribute {
  std::string name;
  AttrValue value;

  Type type() const;
  std::uint64_t size() const;
  friend bool operator==(const Attribute&, const Attribute&) = default;
};

using AttrList = std::vector<Attribute>;

void set_attr(AttrList& list, const std::string& name, AttrValue value);
const Attribute* find_attr(const AttrList& list, const std::string& name);
std::optional<std::string> attr_text(const AttrList& list, const std::string& name);
std::optional<double> attr_number(const AttrList& list, const std::string& name);

struct Variable {
  std::string name;
  Type type = Type::float64;
  std::vector<std::size_t> dimids;
  AttrList attrs;
  // Layout, assigned by FileModel::finalize().
  std::uint64_t vsize = 0;
  std::uint64_t begin = 0;

  friend bool operator==(const Variable&, const Variable&) = default;
};

using VarData = std::variant<std::vector<std::int32_t>, std::vector<std::int64_t>, std::vector<float>,
                             std::vector<double>>;

/// In-memory model of a classic file header.
struct FileModel {
  Variant variant = Variant::cdf5;
  std::uint64_t numrecs = 0;
  std::vector<Dimension> dims;
  AttrList global_attrs;
  std::vector<Variable> vars;

  std::size_t add_dim(const std::string& name, std::uint64_t length);
  Variable& add_var(const std::string& name, Type type, const std::vector<std::string>& dim_names);

  std::optional<std::size_t> find_dim(const std::string& name) const;
  std::optional<std::size_t> find_var(const std::string& name) const;
  const Variable& var(const std::string& name) const;
  Variable& var(const std::string& name);
  std::optional<std::size_t> record_dim() const;

  bool is_record_var(const Variable& v) const;
  /// Shape with the record dimension reported as numrecs.
  std::vector<std::uint64_t> shape(const Variable& v) const;
  /// Elements in one record (record vars) or in the whole variable (fixed vars).
  std::uint64_t slab_elements(const Variable& v) const;
  std::uint64_t total_elements(const Variable& v) const;
  std::uint64_t record_size() const;

  /// Throws ValidationError on any structural violation for the chosen variant.
  void validate() const;
  /// Validates, then assigns vsize and begin for every variable.
  void finalize();

  friend bool operator==(const FileModel&, const FileModel&) = default;
};

struct SizeAccounting {
  std::uint64_t header_bytes = 0;
  std::uint64_t fixed_bytes = 0;
  std::uint64_t record_size = 0;
  std::uint64_t numrecs = 0;
  std::uint64_t total_bytes = 0;
};

SizeAccounting compute_size(const FileModel& model);

/// Header bytes of a finalized model.
std::vector<std::byte> encode_header(const FileModel& model);

/// Whole-file encoding. `data` holds every variable's values (all records for
/// record variables) in row-major order; the model is finalized internally.
std::vector<std::byte> write_file(const FileModel& model, const std::map<std::string, VarData>& data);
void write_file(const std::filesystem::path& path, const FileModel& model,
                const std::map<std::string, VarData>& data);

/// Streaming writer. Every element of every variable must be written before
/// close(); coverage gaps and overlaps raise IntegrityError. write() is safe
/// to call from multiple threads on disjoint ranges.
class Writer {
 public:
  Writer(const std::filesystem::path& path, FileModel model);
  Writer(const Writer&) = delete;
  Writer& operator=(const Writer&) = delete;
  ~Writer();

  const FileModel& model() const { return model_; }
  const std::filesystem::path& path() const { return path_; }

  /// Writes `values` into variable `name` starting at element `first` of
  /// record `record` (ignored for fixed variables). Grows numrecs as needed.
  template <class T>
  void write(const std::string& name, std::uint64_t record, std::uint64_t first, std::span<const T> values) {
    write_bytes(name, type_of<T>(), record, first, values.size(), values.data());
  }

  /// Byte offset of element `first` of a record; exposed for aggregated writers.
  std::uint64_t element_offset(const std::string& name, std::uint64_t record, std::uint64_t first) const;

  /// Patches numrecs, verifies coverage and flushes. Returns the file length.
  std::uint64_t close();

 private:
  void write_bytes(const std::string& name, Type type, std::uint64_t record, std::uint64_t first,
                   std::uint64_t count, const void* data);

  std::filesystem::path path_;
  FileModel model_;
  std::fstream out_;
  std::mutex mutex_;
  // Written element intervals per (var, record): start -> end.
  std::map<std::pair<std::size_t, std::uint64_t>, std::map<std::uint64_t, std::uint64_t>> coverage_;
  std::uint64_t max_record_ = 0;
  bool closed_ = false;
};

/// Header parser plus hyperslab access. One Reader per thread.
class Reader {
 public:
  static Reader open(const std::filesystem::path& path);
  static Reader from_bytes(std::vector<std::byte> bytes);

  const FileModel& model() const { return model_; }
  std::uint64_t header_bytes() const { return header_bytes_; }
  std::uint64_t file_bytes() const { return file_bytes_; }

  /// Hyperslab in native type; start/count cover every dimension including the record one.
  VarData read_slab(const std::string& name, const std::vector<std::uint64_t>& start,
                    const std::vector<std::uint64_t>& count);
  /// Elements [first, first + count) of the variable's flattened row-major order.
  VarData read_flat(const std::string& name, std::uint64_t first, std::uint64_t count);
  VarData read_all(const std::string& name);

  template <class T>
  std::vector<T> read_as(const std::string& name) {
    return convert<T>(read_all(name));
  }
  template <class T>
  std::vector<T> read_slab_as(const std::string& name, const std::vector<std::uint64_t>& start,
                              const std::vector<std::uint64_t>& count) {
    return convert<T>(read_slab(name, start, count));
  }

  template <class T>
  static std::vector<T> convert(const VarData& data) {
    return std::visit(
        [](const auto& v) {
          std::vector<T> out(v.size());
          for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<T>(v[i]);
          return out;
        },
        data);
  }

 private:
  Reader() = default;
  void parse();
  void read_at(std::uint64_t offset, std::size_t n, std::byte* dst);

  std::unique_ptr<std::istream> in_;
  FileModel model_;
  std::uint64_t header_bytes_ = 0;
  std::uint64_t file_bytes_ = 0;
};

/// Stable text rendering of a header (CDL-like) for golden tests.
std::string dump_header(const FileModel& model);

/// CRC-32 of the big-endian encoding of the data; used as a checksum attribute.
std::uint32_t data_checksum(const VarData& data);

std::uint64_t element_count(const VarData& data);

}  // namespace kiloland::cdf
