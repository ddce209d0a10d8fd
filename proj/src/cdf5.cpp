#include "kiloland/cdf5.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <set>
#include <sstream>

#include <boost/crc.hpp>
#include <boost/endian/conversion.hpp>
#include <fmt/format.h>

namespace kiloland::cdf {

namespace {

constexpr std::uint32_t kTagDimension = 0x0A;
constexpr std::uint32_t kTagVariable = 0x0B;
constexpr std::uint32_t kTagAttribute = 0x0C;
constexpr std::uint64_t kCdf2VsizeLimit = 0xFFFFFFFFULL - 3;  // 2^32 - 4

std::uint64_t pad4(std::uint64_t n) { return (n + 3) & ~std::uint64_t{3}; }

// Element conversion to and from big-endian storage.
template <class T>
void store_be(const T& v, std::byte* dst) {
  if constexpr (std::is_floating_point_v<T>) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    U bits;
    std::memcpy(&bits, &v, sizeof bits);
    bits = boost::endian::native_to_big(bits);
    std::memcpy(dst, &bits, sizeof bits);
  } else {
    const T be = boost::endian::native_to_big(v);
    std::memcpy(dst, &be, sizeof be);
  }
}

template <class T>
T load_be(const std::byte* src) {
  if constexpr (std::is_floating_point_v<T>) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    U bits;
    std::memcpy(&bits, src, sizeof bits);
    bits = boost::endian::big_to_native(bits);
    T v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  } else {
    T v;
    std::memcpy(&v, src, sizeof v);
    return boost::endian::big_to_native(v);
  }
}

class HeaderEncoder {
 public:
  explicit HeaderEncoder(Variant variant) : variant_(variant) {}

  void u32(std::uint32_t v) { put<std::uint32_t>(v); }
  void u64(std::uint64_t v) { put<std::uint64_t>(v); }
  void non_neg(std::uint64_t v) {
    if (variant_ == Variant::cdf5) u64(v);
    else u32(static_cast<std::uint32_t>(v));
  }
  void offset(std::uint64_t v) { u64(v); }
  void name(const std::string& s) {
    non_neg(s.size());
    raw(s.data(), s.size());
    pad();
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::byte*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  void pad() { bytes_.resize(pad4(bytes_.size()), std::byte{0}); }
  void absent() {
    u32(0);
    non_neg(0);
  }

  void attr_list(const AttrList& attrs) {
    if (attrs.empty()) return absent();
    u32(kTagAttribute);
    non_neg(attrs.size());
    for (const auto& a : attrs) {
      name(a.name);
      u32(static_cast<std::uint32_t>(a.type()));
      non_neg(a.size());
      std::visit(
          [&](const auto& v) {
            using V = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<V, std::string>) {
              raw(v.data(), v.size());
            } else {
              for (const auto& x : v) put(x);
            }
          },
          a.value);
      pad();
    }
  }

  std::vector<std::byte> take() { return std::move(bytes_); }

 private:
  template <class T>
  void put(const T& v) {
    std::byte buf[sizeof(T)];
    store_be(v, buf);
    bytes_.insert(bytes_.end(), buf, buf + sizeof(T));
  }

  Variant variant_;
  std::vector<std::byte> bytes_;
};

struct TruncatedHeader {};

class HeaderDecoder {
 public:
  HeaderDecoder(std::span<const std::byte> bytes, Variant variant) : bytes_(bytes), variant_(variant) {}

  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  std::uint64_t non_neg() {
    if (variant_ == Variant::cdf5) {
      const auto v = get<std::int64_t>();
      if (v < 0) throw IntegrityError("cdf: negative count in header");
      return static_cast<std::uint64_t>(v);
    }
    const auto v = get<std::int32_t>();
    if (v < 0) throw IntegrityError("cdf: negative count in header");
    return static_cast<std::uint64_t>(v);
  }
  std::uint64_t offset() {
    const auto v = get<std::int64_t>();
    if (v < 0) throw IntegrityError("cdf: negative begin offset in header");
    return static_cast<std::uint64_t>(v);
  }
  std::string name() {
    const auto n = non_neg();
    sanity(n);
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    align();
    if (s.empty()) throw IntegrityError("cdf: empty name in header");
    return s;
  }
  void align() { skip(pad4(pos_) - pos_); }

  template <class T>
  std::vector<T> values(std::uint64_t n) {
    sanity(n * sizeof(T));
    std::vector<T> out(n);
    for (auto& x : out) x = get<T>();
    return out;
  }

  AttrList attr_list() {
    AttrList out;
    const auto tag = u32();
    const auto n = non_neg();
    if (tag == 0 && n == 0) return out;
    if (tag != kTagAttribute) throw IntegrityError("cdf: malformed attribute list tag");
    sanity(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      Attribute a;
      a.name = name();
      const auto type = static_cast<std::int32_t>(u32());
      const auto count = non_neg();
      switch (type) {
        case static_cast<std::int32_t>(Type::char_): {
          sanity(count);
          need(count);
          a.value = std::string(reinterpret_cast<const char*>(bytes_.data() + pos_), count);
          pos_ += count;
          break;
        }
        case static_cast<std::int32_t>(Type::int32):
          a.value = values<std::int32_t>(count);
          break;
        case static_cast<std::int32_t>(Type::int64):
          if (variant_ != Variant::cdf5) throw IntegrityError("cdf: INT64 attribute in a CDF-2 file");
          a.value = values<std::int64_t>(count);
          break;
        case static_cast<std::int32_t>(Type::float32):
          a.value = values<float>(count);
          break;
        case static_cast<std::int32_t>(Type::float64):
          a.value = values<double>(count);
          break;
        default:
          throw IntegrityError("cdf: unsupported type code " + std::to_string(type) + " for attribute " + a.name);
      }
      align();
      out.push_back(std::move(a));
    }
    return out;
  }

 private:
  void need(std::uint64_t n) const {
    if (pos_ + n > bytes_.size()) throw TruncatedHeader{};
  }
  // Counts larger than any plausible header mean corruption, not truncation.
  void sanity(std::uint64_t n) const {
    if (n > (std::uint64_t{1} << 40)) throw IntegrityError("cdf: implausible element count in header");
  }
  template <class T>
  T get() {
    need(sizeof(T));
    const T v = load_be<T>(bytes_.data() + pos_);
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::byte> bytes_;
  Variant variant_;
  std::size_t pos_ = 0;
};

void check_unique(const std::vector<std::string>& names, const std::string& scope) {
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (n.empty()) throw ValidationError("cdf: empty name in " + scope);
    if (!seen.insert(n).second) throw ValidationError("cdf: duplicate name '" + n + "' in " + scope);
  }
}

void check_attrs(const AttrList& attrs, Variant variant, const std::string& scope) {
  std::vector<std::string> names;
  for (const auto& a : attrs) {
    names.push_back(a.name);
    if (a.type() == Type::int64 && variant == Variant::cdf2) {
      throw ValidationError("cdf: INT64 attribute '" + a.name + "' requires CDF-5");
    }
  }
  check_unique(names, scope);
}

}  // namespace

std::size_t type_size(Type t) {
  switch (t) {
    case Type::char_:
      return 1;
    case Type::int32:
    case Type::float32:
      return 4;
    case Type::float64:
    case Type::int64:
      return 8;
  }
  return 0;
}

const char* type_name(Type t) {
  switch (t) {
    case Type::char_:
      return "char";
    case Type::int32:
      return "int";
    case Type::float32:
      return "float";
    case Type::float64:
      return "double";
    case Type::int64:
      return "int64";
  }
  return "?";
}

Type Attribute::type() const {
  return std::visit(
      [](const auto& v) {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, std::string>) return Type::char_;
        else return type_of<typename V::value_type>();
      },
      value);
}

std::uint64_t Attribute::size() const {
  return std::visit([](const auto& v) { return static_cast<std::uint64_t>(v.size()); }, value);
}

void set_attr(AttrList& list, const std::string& name, AttrValue value) {
  for (auto& a : list) {
    if (a.name == name) {
      a.value = std::move(value);
      return;
    }
  }
  list.push_back({name, std::move(value)});
}

const Attribute* find_attr(const AttrList& list, const std::string& name) {
  for (const auto& a : list) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

std::optional<std::string> attr_text(const AttrList& list, const std::string& name) {
  const auto* a = find_attr(list, name);
  if (!a) return std::nullopt;
  if (const auto* s = std::get_if<std::string>(&a->value)) return *s;
  return std::nullopt;
}

std::optional<double> attr_number(const AttrList& list, const std::string& name) {
  const auto* a = find_attr(list, name);
  if (!a) return std::nullopt;
  return std::visit(
      [](const auto& v) -> std::optional<double> {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, std::string>) return std::nullopt;
        else {
          if (v.size() != 1) return std::nullopt;
          return static_cast<double>(v[0]);
        }
      },
      a->value);
}

// ---------------------------------------------------------------------------
// FileModel

std::size_t FileModel::add_dim(const std::string& name, std::uint64_t length) {
  if (find_dim(name)) throw ValidationError("cdf: duplicate dimension '" + name + "'");
  dims.push_back({name, length});
  return dims.size() - 1;
}

Variable& FileModel::add_var(const std::string& name, Type type, const std::vector<std::string>& dim_names) {
  if (find_var(name)) throw ValidationError("cdf: duplicate variable '" + name + "'");
  Variable v;
  v.name = name;
  v.type = type;
  for (const auto& dn : dim_names) {
    const auto id = find_dim(dn);
    if (!id) throw ValidationError("cdf: variable '" + name + "' uses unknown dimension '" + dn + "'");
    v.dimids.push_back(*id);
  }
  vars.push_back(std::move(v));
  return vars.back();
}

std::optional<std::size_t> FileModel::find_dim(const std::string& name) const {
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i].name == name) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> FileModel::find_var(const std::string& name) const {
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (vars[i].name == name) return i;
  }
  return std::nullopt;
}

const Variable& FileModel::var(const std::string& name) const {
  const auto id = find_var(name);
  if (!id) throw ValidationError("cdf: no variable named '" + name + "'");
  return vars[*id];
}

Variable& FileModel::var(const std::string& name) {
  return const_cast<Variable&>(std::as_const(*this).var(name));
}

std::optional<std::size_t> FileModel::record_dim() const {
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i].is_record()) return i;
  }
  return std::nullopt;
}

bool FileModel::is_record_var(const Variable& v) const {
  return !v.dimids.empty() && v.dimids.front() < dims.size() && dims[v.dimids.front()].is_record();
}

std::vector<std::uint64_t> FileModel::shape(const Variable& v) const {
  std::vector<std::uint64_t> s;
  for (auto id : v.dimids) s.push_back(dims[id].is_record() ? numrecs : dims[id].length);
  return s;
}

std::uint64_t FileModel::slab_elements(const Variable& v) const {
  std::uint64_t n = 1;
  for (std::size_t i = is_record_var(v) ? 1 : 0; i < v.dimids.size(); ++i) n *= dims[v.dimids[i]].length;
  return n;
}

std::uint64_t FileModel::total_elements(const Variable& v) const {
  return is_record_var(v) ? slab_elements(v) * numrecs : slab_elements(v);
}

std::uint64_t FileModel::record_size() const {
  std::uint64_t size = 0;
  for (const auto& v : vars) {
    if (is_record_var(v)) size += pad4(slab_elements(v) * type_size(v.type));
  }
  return size;
}

void FileModel::validate() const {
  std::vector<std::string> names;
  int n_record = 0;
  for (const auto& d : dims) {
    names.push_back(d.name);
    if (d.is_record()) ++n_record;
    if (variant == Variant::cdf2 && d.length > static_cast<std::uint64_t>(std::numeric_limits<std::int32_t>::max())) {
      throw ValidationError("cdf: dimension '" + d.name + "' too long for CDF-2");
    }
  }
  check_unique(names, "dimensions");
  if (n_record > 1) throw ValidationError("cdf: at most one record dimension is allowed");
  check_attrs(global_attrs, variant, "global attributes");

  names.clear();
  std::vector<std::size_t> fixed_big, record_big;
  std::size_t n_fixed = 0, n_recvars = 0;
  for (const auto& v : vars) {
    names.push_back(v.name);
    check_attrs(v.attrs, variant, "attributes of '" + v.name + "'");
    if (v.type == Type::char_) {
      throw ValidationError("cdf: CHAR variable '" + v.name + "' is not supported (attribute text only)");
    }
    if (v.type == Type::int64 && variant == Variant::cdf2) {
      throw ValidationError("cdf: INT64 variable '" + v.name + "' requires CDF-5");
    }
    for (std::size_t i = 0; i < v.dimids.size(); ++i) {
      if (v.dimids[i] >= dims.size()) throw ValidationError("cdf: variable '" + v.name + "' has a bad dimension id");
      if (i > 0 && dims[v.dimids[i]].is_record()) {
        throw ValidationError("cdf: record dimension must be the first dimension of '" + v.name + "'");
      }
    }
    const std::uint64_t bytes = slab_elements(v) * type_size(v.type);
    if (is_record_var(v)) {
      if (bytes > kCdf2VsizeLimit) record_big.push_back(n_recvars);
      ++n_recvars;
    } else {
      if (bytes > kCdf2VsizeLimit) fixed_big.push_back(n_fixed);
      ++n_fixed;
    }
  }
  check_unique(names, "variables");
  if (variant == Variant::cdf2) {
    // Only the last variable of a section may exceed 4 GiB in the 64-bit offset format.
    const bool fixed_ok = fixed_big.empty() || (fixed_big.size() == 1 && fixed_big[0] == n_fixed - 1 && n_recvars == 0);
    const bool record_ok = record_big.empty() || (record_big.size() == 1 && record_big[0] == n_recvars - 1);
    if (!fixed_ok || !record_ok) {
      throw ValidationError("cdf: variable size exceeds the CDF-2 per-variable limit; use CDF-5");
    }
    if (numrecs > static_cast<std::uint64_t>(std::numeric_limits<std::int32_t>::max())) {
      throw ValidationError("cdf: too many records for CDF-2");
    }
  }
}

void FileModel::finalize() {
  validate();
  for (auto& v : vars) v.vsize = pad4(slab_elements(v) * type_size(v.type));
  std::uint64_t offset = encode_header(*this).size();
  for (auto& v : vars) {
    if (is_record_var(v)) continue;
    v.begin = offset;
    offset += v.vsize;
  }
  for (auto& v : vars) {
    if (!is_record_var(v)) continue;
    v.begin = offset;
    offset += v.vsize;
  }
}

std::vector<std::byte> encode_header(const FileModel& model) {
  HeaderEncoder enc(model.variant);
  const char magic[4] = {'C', 'D', 'F', static_cast<char>(model.variant)};
  enc.raw(magic, 4);
  enc.non_neg(model.numrecs);

  if (model.dims.empty()) {
    enc.absent();
  } else {
    enc.u32(kTagDimension);
    enc.non_neg(model.dims.size());
    for (const auto& d : model.dims) {
      enc.name(d.name);
      enc.non_neg(d.length);
    }
  }
  enc.attr_list(model.global_attrs);
  if (model.vars.empty()) {
    enc.absent();
  } else {
    enc.u32(kTagVariable);
    enc.non_neg(model.vars.size());
    for (const auto& v : model.vars) {
      enc.name(v.name);
      enc.non_neg(v.dimids.size());
      for (auto id : v.dimids) enc.non_neg(id);
      enc.attr_list(v.attrs);
      enc.u32(static_cast<std::uint32_t>(v.type));
      if (model.variant == Variant::cdf2 && v.vsize > kCdf2VsizeLimit) enc.non_neg(0xFFFFFFFFULL);
      else enc.non_neg(v.vsize);
      enc.offset(v.begin);
    }
  }
  return enc.take();
}

SizeAccounting compute_size(const FileModel& model) {
  FileModel m = model;
  m.finalize();
  SizeAccounting s;
  s.header_bytes = encode_header(m).size();
  for (const auto& v : m.vars) {
    if (!m.is_record_var(v)) s.fixed_bytes += v.vsize;
  }
  s.record_size = m.record_size();
  s.numrecs = m.numrecs;
  s.total_bytes = s.header_bytes + s.fixed_bytes + s.numrecs * s.record_size;
  return s;
}

std::uint64_t element_count(const VarData& data) {
  return std::visit([](const auto& v) { return static_cast<std::uint64_t>(v.size()); }, data);
}

namespace {

Type data_type(const VarData& data) {
  return std::visit([](const auto& v) { return type_of<typename std::decay_t<decltype(v)>::value_type>(); }, data);
}

// Infers numrecs from the record variables' data lengths.
FileModel prepare_model(const FileModel& model, const std::map<std::string, VarData>& data) {
  FileModel m = model;
  std::optional<std::uint64_t> numrecs;
  for (const auto& v : m.vars) {
    const auto it = data.find(v.name);
    if (it == data.end()) throw ValidationError("cdf: no data supplied for variable '" + v.name + "'");
    if (data_type(it->second) != v.type) {
      throw ValidationError("cdf: data for '" + v.name + "' does not match its declared type");
    }
    const auto n = element_count(it->second);
    if (m.is_record_var(v)) {
      const auto slab = m.slab_elements(v);
      if (slab == 0 || n % slab != 0) throw ValidationError("cdf: data for '" + v.name + "' is not a whole number of records");
      if (numrecs && *numrecs != n / slab) throw ValidationError("cdf: record variables disagree on numrecs");
      numrecs = n / slab;
    }
  }
  if (numrecs) m.numrecs = *numrecs;
  for (const auto& v : m.vars) {
    if (!m.is_record_var(v) && element_count(data.at(v.name)) != m.slab_elements(v)) {
      throw ValidationError("cdf: data for '" + v.name + "' has the wrong number of elements");
    }
  }
  m.finalize();
  return m;
}

template <class T>
void encode_values(std::span<const T> values, std::byte* dst) {
  for (std::size_t i = 0; i < values.size(); ++i) store_be(values[i], dst + i * sizeof(T));
}

void encode_data(const VarData& data, std::uint64_t first, std::uint64_t count, std::byte* dst) {
  std::visit(
      [&](const auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        encode_values<T>(std::span<const T>(v.data() + first, count), dst);
      },
      data);
}

}  // namespace

std::vector<std::byte> write_file(const FileModel& model, const std::map<std::string, VarData>& data) {
  const FileModel m = prepare_model(model, data);
  const auto size = compute_size(m);
  std::vector<std::byte> out = encode_header(m);
  out.resize(size.total_bytes, std::byte{0});
  const auto recsize = m.record_size();
  for (const auto& v : m.vars) {
    const auto& d = data.at(v.name);
    const auto slab = m.slab_elements(v);
    if (m.is_record_var(v)) {
      for (std::uint64_t r = 0; r < m.numrecs; ++r) encode_data(d, r * slab, slab, out.data() + v.begin + r * recsize);
    } else {
      encode_data(d, 0, slab, out.data() + v.begin);
    }
  }
  return out;
}

void write_file(const std::filesystem::path& path, const FileModel& model, const std::map<std::string, VarData>& data) {
  const FileModel m = prepare_model(model, data);
  Writer w(path, m);
  for (const auto& v : m.vars) {
    const auto& d = data.at(v.name);
    const auto slab = m.slab_elements(v);
    std::visit(
        [&](const auto& values) {
          using T = typename std::decay_t<decltype(values)>::value_type;
          const std::uint64_t nrec = m.is_record_var(v) ? m.numrecs : 1;
          for (std::uint64_t r = 0; r < nrec; ++r) {
            w.write<T>(v.name, r, 0, std::span<const T>(values.data() + r * slab, slab));
          }
        },
        d);
  }
  w.close();
}

// ---------------------------------------------------------------------------
// Writer

Writer::Writer(const std::filesystem::path& path, FileModel model) : path_(path), model_(std::move(model)) {
  model_.finalize();
  out_.open(path_, std::ios::binary | std::ios::in | std::ios::out | std::ios::trunc);
  if (!out_) throw IoError("cdf: cannot create " + path_.string());
  const auto header = encode_header(model_);
  out_.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
  if (!out_) throw IoError("cdf: failed writing header of " + path_.string());
}

Writer::~Writer() {
  if (!closed_) {
    try {
      out_.close();
    } catch (...) {
    }
  }
}

std::uint64_t Writer::element_offset(const std::string& name, std::uint64_t record, std::uint64_t first) const {
  const auto& v = model_.var(name);
  std::uint64_t off = v.begin + first * type_size(v.type);
  if (model_.is_record_var(v)) off += record * model_.record_size();
  return off;
}

void Writer::write_bytes(const std::string& name, Type type, std::uint64_t record, std::uint64_t first,
                         std::uint64_t count, const void* data) {
  const auto id = model_.find_var(name);
  if (!id) throw ValidationError("cdf: write to unknown variable '" + name + "'");
  const auto& v = model_.vars[*id];
  if (v.type != type) throw ValidationError("cdf: write to '" + name + "' with mismatched element type");
  const bool is_rec = model_.is_record_var(v);
  if (!is_rec) record = 0;
  const auto slab = model_.slab_elements(v);
  if (first + count > slab) {
    throw IntegrityError("cdf: write to '" + name + "' past its end at element " + std::to_string(first + count));
  }
  if (count == 0) return;

  const auto esize = type_size(type);
  std::vector<std::byte> buf(count * esize);
  switch (type) {
    case Type::int32:
      encode_values(std::span(static_cast<const std::int32_t*>(data), count), buf.data());
      break;
    case Type::int64:
      encode_values(std::span(static_cast<const std::int64_t*>(data), count), buf.data());
      break;
    case Type::float32:
      encode_values(std::span(static_cast<const float*>(data), count), buf.data());
      break;
    case Type::float64:
      encode_values(std::span(static_cast<const double*>(data), count), buf.data());
      break;
    case Type::char_:
      throw ValidationError("cdf: CHAR variables are not supported");
  }

  std::lock_guard lock(mutex_);
  if (closed_) throw IntegrityError("cdf: write after close on " + path_.string());
  auto& intervals = coverage_[{*id, record}];
  const std::uint64_t lo = first, hi = first + count;
  auto next = intervals.lower_bound(lo);
  if (next != intervals.end() && next->first < hi) {
    throw IntegrityError("cdf: overlapping write to '" + name + "' at element " + std::to_string(next->first));
  }
  if (next != intervals.begin()) {
    auto prev = std::prev(next);
    if (prev->second > lo) {
      throw IntegrityError("cdf: overlapping write to '" + name + "' at element " + std::to_string(lo));
    }
  }
  // Merge with touching neighbors.
  std::uint64_t new_lo = lo, new_hi = hi;
  if (next != intervals.begin()) {
    auto prev = std::prev(next);
    if (prev->second == lo) {
      new_lo = prev->first;
      intervals.erase(prev);
    }
  }
  if (next != intervals.end() && next->first == hi) {
    new_hi = next->second;
    intervals.erase(next);
  }
  intervals[new_lo] = new_hi;
  if (is_rec) max_record_ = std::max(max_record_, record + 1);

  const auto off = element_offset(name, record, first);
  out_.seekp(static_cast<std::streamoff>(off));
  out_.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out_) throw IoError("cdf: write failed on " + path_.string());
}

std::uint64_t Writer::close() {
  std::lock_guard lock(mutex_);
  if (closed_) return compute_size(model_).total_bytes;
  model_.numrecs = std::max(model_.numrecs, max_record_);
  for (std::size_t id = 0; id < model_.vars.size(); ++id) {
    const auto& v = model_.vars[id];
    const std::uint64_t nrec = model_.is_record_var(v) ? model_.numrecs : 1;
    const auto slab = model_.slab_elements(v);
    for (std::uint64_t r = 0; r < nrec; ++r) {
      if (slab == 0) continue;
      const auto it = coverage_.find({id, r});
      std::uint64_t missing = 0;
      if (it != coverage_.end() && !it->second.empty()) {
        const auto& iv = it->second;
        if (iv.size() == 1 && iv.begin()->first == 0 && iv.begin()->second == slab) continue;
        missing = iv.begin()->first == 0 ? iv.begin()->second : 0;
      }
      throw IntegrityError("cdf: variable '" + v.name + "' record " + std::to_string(r) +
                           " not fully written; first missing element " + std::to_string(missing) + " in " +
                           path_.string());
    }
  }
  const auto header = encode_header(model_);
  out_.seekp(0);
  out_.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
  out_.flush();
  if (!out_) throw IoError("cdf: failed finalizing " + path_.string());
  out_.close();
  closed_ = true;
  const auto total = compute_size(model_).total_bytes;
  std::filesystem::resize_file(path_, total);
  return total;
}

// ---------------------------------------------------------------------------
// Reader

Reader Reader::open(const std::filesystem::path& path) {
  Reader r;
  auto in = std::make_unique<std::ifstream>(path, std::ios::binary);
  if (!*in) throw IoError("cdf: cannot open " + path.string());
  std::error_code ec;
  r.file_bytes_ = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cdf: cannot stat " + path.string());
  r.in_ = std::move(in);
  r.parse();
  return r;
}

Reader Reader::from_bytes(std::vector<std::byte> bytes) {
  Reader r;
  r.file_bytes_ = bytes.size();
  std::string s(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  r.in_ = std::make_unique<std::istringstream>(std::move(s), std::ios::binary);
  r.parse();
  return r;
}

void Reader::read_at(std::uint64_t offset, std::size_t n, std::byte* dst) {
  if (offset + n > file_bytes_) throw IntegrityError("cdf: read past end of file (truncated data)");
  in_->clear();
  in_->seekg(static_cast<std::streamoff>(offset));
  in_->read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (!*in_) throw IoError("cdf: short read at offset " + std::to_string(offset));
}

void Reader::parse() {
  if (file_bytes_ < 4) throw IntegrityError("cdf: truncated header");
  std::byte magic[4];
  read_at(0, 4, magic);
  if (static_cast<char>(magic[0]) != 'C' || static_cast<char>(magic[1]) != 'D' || static_cast<char>(magic[2]) != 'F') {
    throw IntegrityError("cdf: bad magic (not a NetCDF classic file)");
  }
  const auto version = static_cast<int>(magic[3]);
  if (version != 2 && version != 5) {
    throw IntegrityError("cdf: unsupported variant (format version byte " + std::to_string(version) + ")");
  }
  const auto variant = static_cast<Variant>(version);

  std::size_t chunk = std::min<std::uint64_t>(file_bytes_, 64 * 1024);
  while (true) {
    std::vector<std::byte> buf(chunk);
    read_at(0, chunk, buf.data());
    try {
      HeaderDecoder dec(buf, variant);
      FileModel m;
      m.variant = variant;
      dec.skip(4);
      const auto numrecs_raw = variant == Variant::cdf5 ? dec.u64() : dec.u32();
      if ((variant == Variant::cdf2 && numrecs_raw == 0xFFFFFFFFULL) || numrecs_raw == ~std::uint64_t{0}) {
        throw IntegrityError("cdf: streaming numrecs is not supported");
      }
      m.numrecs = numrecs_raw;

      auto tag = dec.u32();
      auto n = dec.non_neg();
      if (!(tag == 0 && n == 0)) {
        if (tag != kTagDimension) throw IntegrityError("cdf: malformed dimension list tag");
        for (std::uint64_t i = 0; i < n; ++i) {
          Dimension d;
          d.name = dec.name();
          d.length = dec.non_neg();
          m.dims.push_back(std::move(d));
        }
      }
      m.global_attrs = dec.attr_list();
      tag = dec.u32();
      n = dec.non_neg();
      if (!(tag == 0 && n == 0)) {
        if (tag != kTagVariable) throw IntegrityError("cdf: malformed variable list tag");
        for (std::uint64_t i = 0; i < n; ++i) {
          Variable v;
          v.name = dec.name();
          const auto ndims = dec.non_neg();
          if (ndims > 1024) throw IntegrityError("cdf: implausible rank for '" + v.name + "'");
          for (std::uint64_t k = 0; k < ndims; ++k) {
            const auto id = dec.non_neg();
            if (id >= m.dims.size()) throw IntegrityError("cdf: bad dimension id in '" + v.name + "'");
            v.dimids.push_back(id);
          }
          v.attrs = dec.attr_list();
          const auto type = static_cast<std::int32_t>(dec.u32());
          if (type != static_cast<std::int32_t>(Type::int32) && type != static_cast<std::int32_t>(Type::float32) &&
              type != static_cast<std::int32_t>(Type::float64) && type != static_cast<std::int32_t>(Type::int64)) {
            throw IntegrityError("cdf: unsupported type code " + std::to_string(type) + " for variable " + v.name);
          }
          v.type = static_cast<Type>(type);
          v.vsize = dec.non_neg();
          v.begin = dec.offset();
          m.vars.push_back(std::move(v));
        }
      }
      header_bytes_ = dec.pos();
      model_ = std::move(m);
      break;
    } catch (const TruncatedHeader&) {
      if (chunk >= file_bytes_) throw IntegrityError("cdf: truncated header");
      chunk = static_cast<std::size_t>(std::min<std::uint64_t>(file_bytes_, chunk * 4));
    }
  }

  try {
    model_.validate();
  } catch (const ValidationError& e) {
    throw IntegrityError(std::string("cdf: invalid header: ") + e.what());
  }
  const auto recsize = model_.record_size();
  for (auto& v : model_.vars) {
    if (v.begin < header_bytes_) {
      throw IntegrityError("cdf: begin offset of '" + v.name + "' overlaps the header");
    }
    const auto bytes = model_.slab_elements(v) * type_size(v.type);
    std::uint64_t end = v.begin + bytes;
    if (model_.is_record_var(v) && model_.numrecs > 0) end += (model_.numrecs - 1) * recsize;
    if (model_.is_record_var(v) && model_.numrecs == 0) continue;
    if (end > file_bytes_) throw IntegrityError("cdf: data of '" + v.name + "' extends past end of file");
  }
}

namespace {

template <class T>
std::vector<T> decode(const std::vector<std::byte>& raw) {
  std::vector<T> out(raw.size() / sizeof(T));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = load_be<T>(raw.data() + i * sizeof(T));
  return out;
}

VarData decode_as(Type type, const std::vector<std::byte>& raw) {
  switch (type) {
    case Type::int32:
      return decode<std::int32_t>(raw);
    case Type::int64:
      return decode<std::int64_t>(raw);
    case Type::float32:
      return decode<float>(raw);
    case Type::float64:
      return decode<double>(raw);
    case Type::char_:
      break;
  }
  throw IntegrityError("cdf: unsupported variable type");
}

}  // namespace

VarData Reader::read_slab(const std::string& name, const std::vector<std::uint64_t>& start,
                          const std::vector<std::uint64_t>& count) {
  const auto& v = model_.var(name);
  const auto shape = model_.shape(v);
  if (start.size() != shape.size() || count.size() != shape.size()) {
    throw ValidationError("cdf: hyperslab rank does not match '" + name + "'");
  }
  std::uint64_t total = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (start[i] + count[i] > shape[i]) throw ValidationError("cdf: hyperslab outside '" + name + "'");
    total *= count[i];
  }
  const auto esize = type_size(v.type);
  std::vector<std::byte> raw(total * esize);
  if (total == 0) return decode_as(v.type, raw);

  const bool is_rec = model_.is_record_var(v);
  const std::size_t rank = shape.size();
  const auto recsize = model_.record_size();
  if (rank == 0) {
    read_at(v.begin, esize, raw.data());
    return decode_as(v.type, raw);
  }
  if (is_rec && rank == 1) {
    // One element per record.
    for (std::uint64_t r = 0; r < count[0]; ++r) read_at(v.begin + (start[0] + r) * recsize, esize, raw.data() + r * esize);
    return decode_as(v.type, raw);
  }
  // Element strides within one record (the record dimension uses recsize instead).
  std::vector<std::uint64_t> stride(rank, 0);
  std::uint64_t s = 1;
  for (std::size_t i = rank; i-- > (is_rec ? 1u : 0u);) {
    stride[i] = s;
    s *= shape[i];
  }
  const std::uint64_t run = count[rank - 1];
  std::vector<std::uint64_t> idx(rank - 1, 0);
  std::uint64_t out_pos = 0;
  while (true) {
    std::uint64_t off = v.begin + start[rank - 1] * stride[rank - 1] * esize;
    for (std::size_t i = 0; i + 1 < rank; ++i) {
      const auto coord = start[i] + idx[i];
      off += (is_rec && i == 0) ? coord * recsize : coord * stride[i] * esize;
    }
    read_at(off, run * esize, raw.data() + out_pos * esize);
    out_pos += run;
    bool done = true;
    for (std::size_t d = rank - 1; d-- > 0;) {
      if (++idx[d] < count[d]) {
        done = false;
        break;
      }
      idx[d] = 0;
    }
    if (done) break;
  }
  return decode_as(v.type, raw);
}

VarData Reader::read_flat(const std::string& name, std::uint64_t first, std::uint64_t count) {
  const auto& v = model_.var(name);
  const auto total = model_.total_elements(v);
  if (first + count > total) throw ValidationError("cdf: flat range outside '" + name + "'");
  const auto esize = type_size(v.type);
  std::vector<std::byte> raw(count * esize);
  if (!model_.is_record_var(v)) {
    if (count > 0) read_at(v.begin + first * esize, count * esize, raw.data());
    return decode_as(v.type, raw);
  }
  const auto slab = model_.slab_elements(v);
  const auto recsize = model_.record_size();
  std::uint64_t done = 0;
  while (done < count) {
    const auto e = first + done;
    const auto rec = e / slab, within = e % slab;
    const auto n = std::min(count - done, slab - within);
    read_at(v.begin + rec * recsize + within * esize, n * esize, raw.data() + done * esize);
    done += n;
  }
  return decode_as(v.type, raw);
}

VarData Reader::read_all(const std::string& name) {
  const auto& v = model_.var(name);
  return read_flat(name, 0, model_.total_elements(v));
}

// ---------------------------------------------------------------------------

namespace {

std::string format_attr_value(const AttrValue& value) {
  return std::visit(
      [](const auto& v) -> std::string {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, std::string>) {
          std::string escaped;
          for (char c : v) {
            if (c == '"' || c == '\\') escaped += '\\';
            if (c == '\n') {
              escaped += "\\n";
              continue;
            }
            escaped += c;
          }
          return "\"" + escaped + "\"";
        } else {
          std::string s;
          for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ", ";
            s += fmt::format("{}", v[i]);
          }
          return s;
        }
      },
      value);
}

}  // namespace

std::string dump_header(const FileModel& model) {
  std::string out;
  out += fmt::format("netcdf {{ // format: {}\n", model.variant == Variant::cdf5 ? "CDF-5 (64-bit data)" : "CDF-2 (64-bit offset)");
  out += "dimensions:\n";
  for (const auto& d : model.dims) {
    if (d.is_record()) out += fmt::format("\t{} = UNLIMITED ; // ({} currently)\n", d.name, model.numrecs);
    else out += fmt::format("\t{} = {} ;\n", d.name, d.length);
  }
  out += "variables:\n";
  for (const auto& v : model.vars) {
    std::string dims;
    for (std::size_t i = 0; i < v.dimids.size(); ++i) {
      if (i) dims += ", ";
      dims += model.dims[v.dimids[i]].name;
    }
    out += fmt::format("\t{} {}{} ; // begin={} vsize={}\n", type_name(v.type), v.name,
                       v.dimids.empty() ? "" : "(" + dims + ")", v.begin, v.vsize);
    for (const auto& a : v.attrs) out += fmt::format("\t\t{}:{} = {} ;\n", v.name, a.name, format_attr_value(a.value));
  }
  if (!model.global_attrs.empty()) {
    out += "\n// global attributes:\n";
    for (const auto& a : model.global_attrs) out += fmt::format("\t\t:{} = {} ;\n", a.name, format_attr_value(a.value));
  }
  out += "}\n";
  return out;
}

std::uint32_t data_checksum(const VarData& data) {
  boost::crc_32_type crc;
  std::visit(
      [&](const auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        std::byte buf[sizeof(T)];
        for (const auto& x : v) {
          store_be(x, buf);
          crc.process_bytes(buf, sizeof buf);
        }
      },
      data);
  return crc.checksum();
}

}  // namespace kiloland::cdf
