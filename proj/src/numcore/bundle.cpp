#include "seqstate/numcore/bundle.hpp"

#include <bit>
#include <cstring>

#include "seqstate/errors.hpp"
#include "seqstate/io.hpp"

static_assert(std::endian::native == std::endian::little, "bundle format assumes a little-endian host");

namespace seqstate::numcore {

namespace {

constexpr char kMagic[4] = {'S', 'Q', 'S', 'B'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string() {
    const auto len = get<std::uint32_t>();
    need(len);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }

  void get_doubles(double* dst, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("bundle truncated");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_bundle(const Bundle& bundle) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put_string(out, bundle.arch_tag);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(bundle.tensors.size()));
  for (const auto& t : bundle.tensors) {
    put_string(out, t.name);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.cols()));
  }
  for (const auto& t : bundle.tensors) {
    out.append(reinterpret_cast<const char*>(t.value.data()),
               static_cast<std::size_t>(t.value.size()) * sizeof(double));
  }
  return out;
}

Bundle decode_bundle(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError("not a parameter bundle (bad magic)");
  }
  Reader in(bytes);
  in.get<std::uint32_t>();  // magic
  const auto version = in.get<std::uint32_t>();
  if (version != kVersion) throw DataError("unsupported bundle version " + std::to_string(version));
  Bundle b;
  b.arch_tag = in.get_string();
  const auto count = in.get<std::uint32_t>();
  b.tensors.resize(count);
  for (auto& t : b.tensors) {
    t.name = in.get_string();
    const auto rows = in.get<std::uint64_t>();
    const auto cols = in.get<std::uint64_t>();
    t.value.resize(static_cast<Index>(rows), static_cast<Index>(cols));
  }
  for (auto& t : b.tensors) in.get_doubles(t.value.data(), static_cast<std::size_t>(t.value.size()));
  if (!in.done()) throw DataError("trailing bytes after bundle payload");
  return b;
}

void save_bundle(const std::filesystem::path& path, const Bundle& bundle) {
  write_file_atomic(path, encode_bundle(bundle));
}

Bundle load_bundle(const std::filesystem::path& path) { return decode_bundle(read_file(path)); }

Bundle bundle_from_params(const std::string& arch_tag, const ParamList& params) {
  Bundle b{arch_tag, {}};
  for (const auto& [name, v] : params) b.tensors.push_back({name, v.value()});
  return b;
}

void load_params(const Bundle& bundle, const ParamList& params) {
  if (bundle.tensors.size() != params.size()) {
    throw DataError("bundle holds " + std::to_string(bundle.tensors.size()) + " tensors, model expects " +
                    std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = bundle.tensors[i];
    const auto& [name, v] = params[i];
    if (t.name != name || t.value.rows() != v.rows() || t.value.cols() != v.cols()) {
      throw DataError("bundle tensor '" + t.name + "' does not match model parameter '" + name + "'");
    }
    Var handle = v;
    handle.mutable_value() = t.value;
  }
}

}  // namespace seqstate::numcore
