#include "tgail/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tgail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace {

template <typename T>
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

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void get_raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint: truncated data");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(Checkpoint::kMagic, 4);
  put<std::uint32_t>(out, Checkpoint::kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    put_string(out, k);
    put_string(out, v);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const Mat& m = ckpt.params.value(i);
    put_string(out, ckpt.params.name(i));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    out.append(reinterpret_cast<const char*>(m.data()),
               static_cast<std::size_t>(m.size()) * sizeof(Scalar));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  char magic[4];
  r.get_raw(magic, 4);
  if (std::memcmp(magic, Checkpoint::kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic (expected SKG1)");
  const auto version = r.get<std::uint32_t>();
  if (version != Checkpoint::kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  const auto n_meta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.get_string();
    ckpt.meta[k] = r.get_string();
  }
  const auto n_arrays = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    std::string name = r.get_string();
    const auto rows = static_cast<Index>(r.get<std::uint64_t>());
    const auto cols = static_cast<Index>(r.get<std::uint64_t>());
    Mat m(rows, cols);
    r.get_raw(m.data(), static_cast<std::size_t>(m.size()) * sizeof(Scalar));
    ckpt.params.add(std::move(name), std::move(m));
  }
  if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path.string());
  const std::string bytes = serialize_checkpoint(ckpt);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint(ss.str());
}

void append_prefixed(ad::ParamSet& dst, const ad::ParamSet& src, const std::string& prefix) {
  for (std::size_t i = 0; i < src.size(); ++i) dst.add(prefix + src.name(i), src.value(i));
}

ad::ParamSet extract_prefixed(const ad::ParamSet& src, const std::string& prefix) {
  ad::ParamSet out;
  for (std::size_t i = 0; i < src.size(); ++i)
    if (src.name(i).rfind(prefix, 0) == 0) out.add(src.name(i).substr(prefix.size()), src.value(i));
  return out;
}

}  // namespace tgail
