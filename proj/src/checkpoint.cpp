#include "odcs/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace odcs {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'O', 'D', 'C', 'S'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) {
      throw ParseError("checkpoint '" + path_ + "' truncated", pos_);
    }
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw ParseError("checkpoint '" + path_ + "' truncated", pos_);
    }
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string out;
  out.append(kMagic, 4);
  put<std::uint32_t>(out, ckpt.version);
  put<std::uint64_t>(out, ckpt.config_text.size());
  out += ckpt.config_text;
  put<std::int64_t>(out, ckpt.epoch);
  put<std::int64_t>(out, ckpt.step);
  put<std::uint64_t>(out, ckpt.rng_state);
  put<std::uint64_t>(out, ckpt.rng_inc);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    const std::span<const float> v = t.values();
    out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed on checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("read failed on checkpoint '" + path + "'");

  Reader r(bytes, path);
  if (r.get_string(4) != std::string(kMagic, 4)) {
    throw ParseError("checkpoint '" + path + "' has wrong magic", 0);
  }
  Checkpoint ckpt;
  ckpt.version = r.get<std::uint32_t>();
  if (ckpt.version != kVersion) {
    throw ParseError("checkpoint '" + path + "' has unsupported version " +
                     std::to_string(ckpt.version) + " (expected " + std::to_string(kVersion) + ")",
                     4);
  }
  const std::uint64_t cfg_len = r.get<std::uint64_t>();
  ckpt.config_text = r.get_string(cfg_len);
  ckpt.epoch = r.get<std::int64_t>();
  ckpt.step = r.get<std::int64_t>();
  ckpt.rng_state = r.get<std::uint64_t>();
  ckpt.rng_inc = r.get<std::uint64_t>();
  const std::uint32_t count = r.get<std::uint32_t>();
  ckpt.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.get<std::uint32_t>();
    std::string name = r.get_string(name_len);
    const std::uint32_t rank = r.get<std::uint32_t>();
    if (rank > 8) throw ParseError("checkpoint tensor '" + name + "' has implausible rank", r.pos());
    Shape shape(rank);
    std::int64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<int>(r.get<std::uint32_t>());
      if (shape[d] <= 0) {
        throw ParseError("checkpoint tensor '" + name + "' has non-positive dimension", r.pos());
      }
      numel *= shape[d];
    }
    std::vector<float> values(static_cast<std::size_t>(numel));
    const std::string raw = r.get_string(static_cast<std::size_t>(numel) * sizeof(float));
    std::memcpy(values.data(), raw.data(), raw.size());
    ckpt.tensors.emplace_back(std::move(name), Tensor::from_values(std::move(shape), std::move(values)));
  }
  if (r.remaining() != 0) {
    throw ParseError("checkpoint '" + path + "' has trailing bytes", r.pos());
  }
  return ckpt;
}

}  // namespace odcs
