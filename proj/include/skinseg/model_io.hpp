#pragma once

// Model file layout (all integers and reals little-endian):
//
//   8 bytes   magic "SKSEGNET"
//   u32       format version (kModelFormatVersion)
//   u32       mode (0 dual, 1 local only, 2 global only)
//   u32 x 12  input side, input channels, conv1 kernel, pool1 window,
//             pool1 stride, conv2 kernel, pool2 window, pool2 stride,
//             feature maps, hidden width, fusion inputs, classes
//   u64       total parameter count
//   f32 ...   parameter blobs in for_each_tensor order:
//             local conv1 W, b, local conv2 W, b, global conv1 W, b,
//             global conv2 W, b, fusion W, b, output W, b
//
// Weights are [out][kh][kw][in] for convolutions and [out][in] for dense
// layers. Nothing may follow the last blob.

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "skinseg/error.hpp"
#include "skinseg/nn.hpp"

namespace skinseg::nn {

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr std::array<char, 8> kModelMagic = {'S', 'K', 'S', 'E', 'G', 'N', 'E', 'T'};

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::vector<char> bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    return lo | (static_cast<std::uint64_t>(u32()) << 32);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  void raw(char* p, std::size_t n) {
    need(n);
    std::copy_n(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_), n, p);
    pos_ += n;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw InputError("corrupt model file '" + name_ + "': truncated");
  }
  std::vector<char> bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

inline std::array<std::uint32_t, 12> architecture_words(const Architecture& arch, NetMode mode) {
  using A = Architecture;
  return {A::input_side,     A::input_channels,
          A::conv1_kernel,   A::pool1_window,
          A::pool1_stride,   A::conv2_kernel,
          A::pool2_window,   A::pool2_stride,
          static_cast<std::uint32_t>(arch.maps), static_cast<std::uint32_t>(arch.hidden),
          static_cast<std::uint32_t>(fusion_inputs(arch, mode)), A::classes};
}

}  // namespace detail

template <typename S>
std::vector<char> serialize_model(const TwoPathNetwork<S>& net) {
  detail::ByteWriter w;
  w.raw(kModelMagic.data(), kModelMagic.size());
  w.u32(kModelFormatVersion);
  w.u32(static_cast<std::uint32_t>(net.mode));
  for (auto v : detail::architecture_words(net.arch, net.mode)) w.u32(v);
  std::uint64_t count = 0;
  for_each_tensor(net.params, [&](const char*, const auto& t) { count += t.size(); });
  w.u64(count);
  for_each_tensor(net.params, [&](const char*, const auto& t) {
    for (auto v : t.data) w.f32(static_cast<float>(v));
  });
  return w.bytes();
}

inline TwoPathNetwork<float> deserialize_model(std::vector<char> bytes, const std::string& name = "<memory>") {
  detail::ByteReader r(std::move(bytes), name);
  std::array<char, 8> magic{};
  r.raw(magic.data(), magic.size());
  if (magic != kModelMagic) throw InputError("corrupt model file '" + name + "': bad magic bytes");
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion)
    throw InputError("model file '" + name + "' has format version " + std::to_string(version) +
                     " but this build reads version " + std::to_string(kModelFormatVersion));
  const std::uint32_t mode_word = r.u32();
  if (mode_word > 2) throw InputError("corrupt model file '" + name + "': unknown mode " + std::to_string(mode_word));
  const auto mode = static_cast<NetMode>(mode_word);
  std::array<std::uint32_t, 12> words{};
  for (auto& v : words) v = r.u32();
  Architecture arch;
  arch.maps = static_cast<int>(words[8]);
  arch.hidden = static_cast<int>(words[9]);
  if (arch.maps < 1 || arch.hidden < 1 || arch.maps > 4096 || arch.hidden > 65536 ||
      words != detail::architecture_words(arch, mode))
    throw InputError("corrupt model file '" + name + "': architecture constants do not match this network");
  auto net = TwoPathNetwork<float>::zeros(arch, mode);
  std::uint64_t expected = 0;
  for_each_tensor(net.params, [&](const char*, const auto& t) { expected += t.size(); });
  if (r.u64() != expected) throw InputError("corrupt model file '" + name + "': parameter count mismatch");
  for_each_tensor(net.params, [&](const char*, auto& t) {
    for (auto& v : t.data) v = r.f32();
  });
  if (!r.at_end()) throw InputError("corrupt model file '" + name + "': trailing bytes");
  return net;
}

template <typename S>
void save_model(const TwoPathNetwork<S>& net, const std::filesystem::path& path) {
  const auto bytes = serialize_model(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write model file '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("cannot write model file '" + path.string() + "'");
}

inline TwoPathNetwork<float> load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open model file '" + path.string() + "'");
  std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_model(std::move(bytes), path.string());
}

}  // namespace skinseg::nn
