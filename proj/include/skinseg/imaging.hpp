#pragma once

// Raster types shared by every stage plus the resampling, padding and box
// filtering primitives they need.
//
// Storage is row-major and channel-interleaved: value (r, c, ch) lives at
// index (r * width + c) * channels + ch. Real-valued rasters hold values on
// the [0, 1] intensity scale.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "skinseg/error.hpp"

namespace skinseg {

struct Coord {
  int row = 0;
  int col = 0;
  friend bool operator==(const Coord&, const Coord&) = default;
};

template <typename T, int Channels, typename Tag = void>
class Image {
 public:
  using value_type = T;
  static constexpr int channels = Channels;

  Image() = default;
  Image(int height, int width, T fill = T{}) : height_(height), width_(width) {
    if (height < 0 || width < 0) throw std::invalid_argument("image dimensions must be non-negative");
    data_.assign(static_cast<std::size_t>(height) * width * Channels, fill);
  }
  Image(int height, int width, std::vector<T> data) : height_(height), width_(width), data_(std::move(data)) {
    if (height < 0 || width < 0) throw std::invalid_argument("image dimensions must be non-negative");
    if (data_.size() != static_cast<std::size_t>(height) * width * Channels)
      throw std::invalid_argument("image data length does not match its dimensions");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const { return data_.empty(); }
  bool contains(Coord p) const { return p.row >= 0 && p.col >= 0 && p.row < height_ && p.col < width_; }

  T& operator()(int r, int c, int ch = 0) { return data_[index(r, c, ch)]; }
  const T& operator()(int r, int c, int ch = 0) const { return data_[index(r, c, ch)]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* row_ptr(int r) { return data_.data() + static_cast<std::size_t>(r) * width_ * Channels; }
  const T* row_ptr(int r) const { return data_.data() + static_cast<std::size_t>(r) * width_ * Channels; }

  template <typename Other>
  bool same_shape(const Other& o) const {
    return height_ == o.height() && width_ == o.width();
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int r, int c, int ch) const {
    return (static_cast<std::size_t>(r) * width_ + c) * Channels + ch;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

struct MaskTag;
struct ProbabilityTag;

using RgbImage = Image<float, 3>;
using GrayImage = Image<float, 1>;
/// Pixel values are 0 (normal skin / background) or 1 (lesion / foreground).
using BinaryMask = Image<std::uint8_t, 1, MaskTag>;
/// Per-pixel lesion probability P(x, y) in [0, 1].
using ProbabilityMap = Image<float, 1, ProbabilityTag>;

enum class Interpolation { bilinear, nearest };

template <typename Img>
bool all_in_unit_range(const Img& img) {
  return std::all_of(img.data().begin(), img.data().end(),
                     [](auto v) { return std::isfinite(static_cast<double>(v)) && v >= 0 && v <= 1; });
}

inline bool is_binary(const BinaryMask& m) {
  return std::all_of(m.data().begin(), m.data().end(), [](std::uint8_t v) { return v <= 1; });
}

template <typename A, typename B>
void require_same_shape(const A& a, const B& b, const char* what) {
  if (!a.same_shape(b))
    throw InputError(std::string(what) + ": dimension mismatch (" + std::to_string(a.height()) + "x" +
                     std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                     std::to_string(b.width()) + ")");
}

namespace detail {

/// Half-pixel-centre mapping of one output index onto the input axis.
struct LinearTap {
  int lo = 0;
  int hi = 0;
  float frac = 0.0f;
};

inline std::vector<LinearTap> bilinear_taps(int in, int out) {
  std::vector<LinearTap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(src));
    taps[o].lo = lo;
    taps[o].hi = std::min(lo + 1, in - 1);
    taps[o].frac = static_cast<float>(src - lo);
  }
  return taps;
}

inline std::vector<int> nearest_taps(int in, int out) {
  std::vector<int> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o)
    taps[o] = std::min(static_cast<int>(std::floor((o + 0.5) * scale)), in - 1);
  return taps;
}

inline float lerp(float a, float b, float t) { return a + t * (b - a); }

/// Bilinear sample of an interleaved float raster given precomputed taps.
/// `src` points at the top-left of the sampled region, `stride` is the row
/// pitch in values. Writes out_h * out_w * C values.
template <int C>
void bilinear_sample(const float* src, std::size_t stride, std::span<const LinearTap> ry,
                     std::span<const LinearTap> rx, float* dst) {
  for (std::size_t oy = 0; oy < ry.size(); ++oy) {
    const float* top = src + ry[oy].lo * stride;
    const float* bot = src + ry[oy].hi * stride;
    const float fy = ry[oy].frac;
    for (std::size_t ox = 0; ox < rx.size(); ++ox) {
      const std::size_t l = static_cast<std::size_t>(rx[ox].lo) * C;
      const std::size_t h = static_cast<std::size_t>(rx[ox].hi) * C;
      const float fx = rx[ox].frac;
      for (int ch = 0; ch < C; ++ch) {
        const float t = lerp(top[l + ch], top[h + ch], fx);
        const float b = lerp(bot[l + ch], bot[h + ch], fx);
        *dst++ = std::clamp(lerp(t, b, fy), 0.0f, 1.0f);
      }
    }
  }
}

/// Replicate-padded box sum of side 2*radius+1 along one axis, in double.
inline void box_sum_1d(const double* in, std::size_t n, std::size_t stride, int radius, double* out,
                       std::vector<double>& scratch) {
  const int len = static_cast<int>(n);
  scratch.resize(n + 2 * radius + 1);
  scratch[0] = 0.0;
  for (int i = -radius; i < len + radius; ++i) {
    const int src = std::clamp(i, 0, len - 1);
    scratch[i + radius + 1] = scratch[i + radius] + in[src * stride];
  }
  for (int i = 0; i < len; ++i) out[i * stride] = scratch[i + 2 * radius + 1] - scratch[i];
}

}  // namespace detail

/// Replicate-padded box mean over a (2*radius+1)^2 window; `values` is a
/// single-channel h x w plane in row-major order.
inline std::vector<double> box_mean(std::span<const double> values, int h, int w, int radius) {
  std::vector<double> tmp(values.size()), out(values.size()), scratch;
  for (int r = 0; r < h; ++r)
    detail::box_sum_1d(values.data() + static_cast<std::size_t>(r) * w, w, 1, radius,
                       tmp.data() + static_cast<std::size_t>(r) * w, scratch);
  for (int c = 0; c < w; ++c) detail::box_sum_1d(tmp.data() + c, h, w, radius, out.data() + c, scratch);
  const double area = static_cast<double>(2 * radius + 1) * (2 * radius + 1);
  for (auto& v : out) v /= area;
  return out;
}

template <typename Img>
Img resize(const Img& img, int out_h, int out_w, Interpolation method = Interpolation::bilinear) {
  using T = typename Img::value_type;
  constexpr int C = Img::channels;
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize: target dimensions must be positive");
  if (img.empty()) throw std::invalid_argument("resize: empty source image");
  Img out(out_h, out_w);
  if (method == Interpolation::nearest) {
    const auto ty = detail::nearest_taps(img.height(), out_h);
    const auto tx = detail::nearest_taps(img.width(), out_w);
    for (int r = 0; r < out_h; ++r)
      for (int c = 0; c < out_w; ++c)
        for (int ch = 0; ch < C; ++ch) out(r, c, ch) = img(ty[r], tx[c], ch);
    return out;
  }
  if constexpr (std::is_same_v<T, float>) {
    const auto ty = detail::bilinear_taps(img.height(), out_h);
    const auto tx = detail::bilinear_taps(img.width(), out_w);
    detail::bilinear_sample<C>(img.data().data(), static_cast<std::size_t>(img.width()) * C, ty, tx,
                               out.data().data());
    return out;
  } else {
    throw std::invalid_argument("resize: bilinear interpolation needs a real-valued raster");
  }
}

template <typename Img>
Img pad_replicate(const Img& img, int top, int bottom, int left, int right) {
  constexpr int C = Img::channels;
  if (top < 0 || bottom < 0 || left < 0 || right < 0)
    throw std::invalid_argument("pad_replicate: margins must be non-negative");
  if (img.empty()) throw std::invalid_argument("pad_replicate: empty image");
  const int h = img.height(), w = img.width();
  Img out(h + top + bottom, w + left + right);
  for (int r = 0; r < out.height(); ++r) {
    const int sr = std::clamp(r - top, 0, h - 1);
    for (int c = 0; c < out.width(); ++c) {
      const int sc = std::clamp(c - left, 0, w - 1);
      for (int ch = 0; ch < C; ++ch) out(r, c, ch) = img(sr, sc, ch);
    }
  }
  return out;
}

template <typename Img>
Img crop(const Img& img, int top, int left, int height, int width) {
  constexpr int C = Img::channels;
  if (top < 0 || left < 0 || height < 0 || width < 0 || top + height > img.height() ||
      left + width > img.width())
    throw std::out_of_range("crop: window outside the image");
  Img out(height, width);
  for (int r = 0; r < height; ++r)
    std::copy_n(img.row_ptr(top + r) + static_cast<std::size_t>(left) * C, static_cast<std::size_t>(width) * C,
                out.row_ptr(r));
  return out;
}

/// Per-channel mean over the k x k replicate-padded neighbourhood.
template <typename Img>
Img mean_filter(const Img& img, int k) {
  constexpr int C = Img::channels;
  static_assert(std::is_floating_point_v<typename Img::value_type>);
  if (k < 1 || k % 2 == 0) throw std::invalid_argument("mean_filter: window side must be odd and positive");
  const int h = img.height(), w = img.width();
  Img out(h, w);
  std::vector<double> plane(img.pixel_count());
  for (int ch = 0; ch < C; ++ch) {
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = img.data()[i * C + ch];
    const auto mean = box_mean(plane, h, w, k / 2);
    for (std::size_t i = 0; i < plane.size(); ++i)
      out.data()[i * C + ch] = static_cast<typename Img::value_type>(mean[i]);
  }
  return out;
}

inline GrayImage extract_channel(const RgbImage& img, int ch) {
  GrayImage out(img.height(), img.width());
  for (std::size_t i = 0; i < img.pixel_count(); ++i) out.data()[i] = img.data()[i * 3 + ch];
  return out;
}

inline void insert_channel(RgbImage& img, const GrayImage& plane, int ch) {
  require_same_shape(img, plane, "insert_channel");
  for (std::size_t i = 0; i < img.pixel_count(); ++i) img.data()[i * 3 + ch] = plane.data()[i];
}

inline BinaryMask logical_not(const BinaryMask& m) {
  BinaryMask out(m.height(), m.width());
  for (std::size_t i = 0; i < m.pixel_count(); ++i) out.data()[i] = m.data()[i] ? 0 : 1;
  return out;
}

inline BinaryMask logical_and(const BinaryMask& a, const BinaryMask& b) {
  require_same_shape(a, b, "logical_and");
  BinaryMask out(a.height(), a.width());
  for (std::size_t i = 0; i < a.pixel_count(); ++i) out.data()[i] = (a.data()[i] && b.data()[i]) ? 1 : 0;
  return out;
}

inline std::size_t count_nonzero(const BinaryMask& m) {
  return static_cast<std::size_t>(std::count_if(m.data().begin(), m.data().end(), [](auto v) { return v != 0; }));
}

}  // namespace skinseg
