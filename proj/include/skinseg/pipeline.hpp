#pragma once

// resize -> guided filter -> per-pixel dual-path inference -> threshold ->
// largest component -> dilation -> hole filling.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "skinseg/imaging.hpp"
#include "skinseg/morphology.hpp"
#include "skinseg/nn.hpp"
#include "skinseg/parallel.hpp"
#include "skinseg/patches.hpp"
#include "skinseg/preprocess.hpp"

namespace skinseg {

struct SegmentationConfig {
  double tau = 0.6;
  int dilation_radius = 10;
  GuidedFilterParams guided_filter;
  PatchGeometry geometry;
  /// Patch pairs per network evaluation during inference.
  int inference_batch = 64;
  /// 0 = all hardware threads.
  unsigned threads = 0;

  void validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie strictly between 0 and 1");
    if (dilation_radius < 0) throw std::invalid_argument("dilation radius must be >= 0");
    if (inference_batch < 1) throw std::invalid_argument("inference batch must be >= 1");
    guided_filter.validate();
    geometry.validate();
  }
};

/// Resize to the working resolution and apply the guided filter.
inline RgbImage prepare_image(const RgbImage& raw, const SegmentationConfig& cfg) {
  const auto& g = cfg.geometry;
  return preprocess_image(resize(raw, g.image_h, g.image_w, Interpolation::bilinear), cfg.guided_filter);
}

/// Nearest-neighbour resize keeps masks binary.
inline BinaryMask prepare_mask(const BinaryMask& raw, const PatchGeometry& geom) {
  return resize(raw, geom.image_h, geom.image_w, Interpolation::nearest);
}

namespace detail {

/// im2col rows [row_begin, row_end) of a valid k x k convolution with the
/// given dilation over an HWC map; taps ordered [kh][kw][c].
template <typename S>
void im2col_dilated(const S* in, int w, int c, int k, int dilation, int out_w, int row_begin, int row_end, S* out) {
  const std::size_t taps = static_cast<std::size_t>(k) * k * c;
  for (int i = row_begin; i < row_end; ++i)
    for (int j = 0; j < out_w; ++j) {
      S* row = out + (static_cast<std::size_t>(i - row_begin) * out_w + j) * taps;
      for (int ki = 0; ki < k; ++ki)
        for (int kj = 0; kj < k; ++kj)
          std::copy_n(in + (static_cast<std::size_t>(i + dilation * ki) * w + (j + dilation * kj)) * c, c,
                      row + (static_cast<std::size_t>(ki) * k + kj) * c);
    }
}

/// Dense dilated convolution + ReLU over a whole map, in row strips.
inline std::vector<float> dense_conv_relu(const std::vector<float>& in, int h, int w, int c, int k, int dilation,
                                          const nn::Tensor<float>& kernels, const nn::Tensor<float>& bias,
                                          int maps, unsigned threads, int& out_h, int& out_w) {
  out_h = h - dilation * (k - 1);
  out_w = w - dilation * (k - 1);
  std::vector<float> out(static_cast<std::size_t>(out_h) * out_w * maps);
  constexpr int strip = 8;
  const int strips = (out_h + strip - 1) / strip;
  const int ow = out_w;
  const std::size_t taps = static_cast<std::size_t>(k) * k * c;
  parallel_for_blocks(static_cast<std::size_t>(strips), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<float> cols;
    for (std::size_t s = begin; s < end; ++s) {
      const int r0 = static_cast<int>(s) * strip, r1 = std::min(out_h, r0 + strip);
      cols.resize(static_cast<std::size_t>(r1 - r0) * ow * taps);
      im2col_dilated(in.data(), w, c, k, dilation, ow, r0, r1, cols.data());
      nn::detail::dense_relu(cols.data(), static_cast<std::size_t>(r1 - r0) * ow, static_cast<int>(taps),
                             kernels.ptr(), bias.ptr(), maps, out.data() + static_cast<std::size_t>(r0) * ow * maps);
    }
  });
  return out;
}

/// out[y, x] = max over u, v < k of in[y + step * u, x + step * v].
inline std::vector<float> dense_max(const std::vector<float>& in, int h, int w, int c, int k, int step, int& out_h,
                                    int& out_w) {
  out_h = h - step * (k - 1);
  out_w = w - step * (k - 1);
  std::vector<float> out(static_cast<std::size_t>(out_h) * out_w * c);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      float* dst = out.data() + (static_cast<std::size_t>(y) * out_w + x) * c;
      std::copy_n(in.data() + (static_cast<std::size_t>(y) * w + x) * c, c, dst);
      for (int u = 0; u < k; ++u)
        for (int v = 0; v < k; ++v) {
          const float* src = in.data() + (static_cast<std::size_t>(y + step * u) * w + (x + step * v)) * c;
          for (int ch = 0; ch < c; ++ch) dst[ch] = std::max(dst[ch], src[ch]);
        }
    }
  return out;
}

/// Local-path features of every pixel at once. The local windows of
/// neighbouring centres overlap, so each layer is evaluated densely over the
/// padded image: pooling by 2 turns the second convolution into a
/// dilation-2 convolution and the last pooling into a dilation-2 max. Entry
/// (r, c) of the result, read at offsets (6p, 6q), is feature (p, q) of the
/// pair centred on (r, c).
struct DenseLocalFeatures {
  int height = 0;
  int width = 0;
  int maps = 0;
  std::vector<float> values;

  /// Copies the 3 x 3 x maps features of centre (r, c) in HWC order.
  void gather(int r, int c, float* dst) const {
    using A = nn::Architecture;
    constexpr int step = A::pool1_stride * A::pool2_stride;
    for (int p = 0; p < A::pool2_side; ++p)
      for (int q = 0; q < A::pool2_side; ++q)
        std::copy_n(values.data() + (static_cast<std::size_t>(r + step * p) * width + (c + step * q)) * maps, maps,
                    dst + (static_cast<std::size_t>(p) * A::pool2_side + q) * maps);
  }
};

inline DenseLocalFeatures dense_local_features(const nn::PathParams<float>& params, const nn::Architecture& arch,
                                               const PaddedImage& source, const PatchGeometry& geom,
                                               unsigned threads) {
  using A = nn::Architecture;
  static_assert(A::pool1_window == A::pool1_stride, "dense evaluation assumes non-overlapping pooling");
  const int half = geom.local_side / 2;
  const int top = source.pad() - half;
  const int h = source.image_height() + geom.local_side - 1;
  const int w = source.image_width() + geom.local_side - 1;
  const RgbImage region = crop(source.padded(), top, top, h, w);
  const std::vector<float> input(region.data().begin(), region.data().end());
  const int m = arch.maps;

  int h1, w1, hm1, wm1, h2, w2, hm2, wm2;
  auto a1 = dense_conv_relu(input, h, w, 3, A::conv1_kernel, 1, params.conv1_w, params.conv1_b, m, threads, h1, w1);
  auto m1 = dense_max(a1, h1, w1, m, A::pool1_window, 1, hm1, wm1);
  a1 = {};
  auto a2 = dense_conv_relu(m1, hm1, wm1, m, A::conv2_kernel, A::pool1_stride, params.conv2_w, params.conv2_b, m,
                            threads, h2, w2);
  m1 = {};
  auto m2 = dense_max(a2, h2, w2, m, A::pool2_window, A::pool1_stride, hm2, wm2);
  return {hm2, wm2, m, std::move(m2)};
}

}  // namespace detail

struct InferenceOptions {
  int batch = 64;
  unsigned threads = 0;
};

/// P(x, y) = lesion probability of the pair centred at every pixel of a
/// preprocessed working-resolution image.
inline ProbabilityMap infer_probability_map(const nn::TwoPathNetwork<float>& net, const RgbImage& preprocessed,
                                            const PatchGeometry& geom, const InferenceOptions& opts = {}) {
  geom.validate();
  if (preprocessed.height() != geom.image_h || preprocessed.width() != geom.image_w)
    throw InputError("inference expects a " + std::to_string(geom.image_h) + "x" + std::to_string(geom.image_w) +
                     " image, got " + std::to_string(preprocessed.height()) + "x" +
                     std::to_string(preprocessed.width()));
  if (opts.batch < 1) throw std::invalid_argument("inference batch must be >= 1");
  const PaddedImage source(preprocessed, geom);
  const bool local = nn::uses_local(net.mode), global = nn::uses_global(net.mode);
  detail::DenseLocalFeatures dense;
  if (local) dense = detail::dense_local_features(net.params.local, net.arch, source, geom, opts.threads);

  const int w = geom.image_w;
  const std::size_t total = preprocessed.pixel_count();
  const std::size_t nf = static_cast<std::size_t>(net.arch.path_features());
  const std::size_t fin = static_cast<std::size_t>(net.fusion_inputs());
  const auto batch = static_cast<std::size_t>(opts.batch);
  const std::size_t chunks = (total + batch - 1) / batch;
  ProbabilityMap map(geom.image_h, geom.image_w);

  parallel_for_blocks(chunks, opts.threads, [&](std::size_t begin, std::size_t end) {
    const PatchExtractor extractor(source, geom);
    nn::detail::Workspace<float> ws;
    std::vector<float> globals, fused;
    for (std::size_t ch = begin; ch < end; ++ch) {
      const std::size_t lo = ch * batch, n = std::min(batch, total - lo);
      fused.assign(n * fin, 0.0f);
      if (local)
        for (std::size_t s = 0; s < n; ++s) {
          const auto idx = lo + s;
          dense.gather(static_cast<int>(idx / w), static_cast<int>(idx % w), fused.data() + s * fin);
        }
      if (global) {
        globals.resize(n * nn::Architecture::input_size);
        for (std::size_t s = 0; s < n; ++s) {
          const auto idx = lo + s;
          extractor.global_into({static_cast<int>(idx / w), static_cast<int>(idx % w)},
                                globals.data() + s * nn::Architecture::input_size);
        }
        nn::detail::path_forward(net.params.global, net.arch, globals.data(), n, ws.global);
        const std::size_t offset = local ? nf : 0;
        for (std::size_t s = 0; s < n; ++s)
          std::copy_n(ws.global.features.data() + s * nf, nf, fused.data() + s * fin + offset);
      }
      nn::detail::head_forward(net, fused.data(), n, ws);
      for (std::size_t s = 0; s < n; ++s) map.data()[lo + s] = std::clamp(ws.probs[2 * s + 1], 0.0f, 1.0f);
    }
  });
  return map;
}

/// mask = 1 iff P > tau (strict).
inline BinaryMask threshold_map(const ProbabilityMap& map, double tau) {
  BinaryMask out(map.height(), map.width());
  for (std::size_t i = 0; i < map.pixel_count(); ++i) out.data()[i] = map.data()[i] > tau ? 1 : 0;
  return out;
}

/// Largest 8-connected component, dilation by a disk, then hole filling.
inline BinaryMask postprocess(const BinaryMask& mask, const SegmentationConfig& cfg) {
  const auto kept = largest_component(mask, Connectivity::eight);
  const auto grown = dilate(kept, disk_se(cfg.dilation_radius));
  return fill_holes(grown, Connectivity::four);
}

struct SegmentationResult {
  BinaryMask mask;
  ProbabilityMap probability;
  /// The working-resolution image after preprocessing.
  RgbImage preprocessed;
};

inline SegmentationResult segment_prepared(const nn::TwoPathNetwork<float>& net, RgbImage preprocessed,
                                           const SegmentationConfig& cfg) {
  cfg.validate();
  auto map = infer_probability_map(net, preprocessed, cfg.geometry, {cfg.inference_batch, cfg.threads});
  auto mask = postprocess(threshold_map(map, cfg.tau), cfg);
  return {std::move(mask), std::move(map), std::move(preprocessed)};
}

inline SegmentationResult segment(const nn::TwoPathNetwork<float>& net, const RgbImage& raw,
                                  const SegmentationConfig& cfg) {
  cfg.validate();
  return segment_prepared(net, prepare_image(raw, cfg), cfg);
}

struct TrainingConfig {
  nn::NetMode mode = nn::NetMode::dual;
  nn::Architecture arch;
  nn::SgdConfig sgd;
  int patches_per_image = 4500;
  int margin_radius = 15;
  /// Gradient-chunk workers; 1 forces serial reduction.
  unsigned threads = 1;

  void validate() const {
    arch.validate();
    sgd.validate();
    if (patches_per_image < 3 || patches_per_image % 3 != 0)
      throw std::invalid_argument("patches per image must be a positive multiple of 3");
    if (margin_radius < 1) throw std::invalid_argument("margin radius must be >= 1");
  }
};

/// Samples training patches from prepared images and trains a network.
inline nn::TrainResult train_on_images(const std::vector<LabeledImage>& images, const TrainingConfig& cfg,
                                       const PatchGeometry& geom,
                                       std::function<void(int, double)> on_epoch = nullptr) {
  cfg.validate();
  if (images.empty()) throw InputError("no training images");
  const auto set = build_training_index(images, cfg.patches_per_image, geom, cfg.sgd.seed, cfg.margin_radius,
                                        cfg.threads);
  return nn::train(set, cfg.mode, cfg.arch, cfg.sgd, {cfg.threads, std::move(on_epoch)});
}

}  // namespace skinseg
