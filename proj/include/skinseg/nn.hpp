#pragma once

// Dual-path convolutional classifier for patch pairs.
//
// Each path: Conv(6x6, maps) -> ReLU -> MaxPool(2, stride 2) -> Conv(5x5,
// maps) -> ReLU -> MaxPool(3, stride 3), giving 3x3xmaps features. Active
// paths are concatenated, fed to a ReLU dense layer of `hidden` units and a
// 2-way softmax (index 0 = normal skin, 1 = lesion).
//
// Tensors are row-major HWC. Convolution kernels are stored
// [out][kh][kw][in]; dense weights [out][in].

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "skinseg/error.hpp"
#include "skinseg/parallel.hpp"
#include "skinseg/patches.hpp"
#include "skinseg/random.hpp"

namespace skinseg::nn {

template <typename S>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, S fill = S{})
      : shape(std::move(dims)),
        data(std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>()), fill) {}

  std::size_t size() const { return data.size(); }
  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

enum class NetMode : std::uint32_t { dual = 0, local_only = 1, global_only = 2 };

inline bool uses_local(NetMode m) { return m != NetMode::global_only; }
inline bool uses_global(NetMode m) { return m != NetMode::local_only; }

inline std::string_view mode_name(NetMode m) {
  switch (m) {
    case NetMode::dual: return "dual";
    case NetMode::local_only: return "local";
    case NetMode::global_only: return "global";
  }
  return "?";
}

inline NetMode parse_mode(std::string_view s) {
  if (s == "dual") return NetMode::dual;
  if (s == "local" || s == "local_only") return NetMode::local_only;
  if (s == "global" || s == "global_only") return NetMode::global_only;
  throw std::invalid_argument("unknown network mode '" + std::string(s) + "' (expected dual, local or global)");
}

struct Architecture {
  static constexpr int input_side = 31;
  static constexpr int input_channels = 3;
  static constexpr int conv1_kernel = 6;
  static constexpr int pool1_window = 2;
  static constexpr int pool1_stride = 2;
  static constexpr int conv2_kernel = 5;
  static constexpr int pool2_window = 3;
  static constexpr int pool2_stride = 3;
  static constexpr int classes = 2;

  static constexpr int conv1_side = input_side - conv1_kernel + 1;
  static constexpr int pool1_side = (conv1_side - pool1_window) / pool1_stride + 1;
  static constexpr int conv2_side = pool1_side - conv2_kernel + 1;
  static constexpr int pool2_side = (conv2_side - pool2_window) / pool2_stride + 1;
  static_assert((conv1_side - pool1_window) % pool1_stride == 0, "MaxPool1 must tile Conv1 exactly");
  static_assert((conv2_side - pool2_window) % pool2_stride == 0, "MaxPool2 must tile Conv2 exactly");

  static constexpr int input_size = input_side * input_side * input_channels;
  static constexpr int conv1_taps = conv1_kernel * conv1_kernel * input_channels;

  /// Feature maps per convolution layer.
  int maps = 60;
  /// Width of the fusion layer.
  int hidden = 500;

  int conv2_taps() const { return conv2_kernel * conv2_kernel * maps; }
  int path_features() const { return pool2_side * pool2_side * maps; }

  void validate() const {
    if (maps < 1 || hidden < 1) throw std::invalid_argument("network widths must be positive");
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

template <typename S>
struct PathParams {
  Tensor<S> conv1_w, conv1_b, conv2_w, conv2_b;
  friend bool operator==(const PathParams&, const PathParams&) = default;
};

template <typename S>
struct Parameters {
  PathParams<S> local, global;
  Tensor<S> fusion_w, fusion_b, output_w, output_b;
  friend bool operator==(const Parameters&, const Parameters&) = default;
};

/// Visits every parameter tensor in the fixed serialisation order.
template <typename P, typename F>
void for_each_tensor(P& p, F&& f) {
  f("local.conv1.weight", p.local.conv1_w);
  f("local.conv1.bias", p.local.conv1_b);
  f("local.conv2.weight", p.local.conv2_w);
  f("local.conv2.bias", p.local.conv2_b);
  f("global.conv1.weight", p.global.conv1_w);
  f("global.conv1.bias", p.global.conv1_b);
  f("global.conv2.weight", p.global.conv2_w);
  f("global.conv2.bias", p.global.conv2_b);
  f("fusion.weight", p.fusion_w);
  f("fusion.bias", p.fusion_b);
  f("output.weight", p.output_w);
  f("output.bias", p.output_b);
}

template <typename P>
auto tensor_list(P& p) {
  std::vector<decltype(&p.fusion_w)> out;
  for_each_tensor(p, [&](const char*, auto& t) { out.push_back(&t); });
  return out;
}

inline int fusion_inputs(const Architecture& arch, NetMode mode) {
  return (mode == NetMode::dual ? 2 : 1) * arch.path_features();
}

template <typename S>
Parameters<S> zero_parameters(const Architecture& arch, NetMode mode) {
  arch.validate();
  const auto m = static_cast<std::size_t>(arch.maps);
  const auto c1 = static_cast<std::size_t>(Architecture::conv1_kernel);
  const auto c2 = static_cast<std::size_t>(Architecture::conv2_kernel);
  auto path = [&] {
    return PathParams<S>{Tensor<S>({m, c1, c1, std::size_t{Architecture::input_channels}}), Tensor<S>({m}),
                         Tensor<S>({m, c2, c2, m}), Tensor<S>({m})};
  };
  const auto hidden = static_cast<std::size_t>(arch.hidden);
  const auto fin = static_cast<std::size_t>(fusion_inputs(arch, mode));
  constexpr auto classes = static_cast<std::size_t>(Architecture::classes);
  return {path(), path(), Tensor<S>({hidden, fin}), Tensor<S>({hidden}), Tensor<S>({classes, hidden}),
          Tensor<S>({classes})};
}

template <typename S>
struct TwoPathNetwork {
  Architecture arch;
  NetMode mode = NetMode::dual;
  Parameters<S> params;

  static TwoPathNetwork zeros(const Architecture& arch, NetMode mode) {
    return {arch, mode, zero_parameters<S>(arch, mode)};
  }
  int fusion_inputs() const { return nn::fusion_inputs(arch, mode); }

  friend bool operator==(const TwoPathNetwork&, const TwoPathNetwork&) = default;
};

template <typename To, typename From>
TwoPathNetwork<To> cast(const TwoPathNetwork<From>& net) {
  TwoPathNetwork<To> out = TwoPathNetwork<To>::zeros(net.arch, net.mode);
  auto dst = tensor_list(out.params);
  auto src = tensor_list(net.params);
  for (std::size_t k = 0; k < dst.size(); ++k)
    for (std::size_t i = 0; i < dst[k]->size(); ++i) dst[k]->data[i] = static_cast<To>(src[k]->data[i]);
  return out;
}

/// Uniform on [-sqrt(6 / (fan_in + fan_out)), +sqrt(6 / (fan_in + fan_out))].
template <typename S>
Tensor<S> xavier_init(int fan_in, int fan_out, std::vector<std::size_t> shape, Rng& rng) {
  if (fan_in < 1 || fan_out < 1) throw std::invalid_argument("xavier_init: fans must be positive");
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<S> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<S>(dist(rng));
  return t;
}

/// Xavier weights, zero biases.
template <typename S>
TwoPathNetwork<S> initialize(const Architecture& arch, NetMode mode, Rng& rng) {
  auto net = TwoPathNetwork<S>::zeros(arch, mode);
  const int m = arch.maps;
  const int k1 = Architecture::conv1_kernel * Architecture::conv1_kernel;
  const int k2 = Architecture::conv2_kernel * Architecture::conv2_kernel;
  for (auto* path : {&net.params.local, &net.params.global}) {
    path->conv1_w = xavier_init<S>(k1 * Architecture::input_channels, k1 * m, path->conv1_w.shape, rng);
    path->conv2_w = xavier_init<S>(k2 * m, k2 * m, path->conv2_w.shape, rng);
  }
  net.params.fusion_w = xavier_init<S>(net.fusion_inputs(), arch.hidden, net.params.fusion_w.shape, rng);
  net.params.output_w = xavier_init<S>(arch.hidden, Architecture::classes, net.params.output_w.shape, rng);
  return net;
}

namespace detail {

template <typename S>
using MatR = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapR = Eigen::Map<MatR<S>>;
template <typename S>
using CMapR = Eigen::Map<const MatR<S>>;
template <typename S>
using CRowVec = Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>;
template <typename S>
using RowVec = Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>;

/// Valid-convolution patch matrix of one HWC input: row (i, j) holds the
/// k x k x c window at (i, j) in [kh][kw][c] order.
template <typename S>
void im2col(const S* in, int h, int w, int c, int k, S* out) {
  const int oh = h - k + 1, ow = w - k + 1;
  const std::size_t run = static_cast<std::size_t>(k) * c;
  for (int i = 0; i < oh; ++i)
    for (int j = 0; j < ow; ++j) {
      S* row = out + (static_cast<std::size_t>(i) * ow + j) * k * run;
      for (int ki = 0; ki < k; ++ki)
        std::copy_n(in + (static_cast<std::size_t>(i + ki) * w + j) * c, run, row + ki * run);
    }
}

template <typename S>
void col2im_add(const S* cols, int h, int w, int c, int k, S* out) {
  const int oh = h - k + 1, ow = w - k + 1;
  const std::size_t run = static_cast<std::size_t>(k) * c;
  for (int i = 0; i < oh; ++i)
    for (int j = 0; j < ow; ++j) {
      const S* row = cols + (static_cast<std::size_t>(i) * ow + j) * k * run;
      for (int ki = 0; ki < k; ++ki) {
        S* dst = out + (static_cast<std::size_t>(i + ki) * w + j) * c;
        for (std::size_t t = 0; t < run; ++t) dst[t] += row[ki * run + t];
      }
    }
}

/// y = relu(x * w^T + b) for rows x rows of width k, w is out x k.
template <typename S>
void dense_relu(const S* x, std::size_t rows, int k, const S* w, const S* b, int out, S* y, bool relu = true) {
  auto Y = MapR<S>(y, static_cast<Eigen::Index>(rows), out);
  Y.noalias() = CMapR<S>(x, static_cast<Eigen::Index>(rows), k) * CMapR<S>(w, out, k).transpose();
  Y.rowwise() += CRowVec<S>(b, out);
  if (relu) Y = Y.cwiseMax(S(0));
}

/// Max over k x k windows with stride s of an HWC map; arg receives the flat
/// index (relative to `in`) of the first maximum in raster order.
template <typename S>
void maxpool(const S* in, int h, int w, int c, int k, int s, S* out, std::uint32_t* arg) {
  const int oh = (h - k) / s + 1, ow = (w - k) / s + 1;
  for (int i = 0; i < oh; ++i)
    for (int j = 0; j < ow; ++j)
      for (int ch = 0; ch < c; ++ch) {
        std::size_t best = (static_cast<std::size_t>(i * s) * w + j * s) * c + ch;
        for (int u = 0; u < k; ++u)
          for (int v = 0; v < k; ++v) {
            const std::size_t idx = (static_cast<std::size_t>(i * s + u) * w + (j * s + v)) * c + ch;
            if (in[idx] > in[best]) best = idx;
          }
        const std::size_t o = (static_cast<std::size_t>(i) * ow + j) * c + ch;
        out[o] = in[best];
        if (arg) arg[o] = static_cast<std::uint32_t>(best);
      }
}

/// Activations of one path for a chunk of n inputs.
template <typename S>
struct PathCache {
  std::size_t n = 0;
  std::vector<S> x1, a1, p1, x2, a2, features;
  std::vector<std::uint32_t> arg1, arg2;
};

template <typename S>
void path_forward(const PathParams<S>& p, const Architecture& arch, const S* inputs, std::size_t n, PathCache<S>& c) {
  using A = Architecture;
  const int m = arch.maps;
  constexpr std::size_t r1 = A::conv1_side * A::conv1_side;
  constexpr std::size_t r1p = A::pool1_side * A::pool1_side;
  constexpr std::size_t r2 = A::conv2_side * A::conv2_side;
  constexpr std::size_t r2p = A::pool2_side * A::pool2_side;
  const std::size_t k2 = static_cast<std::size_t>(arch.conv2_taps());
  c.n = n;
  c.x1.resize(n * r1 * A::conv1_taps);
  c.a1.resize(n * r1 * m);
  c.p1.resize(n * r1p * m);
  c.arg1.resize(n * r1p * m);
  c.x2.resize(n * r2 * k2);
  c.a2.resize(n * r2 * m);
  c.features.resize(n * r2p * m);
  c.arg2.resize(n * r2p * m);

  for (std::size_t s = 0; s < n; ++s)
    im2col(inputs + s * A::input_size, A::input_side, A::input_side, A::input_channels, A::conv1_kernel,
           c.x1.data() + s * r1 * A::conv1_taps);
  dense_relu(c.x1.data(), n * r1, A::conv1_taps, p.conv1_w.ptr(), p.conv1_b.ptr(), m, c.a1.data());
  for (std::size_t s = 0; s < n; ++s)
    maxpool(c.a1.data() + s * r1 * m, A::conv1_side, A::conv1_side, m, A::pool1_window, A::pool1_stride,
            c.p1.data() + s * r1p * m, c.arg1.data() + s * r1p * m);
  for (std::size_t s = 0; s < n; ++s)
    im2col(c.p1.data() + s * r1p * m, A::pool1_side, A::pool1_side, m, A::conv2_kernel, c.x2.data() + s * r2 * k2);
  dense_relu(c.x2.data(), n * r2, static_cast<int>(k2), p.conv2_w.ptr(), p.conv2_b.ptr(), m, c.a2.data());
  for (std::size_t s = 0; s < n; ++s)
    maxpool(c.a2.data() + s * r2 * m, A::conv2_side, A::conv2_side, m, A::pool2_window, A::pool2_stride,
            c.features.data() + s * r2p * m, c.arg2.data() + s * r2p * m);
}

/// Accumulates parameter gradients of one path given dLoss/dfeatures (n rows
/// of path_features values, row pitch `stride`).
template <typename S>
void path_backward(const PathParams<S>& p, const Architecture& arch, const PathCache<S>& c, const S* dfeat,
                   std::size_t stride, PathParams<S>& g) {
  using A = Architecture;
  const int m = arch.maps;
  const std::size_t n = c.n;
  constexpr std::size_t r1 = A::conv1_side * A::conv1_side;
  constexpr std::size_t r1p = A::pool1_side * A::pool1_side;
  constexpr std::size_t r2 = A::conv2_side * A::conv2_side;
  const std::size_t k2 = static_cast<std::size_t>(arch.conv2_taps());
  const std::size_t nf = static_cast<std::size_t>(arch.path_features());

  std::vector<S> da2(n * r2 * m, S(0));
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t f = 0; f < nf; ++f) da2[s * r2 * m + c.arg2[s * nf + f]] += dfeat[s * stride + f];
  for (std::size_t i = 0; i < da2.size(); ++i)
    if (!(c.a2[i] > S(0))) da2[i] = S(0);

  const auto rows2 = static_cast<Eigen::Index>(n * r2);
  const auto DA2 = CMapR<S>(da2.data(), rows2, m);
  MapR<S>(g.conv2_w.ptr(), m, static_cast<Eigen::Index>(k2)).noalias() +=
      DA2.transpose() * CMapR<S>(c.x2.data(), rows2, static_cast<Eigen::Index>(k2));
  RowVec<S>(g.conv2_b.ptr(), m) += DA2.colwise().sum();

  MatR<S> dx2 = DA2 * CMapR<S>(p.conv2_w.ptr(), m, static_cast<Eigen::Index>(k2));
  std::vector<S> dp1(n * r1p * m, S(0));
  for (std::size_t s = 0; s < n; ++s)
    col2im_add(dx2.data() + s * r2 * k2, A::pool1_side, A::pool1_side, m, A::conv2_kernel, dp1.data() + s * r1p * m);

  std::vector<S> da1(n * r1 * m, S(0));
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < r1p * m; ++i) da1[s * r1 * m + c.arg1[s * r1p * m + i]] += dp1[s * r1p * m + i];
  for (std::size_t i = 0; i < da1.size(); ++i)
    if (!(c.a1[i] > S(0))) da1[i] = S(0);

  const auto rows1 = static_cast<Eigen::Index>(n * r1);
  const auto DA1 = CMapR<S>(da1.data(), rows1, m);
  MapR<S>(g.conv1_w.ptr(), m, A::conv1_taps).noalias() +=
      DA1.transpose() * CMapR<S>(c.x1.data(), rows1, A::conv1_taps);
  RowVec<S>(g.conv1_b.ptr(), m) += DA1.colwise().sum();
}

template <typename S>
struct Workspace {
  PathCache<S> local, global;
  std::vector<S> fused, hidden, logits, probs;
};

/// Dense head on fused features (n x fusion_inputs); fills ws.hidden,
/// ws.logits and ws.probs.
template <typename S>
void head_forward(const TwoPathNetwork<S>& net, const S* fused, std::size_t n, Workspace<S>& ws) {
  const int fin = net.fusion_inputs(), hid = net.arch.hidden;
  constexpr int K = Architecture::classes;
  ws.hidden.resize(n * hid);
  ws.logits.resize(n * K);
  ws.probs.resize(n * K);
  dense_relu(fused, n, fin, net.params.fusion_w.ptr(), net.params.fusion_b.ptr(), hid, ws.hidden.data());
  dense_relu(ws.hidden.data(), n, hid, net.params.output_w.ptr(), net.params.output_b.ptr(), K, ws.logits.data(),
             false);
  for (std::size_t s = 0; s < n; ++s) {
    const S* z = ws.logits.data() + s * K;
    S* p = ws.probs.data() + s * K;
    const S zmax = std::max(z[0], z[1]);
    const S e0 = std::exp(z[0] - zmax), e1 = std::exp(z[1] - zmax);
    const S sum = e0 + e1;
    p[0] = e0 / sum;
    p[1] = e1 / sum;
  }
}

}  // namespace detail

/// n input pairs; `local` / `global` each point at n * input_size values and
/// may be null when the network mode does not use that path.
template <typename S>
struct BatchView {
  const S* local = nullptr;
  const S* global = nullptr;
  std::size_t n = 0;
};

namespace detail {

template <typename S>
void fused_forward(const TwoPathNetwork<S>& net, BatchView<S> batch, Workspace<S>& ws) {
  const std::size_t n = batch.n;
  const std::size_t nf = static_cast<std::size_t>(net.arch.path_features());
  const std::size_t fin = static_cast<std::size_t>(net.fusion_inputs());
  ws.fused.resize(n * fin);
  std::size_t offset = 0;
  if (uses_local(net.mode)) {
    if (!batch.local) throw std::invalid_argument("network needs local patches");
    path_forward(net.params.local, net.arch, batch.local, n, ws.local);
    for (std::size_t s = 0; s < n; ++s)
      std::copy_n(ws.local.features.data() + s * nf, nf, ws.fused.data() + s * fin);
    offset = nf;
  }
  if (uses_global(net.mode)) {
    if (!batch.global) throw std::invalid_argument("network needs global patches");
    path_forward(net.params.global, net.arch, batch.global, n, ws.global);
    for (std::size_t s = 0; s < n; ++s)
      std::copy_n(ws.global.features.data() + s * nf, nf, ws.fused.data() + s * fin + offset);
  }
  head_forward(net, ws.fused.data(), n, ws);
}

/// Sum over the chunk of -log p_label, accumulating (unscaled) gradient sums.
template <typename S>
double accumulate_gradients(const TwoPathNetwork<S>& net, BatchView<S> batch, const int* labels,
                            Parameters<S>& grad, Workspace<S>& ws) {
  constexpr int K = Architecture::classes;
  const std::size_t n = batch.n;
  const int hid = net.arch.hidden, fin = net.fusion_inputs();
  fused_forward(net, batch, ws);

  double loss = 0.0;
  MatR<S> dz(static_cast<Eigen::Index>(n), K);
  for (std::size_t s = 0; s < n; ++s) {
    const int y = labels[s];
    const S* p = ws.probs.data() + s * K;
    loss -= std::log(std::max(static_cast<double>(p[y]), 1e-12));
    for (int k = 0; k < K; ++k) dz(static_cast<Eigen::Index>(s), k) = p[k] - (k == y ? S(1) : S(0));
  }
  const auto rows = static_cast<Eigen::Index>(n);
  const auto H = CMapR<S>(ws.hidden.data(), rows, hid);
  MapR<S>(grad.output_w.ptr(), K, hid).noalias() += dz.transpose() * H;
  RowVec<S>(grad.output_b.ptr(), K) += dz.colwise().sum();
  MatR<S> dh = dz * CMapR<S>(net.params.output_w.ptr(), K, hid);
  dh = dh.cwiseProduct((H.array() > S(0)).template cast<S>().matrix());
  const auto F = CMapR<S>(ws.fused.data(), rows, fin);
  MapR<S>(grad.fusion_w.ptr(), hid, fin).noalias() += dh.transpose() * F;
  RowVec<S>(grad.fusion_b.ptr(), hid) += dh.colwise().sum();
  const MatR<S> df = dh * CMapR<S>(net.params.fusion_w.ptr(), hid, fin);

  std::size_t offset = 0;
  if (uses_local(net.mode)) {
    path_backward(net.params.local, net.arch, ws.local, df.data(), static_cast<std::size_t>(fin), grad.local);
    offset = static_cast<std::size_t>(net.arch.path_features());
  }
  if (uses_global(net.mode))
    path_backward(net.params.global, net.arch, ws.global, df.data() + offset, static_cast<std::size_t>(fin),
                  grad.global);
  return loss;
}

}  // namespace detail

/// Class probabilities for a batch; probs receives n rows of (p_normal, p_lesion).
template <typename S>
void forward_batch(const TwoPathNetwork<S>& net, BatchView<S> batch, S* probs) {
  detail::Workspace<S> ws;
  detail::fused_forward(net, batch, ws);
  std::copy(ws.probs.begin(), ws.probs.end(), probs);
}

/// Per-path Conv1 -> ReLU: (h-k+1) x (w-k+1) x out from an h x w x c input.
template <typename S>
Tensor<S> conv_forward(const Tensor<S>& input, const Tensor<S>& kernels, const Tensor<S>& biases) {
  if (input.shape.size() != 3 || kernels.shape.size() != 4 || biases.shape.size() != 1)
    throw std::invalid_argument("conv_forward: expected HWC input, [out][k][k][in] kernels and [out] biases");
  const int h = static_cast<int>(input.shape[0]), w = static_cast<int>(input.shape[1]);
  const int c = static_cast<int>(input.shape[2]);
  const int out = static_cast<int>(kernels.shape[0]), k = static_cast<int>(kernels.shape[1]);
  if (kernels.shape[2] != static_cast<std::size_t>(k) || kernels.shape[3] != static_cast<std::size_t>(c) ||
      biases.shape[0] != static_cast<std::size_t>(out))
    throw std::invalid_argument("conv_forward: kernel/bias shape does not match the input");
  if (h < k || w < k) throw std::invalid_argument("conv_forward: input smaller than the kernel");
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<S> cols(static_cast<std::size_t>(oh) * ow * k * k * c);
  detail::im2col(input.ptr(), h, w, c, k, cols.data());
  Tensor<S> y({static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), static_cast<std::size_t>(out)});
  detail::dense_relu(cols.data(), static_cast<std::size_t>(oh) * ow, k * k * c, kernels.ptr(), biases.ptr(), out,
                     y.ptr());
  return y;
}

template <typename S>
struct PoolResult {
  Tensor<S> output;
  /// Flat input index of each output's maximum (first in raster order on ties).
  std::vector<std::uint32_t> argmax;
};

template <typename S>
PoolResult<S> maxpool_forward(const Tensor<S>& input, int k, int s) {
  if (input.shape.size() != 3) throw std::invalid_argument("maxpool_forward: expected an HWC tensor");
  const int h = static_cast<int>(input.shape[0]), w = static_cast<int>(input.shape[1]);
  const int c = static_cast<int>(input.shape[2]);
  if (k < 1 || s < 1 || h < k || w < k || (h - k) % s != 0 || (w - k) % s != 0)
    throw std::invalid_argument("maxpool_forward: window " + std::to_string(k) + " / stride " + std::to_string(s) +
                                " does not tile a " + std::to_string(h) + "x" + std::to_string(w) + " map");
  const int oh = (h - k) / s + 1, ow = (w - k) / s + 1;
  PoolResult<S> r{Tensor<S>({static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), static_cast<std::size_t>(c)}),
                  {}};
  r.argmax.resize(r.output.size());
  detail::maxpool(input.ptr(), h, w, c, k, s, r.output.ptr(), r.argmax.data());
  return r;
}

struct Probabilities {
  double normal = 0.5;
  double lesion = 0.5;
};

template <typename S>
Probabilities forward(const TwoPathNetwork<S>& net, const PatchPair& pair) {
  constexpr int side = Architecture::input_side;
  if (pair.local.height() != side || pair.local.width() != side || pair.global.height() != side ||
      pair.global.width() != side)
    throw std::invalid_argument("forward: patches must be 31x31x3");
  std::vector<S> local(pair.local.data().begin(), pair.local.data().end());
  std::vector<S> global(pair.global.data().begin(), pair.global.data().end());
  S probs[2];
  forward_batch(net, BatchView<S>{local.data(), global.data(), 1}, probs);
  return {static_cast<double>(probs[0]), static_cast<double>(probs[1])};
}

/// Anything exposing size(), label(i) and fill(i, float* local, float* global).
template <typename T>
concept SampleSource = requires(const T& s, std::size_t i, float* buf) {
  { s.size() } -> std::convertible_to<std::size_t>;
  { s.label(i) } -> std::convertible_to<int>;
  s.fill(i, buf, buf);
};

/// Adapter exposing materialised samples as a SampleSource.
class SampleSpan {
 public:
  explicit SampleSpan(std::span<const TrainingSample> samples) : samples_(samples) {}
  std::size_t size() const { return samples_.size(); }
  int label(std::size_t i) const { return samples_[i].label; }
  void fill(std::size_t i, float* local, float* global) const {
    std::copy(samples_[i].pair.local.data().begin(), samples_[i].pair.local.data().end(), local);
    std::copy(samples_[i].pair.global.data().begin(), samples_[i].pair.global.data().end(), global);
  }

 private:
  std::span<const TrainingSample> samples_;
};

template <typename S>
struct BatchData {
  std::vector<S> local, global;
  std::vector<int> labels;
  std::size_t size() const { return labels.size(); }
  BatchView<S> view() const { return {local.data(), global.data(), labels.size()}; }
};

template <typename S, SampleSource Src>
BatchData<S> gather(const Src& source, std::span<const std::size_t> indices) {
  constexpr std::size_t in = Architecture::input_size;
  BatchData<S> b;
  b.local.resize(indices.size() * in);
  b.global.resize(indices.size() * in);
  b.labels.resize(indices.size());
  std::vector<float> l(in), g(in);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    source.fill(indices[k], l.data(), g.data());
    std::copy(l.begin(), l.end(), b.local.begin() + k * in);
    std::copy(g.begin(), g.end(), b.global.begin() + k * in);
    b.labels[k] = source.label(indices[k]);
  }
  return b;
}

template <typename S>
struct LossAndGradients {
  double loss = 0.0;
  Parameters<S> grads;
};

/// Samples per gradient chunk. Chunk sums are reduced in chunk order, so the
/// result does not depend on how many threads processed the chunks.
inline constexpr std::size_t kGradientChunk = 16;

/// Mean softmax cross-entropy over the batch and its gradient.
template <typename S>
LossAndGradients<S> loss_and_gradients(const TwoPathNetwork<S>& net, const BatchData<S>& batch, unsigned threads = 1) {
  const std::size_t n = batch.size();
  if (n == 0) throw std::invalid_argument("loss_and_gradients: empty batch");
  constexpr std::size_t in = Architecture::input_size;
  const std::size_t chunks = (n + kGradientChunk - 1) / kGradientChunk;
  std::vector<Parameters<S>> partial(chunks);
  std::vector<double> losses(chunks, 0.0);
  parallel_for_blocks(chunks, threads, [&](std::size_t begin, std::size_t end) {
    detail::Workspace<S> ws;
    for (std::size_t ch = begin; ch < end; ++ch) {
      const std::size_t lo = ch * kGradientChunk, cnt = std::min(kGradientChunk, n - lo);
      partial[ch] = zero_parameters<S>(net.arch, net.mode);
      const BatchView<S> view{batch.local.data() + lo * in, batch.global.data() + lo * in, cnt};
      losses[ch] = detail::accumulate_gradients(net, view, batch.labels.data() + lo, partial[ch], ws);
    }
  });
  LossAndGradients<S> out{0.0, std::move(partial[0])};
  out.loss = losses[0];
  auto acc = tensor_list(out.grads);
  for (std::size_t ch = 1; ch < chunks; ++ch) {
    out.loss += losses[ch];
    auto part = tensor_list(partial[ch]);
    for (std::size_t t = 0; t < acc.size(); ++t)
      for (std::size_t i = 0; i < acc[t]->size(); ++i) acc[t]->data[i] += part[t]->data[i];
  }
  const S scale = S(1) / static_cast<S>(n);
  for (auto* t : acc)
    for (auto& v : t->data) v *= scale;
  out.loss /= static_cast<double>(n);
  return out;
}

template <typename S>
LossAndGradients<S> loss_and_gradients(const TwoPathNetwork<S>& net, std::span<const TrainingSample> samples,
                                       unsigned threads = 1) {
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return loss_and_gradients(net, gather<S>(SampleSpan(samples), idx), threads);
}

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 64;
  int epochs = 10;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw std::invalid_argument("learning rate must be finite and non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (epochs < 0) throw std::invalid_argument("epoch count must be >= 0");
  }
};

struct TrainOptions {
  /// Worker threads for gradient chunks; 1 gives strictly serial reduction.
  unsigned threads = 1;
  std::function<void(int epoch, double mean_loss)> on_epoch;
};

struct TrainResult {
  TwoPathNetwork<float> net;
  /// Mean training loss of each epoch.
  std::vector<double> loss_trace;
};

/// Mini-batch SGD with momentum (v = momentum * v - lr * g; w += v) over
/// freshly shuffled batches each epoch.
template <SampleSource Src>
TrainResult train(const Src& source, TwoPathNetwork<float> net, const SgdConfig& cfg, const TrainOptions& opts = {}) {
  cfg.validate();
  if (source.size() == 0) throw std::invalid_argument("train: no training samples");
  auto params = tensor_list(net.params);
  auto velocity = zero_parameters<float>(net.arch, net.mode);
  auto vel = tensor_list(velocity);
  Rng rng = make_rng(cfg.seed, SeedPurpose::training);
  std::vector<std::size_t> order(source.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto lr = static_cast<float>(cfg.learning_rate);
  const auto mu = static_cast<float>(cfg.momentum);

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t lo = 0, b = 0; lo < order.size(); lo += static_cast<std::size_t>(cfg.batch_size), ++b) {
      const std::size_t cnt = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), order.size() - lo);
      const auto batch = gather<float>(source, std::span<const std::size_t>(order).subspan(lo, cnt));
      auto lg = loss_and_gradients(net, batch, opts.threads);
      if (!std::isfinite(lg.loss))
        throw RuntimeFailure("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                             std::to_string(b + 1));
      epoch_loss += lg.loss * static_cast<double>(cnt);
      auto grads = tensor_list(lg.grads);
      for (std::size_t t = 0; t < params.size(); ++t) {
        auto& w = params[t]->data;
        auto& v = vel[t]->data;
        const auto& g = grads[t]->data;
        for (std::size_t i = 0; i < w.size(); ++i) {
          v[i] = mu * v[i] - lr * g[i];
          w[i] += v[i];
        }
      }
    }
    epoch_loss /= static_cast<double>(order.size());
    result.loss_trace.push_back(epoch_loss);
    if (opts.on_epoch) opts.on_epoch(epoch + 1, epoch_loss);
  }
  result.net = std::move(net);
  return result;
}

/// Xavier-initialised network (seeded from cfg.seed) trained on `source`.
template <SampleSource Src>
TrainResult train(const Src& source, NetMode mode, const Architecture& arch, const SgdConfig& cfg,
                  const TrainOptions& opts = {}) {
  Rng rng = make_rng(cfg.seed, SeedPurpose::initialization);
  return train(source, initialize<float>(arch, mode, rng), cfg, opts);
}

}  // namespace skinseg::nn
