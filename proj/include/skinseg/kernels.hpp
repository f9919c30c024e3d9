#pragma once

// Tiles the first-layer kernels of both paths into one RGB picture: row 0 is
// the local path, row 1 the global path, one column per feature map. Each
// kernel is min-max normalized on its own; a constant kernel renders as 0.5.

#include <algorithm>
#include <stdexcept>

#include "skinseg/imaging.hpp"
#include "skinseg/nn.hpp"

namespace skinseg {

struct KernelGridLayout {
  /// Pixel replication factor for each kernel tap.
  int scale = 1;
  /// Gutter after each thumbnail, filled with white.
  int pad = 1;

  int cell() const { return nn::Architecture::conv1_kernel * scale + pad; }
  void validate() const {
    if (scale < 1) throw std::invalid_argument("kernel grid scale must be >= 1");
    if (pad < 0) throw std::invalid_argument("kernel grid padding must be >= 0");
  }
};

inline RgbImage kernel_grid(const nn::TwoPathNetwork<float>& net, const KernelGridLayout& layout = {}) {
  layout.validate();
  constexpr int k = nn::Architecture::conv1_kernel;
  constexpr int taps = nn::Architecture::conv1_taps;
  const int maps = net.arch.maps, cell = layout.cell();
  RgbImage grid(2 * cell, maps * cell);
  std::fill(grid.data().begin(), grid.data().end(), 1.0f);

  const nn::PathParams<float>* paths[2] = {&net.params.local, &net.params.global};
  for (int row = 0; row < 2; ++row) {
    const float* weights = paths[row]->conv1_w.data.data();
    for (int m = 0; m < maps; ++m) {
      const float* w = weights + static_cast<std::size_t>(m) * taps;
      const auto [lo, hi] = std::minmax_element(w, w + taps);
      const float range = *hi - *lo;
      for (int y = 0; y < k * layout.scale; ++y)
        for (int x = 0; x < k * layout.scale; ++x)
          for (int ch = 0; ch < 3; ++ch) {
            const float v = w[((y / layout.scale) * k + x / layout.scale) * 3 + ch];
            grid(row * cell + y, m * cell + x, ch) = range > 0.0f ? (v - *lo) / range : 0.5f;
          }
    }
  }
  return grid;
}

}  // namespace skinseg
