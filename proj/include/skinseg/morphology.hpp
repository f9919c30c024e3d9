#pragma once

// Flat binary morphology on masks. Pixels outside the frame read as
// background for both dilation and erosion.

#include <cstdint>
#include <deque>
#include <stdexcept>
#include <vector>

#include "skinseg/imaging.hpp"

namespace skinseg {

struct Offset {
  int di = 0;
  int dj = 0;
  friend bool operator==(const Offset&, const Offset&) = default;
};

/// Discrete disk {(di, dj) : di^2 + dj^2 <= radius^2}.
class StructuringElement {
 public:
  int radius() const { return radius_; }
  const std::vector<Offset>& offsets() const { return offsets_; }
  /// Half-width of the row at vertical offset di (di in [-radius, radius]).
  int half_width(int di) const { return half_widths_[di + radius_]; }

  friend StructuringElement disk_se(int radius);

 private:
  int radius_ = 0;
  std::vector<Offset> offsets_;
  std::vector<int> half_widths_;
};

inline StructuringElement disk_se(int radius) {
  if (radius < 0) throw std::invalid_argument("disk radius must be non-negative");
  StructuringElement se;
  se.radius_ = radius;
  const long r2 = static_cast<long>(radius) * radius;
  for (int di = -radius; di <= radius; ++di) {
    int hw = 0;
    while (static_cast<long>(hw + 1) * (hw + 1) + static_cast<long>(di) * di <= r2) ++hw;
    se.half_widths_.push_back(hw);
    for (int dj = -hw; dj <= hw; ++dj) se.offsets_.push_back({di, dj});
  }
  return se;
}

namespace detail {

/// prefix[r * (w + 1) + c] = number of foreground pixels in row r before column c.
inline std::vector<int> row_prefix_counts(const BinaryMask& m) {
  const int h = m.height(), w = m.width();
  std::vector<int> prefix(static_cast<std::size_t>(h) * (w + 1), 0);
  for (int r = 0; r < h; ++r) {
    int* row = prefix.data() + static_cast<std::size_t>(r) * (w + 1);
    for (int c = 0; c < w; ++c) row[c + 1] = row[c] + (m(r, c) ? 1 : 0);
  }
  return prefix;
}

}  // namespace detail

/// output(p) = 1 iff some offset o in the element has mask(p - o) = 1.
inline BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se) {
  const int h = mask.height(), w = mask.width(), rad = se.radius();
  const auto prefix = detail::row_prefix_counts(mask);
  BinaryMask out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      std::uint8_t hit = 0;
      for (int di = -rad; di <= rad && !hit; ++di) {
        const int rr = r + di;
        if (rr < 0 || rr >= h) continue;
        const int hw = se.half_width(di);
        const int lo = std::max(0, c - hw), hi = std::min(w - 1, c + hw);
        const int* row = prefix.data() + static_cast<std::size_t>(rr) * (w + 1);
        if (row[hi + 1] - row[lo] > 0) hit = 1;
      }
      out(r, c) = hit;
    }
  return out;
}

/// output(p) = 1 iff mask(p + o) = 1 for every offset o in the element.
inline BinaryMask erode(const BinaryMask& mask, const StructuringElement& se) {
  const int h = mask.height(), w = mask.width(), rad = se.radius();
  const auto prefix = detail::row_prefix_counts(mask);
  BinaryMask out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      std::uint8_t all = mask(r, c);
      for (int di = -rad; di <= rad && all; ++di) {
        const int rr = r + di;
        const int hw = se.half_width(di);
        if (rr < 0 || rr >= h || c - hw < 0 || c + hw >= w) {
          all = 0;
          break;
        }
        const int* row = prefix.data() + static_cast<std::size_t>(rr) * (w + 1);
        if (row[c + hw + 1] - row[c - hw] != 2 * hw + 1) all = 0;
      }
      out(r, c) = all;
    }
  return out;
}

/// (gt dilated by a disk) minus (gt eroded by the same disk).
inline BinaryMask border_margin(const BinaryMask& gt, int radius = 15) {
  const auto se = disk_se(radius);
  return logical_and(dilate(gt, se), logical_not(erode(gt, se)));
}

enum class Connectivity { four = 4, eight = 8 };

struct LabeledComponents {
  /// 0 = background, components labelled 1..count() in raster order of their
  /// first pixel.
  Image<std::int32_t, 1> labels;
  /// sizes[k - 1] is the pixel count of label k.
  std::vector<std::size_t> sizes;

  std::size_t count() const { return sizes.size(); }
};

namespace detail {

template <typename Pred, typename Visit>
void flood(int h, int w, int r0, int c0, Connectivity conn, Pred&& accept, Visit&& visit) {
  static constexpr int d4[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
  static constexpr int d8[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}};
  const int n_dirs = conn == Connectivity::four ? 4 : 8;
  const auto& dirs = conn == Connectivity::four ? d4 : d8;
  std::deque<Coord> queue{{r0, c0}};
  visit(r0, c0);
  while (!queue.empty()) {
    const Coord p = queue.front();
    queue.pop_front();
    for (int k = 0; k < n_dirs; ++k) {
      const int r = p.row + dirs[k][0], c = p.col + dirs[k][1];
      if (r < 0 || c < 0 || r >= h || c >= w || !accept(r, c)) continue;
      visit(r, c);
      queue.push_back({r, c});
    }
  }
}

}  // namespace detail

inline LabeledComponents connected_components(const BinaryMask& mask, Connectivity conn = Connectivity::eight) {
  const int h = mask.height(), w = mask.width();
  LabeledComponents out{Image<std::int32_t, 1>(h, w), {}};
  auto& labels = out.labels;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!mask(r, c) || labels(r, c)) continue;
      const auto label = static_cast<std::int32_t>(out.sizes.size() + 1);
      std::size_t size = 0;
      detail::flood(
          h, w, r, c, conn, [&](int rr, int cc) { return mask(rr, cc) && !labels(rr, cc); },
          [&](int rr, int cc) {
            labels(rr, cc) = label;
            ++size;
          });
      out.sizes.push_back(size);
    }
  return out;
}

/// Keeps the biggest component; ties go to the one containing the earliest
/// pixel in raster order.
inline BinaryMask largest_component(const BinaryMask& mask, Connectivity conn = Connectivity::eight) {
  const auto cc = connected_components(mask, conn);
  BinaryMask out(mask.height(), mask.width());
  if (cc.count() == 0) return out;
  std::size_t best = 0;
  for (std::size_t k = 1; k < cc.count(); ++k)
    if (cc.sizes[k] > cc.sizes[best]) best = k;
  const auto keep = static_cast<std::int32_t>(best + 1);
  for (std::size_t i = 0; i < mask.pixel_count(); ++i) out.data()[i] = cc.labels.data()[i] == keep ? 1 : 0;
  return out;
}

/// Background pixels not connected to the frame become foreground.
inline BinaryMask fill_holes(const BinaryMask& mask, Connectivity background_conn = Connectivity::four) {
  const int h = mask.height(), w = mask.width();
  BinaryMask outside(h, w);
  auto seed = [&](int r, int c) {
    if (mask(r, c) || outside(r, c)) return;
    detail::flood(
        h, w, r, c, background_conn, [&](int rr, int cc) { return !mask(rr, cc) && !outside(rr, cc); },
        [&](int rr, int cc) { outside(rr, cc) = 1; });
  };
  for (int c = 0; c < w; ++c) {
    seed(0, c);
    seed(h - 1, c);
  }
  for (int r = 0; r < h; ++r) {
    seed(r, 0);
    seed(r, w - 1);
  }
  BinaryMask out(h, w);
  for (std::size_t i = 0; i < out.pixel_count(); ++i) out.data()[i] = outside.data()[i] ? 0 : 1;
  return out;
}

}  // namespace skinseg
