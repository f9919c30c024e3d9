#pragma once

// Brute-force reference implementations used only by the tests. They follow
// the textbook definitions directly and share no code with the library
// beyond the raster container.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "skinseg/imaging.hpp"

namespace oracle {

using skinseg::BinaryMask;
using skinseg::GrayImage;
using skinseg::RgbImage;

inline BinaryMask random_mask(int h, int w, double density, std::mt19937_64& rng) {
  std::bernoulli_distribution on(density);
  BinaryMask m(h, w);
  for (auto& v : m.data()) v = on(rng) ? 1 : 0;
  return m;
}

/// Random blobs: a union of filled disks, closer to real lesion masks.
inline BinaryMask random_blob_mask(int h, int w, int blobs, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> rr(0, h - 1), cc(0, w - 1), rad(2, std::max(3, std::min(h, w) / 4));
  BinaryMask m(h, w);
  for (int b = 0; b < blobs; ++b) {
    const int r0 = rr(rng), c0 = cc(rng), ra = rad(rng);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        if ((r - r0) * (r - r0) + (c - c0) * (c - c0) <= ra * ra) m(r, c) = 1;
  }
  return m;
}

template <typename Img>
Img random_image(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Img img(h, w);
  for (auto& v : img.data()) v = u(rng);
  return img;
}

inline std::vector<std::pair<int, int>> disk_offsets(int radius) {
  std::vector<std::pair<int, int>> out;
  for (int i = -radius; i <= radius; ++i)
    for (int j = -radius; j <= radius; ++j)
      if (i * i + j * j <= radius * radius) out.emplace_back(i, j);
  return out;
}

inline int read0(const BinaryMask& m, int r, int c) {
  if (r < 0 || c < 0 || r >= m.height() || c >= m.width()) return 0;
  return m(r, c);
}

inline BinaryMask dilate(const BinaryMask& m, int radius) {
  const auto se = disk_offsets(radius);
  BinaryMask out(m.height(), m.width());
  for (int r = 0; r < m.height(); ++r)
    for (int c = 0; c < m.width(); ++c)
      for (auto [i, j] : se)
        if (read0(m, r - i, c - j)) {
          out(r, c) = 1;
          break;
        }
  return out;
}

inline BinaryMask erode(const BinaryMask& m, int radius) {
  const auto se = disk_offsets(radius);
  BinaryMask out(m.height(), m.width());
  for (int r = 0; r < m.height(); ++r)
    for (int c = 0; c < m.width(); ++c) {
      bool all = true;
      for (auto [i, j] : se)
        if (!read0(m, r + i, c + j)) {
          all = false;
          break;
        }
      out(r, c) = all ? 1 : 0;
    }
  return out;
}

inline BinaryMask margin(const BinaryMask& gt, int radius) {
  const auto d = dilate(gt, radius), e = erode(gt, radius);
  BinaryMask out(gt.height(), gt.width());
  for (std::size_t i = 0; i < out.pixel_count(); ++i) out.data()[i] = (d.data()[i] && !e.data()[i]) ? 1 : 0;
  return out;
}

/// Recursive flood fill labelling; labels follow raster order of first pixel.
inline void flood(const BinaryMask& m, std::vector<int>& labels, int r, int c, int label, int conn, bool value) {
  if (r < 0 || c < 0 || r >= m.height() || c >= m.width()) return;
  const std::size_t i = static_cast<std::size_t>(r) * m.width() + c;
  if (labels[i] != 0 || (m(r, c) != 0) != value) return;
  labels[i] = label;
  for (int dr = -1; dr <= 1; ++dr)
    for (int dc = -1; dc <= 1; ++dc) {
      if (dr == 0 && dc == 0) continue;
      if (conn == 4 && dr != 0 && dc != 0) continue;
      flood(m, labels, r + dr, c + dc, label, conn, value);
    }
}

struct Components {
  std::vector<int> labels;
  std::vector<std::size_t> sizes;
};

inline Components components(const BinaryMask& m, int conn) {
  Components out{std::vector<int>(m.pixel_count(), 0), {}};
  int next = 1;
  for (int r = 0; r < m.height(); ++r)
    for (int c = 0; c < m.width(); ++c)
      if (m(r, c) && out.labels[static_cast<std::size_t>(r) * m.width() + c] == 0) flood(m, out.labels, r, c, next++, conn, true);
  out.sizes.assign(static_cast<std::size_t>(next - 1), 0);
  for (int l : out.labels)
    if (l) ++out.sizes[static_cast<std::size_t>(l - 1)];
  return out;
}

inline BinaryMask largest(const BinaryMask& m) {
  const auto cc = components(m, 8);
  BinaryMask out(m.height(), m.width());
  if (cc.sizes.empty()) return out;
  const auto best = static_cast<int>(std::max_element(cc.sizes.begin(), cc.sizes.end()) - cc.sizes.begin()) + 1;
  for (std::size_t i = 0; i < out.pixel_count(); ++i) out.data()[i] = cc.labels[i] == best ? 1 : 0;
  return out;
}

/// Flood the background from the frame (4-connected) and invert.
inline BinaryMask fill_holes(const BinaryMask& m) {
  std::vector<int> reached(m.pixel_count(), 0);
  for (int r = 0; r < m.height(); ++r)
    for (int c = 0; c < m.width(); ++c)
      if (r == 0 || c == 0 || r == m.height() - 1 || c == m.width() - 1) flood(m, reached, r, c, 1, 4, false);
  BinaryMask out(m.height(), m.width());
  for (std::size_t i = 0; i < out.pixel_count(); ++i) out.data()[i] = reached[i] ? 0 : 1;
  return out;
}

inline int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

/// Mean of the k x k replicate-padded window.
template <typename Img>
Img mean_filter(const Img& img, int k) {
  Img out(img.height(), img.width());
  const int r = k / 2;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int ch = 0; ch < Img::channels; ++ch) {
        double s = 0;
        for (int i = -r; i <= r; ++i)
          for (int j = -r; j <= r; ++j)
            s += img(clampi(y + i, 0, img.height() - 1), clampi(x + j, 0, img.width() - 1), ch);
        out(y, x, ch) = static_cast<float>(s / (k * k));
      }
  return out;
}

/// Bilinear interpolation evaluated at the half-pixel-centre source coordinate.
inline RgbImage bilinear(const RgbImage& img, int oh, int ow) {
  RgbImage out(oh, ow);
  auto coord = [](int o, int in, int out_n) {
    double s = (o + 0.5) * in / out_n - 0.5;
    return std::min(std::max(s, 0.0), in - 1.0);
  };
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const double sy = coord(y, img.height(), oh), sx = coord(x, img.width(), ow);
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      const int y1 = std::min(y0 + 1, img.height() - 1), x1 = std::min(x0 + 1, img.width() - 1);
      const double fy = sy - y0, fx = sx - x0;
      for (int ch = 0; ch < 3; ++ch)
        out(y, x, ch) = static_cast<float>((1 - fy) * (1 - fx) * img(y0, x0, ch) + (1 - fy) * fx * img(y0, x1, ch) +
                                           fy * (1 - fx) * img(y1, x0, ch) + fy * fx * img(y1, x1, ch));
    }
  return out;
}

/// Guided filter by literal sliding windows: per window k the linear
/// coefficients (a_k, b_k) from the window statistics, then per pixel the
/// average of (a_k, b_k) over the windows around it. Windows are
/// replicate-padded, matching box means with clamped indices.
inline GrayImage guided_filter(const GrayImage& p, const GrayImage& I, int radius, double eps) {
  const int h = p.height(), w = p.width();
  auto at = [&](const GrayImage& g, int y, int x) {
    return static_cast<double>(g(clampi(y, 0, h - 1), clampi(x, 0, w - 1)));
  };
  const double area = (2.0 * radius + 1) * (2.0 * radius + 1);
  std::vector<double> a(static_cast<std::size_t>(h) * w), b(a.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double mi = 0, mp = 0, mip = 0, mii = 0;
      for (int i = -radius; i <= radius; ++i)
        for (int j = -radius; j <= radius; ++j) {
          const double vi = at(I, y + i, x + j), vp = at(p, y + i, x + j);
          mi += vi;
          mp += vp;
          mip += vi * vp;
          mii += vi * vi;
        }
      mi /= area;
      mp /= area;
      mip /= area;
      mii /= area;
      const double var = mii - mi * mi, cov = mip - mi * mp;
      const double ak = (var + eps) != 0 ? cov / (var + eps) : 0.0;
      a[static_cast<std::size_t>(y) * w + x] = ak;
      b[static_cast<std::size_t>(y) * w + x] = mp - ak * mi;
    }
  GrayImage out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double sa = 0, sb = 0;
      for (int i = -radius; i <= radius; ++i)
        for (int j = -radius; j <= radius; ++j) {
          const std::size_t k = static_cast<std::size_t>(clampi(y + i, 0, h - 1)) * w + clampi(x + j, 0, w - 1);
          sa += a[k];
          sb += b[k];
        }
      out(y, x) = static_cast<float>(sa / area * at(I, y, x) + sb / area);
    }
  return out;
}

struct Counts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Counts count(const BinaryMask& pred, const BinaryMask& gt) {
  Counts c;
  for (int r = 0; r < pred.height(); ++r)
    for (int col = 0; col < pred.width(); ++col) {
      const int p = pred(r, col), g = gt(r, col);
      if (p == 1 && g == 1) c.tp++;
      if (p == 1 && g == 0) c.fp++;
      if (p == 0 && g == 0) c.tn++;
      if (p == 0 && g == 1) c.fn++;
    }
  return c;
}

}  // namespace oracle
