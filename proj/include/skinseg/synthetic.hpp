#pragma once

// Synthetic skin photographs for desk-scale experiments: skin-toned
// background under a low-frequency illumination gradient with fine noise,
// and one darker elliptical lesion with coarser texture and a soft 3 px rim.

#include <cmath>
#include <filesystem>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "skinseg/evaluation.hpp"
#include "skinseg/image_io.hpp"
#include "skinseg/imaging.hpp"
#include "skinseg/random.hpp"

namespace skinseg {

struct SyntheticSample {
  RgbImage image;
  BinaryMask gt;
};

namespace detail {

/// Gaussian noise on a coarse grid, bilinearly upsampled.
inline std::vector<float> coarse_noise(int h, int w, int cell, double sigma, Rng& rng) {
  const int gh = h / cell + 2, gw = w / cell + 2;
  std::normal_distribution<double> n01(0.0, sigma);
  std::vector<double> grid(static_cast<std::size_t>(gh) * gw);
  for (auto& v : grid) v = n01(rng);
  std::vector<float> out(static_cast<std::size_t>(h) * w);
  for (int r = 0; r < h; ++r) {
    const double gy = static_cast<double>(r) / cell;
    const int y0 = static_cast<int>(gy);
    const double fy = gy - y0;
    for (int c = 0; c < w; ++c) {
      const double gx = static_cast<double>(c) / cell;
      const int x0 = static_cast<int>(gx);
      const double fx = gx - x0;
      auto g = [&](int y, int x) { return grid[static_cast<std::size_t>(y) * gw + x]; };
      const double top = g(y0, x0) + fx * (g(y0, x0 + 1) - g(y0, x0));
      const double bot = g(y0 + 1, x0) + fx * (g(y0 + 1, x0 + 1) - g(y0 + 1, x0));
      out[static_cast<std::size_t>(r) * w + c] = static_cast<float>(top + fy * (bot - top));
    }
  }
  return out;
}

}  // namespace detail

inline SyntheticSample generate_synthetic_sample(Rng& rng, int h = 400, int w = 600) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  const double skin[3] = {uniform(0.80, 0.92), uniform(0.60, 0.72), uniform(0.50, 0.62)};
  const double darkening = uniform(0.42, 0.58);
  const double lesion[3] = {skin[0] * darkening * 1.05, skin[1] * darkening * 0.85, skin[2] * darkening * 0.85};

  // Illumination: linear ramp in a random direction plus a broad radial falloff.
  const double angle = uniform(0.0, 2.0 * std::numbers::pi);
  const double ramp = uniform(0.10, 0.25);
  const double falloff = uniform(0.0, 0.15);

  const double a = uniform(20.0, 75.0), b = uniform(20.0, 75.0);
  const double theta = uniform(0.0, std::numbers::pi);
  const double reach = std::max(a, b) + 8.0;
  const double cy = uniform(reach, h - reach), cx = uniform(reach, w - reach);

  const auto texture = detail::coarse_noise(h, w, 6, 0.05, rng);
  std::normal_distribution<double> fine(0.0, 0.02);

  SyntheticSample s{RgbImage(h, w), BinaryMask(h, w)};
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double diag = std::hypot(h, w) / 2.0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double dy = r - h / 2.0, dx = c - w / 2.0;
      const double along = (dx * std::cos(angle) + dy * std::sin(angle)) / diag;
      const double radial = (dx * dx + dy * dy) / (diag * diag);
      const double light = 1.0 + ramp * along - falloff * radial;

      const double ey = r - cy, ex = c - cx;
      const double u = ex * cos_t + ey * sin_t, v = -ex * sin_t + ey * cos_t;
      const double rho = std::sqrt((u / a) * (u / a) + (v / b) * (v / b));
      // Approximate signed distance to the ellipse boundary, in pixels.
      const double dist = (rho - 1.0) * std::min(a, b);
      const double alpha = std::clamp(0.5 - dist / 3.0, 0.0, 1.0);
      s.gt(r, c) = rho <= 1.0 ? 1 : 0;

      const double grain = fine(rng);
      const double coarse = texture[static_cast<std::size_t>(r) * w + c];
      for (int ch = 0; ch < 3; ++ch) {
        const double bg = skin[ch] + grain;
        const double fg = lesion[ch] + coarse + 0.5 * grain;
        const double value = light * (alpha * fg + (1.0 - alpha) * bg);
        s.image(r, c, ch) = static_cast<float>(std::clamp(value, 0.0, 1.0));
      }
    }
  return s;
}

/// Writes images/NNN.png, masks/NNN.png and manifest.csv under out_dir.
/// Categories alternate melanoma / non_melanoma.
inline DatasetManifest generate_synthetic_dataset(int n, std::uint64_t seed, const std::filesystem::path& out_dir) {
  if (n < 4) throw std::invalid_argument("synthetic dataset needs at least 4 images for cross-validation, got " +
                                         std::to_string(n));
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  std::filesystem::create_directories(out_dir / "masks", ec);
  if (ec) throw InputError("cannot create dataset directory '" + out_dir.string() + "': " + ec.message());
  DatasetManifest m;
  for (int i = 0; i < n; ++i) {
    Rng rng = make_rng(seed, SeedPurpose::synthetic, static_cast<std::uint64_t>(i));
    const auto sample = generate_synthetic_sample(rng);
    char name[32];
    std::snprintf(name, sizeof name, "%03d.png", i);
    ManifestEntry e{out_dir / "images" / name, out_dir / "masks" / name,
                    i % 2 == 0 ? Category::melanoma : Category::non_melanoma};
    save_png(sample.image, e.image);
    save_mask(sample.gt, e.mask);
    m.entries.push_back(std::move(e));
  }
  write_manifest(m, out_dir / "manifest.csv");
  return m;
}

}  // namespace skinseg
