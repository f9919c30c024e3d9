#pragma once

// Edge-preserving smoothing by guided filtering. Each channel of an RGB
// image is filtered with itself as the guidance image.

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "skinseg/imaging.hpp"

namespace skinseg {

struct GuidedFilterParams {
  /// Window side is 2 * radius + 1; a "neighbourhood of 100" is radius 50.
  int radius = 50;
  /// Regularisation on the [0, 1] intensity scale.
  double epsilon = 0.01;

  void validate() const {
    if (radius < 1) throw std::invalid_argument("guided filter radius must be >= 1, got " + std::to_string(radius));
    if (!(epsilon >= 0.0)) throw std::invalid_argument("guided filter epsilon must be >= 0");
  }
};

/// Local linear model q = a * I + b fitted per window (a = cov(I, p) /
/// (var(I) + eps), b = mean(p) - a * mean(I)), then averaged over all windows
/// covering each pixel. Box means use replicate-padded windows. A window with
/// var(I) + eps == 0 is constant in I and takes a = 0, b = mean(p).
inline GrayImage guided_filter(const GrayImage& input, const GrayImage& guidance, const GuidedFilterParams& params) {
  params.validate();
  require_same_shape(input, guidance, "guided_filter");
  const int h = input.height(), w = input.width();
  const std::size_t n = input.pixel_count();
  if (n == 0) return input;

  std::vector<double> I(n), p(n), Ip(n), II(n);
  for (std::size_t i = 0; i < n; ++i) {
    I[i] = guidance.data()[i];
    p[i] = input.data()[i];
    Ip[i] = I[i] * p[i];
    II[i] = I[i] * I[i];
  }
  const int r = params.radius;
  const auto mean_I = box_mean(I, h, w, r);
  const auto mean_p = box_mean(p, h, w, r);
  const auto corr_Ip = box_mean(Ip, h, w, r);
  const auto corr_II = box_mean(II, h, w, r);

  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double var = corr_II[i] - mean_I[i] * mean_I[i];
    const double cov = corr_Ip[i] - mean_I[i] * mean_p[i];
    const double denom = var + params.epsilon;
    a[i] = denom != 0.0 ? cov / denom : 0.0;
    b[i] = mean_p[i] - a[i] * mean_I[i];
  }
  const auto mean_a = box_mean(a, h, w, r);
  const auto mean_b = box_mean(b, h, w, r);

  GrayImage out(h, w);
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = static_cast<float>(mean_a[i] * I[i] + mean_b[i]);
  return out;
}

/// Self-guided filtering of every channel, clamped back to [0, 1].
inline RgbImage preprocess_image(const RgbImage& img, const GuidedFilterParams& params) {
  params.validate();
  RgbImage out(img.height(), img.width());
  for (int ch = 0; ch < 3; ++ch) {
    const auto plane = extract_channel(img, ch);
    auto filtered = guided_filter(plane, plane, params);
    for (auto& v : filtered.data()) v = std::clamp(v, 0.0f, 1.0f);
    insert_channel(out, filtered, ch);
  }
  return out;
}

}  // namespace skinseg
