#pragma once

// Local/global patch pairs around a pixel and region-stratified sampling of
// training centres.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "skinseg/imaging.hpp"
#include "skinseg/morphology.hpp"
#include "skinseg/parallel.hpp"
#include "skinseg/random.hpp"

namespace skinseg {

struct PatchGeometry {
  int local_side = 31;
  int global_side = 201;
  int net_side = 31;
  int image_h = 400;
  int image_w = 600;
  /// Mean-filter window applied to the replicated border band.
  int band_smoothing = 5;

  int pad() const { return std::max(local_side, global_side) / 2; }

  void validate() const {
    for (int side : {local_side, global_side, net_side, band_smoothing})
      if (side < 1 || side % 2 == 0) throw std::invalid_argument("patch sides must be positive and odd");
    if (global_side < local_side) throw std::invalid_argument("global side must be >= local side");
    if (local_side != net_side) throw std::invalid_argument("local side must equal the network input side");
    if (image_h < 1 || image_w < 1) throw std::invalid_argument("image size must be positive");
  }
};

struct PatchPair {
  RgbImage local;
  RgbImage global;
  Coord center;
};

enum class Region : std::uint8_t { lesion = 0, normal = 1, border = 2 };

inline const char* region_name(Region r) {
  switch (r) {
    case Region::lesion: return "lesion";
    case Region::normal: return "normal";
    case Region::border: return "border";
  }
  return "?";
}

struct SampledCoord {
  Coord coord;
  Region region = Region::lesion;
};

struct TrainingSample {
  PatchPair pair;
  /// 1 = lesion, 0 = normal skin; GT at the pair centre.
  int label = 0;
  Region region = Region::lesion;
};

/// A preprocessed image replicate-padded by geometry.pad() on every side,
/// with the padded band (not the image itself) mean-filtered. Built once per
/// image and shared by every centre.
class PaddedImage {
 public:
  PaddedImage() = default;
  PaddedImage(const RgbImage& img, const PatchGeometry& geom) : pad_(geom.pad()), h_(img.height()), w_(img.width()) {
    geom.validate();
    if (img.empty()) throw std::invalid_argument("cannot pad an empty image");
    const RgbImage replicated = pad_replicate(img, pad_, pad_, pad_, pad_);
    const RgbImage smoothed = mean_filter(replicated, geom.band_smoothing);
    padded_ = replicated;
    for (int r = 0; r < padded_.height(); ++r)
      for (int c = 0; c < padded_.width(); ++c) {
        const bool inside = r >= pad_ && r < pad_ + h_ && c >= pad_ && c < pad_ + w_;
        if (inside) continue;
        for (int ch = 0; ch < 3; ++ch) padded_(r, c, ch) = smoothed(r, c, ch);
      }
  }

  int pad() const { return pad_; }
  int image_height() const { return h_; }
  int image_width() const { return w_; }
  const RgbImage& padded() const { return padded_; }

 private:
  int pad_ = 0;
  int h_ = 0;
  int w_ = 0;
  RgbImage padded_;
};

/// Patch extraction into caller-owned buffers of net_side^2 * 3 floats each.
class PatchExtractor {
 public:
  PatchExtractor(const PaddedImage& source, const PatchGeometry& geom)
      : source_(&source), geom_(geom),
        taps_(detail::bilinear_taps(geom.global_side, geom.net_side)) {}

  void local_into(Coord center, float* dst) const {
    check(center);
    const RgbImage& p = source_->padded();
    const int half = geom_.local_side / 2;
    const int top = center.row + source_->pad() - half;
    const int left = center.col + source_->pad() - half;
    const std::size_t run = static_cast<std::size_t>(geom_.local_side) * 3;
    for (int r = 0; r < geom_.local_side; ++r)
      std::copy_n(p.row_ptr(top + r) + static_cast<std::size_t>(left) * 3, run, dst + r * run);
  }

  void global_into(Coord center, float* dst) const {
    check(center);
    const RgbImage& p = source_->padded();
    const int half = geom_.global_side / 2;
    const int top = center.row + source_->pad() - half;
    const int left = center.col + source_->pad() - half;
    const float* origin = p.row_ptr(top) + static_cast<std::size_t>(left) * 3;
    detail::bilinear_sample<3>(origin, static_cast<std::size_t>(p.width()) * 3, taps_, taps_, dst);
  }

  PatchPair pair(Coord center) const {
    PatchPair out{RgbImage(geom_.net_side, geom_.net_side), RgbImage(geom_.net_side, geom_.net_side), center};
    local_into(center, out.local.data().data());
    global_into(center, out.global.data().data());
    return out;
  }

 private:
  void check(Coord c) const {
    if (c.row < 0 || c.col < 0 || c.row >= source_->image_height() || c.col >= source_->image_width())
      throw std::out_of_range("patch centre (" + std::to_string(c.row) + ", " + std::to_string(c.col) +
                              ") outside the image");
  }

  const PaddedImage* source_;
  PatchGeometry geom_;
  std::vector<detail::LinearTap> taps_;
};

inline PatchPair extract_pair(const PaddedImage& source, Coord center, const PatchGeometry& geom) {
  return PatchExtractor(source, geom).pair(center);
}

/// Convenience overload; pads the image on every call.
inline PatchPair extract_pair(const RgbImage& img, Coord center, const PatchGeometry& geom) {
  const PaddedImage source(img, geom);
  return extract_pair(source, center, geom);
}

/// n_total / 3 centres from each of: lesion (gt = 1), normal (gt = 0) and the
/// border margin of `margin_radius`. Sampling is without replacement when a
/// region has enough pixels, with replacement otherwise. Output order is
/// lesion block, normal block, border block.
inline std::vector<SampledCoord> sample_training_coords(const BinaryMask& gt, int n_total, Rng& rng,
                                                        int margin_radius = 15) {
  if (n_total < 0 || n_total % 3 != 0)
    throw std::invalid_argument("patch count must be a non-negative multiple of 3, got " + std::to_string(n_total));
  const auto margin = border_margin(gt, margin_radius);
  std::vector<std::uint32_t> pools[3];
  for (std::size_t i = 0; i < gt.pixel_count(); ++i) {
    const auto idx = static_cast<std::uint32_t>(i);
    (gt.data()[i] ? pools[0] : pools[1]).push_back(idx);
    if (margin.data()[i]) pools[2].push_back(idx);
  }
  const Region regions[3] = {Region::lesion, Region::normal, Region::border};
  for (int k = 0; k < 3; ++k)
    if (pools[k].empty())
      throw InputError(std::string("cannot sample training patches: ") + region_name(regions[k]) + " region is empty");

  const std::size_t per_region = static_cast<std::size_t>(n_total / 3);
  std::vector<SampledCoord> out;
  out.reserve(static_cast<std::size_t>(n_total));
  for (int k = 0; k < 3; ++k) {
    auto& pool = pools[k];
    auto emit = [&](std::uint32_t idx) {
      out.push_back({{static_cast<int>(idx / gt.width()), static_cast<int>(idx % gt.width())}, regions[k]});
    };
    if (pool.size() >= per_region) {
      // Partial Fisher-Yates.
      for (std::size_t i = 0; i < per_region; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
        emit(pool[i]);
      }
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      for (std::size_t i = 0; i < per_region; ++i) emit(pool[pick(rng)]);
    }
  }
  return out;
}

/// A preprocessed 400x600 image with its (nearest-resized) ground truth.
struct LabeledImage {
  RgbImage image;
  BinaryMask gt;
};

/// Training samples kept as (image, centre) references so that large sets do
/// not have to hold every patch pair in memory.
class TrainingSet {
 public:
  struct Entry {
    std::uint32_t image = 0;
    Coord center;
    int label = 0;
    Region region = Region::lesion;
  };

  TrainingSet() = default;
  TrainingSet(std::vector<PaddedImage> sources, std::vector<Entry> entries, const PatchGeometry& geom)
      : sources_(std::move(sources)), entries_(std::move(entries)), geom_(geom) {}

  std::size_t size() const { return entries_.size(); }
  const Entry& entry(std::size_t i) const { return entries_[i]; }
  int label(std::size_t i) const { return entries_[i].label; }
  int input_side() const { return geom_.net_side; }

  void fill(std::size_t i, float* local, float* global) const {
    const auto& e = entries_[i];
    const PatchExtractor ex(sources_[e.image], geom_);
    ex.local_into(e.center, local);
    ex.global_into(e.center, global);
  }

  TrainingSample materialize(std::size_t i) const {
    const auto& e = entries_[i];
    return {PatchExtractor(sources_[e.image], geom_).pair(e.center), e.label, e.region};
  }

 private:
  std::vector<PaddedImage> sources_;
  std::vector<Entry> entries_;
  PatchGeometry geom_;
};

/// Per-image stratified sampling (sub-seeded by image index), labels from GT
/// at each centre, then a seeded shuffle of the whole set.
inline TrainingSet build_training_index(const std::vector<LabeledImage>& images, int per_image,
                                        const PatchGeometry& geom, std::uint64_t seed, int margin_radius = 15,
                                        unsigned threads = 1) {
  geom.validate();
  for (const auto& li : images) {
    require_same_shape(li.image, li.gt, "training image/ground truth");
    if (li.image.height() != geom.image_h || li.image.width() != geom.image_w)
      throw InputError("training images must be " + std::to_string(geom.image_h) + "x" + std::to_string(geom.image_w));
  }
  std::vector<PaddedImage> sources(images.size());
  std::vector<std::vector<SampledCoord>> coords(images.size());
  parallel_for_blocks(images.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng = make_rng(seed, SeedPurpose::sampling, i);
      coords[i] = sample_training_coords(images[i].gt, per_image, rng, margin_radius);
      sources[i] = PaddedImage(images[i].image, geom);
    }
  });
  std::vector<TrainingSet::Entry> entries;
  for (std::size_t i = 0; i < images.size(); ++i)
    for (const auto& sc : coords[i])
      entries.push_back({static_cast<std::uint32_t>(i), sc.coord, images[i].gt(sc.coord.row, sc.coord.col), sc.region});
  Rng shuffle_rng = make_rng(seed, SeedPurpose::shuffle);
  std::shuffle(entries.begin(), entries.end(), shuffle_rng);
  return TrainingSet(std::move(sources), std::move(entries), geom);
}

inline std::vector<TrainingSample> build_training_set(const std::vector<LabeledImage>& images, int per_image,
                                                      const PatchGeometry& geom, std::uint64_t seed,
                                                      int margin_radius = 15) {
  const auto index = build_training_index(images, per_image, geom, seed, margin_radius);
  std::vector<TrainingSample> out;
  out.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) out.push_back(index.materialize(i));
  return out;
}

}  // namespace skinseg
