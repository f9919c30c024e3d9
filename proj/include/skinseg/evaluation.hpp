#pragma once

// Pixel confusion counts, sensitivity / specificity / accuracy, k-fold
// leave-group-out cross-validation and its CSV report.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "skinseg/error.hpp"
#include "skinseg/image_io.hpp"
#include "skinseg/imaging.hpp"
#include "skinseg/pipeline.hpp"
#include "skinseg/random.hpp"

namespace skinseg {

/// Lesion is the positive class.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

inline ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt, "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.pixel_count(); ++i) {
    const bool p = pred.data()[i] != 0, g = gt.data()[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

/// A metric whose denominator is zero is std::nullopt ("not applicable").
struct MetricsReport {
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> accuracy;
  ConfusionCounts counts;
};

inline MetricsReport metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw std::invalid_argument("metrics: no pixels were counted");
  auto ratio = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  return {ratio(c.tp, c.tp + c.fn), ratio(c.tn, c.tn + c.fp), ratio(c.tp + c.tn, c.total()), c};
}

inline std::string format_metric(const std::optional<double>& v) {
  if (!v) return "NA";
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << *v;
  return os.str();
}

enum class Category { melanoma, non_melanoma };

inline std::string category_name(Category c) { return c == Category::melanoma ? "melanoma" : "non_melanoma"; }

inline Category parse_category(const std::string& s) {
  if (s == "melanoma") return Category::melanoma;
  if (s == "non_melanoma") return Category::non_melanoma;
  throw InputError("unknown category '" + s + "' (expected melanoma or non_melanoma)");
}

struct ManifestEntry {
  std::filesystem::path image;
  std::filesystem::path mask;
  Category category = Category::melanoma;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
};

namespace detail {
inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}
}  // namespace detail

/// CSV with header `image,mask,category`; relative paths are resolved
/// against the manifest's directory.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest '" + path.string() + "'");
  const auto base = path.parent_path();
  std::string line;
  if (!std::getline(in, line) || detail::split_csv_line(line) != std::vector<std::string>{"image", "mask", "category"})
    throw InputError("manifest '" + path.string() + "' must start with the header image,mask,category");
  DatasetManifest m;
  for (int lineno = 2; std::getline(in, line); ++lineno) {
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 3)
      throw InputError("manifest '" + path.string() + "' line " + std::to_string(lineno) + ": expected 3 fields");
    ManifestEntry e{cells[0], cells[1], parse_category(cells[2])};
    for (auto* p : {&e.image, &e.mask}) {
      if (p->is_relative()) *p = base / *p;
      if (!std::filesystem::exists(*p))
        throw InputError("manifest '" + path.string() + "' line " + std::to_string(lineno) + ": missing file '" +
                         p->string() + "'");
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

/// Paths are written relative to the manifest's directory when possible.
inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write manifest '" + path.string() + "'");
  const auto base = path.parent_path();
  auto rel = [&](const std::filesystem::path& p) {
    const auto r = std::filesystem::proximate(p, base.empty() ? std::filesystem::path(".") : base);
    return r.generic_string();
  };
  out << "image,mask,category\n";
  for (const auto& e : m.entries) out << rel(e.image) << ',' << rel(e.mask) << ',' << category_name(e.category) << '\n';
}

struct CvPlan {
  int folds = 0;
  std::uint64_t seed = 0;
  /// fold_of[i] is the test fold of entry i.
  std::vector<int> fold_of;

  std::vector<std::size_t> members(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] == fold) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> out(static_cast<std::size_t>(folds), 0);
    for (int f : fold_of) ++out[static_cast<std::size_t>(f)];
    return out;
  }
};

/// Seeded permutation cut into k folds; the first n % k folds get one extra entry.
inline CvPlan cv_split(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("cross-validation needs at least 2 folds");
  if (n < static_cast<std::size_t>(k))
    throw std::invalid_argument("cannot split " + std::to_string(n) + " entries into " + std::to_string(k) + " folds");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = make_rng(seed, SeedPurpose::cv_split);
  std::shuffle(perm.begin(), perm.end(), rng);
  CvPlan plan{k, seed, std::vector<int>(n, 0)};
  const std::size_t base = n / static_cast<std::size_t>(k), extra = n % static_cast<std::size_t>(k);
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t size = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) plan.fold_of[perm[pos++]] = f;
  }
  return plan;
}

/// Metrics of one scope: pooled over pixels, plus the mean of per-image metrics.
struct ScopeReport {
  std::string scope;
  std::size_t images = 0;
  ConfusionCounts counts;
  MetricsReport pooled;
  std::optional<double> mean_sensitivity, mean_specificity, mean_accuracy;
};

struct FoldReport {
  /// -1 for the aggregate over all evaluated folds.
  int fold = -1;
  std::vector<ScopeReport> scopes;
  std::vector<double> loss_trace;
};

struct CvReport {
  std::vector<FoldReport> folds;
  FoldReport aggregate;
};

struct ImageResult {
  std::size_t entry = 0;
  Category category = Category::melanoma;
  ConfusionCounts counts;
};

namespace detail {

inline ScopeReport summarize(const std::string& scope, const std::vector<ImageResult>& results,
                             const std::function<bool(const ImageResult&)>& include) {
  ScopeReport s;
  s.scope = scope;
  double sums[3] = {0, 0, 0};
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& r : results) {
    if (!include(r)) continue;
    ++s.images;
    s.counts += r.counts;
    if (r.counts.total() == 0) continue;
    const auto m = metrics(r.counts);
    const std::optional<double> vals[3] = {m.sensitivity, m.specificity, m.accuracy};
    for (int k = 0; k < 3; ++k)
      if (vals[k]) {
        sums[k] += *vals[k];
        ++counts[k];
      }
  }
  if (s.counts.total() > 0) s.pooled = metrics(s.counts);
  s.pooled.counts = s.counts;
  auto mean = [&](int k) -> std::optional<double> {
    if (counts[k] == 0) return std::nullopt;
    return sums[k] / static_cast<double>(counts[k]);
  };
  s.mean_sensitivity = mean(0);
  s.mean_specificity = mean(1);
  s.mean_accuracy = mean(2);
  return s;
}

inline std::vector<ScopeReport> summarize_all(const std::vector<ImageResult>& results) {
  return {summarize("all", results, [](const ImageResult&) { return true; }),
          summarize("melanoma", results, [](const ImageResult& r) { return r.category == Category::melanoma; }),
          summarize("non_melanoma", results,
                    [](const ImageResult& r) { return r.category == Category::non_melanoma; })};
}

}  // namespace detail

struct CvConfig {
  SegmentationConfig segmentation;
  TrainingConfig training;
  int folds = 4;
  /// Evaluate a single fold instead of all of them.
  std::optional<int> only_fold;
  std::uint64_t seed = 1;
};

struct CvProgress {
  std::function<void(const std::string&)> log;
};

/// Train on all folds but one, segment the held-out fold, and pool pixel
/// counts per fold, per category and overall.
inline CvReport run_cv(const DatasetManifest& manifest, const CvConfig& cfg, const CvProgress& progress = {}) {
  cfg.segmentation.validate();
  cfg.training.validate();
  if (manifest.entries.empty()) throw InputError("manifest has no entries");
  const auto plan = cv_split(manifest.entries.size(), cfg.folds, cfg.seed);
  if (cfg.only_fold && (*cfg.only_fold < 0 || *cfg.only_fold >= cfg.folds))
    throw std::invalid_argument("fold index out of range");
  auto log = [&](const std::string& msg) {
    if (progress.log) progress.log(msg);
  };

  std::vector<LabeledImage> prepared(manifest.entries.size());
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    prepared[i].image = prepare_image(load_image(e.image), cfg.segmentation);
    prepared[i].gt = prepare_mask(load_mask(e.mask), cfg.segmentation.geometry);
  }

  CvReport report;
  std::vector<ImageResult> all_results;
  for (int fold = 0; fold < cfg.folds; ++fold) {
    if (cfg.only_fold && fold != *cfg.only_fold) continue;
    std::vector<LabeledImage> train_images;
    std::vector<std::size_t> test_entries;
    for (std::size_t i = 0; i < prepared.size(); ++i) {
      if (plan.fold_of[i] == fold) test_entries.push_back(i);
      else train_images.push_back(prepared[i]);
    }
    TrainingConfig tcfg = cfg.training;
    tcfg.sgd.seed = derive_seed(cfg.seed, SeedPurpose::training, static_cast<std::uint64_t>(fold));
    log("fold " + std::to_string(fold) + ": training on " + std::to_string(train_images.size()) + " images");
    nn::TrainResult trained;
    try {
      trained = train_on_images(train_images, tcfg, cfg.segmentation.geometry, [&](int epoch, double loss) {
        log("fold " + std::to_string(fold) + " epoch " + std::to_string(epoch) + " loss " + std::to_string(loss));
      });
    } catch (const std::exception& ex) {
      throw RuntimeFailure("fold " + std::to_string(fold) + ": " + ex.what());
    }
    std::vector<ImageResult> results;
    for (std::size_t i : test_entries) {
      const auto seg = segment_prepared(trained.net, prepared[i].image, cfg.segmentation);
      results.push_back({i, manifest.entries[i].category, confusion(seg.mask, prepared[i].gt)});
      log("fold " + std::to_string(fold) + ": segmented " + manifest.entries[i].image.filename().string());
    }
    report.folds.push_back({fold, detail::summarize_all(results), trained.loss_trace});
    all_results.insert(all_results.end(), results.begin(), results.end());
  }
  report.aggregate = {-1, detail::summarize_all(all_results), {}};
  return report;
}

inline std::string report_csv(const CvReport& report) {
  std::ostringstream os;
  os << "fold,scope,tp,fp,tn,fn,sensitivity,specificity,accuracy,images,"
        "image_mean_sensitivity,image_mean_specificity,image_mean_accuracy\n";
  auto rows = [&](const FoldReport& f) {
    const std::string fold = f.fold < 0 ? std::string("aggregate") : std::to_string(f.fold);
    for (const auto& s : f.scopes)
      os << fold << ',' << s.scope << ',' << s.counts.tp << ',' << s.counts.fp << ',' << s.counts.tn << ','
         << s.counts.fn << ',' << format_metric(s.pooled.sensitivity) << ',' << format_metric(s.pooled.specificity)
         << ',' << format_metric(s.pooled.accuracy) << ',' << s.images << ',' << format_metric(s.mean_sensitivity)
         << ',' << format_metric(s.mean_specificity) << ',' << format_metric(s.mean_accuracy) << '\n';
  };
  for (const auto& f : report.folds) rows(f);
  rows(report.aggregate);
  return os.str();
}

inline void write_report_csv(const CvReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write report '" + path.string() + "'");
  out << report_csv(report);
}

}  // namespace skinseg
