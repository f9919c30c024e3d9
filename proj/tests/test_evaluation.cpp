#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>

#include "oracles.hpp"
#include "skinseg/evaluation.hpp"
#include "skinseg/synthetic.hpp"
#include "test_support.hpp"

using namespace skinseg;
using testing_support::TempDir;

TEST(Confusion, MatchesPixelLoopOracle) {
  std::mt19937_64 rng(71);
  for (int i = 0; i < 50; ++i) {
    const auto pred = oracle::random_mask(20, 25, 0.1 * (i % 10), rng);
    const auto gt = oracle::random_mask(20, 25, 0.5, rng);
    const auto got = confusion(pred, gt);
    const auto want = oracle::count(pred, gt);
    EXPECT_EQ(got.tp, want.tp);
    EXPECT_EQ(got.fp, want.fp);
    EXPECT_EQ(got.tn, want.tn);
    EXPECT_EQ(got.fn, want.fn);
    EXPECT_EQ(got.total(), 500u);
  }
}

TEST(Metrics, PerfectPredictionScoresOne) {
  std::mt19937_64 rng(72);
  const auto gt = oracle::random_mask(10, 10, 0.5, rng);
  const auto m = metrics(confusion(gt, gt));
  EXPECT_EQ(*m.sensitivity, 1.0);
  EXPECT_EQ(*m.specificity, 1.0);
  EXPECT_EQ(*m.accuracy, 1.0);
}

TEST(Metrics, TwoByTwoFixtureScoresOneHalf) {
  BinaryMask pred(2, 2), gt(2, 2);
  pred(0, 0) = pred(1, 0) = 1;
  gt(0, 0) = gt(0, 1) = 1;
  const auto c = confusion(pred, gt);
  EXPECT_EQ(c, (ConfusionCounts{1, 1, 1, 1}));
  const auto m = metrics(c);
  EXPECT_EQ(*m.sensitivity, 0.5);
  EXPECT_EQ(*m.specificity, 0.5);
  EXPECT_EQ(*m.accuracy, 0.5);
}

TEST(Metrics, ZeroDenominatorsAreNotApplicable) {
  const auto no_lesion = metrics({0, 3, 7, 0});
  EXPECT_FALSE(no_lesion.sensitivity.has_value());
  EXPECT_EQ(*no_lesion.specificity, 0.7);
  const auto all_lesion = metrics({5, 0, 0, 5});
  EXPECT_FALSE(all_lesion.specificity.has_value());
  EXPECT_EQ(format_metric(all_lesion.specificity), "NA");
  EXPECT_EQ(format_metric(0.5), "0.500000");
  EXPECT_THROW(metrics({}), std::invalid_argument);
}

TEST(Metrics, DimensionMismatchIsInputError) {
  EXPECT_THROW(confusion(BinaryMask(3, 3), BinaryMask(3, 4)), InputError);
}

TEST(CvSplit, ProtocolSizesDisjointAndExhaustive) {
  const auto plan = cv_split(126, 4, 1);
  EXPECT_EQ(plan.sizes(), (std::vector<std::size_t>{32, 32, 31, 31}));
  std::set<std::size_t> seen;
  for (int f = 0; f < 4; ++f)
    for (auto i : plan.members(f)) EXPECT_TRUE(seen.insert(i).second);
  EXPECT_EQ(seen.size(), 126u);
}

TEST(CvSplit, SeededAndValidated) {
  EXPECT_EQ(cv_split(40, 4, 3).fold_of, cv_split(40, 4, 3).fold_of);
  EXPECT_NE(cv_split(40, 4, 3).fold_of, cv_split(40, 4, 4).fold_of);
  EXPECT_EQ(cv_split(20, 5, 1).sizes(), (std::vector<std::size_t>(5, 4)));
  EXPECT_THROW(cv_split(3, 4, 1), std::invalid_argument);
  EXPECT_THROW(cv_split(10, 1, 1), std::invalid_argument);
}

TEST(Manifest, RoundTripWithRelativePaths) {
  TempDir dir;
  std::filesystem::create_directories(dir / "imgs");
  save_png(RgbImage(4, 4), dir / "imgs/a.png");
  save_mask(BinaryMask(4, 4), dir / "imgs/a_mask.png");
  DatasetManifest m;
  m.entries.push_back({dir / "imgs/a.png", dir / "imgs/a_mask.png", Category::non_melanoma});
  write_manifest(m, dir / "manifest.csv");
  std::ifstream in(dir / "manifest.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "image,mask,category");
  EXPECT_EQ(row, "imgs/a.png,imgs/a_mask.png,non_melanoma");
  const auto back = load_manifest(dir / "manifest.csv");
  ASSERT_EQ(back.entries.size(), 1u);
  EXPECT_EQ(back.entries[0].image, dir / "imgs/a.png");
  EXPECT_EQ(back.entries[0].category, Category::non_melanoma);
}

TEST(Manifest, ErrorsAreInputErrors) {
  TempDir dir;
  auto write = [&](const std::string& text) {
    std::ofstream(dir / "m.csv") << text;
    return dir / "m.csv";
  };
  EXPECT_THROW(load_manifest(write("img,mask,category\n")), InputError);
  EXPECT_THROW(load_manifest(write("image,mask,category\nx.png,y.png,melanoma\n")), InputError);
  save_png(RgbImage(2, 2), dir / "x.png");
  EXPECT_THROW(load_manifest(write("image,mask,category\nx.png,x.png,benign\n")), InputError);
  EXPECT_THROW(load_manifest(write("image,mask,category\nx.png,x.png\n")), InputError);
  EXPECT_EQ(load_manifest(write("image,mask,category\nx.png,x.png,melanoma\n\n")).entries.size(), 1u);
  EXPECT_THROW(load_manifest(dir / "absent.csv"), InputError);
}

TEST(Synthetic, ImagesMatchTheirMasksAndAreReproducible) {
  Rng a = make_rng(5, SeedPurpose::synthetic, 0), b = make_rng(5, SeedPurpose::synthetic, 0);
  const auto s = generate_synthetic_sample(a);
  const auto t = generate_synthetic_sample(b);
  EXPECT_EQ(s.image, t.image);
  EXPECT_EQ(s.gt, t.gt);
  EXPECT_EQ(s.image.height(), 400);
  EXPECT_EQ(s.image.width(), 600);
  EXPECT_TRUE(all_in_unit_range(s.image));
  // Ellipse semi-axes lie in [20, 75], so the lesion area lies in [pi*400, pi*5625].
  const auto area = count_nonzero(s.gt);
  EXPECT_GT(area, 1200u);
  EXPECT_LT(area, 17800u);
  EXPECT_EQ(connected_components(s.gt).count(), 1u);
  // The lesion is darker than the skin around it.
  double in = 0, out = 0;
  for (std::size_t i = 0; i < s.gt.pixel_count(); ++i) (s.gt.data()[i] ? in : out) += s.image.data()[3 * i];
  EXPECT_LT(in / area, 0.8 * out / (s.gt.pixel_count() - area));
}

TEST(Synthetic, DatasetLayoutAndValidation) {
  TempDir dir;
  const auto m = generate_synthetic_dataset(4, 9, dir.path());
  ASSERT_EQ(m.entries.size(), 4u);
  EXPECT_EQ(m.entries[0].category, Category::melanoma);
  EXPECT_EQ(m.entries[1].category, Category::non_melanoma);
  EXPECT_EQ(load_manifest(dir / "manifest.csv").entries.size(), 4u);
  EXPECT_THROW(generate_synthetic_dataset(3, 9, dir.path()), std::invalid_argument);
}

TEST(CrossValidation, BookkeepingOnSmallSyntheticSet) {
  TempDir dir;
  const auto manifest = generate_synthetic_dataset(8, 3, dir.path());
  CvConfig cfg;
  cfg.segmentation.geometry.image_h = 40;
  cfg.segmentation.geometry.image_w = 60;
  cfg.segmentation.guided_filter.radius = 5;
  cfg.segmentation.threads = 1;
  cfg.training.arch = {2, 4};
  cfg.training.patches_per_image = 30;
  cfg.training.margin_radius = 3;
  cfg.training.sgd.epochs = 1;
  cfg.folds = 4;
  cfg.seed = 11;
  const auto report = run_cv(manifest, cfg);
  ASSERT_EQ(report.folds.size(), 4u);
  std::uint64_t pixels = 0;
  std::size_t images = 0;
  for (const auto& f : report.folds) {
    ASSERT_EQ(f.scopes.size(), 3u);
    EXPECT_EQ(f.scopes[0].scope, "all");
    EXPECT_EQ(f.scopes[0].images, 2u);
    EXPECT_EQ(f.scopes[1].counts.total() + f.scopes[2].counts.total(), f.scopes[0].counts.total());
    EXPECT_EQ(f.loss_trace.size(), 1u);
    pixels += f.scopes[0].counts.total();
    images += f.scopes[0].images;
  }
  EXPECT_EQ(pixels, 8u * 2400u);
  EXPECT_EQ(images, 8u);
  EXPECT_EQ(report.aggregate.scopes[0].counts.total(), pixels);
  EXPECT_EQ(report.aggregate.scopes[1].images, 4u);

  const auto csv = report_csv(report);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 4 * 3 + 3);
  EXPECT_EQ(csv.rfind("aggregate,non_melanoma,", std::string::npos) != std::string::npos, true);

  cfg.only_fold = 2;
  const auto single = run_cv(manifest, cfg);
  ASSERT_EQ(single.folds.size(), 1u);
  EXPECT_EQ(single.folds[0].fold, 2);
  EXPECT_EQ(single.folds[0].scopes[0].counts, report.folds[2].scopes[0].counts);
}
