#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "skinseg/imaging.hpp"

using namespace skinseg;

TEST(Image, IndexingIsRowMajorInterleaved) {
  RgbImage img(2, 3);
  img(1, 2, 1) = 0.5f;
  EXPECT_EQ(img.data()[(1 * 3 + 2) * 3 + 1], 0.5f);
  EXPECT_EQ(img.pixel_count(), 6u);
  EXPECT_TRUE(img.contains({1, 2}));
  EXPECT_FALSE(img.contains({2, 0}));
  EXPECT_FALSE(img.contains({0, -1}));
}

TEST(Image, RejectsMismatchedBuffer) {
  EXPECT_THROW(GrayImage(2, 2, std::vector<float>(3)), std::invalid_argument);
}

TEST(Image, SameShapeGuard) {
  EXPECT_NO_THROW(require_same_shape(BinaryMask(4, 5), GrayImage(4, 5), "x"));
  EXPECT_THROW(require_same_shape(BinaryMask(4, 5), BinaryMask(5, 4), "x"), InputError);
}

TEST(Resize, MatchesHalfPixelBilinearOracle) {
  std::mt19937_64 rng(7);
  for (auto [h, w, oh, ow] : {std::array{17, 23, 40, 60}, std::array{201, 201, 31, 31}, std::array{50, 30, 13, 71}}) {
    const auto img = oracle::random_image<RgbImage>(h, w, rng);
    const auto got = resize(img, oh, ow);
    const auto want = oracle::bilinear(img, oh, ow);
    for (std::size_t i = 0; i < got.data().size(); ++i) ASSERT_NEAR(got.data()[i], want.data()[i], 2e-6f);
  }
}

TEST(Resize, ConstantImageStaysExactlyConstant) {
  RgbImage img(37, 53, 0.3f);
  const auto out = resize(img, 400, 600);
  for (float v : out.data()) ASSERT_EQ(v, 0.3f);
}

TEST(Resize, IdentitySizeIsExactCopy) {
  std::mt19937_64 rng(1);
  const auto img = oracle::random_image<RgbImage>(20, 30, rng);
  EXPECT_EQ(resize(img, 20, 30), img);
}

TEST(Resize, OutputStaysInUnitRange) {
  std::mt19937_64 rng(2);
  const auto img = oracle::random_image<RgbImage>(31, 29, rng);
  EXPECT_TRUE(all_in_unit_range(resize(img, 400, 600)));
}

TEST(Resize, NearestKeepsMasksBinary) {
  std::mt19937_64 rng(3);
  const auto m = oracle::random_mask(33, 47, 0.4, rng);
  const auto out = resize(m, 400, 600, Interpolation::nearest);
  EXPECT_TRUE(is_binary(out));
  EXPECT_EQ(out.height(), 400);
  EXPECT_EQ(out.width(), 600);
}

TEST(Resize, NearestUpsampleByIntegerFactorReplicates) {
  BinaryMask m(2, 2);
  m(0, 1) = 1;
  m(1, 0) = 1;
  const auto out = resize(m, 4, 4, Interpolation::nearest);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_EQ(out(r, c), m(r / 2, c / 2));
}

TEST(Resize, RejectsEmptyTarget) {
  EXPECT_THROW(resize(RgbImage(4, 4), 0, 4), std::invalid_argument);
}

TEST(PadReplicate, CopiesEdgePixels) {
  std::mt19937_64 rng(4);
  const auto img = oracle::random_image<GrayImage>(5, 7, rng);
  const auto p = pad_replicate(img, 3, 2, 4, 1);
  ASSERT_EQ(p.height(), 10);
  ASSERT_EQ(p.width(), 12);
  for (int r = 0; r < p.height(); ++r)
    for (int c = 0; c < p.width(); ++c)
      ASSERT_EQ(p(r, c), img(oracle::clampi(r - 3, 0, 4), oracle::clampi(c - 4, 0, 6)));
}

TEST(Crop, ExtractsWindowAndRejectsOutOfBounds) {
  std::mt19937_64 rng(5);
  const auto img = oracle::random_image<RgbImage>(10, 12, rng);
  const auto c = crop(img, 2, 3, 4, 5);
  for (int r = 0; r < 4; ++r)
    for (int col = 0; col < 5; ++col)
      for (int ch = 0; ch < 3; ++ch) ASSERT_EQ(c(r, col, ch), img(r + 2, col + 3, ch));
  EXPECT_THROW(crop(img, 7, 0, 4, 5), std::out_of_range);
  EXPECT_THROW(crop(img, -1, 0, 4, 5), std::out_of_range);
}

TEST(MeanFilter, MatchesNeighborhoodAverage) {
  std::mt19937_64 rng(6);
  const auto img = oracle::random_image<RgbImage>(19, 23, rng);
  for (int k : {1, 3, 5}) {
    const auto got = mean_filter(img, k);
    const auto want = oracle::mean_filter(img, k);
    for (std::size_t i = 0; i < got.data().size(); ++i) ASSERT_NEAR(got.data()[i], want.data()[i], 1e-6f);
  }
}

TEST(MeanFilter, RejectsEvenWindow) {
  EXPECT_THROW(mean_filter(GrayImage(4, 4), 4), std::invalid_argument);
}

TEST(BoxMean, MatchesBruteForce) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  const int h = 13, w = 9, r = 4;
  std::vector<double> v(h * w);
  for (auto& x : v) x = u(rng);
  const auto got = box_mean(v, h, w, r);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i)
        for (int j = -r; j <= r; ++j) s += v[oracle::clampi(y + i, 0, h - 1) * w + oracle::clampi(x + j, 0, w - 1)];
      ASSERT_NEAR(got[y * w + x], s / ((2 * r + 1) * (2 * r + 1)), 1e-12);
    }
}

TEST(MaskOps, NotAndCount) {
  std::mt19937_64 rng(9);
  const auto a = oracle::random_mask(16, 16, 0.5, rng), b = oracle::random_mask(16, 16, 0.5, rng);
  const auto n = logical_not(a);
  const auto both = logical_and(a, b);
  EXPECT_EQ(count_nonzero(a) + count_nonzero(n), a.pixel_count());
  for (std::size_t i = 0; i < a.pixel_count(); ++i) ASSERT_EQ(both.data()[i], a.data()[i] & b.data()[i]);
}
