#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "skinseg/preprocess.hpp"

using namespace skinseg;

TEST(GuidedFilter, ConstantImageIsInvariant) {
  for (float c : {0.0f, 0.3f, 0.77f, 1.0f}) {
    RgbImage img(40, 50, c);
    const auto out = preprocess_image(img, {});
    for (float v : out.data()) ASSERT_EQ(v, c);
  }
}

TEST(GuidedFilter, SelfGuidanceWithZeroEpsilonIsIdentity) {
  std::mt19937_64 rng(11);
  const auto img = oracle::random_image<GrayImage>(32, 32, rng);
  const auto out = guided_filter(img, img, {5, 0.0});
  for (std::size_t i = 0; i < img.pixel_count(); ++i) ASSERT_NEAR(out.data()[i], img.data()[i], 1e-6);
}

TEST(GuidedFilter, MatchesSlidingWindowOracle) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 3; ++trial) {
    const auto p = oracle::random_image<GrayImage>(32, 32, rng);
    const auto guide = oracle::random_image<GrayImage>(32, 32, rng);
    for (const auto& g : {p, guide}) {
      const auto got = guided_filter(p, g, {5, 0.01});
      const auto want = oracle::guided_filter(p, g, 5, 0.01);
      for (std::size_t i = 0; i < got.pixel_count(); ++i) ASSERT_NEAR(got.data()[i], want.data()[i], 1e-5);
    }
  }
}

TEST(GuidedFilter, LargeEpsilonApproachesBoxMean) {
  std::mt19937_64 rng(13);
  const auto img = oracle::random_image<GrayImage>(24, 24, rng);
  const auto out = guided_filter(img, img, {3, 1e9});
  std::vector<double> v(img.data().begin(), img.data().end());
  const auto m = box_mean(v, 24, 24, 3);
  const auto mm = box_mean(m, 24, 24, 3);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) ASSERT_NEAR(out.data()[i], mm[i], 1e-6);
}

TEST(GuidedFilter, PreservesStepEdgeBetterThanBoxBlur) {
  GrayImage img(30, 30);
  for (int r = 0; r < 30; ++r)
    for (int c = 15; c < 30; ++c) img(r, c) = 1.0f;
  const auto out = guided_filter(img, img, {5, 1e-4});
  EXPECT_LT(out(15, 13), 0.05f);
  EXPECT_GT(out(15, 16), 0.95f);
}

TEST(GuidedFilter, OutputOfPreprocessStaysInUnitRange) {
  std::mt19937_64 rng(14);
  const auto img = oracle::random_image<RgbImage>(60, 80, rng);
  EXPECT_TRUE(all_in_unit_range(preprocess_image(img, {10, 0.01})));
}

TEST(GuidedFilter, RejectsInvalidParameters) {
  GrayImage g(4, 4);
  EXPECT_THROW(guided_filter(g, g, {0, 0.01}), std::invalid_argument);
  EXPECT_THROW(guided_filter(g, g, {2, -1.0}), std::invalid_argument);
  EXPECT_THROW(guided_filter(g, GrayImage(4, 5), {2, 0.01}), InputError);
}
