#include <gtest/gtest.h>

#include <fstream>

#include "skinseg/config.hpp"
#include "test_support.hpp"

using namespace skinseg;

TEST(RunConfig, DefaultsMatchReferenceSettings) {
  const RunConfig c;
  EXPECT_EQ(c.guided_filter.radius, 50);
  EXPECT_EQ(c.tau, 0.6);
  EXPECT_EQ(c.dilation_radius, 10);
  EXPECT_EQ(c.geometry.image_h, 400);
  EXPECT_EQ(c.geometry.image_w, 600);
  EXPECT_EQ(c.geometry.local_side, 31);
  EXPECT_EQ(c.geometry.global_side, 201);
  EXPECT_EQ(c.arch.maps, 60);
  EXPECT_EQ(c.arch.hidden, 500);
  EXPECT_EQ(c.patches_per_image, 4500);
  EXPECT_EQ(c.margin_radius, 15);
  EXPECT_EQ(c.folds, 4);
  EXPECT_EQ(c.mode, nn::NetMode::dual);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfig, ParsesKeysCommentsAndWhitespace) {
  const auto c = parse_run_config(
      "# comment\n"
      "tau = 0.7   # trailing comment\n"
      "  gf-eps=0.001\n"
      "\n"
      "mode = local\n"
      "seed = 42\n"
      "deterministic = yes\n"
      "threads = 8\n"
      "epochs = 3\n");
  EXPECT_EQ(c.tau, 0.7);
  EXPECT_EQ(c.guided_filter.epsilon, 0.001);
  EXPECT_EQ(c.mode, nn::NetMode::local_only);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.sgd.epochs, 3);
  EXPECT_EQ(c.training().threads, 1u);
  EXPECT_EQ(c.training().sgd.seed, 42u);
  EXPECT_EQ(c.segmentation().threads, 8u);
}

TEST(RunConfig, LaterLayersOverrideEarlierOnes) {
  const auto file = parse_run_config("tau = 0.7\nepochs = 3\n");
  const auto flags = parse_run_config("tau = 0.8\n", file);
  EXPECT_EQ(flags.tau, 0.8);
  EXPECT_EQ(flags.sgd.epochs, 3);
}

TEST(RunConfig, RejectsUnknownKeysBadValuesAndOutOfRange) {
  EXPECT_THROW(parse_run_config("colour = red\n"), std::invalid_argument);
  EXPECT_THROW(parse_run_config("tau\n"), std::invalid_argument);
  EXPECT_THROW(parse_run_config("tau = high\n"), std::invalid_argument);
  EXPECT_THROW(parse_run_config("epochs = 2.5\n"), std::invalid_argument);
  EXPECT_THROW(parse_run_config("tau = 1.5\n"), std::invalid_argument);
  EXPECT_THROW(parse_run_config("local-side = 30\n"), std::invalid_argument);
  EXPECT_THROW(parse_run_config("patches-per-image = 100\n"), std::invalid_argument);
  EXPECT_THROW(parse_run_config("folds = 1\n"), std::invalid_argument);
  EXPECT_THROW(parse_run_config("mode = triple\n"), std::invalid_argument);
  EXPECT_THROW(parse_run_config("deterministic = maybe\n"), std::invalid_argument);
}

TEST(RunConfig, MissingFileIsInputError) {
  EXPECT_THROW(load_run_config("/no/such/config.txt"), InputError);
  testing_support::TempDir dir;
  std::ofstream(dir / "c.txt") << "maps = 8\n";
  EXPECT_EQ(load_run_config(dir / "c.txt").arch.maps, 8);
}
