#include <gtest/gtest.h>

#include "skinseg/model_io.hpp"
#include "test_support.hpp"

using namespace skinseg;
using namespace skinseg::nn;
using testing_support::TempDir;

TEST(ModelIo, RoundTripPreservesEveryModeAndWeight) {
  TempDir dir;
  for (auto mode : {NetMode::dual, NetMode::local_only, NetMode::global_only}) {
    Rng rng(51);
    const auto net = initialize<float>(Architecture{5, 7}, mode, rng);
    save_model(net, dir / "m.bin");
    const auto back = load_model(dir / "m.bin");
    EXPECT_TRUE(back == net) << mode_name(mode);
    EXPECT_EQ(back.mode, mode);
    EXPECT_EQ(back.fusion_inputs(), mode == NetMode::dual ? 90 : 45);
  }
}

TEST(ModelIo, SerializationIsByteStable) {
  Rng a(52), b(52);
  EXPECT_EQ(serialize_model(initialize<float>(Architecture{4, 4}, NetMode::dual, a)),
            serialize_model(initialize<float>(Architecture{4, 4}, NetMode::dual, b)));
}

TEST(ModelIo, FullSizeParameterCount) {
  const auto net = TwoPathNetwork<float>::zeros(Architecture{}, NetMode::dual);
  std::size_t count = 0;
  for_each_tensor(net.params, [&](const char*, const auto& t) { count += t.size(); });
  // Two paths of (60*108 + 60 + 60*1500 + 60), fusion 500*1080 + 500, output 2*500 + 2.
  EXPECT_EQ(count, 2u * (6480 + 60 + 90000 + 60) + 540000 + 500 + 1000 + 2);
  const auto bytes = serialize_model(net);
  EXPECT_EQ(bytes.size(), 8 + 4 + 4 + 12 * 4 + 8 + 4 * count);
}

TEST(ModelIo, CorruptFilesAreRejected) {
  Rng rng(53);
  const auto bytes = serialize_model(initialize<float>(Architecture{4, 4}, NetMode::dual, rng));

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(deserialize_model(truncated), InputError);

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(deserialize_model(trailing), InputError);

  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(deserialize_model(magic), InputError);

  auto arch = bytes;
  arch[16] = 7;  // first architecture word: input side
  EXPECT_THROW(deserialize_model(arch), InputError);

  auto mode = bytes;
  mode[12] = 9;
  EXPECT_THROW(deserialize_model(mode), InputError);
}

TEST(ModelIo, VersionMismatchNamesBothVersions) {
  Rng rng(54);
  auto bytes = serialize_model(initialize<float>(Architecture{4, 4}, NetMode::dual, rng));
  bytes[8] = 2;
  try {
    deserialize_model(bytes, "old.bin");
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("version 2"), std::string::npos);
    EXPECT_NE(msg.find("version 1"), std::string::npos);
  }
}

TEST(ModelIo, MissingFileIsInputError) {
  EXPECT_THROW(load_model("/no/such/model.bin"), InputError);
}
