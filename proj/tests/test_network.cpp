#include <gtest/gtest.h>

#include <random>

#include "dmrs/model_gradcheck.hpp"
#include "dmrs/network.hpp"
#include "test_util.hpp"

using namespace dmrs;
using dmrs::testing::block_store;
using dmrs::testing::check_block;
using dmrs::testing::random_tensor;

namespace {

// Closed forms derived by hand from the block layouts. Every conv carries a
// bias and every batch norm a gamma and a beta.
std::int64_t resnet_oracle(std::int64_t c) { return 2 * (9 * c * c + c + 2 * c); }

std::int64_t resinc_oracle(std::int64_t c) {
  const std::int64_t q = c / 4;
  const std::int64_t reduce = 4 * (c * q + q + 2 * q);
  const std::int64_t convs = (0 + 1 + 2 + 3) * (9 * q * q + q + 2 * q);
  const std::int64_t mix = c * c + c + 2 * c;
  return reduce + convs + mix;
}

}  // namespace

TEST(ParameterCount, MatchesHandOracleAtWidth16) {
  EXPECT_EQ(count_block(BlockKind::ResIncBlock, 16), 1544);
  EXPECT_EQ(count_block(BlockKind::ResNetBlock, 16), 4704);
}

TEST(ParameterCount, ResIncBelowOneThirdOfResNet) {
  for (std::int64_t c : {16, 32, 64}) {
    const auto inc = count_block(BlockKind::ResIncBlock, c);
    const auto res = count_block(BlockKind::ResNetBlock, c);
    EXPECT_EQ(inc, resinc_oracle(c)) << "c=" << c;
    EXPECT_EQ(res, resnet_oracle(c)) << "c=" << c;
    EXPECT_LT(3 * inc, res) << "c=" << c;
  }
}

TEST(ParameterCount, OracleHoldsForEveryValidWidth) {
  for (std::int64_t c = 8; c <= 256; c += 4) {
    EXPECT_EQ(count_block(BlockKind::ResIncBlock, c), resinc_oracle(c)) << c;
    EXPECT_EQ(count_block(BlockKind::ResNetBlock, c), resnet_oracle(c)) << c;
  }
}

TEST(ParameterCount, BlockTableSumsToModelStore) {
  for (Arch arch : {Arch::DeepMRSeg, Arch::UNet}) {
    NetworkConfig cfg;
    cfg.in_channels = 2;
    cfg.features = 12;
    cfg.depth = 3;
    cfg.num_classes = 4;
    std::int64_t total = 0;
    for (const auto& b : count_parameters(arch, cfg)) total += b.parameters;
    Model<float> model(arch, cfg);
    EXPECT_EQ(total, model.params().parameter_count()) << arch_name(arch);
  }
}

TEST(ParameterCount, ProjectionNeedsConfig) {
  EXPECT_THROW(count_block(BlockKind::Projection, 16), ConfigError);
}

TEST(NetworkConfig, RejectsInvalidValues) {
  NetworkConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.features = 6;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.features = 10;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.depth = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.num_classes = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.resinc_branch_depths = {0, 1, 2};
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(parse_arch("vnet"), ConfigError);
}

TEST(ShapeLaws, TransitionsOverRandomWidths) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> quarter(2, 8), half(1, 4), batch(1, 2);
  for (int trial = 0; trial < 60; ++trial) {
    const std::int64_t c = 4 * quarter(rng);
    const std::int64_t n = batch(rng), h = 2 * half(rng), w = 2 * half(rng);

    TransitionDown down("down", c);
    ParamStore<double> ds = block_store(down, rng);
    Tape<double> t1;
    ForwardContext<double> c1(t1, ds, Mode::Train);
    const Var y = down.forward(c1, t1.input(random_tensor({n, c, h, w}, rng)));
    EXPECT_EQ(t1.value(y).shape(), (Shape{n, 2 * c, h / 2, w / 2}));

    TransitionUp up("up", c);
    ParamStore<double> us = block_store(up, rng);
    Tape<double> t2;
    ForwardContext<double> c2(t2, us, Mode::Train);
    const Var coarse = t2.input(random_tensor({n, c, h, w}, rng));
    const Var skip = t2.input(random_tensor({n, c / 2, 2 * h, 2 * w}, rng));
    const Var z = up.forward(c2, coarse, skip);
    EXPECT_EQ(t2.value(z).shape(), (Shape{n, c / 2, 2 * h, 2 * w}));
  }
}

TEST(ShapeLaws, TransitionUpRejectsMismatchedSkip) {
  std::mt19937_64 rng(3);
  TransitionUp up("up", 16);
  ParamStore<double> us = block_store(up, rng);
  Tape<double> tape;
  ForwardContext<double> ctx(tape, us, Mode::Train);
  const Var x = tape.input(random_tensor({1, 16, 2, 2}, rng));
  const Var bad = tape.input(random_tensor({1, 8, 2, 2}, rng));
  EXPECT_THROW(up.forward(ctx, x, bad), ConfigError);
}

TEST(ShapeLaws, FullNetworksPreserveSpatialDims) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> fq(2, 5), depth(1, 3), m(1, 3), classes(2, 5), mult(1, 2), n(1, 2);
  std::bernoulli_distribution pick_unet(0.5);
  int checked = 0;
  for (int trial = 0; trial < 56; ++trial) {
    NetworkConfig cfg;
    cfg.features = 4 * fq(rng);
    cfg.depth = depth(rng);
    cfg.in_channels = m(rng);
    cfg.num_classes = classes(rng);
    const Arch arch = pick_unet(rng) ? Arch::UNet : Arch::DeepMRSeg;
    const std::int64_t div = cfg.spatial_divisor();
    const std::int64_t h = div * mult(rng), w = div * mult(rng), batch = n(rng);
    auto model = Model<float>::initialized(arch, cfg, rng());
    const TensorF x = random_tensor({batch, cfg.in_channels, h, w}, rng).cast<float>();
    const TensorF out = model.logits(x, trial % 2 ? Mode::Train : Mode::Infer);
    ASSERT_EQ(out.shape(), (Shape{batch, cfg.num_classes, h, w}))
        << arch_name(arch) << " f=" << cfg.features << " depth=" << cfg.depth;
    EXPECT_TRUE(out.all_finite());
    ++checked;
  }
  EXPECT_GE(checked, 50);
}

TEST(ShapeLaws, ChannelProgressionDoublesThenHalves) {
  NetworkConfig cfg;
  cfg.features = 8;
  cfg.depth = 3;
  const auto prog = DeepMRSegNet(cfg).channel_progression();
  EXPECT_EQ(prog, (std::vector<std::int64_t>{8, 16, 32, 64, 32, 16, 8}));
}

TEST(Model, ValidateInputReportsProblems) {
  NetworkConfig cfg;
  cfg.in_channels = 2;
  cfg.depth = 2;
  Model<float> model(Arch::DeepMRSeg, cfg);
  EXPECT_NO_THROW(model.validate_input({1, 2, 8, 12}));
  EXPECT_THROW(model.validate_input({2, 8, 8}), ConfigError);
  EXPECT_THROW(model.validate_input({1, 1, 8, 8}), ConfigError);
  EXPECT_THROW(model.validate_input({1, 2, 6, 8}), ConfigError);
}

TEST(Model, InitializationIsSeeded) {
  NetworkConfig cfg;
  auto a = Model<float>::initialized(Arch::DeepMRSeg, cfg, 5);
  auto b = Model<float>::initialized(Arch::DeepMRSeg, cfg, 5);
  auto c = Model<float>::initialized(Arch::DeepMRSeg, cfg, 6);
  bool differs = false;
  for (const auto& e : a.params().entries()) {
    EXPECT_TRUE(e.tensor == b.params().get(e.name));
    differs = differs || !(e.tensor == c.params().get(e.name));
  }
  EXPECT_TRUE(differs);
}


TEST(BlockGradients, ResNetBlock) {
  const auto r = check_block(ResNetBlock("res", 8), 8, 21);
  EXPECT_TRUE(r.pass) << r.max_relative_error << " at " << r.worst_parameter;
}

TEST(BlockGradients, ResIncBlock) {
  const auto r = check_block(ResIncBlock("inc", 8, {0, 1, 2, 3}), 8, 22);
  EXPECT_TRUE(r.pass) << r.max_relative_error << " at " << r.worst_parameter;
}

TEST(BlockGradients, TransitionDown) {
  const auto r = check_block(TransitionDown("down", 8), 8, 23);
  EXPECT_TRUE(r.pass) << r.max_relative_error << " at " << r.worst_parameter;
}

TEST(ModelGradients, DeepMRSegDepthOne) {
  NetworkConfig cfg;
  cfg.features = 8;
  cfg.depth = 1;
  cfg.num_classes = 3;
  const auto r = check_model_gradients(Arch::DeepMRSeg, cfg, 7);
  EXPECT_TRUE(r.pass) << r.max_relative_error << " at " << r.worst_parameter;
  EXPECT_LE(r.max_relative_error, 1e-4);
  EXPECT_GT(r.coordinates_checked, 100);
}

TEST(ModelGradients, UNetDepthOne) {
  NetworkConfig cfg;
  cfg.features = 8;
  cfg.depth = 1;
  cfg.num_classes = 2;
  const auto r = check_model_gradients(Arch::UNet, cfg, 8);
  EXPECT_TRUE(r.pass) << r.max_relative_error << " at " << r.worst_parameter;
}
