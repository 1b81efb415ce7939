#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "lucenet/checkpoint.hpp"
#include "lucenet/densenet.hpp"
#include "lucenet/grad_check.hpp"
#include "lucenet/ops.hpp"
#include "lucenet/training.hpp"

namespace lucenet {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("lucenet_model_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

DenseNetConfig small_config() {
  DenseNetConfig c;
  c.input_size = 64;
  c.stem_filters = 8;
  c.growth_rate = 4;
  c.block_layout = {2, 2};
  c.compression = 0.5;
  return c;
}

Tensor random_images(std::size_t n, std::size_t side, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n * side * side);
  for (auto& x : v) x = static_cast<float>(uniform01(rng));
  return Tensor(Shape{n, 1, side, side}, std::move(v));
}

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

ForwardOptions training_with(Rng* rng) {
  ForwardOptions o;
  o.training = true;
  o.dropout_rng = rng;
  return o;
}

void write_bytes(const fs::path& path, const std::vector<char>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

TEST(Architecture, DenseBlockChannelBookkeeping) {
  const auto c = small_config();
  const auto layers = conv_layers(c);
  // stem, 2 layers, transition, 2 layers
  ASSERT_EQ(layers.size(), 6u);
  EXPECT_EQ(layers[1].in_channels, 8u);
  EXPECT_EQ(layers[2].in_channels, 12u);
  EXPECT_EQ(layers[3].name, "transition0.conv");
  EXPECT_EQ(layers[3].in_channels, 16u);
  EXPECT_EQ(layers[3].out_channels, 8u);
  EXPECT_EQ(layers[3].kernel, 1u);
  EXPECT_EQ(layers[4].in_channels, 8u);
  EXPECT_EQ(layers[5].in_channels, 12u);
  EXPECT_EQ(feature_channels(c), 16u);

  for (std::size_t growth : {1u, 3u, 7u}) {
    for (std::size_t depth : {1u, 2u, 5u}) {
      DenseNetConfig d;
      d.growth_rate = growth;
      d.block_layout = {depth};
      std::size_t i = 0;
      for (const auto& l : conv_layers(d)) {
        if (!l.name.starts_with("block")) continue;
        EXPECT_EQ(l.in_channels, d.stem_filters + i * growth) << l.name;
        ++i;
      }
      EXPECT_EQ(feature_channels(d), d.stem_filters + depth * growth);
    }
  }
}

TEST(Architecture, ParameterCountMatchesIndependentTally) {
  // 3x3 convs: F*C*9 + F; 1x1 transition: F*C + F; dense: D*M + M.
  const std::size_t tally = (8 * 1 * 9 + 8)           // stem
                            + (4 * 8 * 9 + 4)         // block0.layer0
                            + (4 * 12 * 9 + 4)        // block0.layer1
                            + (8 * 16 + 8)            // transition0
                            + (4 * 8 * 9 + 4)         // block1.layer0
                            + (4 * 12 * 9 + 4)        // block1.layer1
                            + (16 * 512 + 512)        // head.fc0
                            + (512 * 256 + 256)       // head.fc1
                            + (256 * 256 + 256)       // head.fc2
                            + (256 * 1 + 1);          // head.out
  Model m(small_config());
  EXPECT_EQ(m.parameter_count(), tally);
  EXPECT_EQ(m.parameter_count(ParamGroup::backbone) + m.parameter_count(ParamGroup::head), tally);
  EXPECT_EQ(m.parameter_count(ParamGroup::backbone), 1672u);
}

TEST(Architecture, HeadStructureAudit) {
  Model m(DenseNetConfig{});
  std::vector<std::pair<std::string, Shape>> head;
  for (const auto& p : m.parameters()) {
    if (p.group == ParamGroup::head && p.value.rank() == 2) head.emplace_back(p.name, p.value.shape());
  }
  ASSERT_EQ(head.size(), 4u);
  EXPECT_EQ(head[0].second[1], 512u);
  EXPECT_EQ(head[1].second, (Shape{512, 256}));
  EXPECT_EQ(head[2].second, (Shape{256, 256}));
  EXPECT_EQ(head[3].second, (Shape{256, 1}));
  EXPECT_EQ(m.config().head_dropout, 0.3);
  const auto summary = m.summary();
  EXPECT_NE(summary.find("dropout 0.3\ndense head.out 256->1"), std::string::npos) << summary;
}

TEST(Architecture, WideConfigFilterCounts) {
  Model m(DenseNetConfig::wide());
  EXPECT_EQ(m.first_conv_filters(), 64u);
  EXPECT_EQ(m.last_conv_filters(), 32u);
  Model d(DenseNetConfig{});
  EXPECT_EQ(d.first_conv_filters(), 8u);
  EXPECT_EQ(d.last_conv_filters(), 4u);
}

TEST(Architecture, ConfigValidation) {
  auto bad = [](auto mutate) {
    DenseNetConfig c;
    mutate(c);
    return c;
  };
  EXPECT_THROW(bad([](auto& c) { c.growth_rate = 0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.kernel_size = 2; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.compression = 0; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.input_size = 4; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.block_layout = {}; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.head_dims = {16}; }).validate(), ConfigError);
  EXPECT_NO_THROW(bad([](auto& c) {
    c.head_dims = {16};
    c.head_override = true;
  }).validate());
  EXPECT_EQ(resolve_conv_layer(DenseNetConfig{}, "first"), "stem.conv");
  EXPECT_EQ(resolve_conv_layer(DenseNetConfig{}, "last"), "block2.layer1.conv");
  EXPECT_THROW(resolve_conv_layer(DenseNetConfig{}, "nope"), ConfigError);
}

TEST(Init, GaussianMomentsOverManyDraws) {
  Model m = build(DenseNetConfig{}, GaussianInit{11, 0.05});
  std::vector<double> draws;
  for (const auto& p : m.parameters()) {
    if (p.value.rank() == 1) {
      for (float v : p.value.data()) EXPECT_EQ(v, 0.0f) << p.name;
      continue;
    }
    for (float v : p.value.data()) draws.push_back(v);
  }
  ASSERT_GE(draws.size(), 100'000u);
  draws.resize(100'000);
  const double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / draws.size();
  double ss = 0;
  for (double d : draws) ss += (d - mean) * (d - mean);
  const double sd = std::sqrt(ss / (draws.size() - 1));
  EXPECT_LT(std::abs(mean), 0.002);
  EXPECT_NEAR(sd, 0.05, 0.05 * 0.05);
  EXPECT_EQ(m.provenance().init, "gaussian");
  EXPECT_EQ(m.provenance().init_std, 0.05);
}

TEST(Init, SameSeedSameWeightsDifferentSeedDifferent) {
  const auto a = build(small_config(), GaussianInit{3}).digest();
  EXPECT_EQ(a, build(small_config(), GaussianInit{3}).digest());
  EXPECT_NE(a, build(small_config(), GaussianInit{4}).digest());
}

TEST(Forward, ZeroNetworkGivesLogitZero) {
  Model m(small_config());
  Tape tape;
  auto logits = m.forward(tape, random_images(3, 64, 1));
  ASSERT_EQ(logits.shape(), (Shape{3, 1}));
  for (float v : logits.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Forward, InferenceIsBitIdentical) {
  Model m = build(small_config(), GaussianInit{5, 0.05, true});
  const auto x = random_images(2, 64, 2);
  Tape t1, t2;
  auto a = m.forward(t1, x);
  auto b = m.forward(t2, x);
  EXPECT_EQ(std::vector<float>(a.data().begin(), a.data().end()),
            std::vector<float>(b.data().begin(), b.data().end()));
}

TEST(Forward, DropoutOnlyWhenTraining) {
  Model m = build(small_config(), GaussianInit{5, 0.05, true});
  const auto x = random_images(2, 64, 2);
  Tape t0;
  const float inference = m.forward(t0, x).data()[0];
  Rng r1(1), r2(2);
  const auto train1 = training_with(&r1), train2 = training_with(&r2);
  Tape t1, t2;
  const float a = m.forward(t1, x, train1).data()[0];
  const float b = m.forward(t2, x, train2).data()[0];
  EXPECT_TRUE(a != b || a != inference);
  const auto missing = training_with(nullptr);
  Tape t3;
  EXPECT_THROW(m.forward(t3, x, missing), ConfigError);
}

TEST(Forward, RejectsWrongInputShape) {
  Model m(small_config());
  Tape tape;
  EXPECT_THROW(m.forward(tape, random_images(1, 32, 1)), ShapeError);
  EXPECT_THROW(m.forward(tape, Tensor(Shape{1, 2, 64, 64})), ShapeError);
}

TEST(Forward, StopAtReturnsConvOutput) {
  Model m = build(small_config(), GaussianInit{5, 0.05, true});
  ForwardOptions o;
  o.stop_at = "stem.conv";
  Tape tape;
  auto out = m.forward(tape, random_images(1, 64, 3), o);
  EXPECT_EQ(out.shape(), (Shape{1, 8, 64, 64}));
  o.stop_at = "block1.layer1.conv";
  out = m.forward(tape, random_images(1, 64, 3), o);
  EXPECT_EQ(out.shape(), (Shape{1, 4, 16, 16}));
}

TEST(Forward, FullModelGradientCheck) {
  DenseNetConfig c;
  c.input_size = 16;
  c.stem_filters = 3;
  c.growth_rate = 2;
  c.block_layout = {2, 2};
  Model m = build(c, GaussianInit{9, 0.05, true});
  const auto x = random_images(2, 16, 4);
  std::vector<std::string> names;
  std::vector<Tensor> values;
  for (const auto& p : m.parameters()) {
    names.push_back(p.name);
    values.push_back(p.value.detached());
  }
  auto graph = [&](auto& tape, const auto& params) {
    using T = typename std::decay_t<decltype(params[0])>::value_type;
    ParamLookup<T> lookup = [&](const std::string& name) {
      const auto it = std::find(names.begin(), names.end(), name);
      return params[static_cast<std::size_t>(it - names.begin())];
    };
    Rng dropout(17);
    auto logits = densenet_forward<T>(tape, c, lookup, x.template cast<T>(), true, &dropout);
    auto labels = BasicTensor<T>(Shape{2, 1}, std::vector<T>{1, 0});
    return ops::bce_loss(tape, ops::sigmoid(tape, logits), labels);
  };
  GradCheckOptions o;
  o.max_coordinates_per_tensor = 12;
  o.seed = 3;
  const auto r = grad_check(graph, values, o);
  EXPECT_LT(r.max_relative_error, 1e-3) << r.worst;
  EXPECT_GT(r.checked, 150u);
}

TEST(Freeze, FrozenSetIsExactlyTheBackbone) {
  Model m(small_config());
  m.freeze_backbone();
  std::size_t backbone = 0;
  for (const auto& p : m.parameters()) {
    EXPECT_EQ(m.is_frozen(p.name), p.group == ParamGroup::backbone) << p.name;
    backbone += p.group == ParamGroup::backbone;
  }
  EXPECT_EQ(m.frozen().size(), backbone);
  EXPECT_TRUE(m.backbone_frozen());
  m.unfreeze_all();
  EXPECT_TRUE(m.frozen().empty());
}

// One optimizer step on the BCE loss of a random batch.
void train_step(Model& m, AdamState& state, std::uint64_t seed) {
  Tape tape;
  Rng rng(seed);
  const auto o = training_with(&rng);
  auto logits = m.forward(tape, random_images(2, 64, seed), o);
  auto loss = ops::bce_loss(tape, ops::sigmoid(tape, logits), Tensor(Shape{2, 1}, {1, 0}));
  m.zero_grad();
  tape.backward(loss);
  adam_step(m, state);
}

TEST(Freeze, StepsLeaveBackboneBytesAndMoveHead) {
  Model m = build(small_config(), GaussianInit{2, 0.05, true});
  m.freeze_backbone();
  const Model before = m.clone();
  AdamState state(m);
  for (std::uint64_t s = 0; s < 3; ++s) train_step(m, state, s);
  bool head_changed = false;
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    const auto& p = m.parameters()[i];
    const auto a = before.parameters()[i].value.data();
    const bool same = std::memcmp(a.data(), p.value.data().data(), a.size() * sizeof(float)) == 0;
    if (p.group == ParamGroup::backbone) EXPECT_TRUE(same) << p.name;
    else head_changed |= !same;
  }
  EXPECT_TRUE(head_changed);

  m.unfreeze_all();
  const Model thawed = m.clone();
  AdamState fresh(m);
  train_step(m, fresh, 9);
  bool backbone_changed = false;
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    if (m.parameters()[i].group != ParamGroup::backbone) continue;
    const auto a = thawed.parameters()[i].value.data();
    const auto b = m.parameters()[i].value.data();
    backbone_changed |= !std::equal(a.begin(), a.end(), b.begin());
  }
  EXPECT_TRUE(backbone_changed);
}

TEST(Checkpoint, RoundTripIsBitExactAndByteIdentical) {
  const auto dir = temp_dir("roundtrip");
  Model m = build(small_config(), GaussianInit{7});
  m.provenance().regime = "retrained";
  m.provenance().epochs_completed = 3;
  save_checkpoint(m, dir / "a.ckpt");
  Model loaded = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(loaded.config(), m.config());
  EXPECT_EQ(loaded.digest(), m.digest());
  EXPECT_EQ(loaded.provenance().regime, "retrained");
  EXPECT_EQ(loaded.provenance().epochs_completed, 3u);
  save_checkpoint(loaded, dir / "b.ckpt");
  EXPECT_EQ(read_bytes(dir / "a.ckpt"), read_bytes(dir / "b.ckpt"));
}

TEST(Checkpoint, CorruptionProducesSpecificKinds) {
  const auto dir = temp_dir("corrupt");
  Model m = build(small_config(), GaussianInit{7});
  const auto good = encode_checkpoint(m);
  auto kind_of = [](const std::vector<char>& bytes) {
    try {
      decode_checkpoint(bytes);
    } catch (const FormatError& e) {
      return e.kind();
    }
    ADD_FAILURE() << "decode accepted corrupted bytes";
    return FormatError::Kind::io;
  };
  auto truncated = good;
  truncated.pop_back();
  EXPECT_EQ(kind_of(truncated), FormatError::Kind::truncated_payload);
  auto magic = good;
  magic[0] = 'X';
  EXPECT_EQ(kind_of(magic), FormatError::Kind::bad_magic);
  auto version = good;
  version[7] = '9';
  EXPECT_EQ(kind_of(version), FormatError::Kind::version_mismatch);
  auto trailing = good;
  trailing.push_back('\0');
  EXPECT_EQ(kind_of(trailing), FormatError::Kind::malformed);

  write_bytes(dir / "short.ckpt", truncated);
  try {
    load_checkpoint(dir / "short.ckpt");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::truncated_payload);
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), MissingInputError);
}

TEST(Checkpoint, BackboneIntoDifferentLayoutIsConfigMismatch) {
  const auto dir = temp_dir("mismatch");
  Model m = build(small_config(), GaussianInit{7});
  save_checkpoint(m, dir / "bb.ckpt", CheckpointScope::backbone);
  auto other = small_config();
  other.block_layout = {3, 3};
  try {
    build(other, CheckpointInit{dir / "bb.ckpt"});
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::config_mismatch);
  }
  EXPECT_THROW(load_checkpoint(dir / "bb.ckpt"), FormatError);
}

TEST(Checkpoint, BackboneLoadCopiesBackboneOnly) {
  const auto dir = temp_dir("backbone");
  Model src = build(small_config(), GaussianInit{7, 0.05, true});
  save_checkpoint(src, dir / "bb.ckpt", CheckpointScope::backbone);
  Model dst = build(small_config(), CheckpointInit{dir / "bb.ckpt", 99});
  for (std::size_t i = 0; i < dst.parameters().size(); ++i) {
    const auto& p = dst.parameters()[i];
    const auto a = src.parameters()[i].value.data();
    const bool same = std::equal(a.begin(), a.end(), p.value.data().begin());
    if (p.group == ParamGroup::backbone) {
      EXPECT_TRUE(same) << p.name;
    } else if (p.value.rank() == 2) {
      EXPECT_FALSE(same) << p.name;
    }
  }
  EXPECT_EQ(dst.provenance().init, "checkpoint");
}

}  // namespace
}  // namespace lucenet
