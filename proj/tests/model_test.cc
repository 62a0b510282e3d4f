//
// Copyright 2026 The dpasr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include <cmath>
#include <cstring>
#include <filesystem>

#include <gtest/gtest.h>

#include "dpasr/model.h"
#include "dpasr/status.h"
#include "fixtures.h"

namespace dpasr {
namespace {

using ::dpasr::testing::TinyConfig;

ModelConfig SmallConfig() {
  ModelConfig c;
  c.num_layers = 2;
  c.model_dim = 32;
  c.num_heads = 4;
  c.ffn_dim = 64;
  c.groupnorm_groups = 4;
  c.feature_dim = 16;
  c.frame_stack = 2;
  return c;
}

TEST(ModelInitTest, ParamCountMatchesHandCount) {
  const ModelConfig c = SmallConfig();
  // subsample: 32x32 + 32. Per layer: attn norm 64, q/k/v/o 4 x 1024 plus
  // three biases of 32 (none on k), ffn norm 64, w1 32x64 + 64, w2 64x32 + 32.
  // Final norm 64, head 32x28 + 28.
  const int64_t per_layer = 64 + 4 * 1024 + 3 * 32 + 64 + 2112 + 2080;
  const int64_t hand = 1056 + 2 * per_layer + 64 + 924;
  EXPECT_EQ(hand, 19068);
  EXPECT_EQ(c.ExpectedParamCount(), hand);
  EXPECT_EQ(CountParams(InitModel(c, Rng(1))).total, hand);

  ModelConfig conv = c;
  conv.conv_module_enabled = true;
  // conv norm 64, pw1 and pw2 2 x 1056, depthwise 3x32 + 32.
  EXPECT_EQ(CountParams(InitModel(conv, Rng(1))).total, hand + 2 * (64 + 2112 + 128));
  EXPECT_EQ(conv.ExpectedParamCount(), hand + 2 * (64 + 2112 + 128));
}

TEST(ModelInitTest, DeterministicAndStructured) {
  const ModelConfig c = TinyConfig(true);
  const ParamStore a = InitModel(c, Rng(3));
  const ParamStore b = InitModel(c, Rng(3));
  EXPECT_TRUE(a.BitEqual(b));
  EXPECT_FALSE(a.BitEqual(InitModel(c, Rng(4))));
  for (const Param& p : a.params()) {
    if (p.kind == ParamKind::kBias || p.kind == ParamKind::kNormBias) {
      EXPECT_EQ(SquaredNorm(p.value), 0.0) << p.name;
    } else if (p.kind == ParamKind::kNormScale) {
      for (float x : p.value.data()) ASSERT_EQ(x, 1.0f) << p.name;
    } else {
      EXPECT_GT(SquaredNorm(p.value), 0.0) << p.name;
    }
  }
}

TEST(ModelInitTest, InvalidConfigsRejected) {
  ModelConfig c = SmallConfig();
  c.num_heads = 5;
  EXPECT_THROW(InitModel(c, Rng(1)), InvalidArgumentError);
  c = SmallConfig();
  c.groupnorm_groups = 3;
  EXPECT_THROW(c.Validate(), InvalidArgumentError);
  c = SmallConfig();
  c.vocab_size = 1;
  EXPECT_THROW(c.Validate(), InvalidArgumentError);
  c = SmallConfig();
  c.frame_stack = 0;
  EXPECT_THROW(c.Validate(), InvalidArgumentError);
}

TEST(ParamCountTest, FractionsAtExtremes) {
  ParamStore p = InitModel(TinyConfig(), Rng(1));
  p.SetAllTrainable(true);
  EXPECT_EQ(CountParams(p).fraction, 1.0);
  p.SetAllTrainable(false);
  const ParamCounts c = CountParams(p);
  EXPECT_EQ(c.fraction, 0.0);
  EXPECT_EQ(c.trainable, 0);
}

TensorF RandomBatch(const ModelConfig& c, int64_t B, int64_t T, Rng& rng) {
  return GaussianInit<float>({B, T, c.feature_dim}, 1.0, rng);
}

void CopyRow(const TensorF& from, int64_t i, TensorF* to, int64_t j) {
  const int64_t row = from.size() / from.dim(0);
  std::memcpy(to->raw() + j * row, from.raw() + i * row, sizeof(float) * row);
}

TEST(EncodeTest, OutputShapeAndNormalization) {
  const ModelConfig c = TinyConfig(true);
  const AsrModel m(c);
  const ParamStore p = InitModel(c, Rng(2));
  Rng rng(5);
  const TensorF x = RandomBatch(c, 3, 16, rng);
  const EncodeResult r = Encode(m, p, x, {16, 16, 16});
  ASSERT_EQ(r.log_probs.shape(), (Shape{3, 8, c.vocab_size}));
  EXPECT_EQ(r.out_lengths, (std::vector<int64_t>{8, 8, 8}));
  for (int64_t b = 0; b < 3; ++b) {
    for (int64_t t = 0; t < 8; ++t) {
      double z = 0;
      for (int64_t v = 0; v < c.vocab_size; ++v) {
        z += std::exp(static_cast<double>(
            r.log_probs.raw()[(b * 8 + t) * c.vocab_size + v]));
      }
      EXPECT_NEAR(std::log(z), 0.0, 1e-5);
    }
  }
  // Odd lengths drop the trailing partial stack.
  EXPECT_EQ(Encode(m, p, x, {16, 15, 2}).out_lengths, (std::vector<int64_t>{8, 7, 1}));
}

TEST(EncodeTest, ExamplesNeverMix) {
  const ModelConfig c = TinyConfig(true);
  const AsrModel m(c);
  const ParamStore p = InitModel(c, Rng(2));
  Rng rng(6);
  const TensorF xy = RandomBatch(c, 2, 12, rng);
  TensorF xz = RandomBatch(c, 2, 12, rng);
  CopyRow(xy, 0, &xz, 0);
  const EncodeResult a = Encode(m, p, xy, {12, 12});
  const EncodeResult b = Encode(m, p, xz, {12, 9});
  const int64_t row = a.log_probs.size() / 2;
  EXPECT_EQ(std::memcmp(a.log_probs.raw(), b.log_probs.raw(), sizeof(float) * row), 0);

  // Swapping rows swaps outputs.
  TensorF yx(xy.shape());
  CopyRow(xy, 0, &yx, 1);
  CopyRow(xy, 1, &yx, 0);
  const EncodeResult s = Encode(m, p, yx, {12, 12});
  EXPECT_EQ(std::memcmp(a.log_probs.raw(), s.log_probs.raw() + row, sizeof(float) * row), 0);
  EXPECT_EQ(std::memcmp(a.log_probs.raw() + row, s.log_probs.raw(), sizeof(float) * row), 0);
}

TEST(EncodeTest, PaddingDoesNotLeak) {
  const ModelConfig c = TinyConfig();
  const AsrModel m(c);
  const ParamStore p = InitModel(c, Rng(2));
  Rng rng(7);
  TensorF x = RandomBatch(c, 1, 20, rng);
  const TensorF a = Encode(m, p, x, {12}).log_probs;
  // Scribble over the padded tail.
  for (int64_t i = 12 * c.feature_dim; i < x.size(); ++i) x.raw()[i] = 1e3f;
  const TensorF b = Encode(m, p, x, {12}).log_probs;
  EXPECT_EQ(std::memcmp(a.raw(), b.raw(), sizeof(float) * 6 * c.vocab_size), 0);
}

TEST(EncodeTest, DeterministicAndRejectsBadShapes) {
  const ModelConfig c = TinyConfig();
  const AsrModel m(c);
  const ParamStore p = InitModel(c, Rng(2));
  Rng rng(8);
  const TensorF x = RandomBatch(c, 2, 10, rng);
  EXPECT_TRUE(Encode(m, p, x, {10, 10}).log_probs.BitEqual(
      Encode(m, p, x, {10, 10}).log_probs));
  const TensorF wrong({2, 10, c.feature_dim + 1});
  EXPECT_THROW(Encode(m, p, wrong, {10, 10}), ShapeError);
  EXPECT_THROW(Encode(m, p, x, {10}), InvalidArgumentError);
  EXPECT_THROW(Encode(m, p, x, {1, 10}), InvalidArgumentError);
}

TEST(GroupNormTest, OneGroupIsLayerNorm) {
  Rng rng(9);
  const TensorD x = GaussianInit<double>({5, 12}, 3.0, rng);
  Graph g;
  const NodeId in = g.Input("x", x.shape(), false);
  const NodeId z = g.GroupStandardize(in, 1, 1e-5);
  const TensorD out = Forward<double>(g, {{"x", &x}})[z];
  for (int64_t r = 0; r < 5; ++r) {
    double mu = 0, var = 0;
    for (int64_t i = 0; i < 12; ++i) mu += x.at(r, i) / 12;
    for (int64_t i = 0; i < 12; ++i) var += (x.at(r, i) - mu) * (x.at(r, i) - mu) / 12;
    for (int64_t i = 0; i < 12; ++i) {
      EXPECT_NEAR(out.at(r, i), (x.at(r, i) - mu) / std::sqrt(var + 1e-5), 1e-6);
    }
  }
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  const ModelConfig c = TinyConfig(true);
  ParamStore p = InitModel(c, Rng(10));
  p.Get("head/w").trainable = false;
  p.set_lora_scale(0.25);
  const std::string dir = testing::ScratchDir("ckpt");
  const std::string path = dir + "/m.ckpt";
  SaveModel(path, c, p, {{"note", "x"}});
  const LoadedModel l = LoadModel(path);
  EXPECT_TRUE(l.params.BitEqual(p));
  EXPECT_EQ(nlohmann::json(l.config), nlohmann::json(c));
  EXPECT_EQ(l.metadata.at("note"), "x");
  std::filesystem::remove_all(dir);
}

TEST(CheckpointTest, TruncatedFileRejected) {
  const ModelConfig c = TinyConfig();
  const std::string dir = testing::ScratchDir("ckpt_trunc");
  const std::string path = dir + "/m.ckpt";
  SaveModel(path, c, InitModel(c, Rng(1)));
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
  EXPECT_THROW(LoadModel(path), IoError);
  EXPECT_THROW(LoadModel(dir + "/missing.ckpt"), IoError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace dpasr
