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

#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "dpasr/ctc.h"
#include "dpasr/rng.h"
#include "dpasr/status.h"
#include "oracles.h"

namespace dpasr {
namespace {

TensorD RandomLogProbs(int64_t T, int64_t V, Rng& rng) {
  TensorD lp({T, V});
  for (int64_t t = 0; t < T; ++t) {
    double mx = -1e300;
    for (int64_t v = 0; v < V; ++v) {
      lp.at(t, v) = 2.0 * rng.Normal();
      mx = std::max(mx, lp.at(t, v));
    }
    double z = 0;
    for (int64_t v = 0; v < V; ++v) z += std::exp(lp.at(t, v) - mx);
    for (int64_t v = 0; v < V; ++v) lp.at(t, v) -= mx + std::log(z);
  }
  return lp;
}

LabelSeq RandomLabels(int64_t max_len, int64_t V, Rng& rng) {
  LabelSeq l(rng.UniformInt(max_len + 1));
  for (int32_t& x : l) x = 1 + static_cast<int32_t>(rng.UniformInt(V - 1));
  return l;
}

TEST(CtcTest, SingleFrameSingleLabel) {
  Rng rng(1);
  const TensorD lp = RandomLogProbs(1, 4, rng);
  const LabelSeq l = {2};
  EXPECT_NEAR(CtcLoss(lp, l), -lp.at(0, 2), 1e-12);
}

TEST(CtcTest, TwoFramesThreeAlignments) {
  Rng rng(2);
  const TensorD lp = RandomLogProbs(2, 3, rng);
  const int k = 1;
  auto p = [&](int t, int v) { return std::exp(lp.at(t, v)); };
  const double expected =
      -std::log(p(0, k) * p(1, k) + p(0, k) * p(1, 0) + p(0, 0) * p(1, k));
  const LabelSeq l = {k};
  EXPECT_NEAR(CtcLoss(lp, l), expected, 1e-10);
}

TEST(CtcTest, MatchesPathEnumeration) {
  Rng rng(3);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t T = 1 + rng.UniformInt(4);
    const int64_t V = 2 + rng.UniformInt(2);
    const TensorD lp = RandomLogProbs(T, V, rng);
    const LabelSeq l = RandomLabels(2, V, rng);
    if (CtcMinFrames(l) > T) {
      EXPECT_THROW(CtcLoss(lp, l), InfeasibleLabelsError);
      continue;
    }
    const double loss = CtcLoss(lp, l);
    EXPECT_NEAR(loss, oracle::CtcBruteForce(lp, l), 1e-6)
        << "T=" << T << " V=" << V << " |l|=" << l.size();
    EXPECT_GE(loss, -1e-12);
    EXPECT_LE(std::exp(-loss), 1.0 + 1e-12);
    ++checked;
  }
  EXPECT_GT(checked, 120);
}

TEST(CtcTest, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const int64_t T = 6 + rng.UniformInt(6);
    const int64_t V = 5;
    TensorD lp = RandomLogProbs(T, V, rng);
    LabelSeq l = {1, 3, 3, 2};
    TensorD grad({T, V});
    const double loss = CtcLossAndGrad(lp, l, &grad);
    EXPECT_NEAR(loss, CtcLoss(lp, l), 1e-12);
    // The loss is defined on arbitrary scores, not only normalized ones, so
    // every coordinate can be perturbed independently.
    const double h = 1e-4;
    for (int64_t i = 0; i < lp.size(); ++i) {
      const double x0 = lp.data()[i];
      auto at = [&](double dx) {
        lp.data()[i] = x0 + dx;
        return CtcLoss(lp, l);
      };
      const double numeric =
          (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
      lp.data()[i] = x0;
      EXPECT_NEAR(grad.data()[i], numeric, 1e-5) << "i=" << i;
    }
  }
}

TEST(CtcTest, LabelPermutationInvariance) {
  Rng rng(5);
  const int64_t V = 6;
  for (int trial = 0; trial < 20; ++trial) {
    const TensorD lp = RandomLogProbs(10, V, rng);
    const LabelSeq l = RandomLabels(4, V, rng);
    if (CtcMinFrames(l) > 10) continue;
    std::vector<int32_t> perm(V);
    std::iota(perm.begin(), perm.end(), 0);
    for (int64_t i = V - 1; i > 1; --i) {
      std::swap(perm[i], perm[1 + rng.UniformInt(i)]);
    }
    TensorD plp({10, V});
    for (int64_t t = 0; t < 10; ++t) {
      for (int64_t v = 0; v < V; ++v) plp.at(t, perm[v]) = lp.at(t, v);
    }
    LabelSeq pl;
    for (int32_t x : l) pl.push_back(perm[x]);
    EXPECT_NEAR(CtcLoss(lp, l), CtcLoss(plp, pl), 1e-10);
  }
}

TEST(CtcTest, LongInputStaysFinite) {
  Rng rng(6);
  const TensorD lp = RandomLogProbs(2000, 28, rng);
  LabelSeq l;
  for (int i = 0; i < 300; ++i) l.push_back(1 + i % 27);
  const double loss = CtcLoss(lp, l);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_GT(loss, 0.0);
}

TEST(CtcTest, InfeasibleIsAnErrorNotInfinity) {
  TensorD lp({3, 4});
  const LabelSeq l = {2, 2, 3};
  EXPECT_EQ(CtcMinFrames(l), 4);
  EXPECT_THROW(CtcLoss(lp, l), InfeasibleLabelsError);
}

TensorD OneHotLogProbs(const std::vector<int32_t>& argmax, int64_t V) {
  TensorD lp({static_cast<int64_t>(argmax.size()), V});
  for (size_t t = 0; t < argmax.size(); ++t) {
    for (int64_t v = 0; v < V; ++v) lp.at(t, v) = v == argmax[t] ? -0.1 : -5.0;
  }
  return lp;
}

TEST(GreedyDecodeTest, CollapseRule) {
  const int a = 3, b = 5;
  EXPECT_EQ(GreedyDecode(OneHotLogProbs({a, a, 0, a, b}, 8)), (LabelSeq{a, a, b}));
  EXPECT_TRUE(GreedyDecode(OneHotLogProbs({0, 0, 0}, 8)).empty());
}

TEST(GreedyDecodeTest, FuzzAgainstHandCollapse) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int32_t> path(1 + rng.UniformInt(15));
    for (int32_t& p : path) p = static_cast<int32_t>(rng.UniformInt(4));
    LabelSeq expected;
    for (size_t t = 0; t < path.size(); ++t) {
      if (path[t] == 0) continue;
      if (t > 0 && path[t - 1] == path[t]) continue;
      expected.push_back(path[t]);
    }
    EXPECT_EQ(GreedyDecode(OneHotLogProbs(path, 4)), expected);
    EXPECT_EQ(CollapsePath(path), expected);
  }
}

TEST(WerTest, IdenticalIsZero) {
  const WerReport r = ComputeWer({"a", "b"}, {"a", "b"});
  EXPECT_EQ(r.wer, 0.0);
  EXPECT_EQ(r.errors(), 0);
}

TEST(WerTest, OneSubstitution) {
  const WerReport r = ComputeWer({"a", "b", "c"}, {"a", "x", "c"});
  EXPECT_DOUBLE_EQ(r.wer, 1.0 / 3.0);
  EXPECT_EQ(r.substitutions, 1);
  EXPECT_EQ(r.insertions + r.deletions, 0);
}

TEST(WerTest, EmptyReferenceRejected) {
  EXPECT_THROW(ComputeWer({}, {"a"}), InvalidArgumentError);
  const WerReport r = ComputeWer({"a", "b"}, {});
  EXPECT_EQ(r.deletions, 2);
  EXPECT_EQ(r.wer, 1.0);
}

std::vector<std::string> RandomWords(Rng& rng, int64_t max_len) {
  static const char* kWords[] = {"a", "b", "c", "d"};
  std::vector<std::string> w(rng.UniformInt(max_len + 1));
  for (auto& s : w) s = kWords[rng.UniformInt(4)];
  return w;
}

TEST(WerTest, FuzzAgainstExhaustiveAlignment) {
  Rng rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::string> ref;
    while (ref.empty()) ref = RandomWords(rng, 6);
    const std::vector<std::string> hyp = RandomWords(rng, 6);
    const WerReport r = ComputeWer(ref, hyp);
    const oracle::EditCounts e = oracle::WordEdits(ref, hyp);
    ASSERT_EQ(r.errors(), e.s + e.i + e.d);
    EXPECT_EQ(r.substitutions, e.s);
    EXPECT_EQ(r.insertions, e.i);
    EXPECT_EQ(r.deletions, e.d);
    EXPECT_DOUBLE_EQ(r.wer, static_cast<double>(r.errors()) / ref.size());
  }
}

TEST(WerTest, SwappingSequencesSwapsInsertionsAndDeletions) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> x, y;
    while (x.empty()) x = RandomWords(rng, 6);
    while (y.empty()) y = RandomWords(rng, 6);
    const WerReport xy = ComputeWer(x, y);
    const WerReport yx = ComputeWer(y, x);
    EXPECT_EQ(xy.errors(), yx.errors());
    EXPECT_EQ(xy.substitutions, yx.substitutions);
    EXPECT_EQ(xy.insertions, yx.deletions);
    EXPECT_EQ(xy.deletions, yx.insertions);
    EXPECT_EQ(ComputeWer(x, x).wer, 0.0);
  }
}

TEST(WerTest, AccumulateIsCorpusLevel) {
  const WerReport a = ComputeWer({"a", "b", "c"}, {"a", "x", "c"});
  const WerReport b = ComputeWer({"d"}, {"d", "e"});
  const WerReport s = Accumulate(a, b);
  EXPECT_EQ(s.reference_words, 4);
  EXPECT_EQ(s.errors(), 2);
  EXPECT_DOUBLE_EQ(s.wer, 0.5);
}

TEST(TokenizerTest, RoundTripAndReservedIds) {
  EXPECT_EQ(CharTokenizer::Encode("ab z"), (LabelSeq{2, 3, 1, 27}));
  EXPECT_EQ(CharTokenizer::Encode("AB"), (LabelSeq{2, 3}));
  EXPECT_EQ(CharTokenizer::Decode(CharTokenizer::Encode("hello world")), "hello world");
  EXPECT_THROW(CharTokenizer::Encode("a1"), InvalidArgumentError);
  const auto syms = CharTokenizer::Symbols();
  ASSERT_EQ(syms.size(), static_cast<size_t>(CharTokenizer::kVocabSize));
  EXPECT_EQ(syms[kBlank], "<b>");
  EXPECT_EQ(syms[CharTokenizer::kSpace], " ");
}

TEST(TokenizerTest, SplitWordsIgnoresExtraWhitespace) {
  EXPECT_EQ(SplitWords("  ab  cd e "), (std::vector<std::string>{"ab", "cd", "e"}));
  EXPECT_TRUE(SplitWords("   ").empty());
}

}  // namespace
}  // namespace dpasr
