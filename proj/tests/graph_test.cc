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

#include <set>

#include <gtest/gtest.h>

#include "dpasr/executor.h"
#include "dpasr/graph.h"
#include "dpasr/status.h"
#include "grad_cases.h"
#include "oracles.h"

namespace dpasr {
namespace {

using ::dpasr::testing::GradCase;

TEST(AutodiffTest, EveryOpMatchesFiniteDifferences) {
  std::set<std::string> names;
  for (const GradCase& c : testing::OpGradCases(17)) {
    const oracle::GradCheck r = oracle::CheckGradients(*c.graph, c.loss, c.inputs);
    EXPECT_LT(r.max_rel_err, 1e-6) << c.name << ": " << r.worst;
    EXPECT_GT(r.checked, 0) << c.name;
    names.insert(c.name);
  }
  EXPECT_EQ(names.size(), 23u);
}

TEST(AutodiffTest, TinyModelMatchesFiniteDifferences) {
  const GradCase c = testing::ModelGradCase(5);
  // Per-frame group norm over 4 channels is sharply curved, so h=1e-3 leaves
  // stencil error near 1e-3. Tiny gradients are judged on absolute error.
  const oracle::GradCheck r =
      oracle::CheckGradients(*c.graph, c.loss, c.inputs, 1e-4, 1e-4);
  EXPECT_LT(r.max_rel_err, 1e-6) << r.worst;
  EXPECT_GT(r.checked, 5000);
}

TEST(AutodiffTest, TinyModelMatchesRiddersExtrapolation) {
  // Extrapolated differences still carry ~1e-11 of cancellation noise on a
  // loss near 20, so gradients below 1e-4 are judged on absolute error.
  for (uint64_t seed : {5, 6, 7}) {
    const GradCase c = testing::ModelGradCase(seed);
    const oracle::GradCheck r =
        oracle::CheckGradientsRidders(*c.graph, c.loss, c.inputs, 1e-3, 1e-4);
    EXPECT_LT(r.max_rel_err, 1e-6) << seed << ": " << r.worst;
  }
}

TEST(AutodiffTest, CoversEveryOpKind) {
  std::set<OpKind> seen;
  for (const GradCase& c : testing::OpGradCases(1)) {
    for (const Node& n : c.graph->nodes()) seen.insert(n.op);
  }
  for (int k = 0; k <= static_cast<int>(OpKind::kCtcLoss); ++k) {
    EXPECT_TRUE(seen.count(static_cast<OpKind>(k)))
        << "no case exercises " << OpName(static_cast<OpKind>(k));
  }
}

TEST(GraphTest, ShapeErrorsAreRaisedAtBuildTimeWithLocation) {
  Graph g;
  g.SetScope("layer3/ffn");
  const NodeId a = g.Input("a", {2, 3}, false);
  const NodeId b = g.Input("b", {4, 5}, false);
  try {
    g.MatMul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos) << msg;
    EXPECT_NE(msg.find("layer3/ffn"), std::string::npos) << msg;
  }
  EXPECT_THROW(g.Add(a, b), ShapeError);
  EXPECT_THROW(g.SliceRows(a, 1, 5), ShapeError);
  EXPECT_THROW(g.GroupStandardize(a, 2, 1e-5), ShapeError);
  EXPECT_THROW(g.Gather(a, {2}), ShapeError);
  EXPECT_THROW(g.Input("a", {1}, false), ShapeError);
}

TEST(GraphTest, InfeasibleCtcLabelsRejected) {
  Graph g;
  const NodeId lp = g.Input("lp", {2, 4}, false);
  EXPECT_THROW(g.CtcLoss(lp, {1, 2, 3}), InfeasibleLabelsError);
  // Repeats need a blank in between: 1 1 needs 3 frames.
  EXPECT_THROW(g.CtcLoss(lp, {1, 1}), InfeasibleLabelsError);
  EXPECT_NO_THROW(g.CtcLoss(lp, {1, 2}));
}

TEST(ExecutorTest, UnboundAndMisshapenInputs) {
  Graph g;
  const NodeId x = g.Input("x", {2, 2}, true);
  g.Sum(x);
  EXPECT_THROW(Forward<float>(g, {}), InvalidArgumentError);
  TensorF wrong({3, 2});
  EXPECT_THROW(Forward<float>(g, {{"x", &wrong}}), ShapeError);
}

TEST(ExecutorTest, BackwardRequiresScalarLoss) {
  Graph g;
  const NodeId x = g.Input("x", {2, 2}, true);
  const NodeId y = g.Relu(x);
  TensorF v({2, 2});
  const Values<float> vals = Forward<float>(g, {{"x", &v}});
  EXPECT_THROW(Backward(g, vals, y), InvalidArgumentError);
}

TEST(ExecutorTest, GradientsOnlyForRequiresGradInputs) {
  Graph g;
  const NodeId x = g.Input("x", {2, 2}, true);
  const NodeId c = g.Input("c", {2, 2}, false);
  const NodeId unused = g.Input("unused", {3}, true);
  (void)unused;
  const NodeId loss = g.Sum(g.Mul(x, c));
  TensorF xv = TensorF::FromList({2, 2}, {1, 2, 3, 4});
  TensorF cv = TensorF::FromList({2, 2}, {5, 6, 7, 8});
  TensorF uv({3});
  const Values<float> vals =
      Forward<float>(g, {{"x", &xv}, {"c", &cv}, {"unused", &uv}});
  const TensorMap<float> grads = Backward(g, vals, loss);
  EXPECT_EQ(grads.count("c"), 0u);
  ASSERT_EQ(grads.count("x"), 1u);
  EXPECT_TRUE(grads.at("x").BitEqual(cv));
  ASSERT_EQ(grads.count("unused"), 1u);
  EXPECT_EQ(SquaredNorm(grads.at("unused")), 0.0);
}

TEST(ExecutorTest, ForwardStaysFiniteOnLargeLogits) {
  Graph g;
  const NodeId x = g.Input("x", {2, 3}, false);
  const NodeId sm = g.Softmax(x);
  const NodeId lsm = g.LogSoftmax(x);
  TensorF v = TensorF::FromList({2, 3}, {1e30f, -1e30f, 0, 80, 90, 100});
  const Values<float> vals = Forward<float>(g, {{"x", &v}});
  EXPECT_TRUE(vals[sm].AllFinite());
  EXPECT_TRUE(vals[lsm].AllFinite());
}

}  // namespace
}  // namespace dpasr
