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

#ifndef DPASR_GRAPH_H_
#define DPASR_GRAPH_H_

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "dpasr/tensor.h"

namespace dpasr {

using NodeId = int32_t;

enum class OpKind {
  kInput,
  kConstant,
  kMatMul,
  kAdd,
  kMul,
  kScale,
  kBiasAdd,
  kMulCols,
  kSoftmax,
  kLogSoftmax,
  kRelu,
  kSwish,
  kGroupStandardize,
  kSum,
  kReshape,
  kTranspose,
  kSliceRows,
  kSliceCols,
  kConcatRows,
  kConcatCols,
  kGather,
  kCtcLoss,
};

std::string_view OpName(OpKind op);

struct Node {
  OpKind op = OpKind::kInput;
  std::vector<NodeId> inputs{};
  Shape shape{};
  // Builder scope at creation time, used in error messages.
  std::string scope{};
  // kInput only.
  std::string input_name{};
  bool requires_grad = false;
  // Op attributes. Meaning depends on `op`:
  //   kMatMul: ints = {transpose_a, transpose_b}
  //   kGroupStandardize: ints = {groups}, scalar = eps
  //   kScale: scalar = factor
  //   kSliceRows / kSliceCols: ints = {begin, end}
  //   kGather: ints = row ids
  //   kCtcLoss: ints = label ids
  std::vector<int64_t> ints{};
  double scalar = 0.0;
  std::shared_ptr<const TensorD> constant{};
};

// Static computation graph. Nodes are appended in topological order and
// every shape is checked when the node is created, so a Graph that was built
// without throwing is well-formed. A built Graph is never mutated by
// Forward/Backward and can be shared between threads.
//
// Only rank-2 operands except where noted; the single broadcast is the
// row-vector of BiasAdd/MulCols.
class Graph {
 public:
  NodeId Input(const std::string& name, const Shape& shape,
               bool requires_grad);
  NodeId Constant(TensorD value);

  // op(a) * op(b), with op = transpose when the flag is set.
  NodeId MatMul(NodeId a, NodeId b, bool transpose_a = false,
                bool transpose_b = false);
  // Elementwise, identical shapes.
  NodeId Add(NodeId a, NodeId b);
  NodeId Mul(NodeId a, NodeId b);
  NodeId Scale(NodeId a, double factor);
  // x [m,n] + b [n] per row.
  NodeId BiasAdd(NodeId x, NodeId b);
  // x [m,n] * g [n] per row.
  NodeId MulCols(NodeId x, NodeId g);
  // Along the last axis of a rank-2 tensor.
  NodeId Softmax(NodeId x);
  NodeId LogSoftmax(NodeId x);
  NodeId Relu(NodeId x);
  NodeId Swish(NodeId x);
  // Zero-mean, unit-variance within each of `groups` contiguous channel
  // groups of every row of x [m,C]. No statistics cross rows.
  NodeId GroupStandardize(NodeId x, int64_t groups, double eps);
  // Sum of all entries; rank-0 result.
  NodeId Sum(NodeId x);
  NodeId Reshape(NodeId x, const Shape& shape);
  NodeId Transpose(NodeId x);
  NodeId SliceRows(NodeId x, int64_t begin, int64_t end);
  NodeId SliceCols(NodeId x, int64_t begin, int64_t end);
  NodeId ConcatRows(const std::vector<NodeId>& parts);
  NodeId ConcatCols(const std::vector<NodeId>& parts);
  // Rows of table [V,d] selected by ids.
  NodeId Gather(NodeId table, const std::vector<int64_t>& ids);
  // CTC negative log-likelihood of labels given log_probs [T,V]; blank = 0.
  // Throws InfeasibleLabelsError if the labels cannot fit in T frames.
  NodeId CtcLoss(NodeId log_probs, const std::vector<int32_t>& labels);

  void MarkOutput(const std::string& name, NodeId id);

  // Prefix attached to subsequently created nodes, e.g. "layer0/attn".
  void SetScope(std::string scope) { scope_ = std::move(scope); }
  const std::string& scope() const { return scope_; }

  const Node& node(NodeId id) const { return nodes_.at(id); }
  const std::vector<Node>& nodes() const { return nodes_; }
  int32_t size() const { return static_cast<int32_t>(nodes_.size()); }
  const Shape& shape(NodeId id) const { return nodes_.at(id).shape; }
  const std::map<std::string, NodeId>& outputs() const { return outputs_; }
  const std::map<std::string, NodeId>& inputs() const { return inputs_; }

  // "node 12 (matmul in layer0/ffn)"
  std::string Describe(NodeId id) const;

 private:
  NodeId Append(Node node);
  void Check(NodeId id) const;
  [[noreturn]] void Fail(OpKind op, const std::string& msg) const;

  std::vector<Node> nodes_;
  std::map<std::string, NodeId> inputs_;
  std::map<std::string, NodeId> outputs_;
  std::string scope_;
};

}  // namespace dpasr

#endif  // DPASR_GRAPH_H_
