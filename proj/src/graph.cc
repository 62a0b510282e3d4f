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

#include "dpasr/graph.h"

#include "dpasr/ctc.h"
#include "dpasr/status.h"

namespace dpasr {

std::string_view OpName(OpKind op) {
  switch (op) {
    case OpKind::kInput: return "input";
    case OpKind::kConstant: return "constant";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kBiasAdd: return "bias_add";
    case OpKind::kMulCols: return "mul_cols";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLogSoftmax: return "log_softmax";
    case OpKind::kRelu: return "relu";
    case OpKind::kSwish: return "swish";
    case OpKind::kGroupStandardize: return "group_standardize";
    case OpKind::kSum: return "sum";
    case OpKind::kReshape: return "reshape";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kSliceRows: return "slice_rows";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kConcatRows: return "concat_rows";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kGather: return "gather";
    case OpKind::kCtcLoss: return "ctc_loss";
  }
  return "unknown";
}

std::string Graph::Describe(NodeId id) const {
  const Node& n = nodes_.at(id);
  std::string s = "node " + std::to_string(id) + " (" +
                  std::string(OpName(n.op));
  if (n.op == OpKind::kInput) s += " '" + n.input_name + "'";
  if (!n.scope.empty()) s += " in " + n.scope;
  return s + ")";
}

void Graph::Fail(OpKind op, const std::string& msg) const {
  std::string where = "node " + std::to_string(nodes_.size()) + " (" +
                      std::string(OpName(op));
  if (!scope_.empty()) where += " in " + scope_;
  throw ShapeError(where + "): " + msg);
}

void Graph::Check(NodeId id) const {
  if (id < 0 || id >= size()) {
    throw InvalidArgumentError("graph: unknown node id " + std::to_string(id));
  }
}

NodeId Graph::Append(Node node) {
  for (NodeId in : node.inputs) Check(in);
  node.scope = scope_;
  nodes_.push_back(std::move(node));
  return size() - 1;
}

NodeId Graph::Input(const std::string& name, const Shape& shape,
                    bool requires_grad) {
  if (inputs_.count(name)) Fail(OpKind::kInput, "duplicate input '" + name + "'");
  NumElements(shape);
  Node n{.op = OpKind::kInput, .shape = shape};
  n.input_name = name;
  n.requires_grad = requires_grad;
  NodeId id = Append(std::move(n));
  inputs_[name] = id;
  return id;
}

NodeId Graph::Constant(TensorD value) {
  Node n{.op = OpKind::kConstant, .shape = value.shape()};
  n.constant = std::make_shared<const TensorD>(std::move(value));
  return Append(std::move(n));
}

namespace {

void RequireRank(const Shape& s, int64_t rank, const char* what,
                 std::string* err) {
  if (static_cast<int64_t>(s.size()) != rank && err->empty()) {
    *err = std::string(what) + " must have rank " + std::to_string(rank) +
           ", got " + ShapeString(s);
  }
}

}  // namespace

NodeId Graph::MatMul(NodeId a, NodeId b, bool transpose_a, bool transpose_b) {
  Check(a);
  Check(b);
  const Shape& sa = shape(a);
  const Shape& sb = shape(b);
  std::string err;
  RequireRank(sa, 2, "lhs", &err);
  RequireRank(sb, 2, "rhs", &err);
  if (!err.empty()) Fail(OpKind::kMatMul, err);
  const int64_t m = transpose_a ? sa[1] : sa[0];
  const int64_t ka = transpose_a ? sa[0] : sa[1];
  const int64_t kb = transpose_b ? sb[1] : sb[0];
  const int64_t n = transpose_b ? sb[0] : sb[1];
  if (ka != kb) {
    Fail(OpKind::kMatMul, "inner dimensions differ: " + ShapeString(sa) +
                              (transpose_a ? "^T" : "") + " x " +
                              ShapeString(sb) + (transpose_b ? "^T" : ""));
  }
  Node node{.op = OpKind::kMatMul, .inputs = {a, b}, .shape = {m, n}};
  node.ints = {transpose_a ? 1 : 0, transpose_b ? 1 : 0};
  return Append(std::move(node));
}

NodeId Graph::Add(NodeId a, NodeId b) {
  Check(a);
  Check(b);
  if (shape(a) != shape(b)) {
    Fail(OpKind::kAdd, "shapes differ: " + ShapeString(shape(a)) + " vs " +
                           ShapeString(shape(b)));
  }
  return Append(Node{.op = OpKind::kAdd, .inputs = {a, b}, .shape = shape(a)});
}

NodeId Graph::Mul(NodeId a, NodeId b) {
  Check(a);
  Check(b);
  if (shape(a) != shape(b)) {
    Fail(OpKind::kMul, "shapes differ: " + ShapeString(shape(a)) + " vs " +
                           ShapeString(shape(b)));
  }
  return Append(Node{.op = OpKind::kMul, .inputs = {a, b}, .shape = shape(a)});
}

NodeId Graph::Scale(NodeId a, double factor) {
  Check(a);
  Node n{.op = OpKind::kScale, .inputs = {a}, .shape = shape(a)};
  n.scalar = factor;
  return Append(std::move(n));
}

NodeId Graph::BiasAdd(NodeId x, NodeId b) {
  Check(x);
  Check(b);
  const Shape& sx = shape(x);
  const Shape& sb = shape(b);
  if (sx.size() != 2 || sb.size() != 1 || sb[0] != sx[1]) {
    Fail(OpKind::kBiasAdd, "expected [m,n] + [n], got " + ShapeString(sx) +
                               " + " + ShapeString(sb));
  }
  return Append(Node{.op = OpKind::kBiasAdd, .inputs = {x, b}, .shape = sx});
}

NodeId Graph::MulCols(NodeId x, NodeId g) {
  Check(x);
  Check(g);
  const Shape& sx = shape(x);
  const Shape& sg = shape(g);
  if (sx.size() != 2 || sg.size() != 1 || sg[0] != sx[1]) {
    Fail(OpKind::kMulCols, "expected [m,n] * [n], got " + ShapeString(sx) +
                               " * " + ShapeString(sg));
  }
  return Append(Node{.op = OpKind::kMulCols, .inputs = {x, g}, .shape = sx});
}

NodeId Graph::Softmax(NodeId x) {
  Check(x);
  if (shape(x).size() != 2) Fail(OpKind::kSoftmax, "rank-2 input required");
  return Append(Node{.op = OpKind::kSoftmax, .inputs = {x}, .shape = shape(x)});
}

NodeId Graph::LogSoftmax(NodeId x) {
  Check(x);
  if (shape(x).size() != 2) Fail(OpKind::kLogSoftmax, "rank-2 input required");
  return Append(
      Node{.op = OpKind::kLogSoftmax, .inputs = {x}, .shape = shape(x)});
}

NodeId Graph::Relu(NodeId x) {
  Check(x);
  return Append(Node{.op = OpKind::kRelu, .inputs = {x}, .shape = shape(x)});
}

NodeId Graph::Swish(NodeId x) {
  Check(x);
  return Append(Node{.op = OpKind::kSwish, .inputs = {x}, .shape = shape(x)});
}

NodeId Graph::GroupStandardize(NodeId x, int64_t groups, double eps) {
  Check(x);
  const Shape& sx = shape(x);
  if (sx.size() != 2) Fail(OpKind::kGroupStandardize, "rank-2 input required");
  if (groups < 1 || sx[1] % groups != 0) {
    Fail(OpKind::kGroupStandardize,
         std::to_string(sx[1]) + " channels not divisible into " +
             std::to_string(groups) + " groups");
  }
  if (!(eps >= 0.0)) Fail(OpKind::kGroupStandardize, "eps must be >= 0");
  Node n{.op = OpKind::kGroupStandardize, .inputs = {x}, .shape = sx};
  n.ints = {groups};
  n.scalar = eps;
  return Append(std::move(n));
}

NodeId Graph::Sum(NodeId x) {
  Check(x);
  return Append(Node{.op = OpKind::kSum, .inputs = {x}, .shape = {}});
}

NodeId Graph::Reshape(NodeId x, const Shape& new_shape) {
  Check(x);
  if (NumElements(new_shape) != NumElements(shape(x))) {
    Fail(OpKind::kReshape, "cannot reshape " + ShapeString(shape(x)) + " to " +
                               ShapeString(new_shape));
  }
  return Append(
      Node{.op = OpKind::kReshape, .inputs = {x}, .shape = new_shape});
}

NodeId Graph::Transpose(NodeId x) {
  Check(x);
  const Shape& sx = shape(x);
  if (sx.size() != 2) Fail(OpKind::kTranspose, "rank-2 input required");
  return Append(
      Node{.op = OpKind::kTranspose, .inputs = {x}, .shape = {sx[1], sx[0]}});
}

NodeId Graph::SliceRows(NodeId x, int64_t begin, int64_t end) {
  Check(x);
  const Shape& sx = shape(x);
  if (sx.size() != 2) Fail(OpKind::kSliceRows, "rank-2 input required");
  if (begin < 0 || end > sx[0] || begin >= end) {
    Fail(OpKind::kSliceRows, "rows [" + std::to_string(begin) + "," +
                                 std::to_string(end) + ") out of range for " +
                                 ShapeString(sx));
  }
  Node n{.op = OpKind::kSliceRows, .inputs = {x}, .shape = {end - begin, sx[1]}};
  n.ints = {begin, end};
  return Append(std::move(n));
}

NodeId Graph::SliceCols(NodeId x, int64_t begin, int64_t end) {
  Check(x);
  const Shape& sx = shape(x);
  if (sx.size() != 2) Fail(OpKind::kSliceCols, "rank-2 input required");
  if (begin < 0 || end > sx[1] || begin >= end) {
    Fail(OpKind::kSliceCols, "cols [" + std::to_string(begin) + "," +
                                 std::to_string(end) + ") out of range for " +
                                 ShapeString(sx));
  }
  Node n{.op = OpKind::kSliceCols, .inputs = {x}, .shape = {sx[0], end - begin}};
  n.ints = {begin, end};
  return Append(std::move(n));
}

NodeId Graph::ConcatRows(const std::vector<NodeId>& parts) {
  if (parts.empty()) Fail(OpKind::kConcatRows, "no inputs");
  int64_t rows = 0;
  const int64_t cols = shape(parts.front()).at(1);
  for (NodeId p : parts) {
    Check(p);
    const Shape& s = shape(p);
    if (s.size() != 2 || s[1] != cols) {
      Fail(OpKind::kConcatRows, "column counts differ: " + ShapeString(s));
    }
    rows += s[0];
  }
  return Append(
      Node{.op = OpKind::kConcatRows, .inputs = parts, .shape = {rows, cols}});
}

NodeId Graph::ConcatCols(const std::vector<NodeId>& parts) {
  if (parts.empty()) Fail(OpKind::kConcatCols, "no inputs");
  int64_t cols = 0;
  const int64_t rows = shape(parts.front()).at(0);
  for (NodeId p : parts) {
    Check(p);
    const Shape& s = shape(p);
    if (s.size() != 2 || s[0] != rows) {
      Fail(OpKind::kConcatCols, "row counts differ: " + ShapeString(s));
    }
    cols += s[1];
  }
  return Append(
      Node{.op = OpKind::kConcatCols, .inputs = parts, .shape = {rows, cols}});
}

NodeId Graph::Gather(NodeId table, const std::vector<int64_t>& ids) {
  Check(table);
  const Shape& st = shape(table);
  if (st.size() != 2) Fail(OpKind::kGather, "rank-2 table required");
  for (int64_t id : ids) {
    if (id < 0 || id >= st[0]) {
      Fail(OpKind::kGather, "row id " + std::to_string(id) +
                                " out of range for " + ShapeString(st));
    }
  }
  Node n{.op = OpKind::kGather,
         .inputs = {table},
         .shape = {static_cast<int64_t>(ids.size()), st[1]}};
  n.ints = ids;
  return Append(std::move(n));
}

NodeId Graph::CtcLoss(NodeId log_probs, const std::vector<int32_t>& labels) {
  Check(log_probs);
  const Shape& s = shape(log_probs);
  if (s.size() != 2) Fail(OpKind::kCtcLoss, "rank-2 log-probs required");
  for (int32_t l : labels) {
    if (l <= 0 || l >= s[1]) {
      Fail(OpKind::kCtcLoss, "label " + std::to_string(l) +
                                 " outside [1, " + std::to_string(s[1]) + ")");
    }
  }
  const int64_t needed = CtcMinFrames(labels);
  if (needed > s[0]) {
    throw InfeasibleLabelsError(
        "ctc: " + std::to_string(labels.size()) + " labels need " +
        std::to_string(needed) + " frames, only " + std::to_string(s[0]) +
        " available");
  }
  Node n{.op = OpKind::kCtcLoss, .inputs = {log_probs}, .shape = {}};
  n.ints.assign(labels.begin(), labels.end());
  return Append(std::move(n));
}

void Graph::MarkOutput(const std::string& name, NodeId id) {
  Check(id);
  outputs_[name] = id;
}

}  // namespace dpasr
