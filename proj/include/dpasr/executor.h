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

#ifndef DPASR_EXECUTOR_H_
#define DPASR_EXECUTOR_H_

#include <map>
#include <string>
#include <vector>

#include "dpasr/graph.h"
#include "dpasr/tensor.h"

namespace dpasr {

// Name -> tensor binding for graph inputs. The tensors are borrowed and
// must outlive any Values computed from them.
template <typename T>
using Feeds = std::map<std::string, const Tensor<T>*>;

template <typename T>
using TensorMap = std::map<std::string, Tensor<T>>;

// Per-node results of one forward evaluation.
template <typename T>
class Values {
 public:
  const Tensor<T>& operator[](NodeId id) const { return *view_[id]; }
  int32_t size() const { return static_cast<int32_t>(view_.size()); }

 private:
  template <typename U>
  friend Values<U> Forward(const Graph&, const Feeds<U>&);

  std::vector<Tensor<T>> owned_;
  std::vector<const Tensor<T>*> view_;
};

// Evaluates every node. Each input must be bound with exactly its declared
// shape; a mismatch throws ShapeError naming the node.
template <typename T>
Values<T> Forward(const Graph& graph, const Feeds<T>& feeds);

// Copies of the tensors registered with Graph::MarkOutput.
template <typename T>
TensorMap<T> Outputs(const Graph& graph, const Values<T>& values);

// Reverse-mode gradients of a scalar node with respect to every input that
// was declared with requires_grad. Inputs without requires_grad get no entry.
// Throws InvalidArgumentError if `loss` is not scalar.
template <typename T>
TensorMap<T> Backward(const Graph& graph, const Values<T>& values,
                      NodeId loss);

}  // namespace dpasr

#endif  // DPASR_EXECUTOR_H_
