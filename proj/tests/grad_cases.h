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

// Small graphs exercising every op kind, plus a whole 2-layer model, for
// finite-difference checks in double precision.

#ifndef DPASR_TESTS_GRAD_CASES_H_
#define DPASR_TESTS_GRAD_CASES_H_

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dpasr/graph.h"
#include "dpasr/tensor.h"

namespace dpasr::testing {

struct GradCase {
  std::string name;
  std::shared_ptr<Graph> graph;
  NodeId loss = -1;
  std::map<std::string, TensorD> inputs;
};

// One case per op kind (matmul in all four transpose modes).
std::vector<GradCase> OpGradCases(uint64_t seed);

// 2 layers, conv module on, LoRA on attention, adapters after the FFN, all
// parameters trainable and no parameter left at an exact zero.
GradCase ModelGradCase(uint64_t seed);

}  // namespace dpasr::testing

#endif  // DPASR_TESTS_GRAD_CASES_H_
