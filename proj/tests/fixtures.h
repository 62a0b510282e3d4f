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

#ifndef DPASR_TESTS_FIXTURES_H_
#define DPASR_TESTS_FIXTURES_H_

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "dpasr/ctc.h"
#include "dpasr/model.h"
#include "dpasr/rng.h"

namespace dpasr::testing {

inline ModelConfig TinyConfig(bool conv = false) {
  ModelConfig c;
  c.num_layers = 2;
  c.model_dim = 16;
  c.ffn_dim = 32;
  c.num_heads = 2;
  c.groupnorm_groups = 4;
  c.conv_module_enabled = conv;
  c.feature_dim = 8;
  c.frame_stack = 2;
  return c;
}

// Random features and a feasible label sequence without adjacent repeats.
inline Example RandomExample(const ModelConfig& c, int64_t frames,
                             int64_t label_len, Rng& rng) {
  Example ex;
  ex.features = GaussianInit<float>({frames, c.feature_dim}, 1.0, rng);
  int32_t prev = -1;
  for (int64_t i = 0; i < label_len; ++i) {
    int32_t l;
    do {
      l = 1 + static_cast<int32_t>(rng.UniformInt(c.vocab_size - 1));
    } while (l == prev);
    ex.labels.push_back(l);
    prev = l;
  }
  return ex;
}

inline std::vector<Example> RandomExamples(const ModelConfig& c, int n,
                                           uint64_t seed) {
  Rng rng(seed);
  std::vector<Example> out;
  for (int i = 0; i < n; ++i) {
    const int64_t frames = 10 + static_cast<int64_t>(rng.UniformInt(11));
    const int64_t len = 1 + static_cast<int64_t>(rng.UniformInt(4));
    out.push_back(RandomExample(c, frames, len, rng));
  }
  return out;
}

inline std::vector<const Example*> Pointers(const std::vector<Example>& v) {
  std::vector<const Example*> out;
  for (const Example& e : v) out.push_back(&e);
  return out;
}

// Fresh per-process scratch directory.
inline std::string ScratchDir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() /
                 ("dpasr_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace dpasr::testing

#endif  // DPASR_TESTS_FIXTURES_H_
