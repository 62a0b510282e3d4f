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

#ifndef DPASR_CHECKPOINT_H_
#define DPASR_CHECKPOINT_H_

#include <string>
#include <vector>

#include "dpasr/tensor.h"
#include "json.hpp"

namespace dpasr {

// On-disk layout:
//
//   bytes 0..7    magic "DPASRCK1"
//   bytes 8..15   header length H, uint64 little-endian
//   next H bytes  UTF-8 JSON header
//   remainder     tensor payloads, little-endian float32, back to back
//
// The header is {"metadata": {...}, "tensors": [{"name", "shape",
// "trainable", "kind", "dtype": "f32", "offset", "length"}, ...]} where
// offset/length are in bytes relative to the start of the payload section.
struct NamedTensor {
  std::string name;
  TensorF tensor;
  bool trainable = false;
  std::string kind;
};

struct CheckpointContents {
  std::vector<NamedTensor> tensors;
  nlohmann::json metadata;
};

void WriteCheckpoint(const std::string& path,
                     const std::vector<NamedTensor>& tensors,
                     const nlohmann::json& metadata);

// Throws IoError on a missing file, bad magic, malformed header or a payload
// that does not match the declared shapes.
CheckpointContents ReadCheckpoint(const std::string& path);

// Little-endian float32 helpers shared with the dataset blob format.
void AppendFloatsLE(std::span<const float> values, std::string* out);
void ReadFloatsLE(const char* bytes, size_t count, float* out);

}  // namespace dpasr

#endif  // DPASR_CHECKPOINT_H_
