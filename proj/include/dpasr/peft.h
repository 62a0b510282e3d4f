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

#ifndef DPASR_PEFT_H_
#define DPASR_PEFT_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dpasr/model.h"
#include "dpasr/rng.h"
#include "json.hpp"

namespace dpasr {

enum class PeftMethod { kFull, kBitFit, kLoRA, kRP, kAdapter };
enum class LoraPlacement { kFFN, kAttention };

std::string PeftMethodName(PeftMethod m);
PeftMethod ParsePeftMethod(const std::string& name);
std::string PlacementName(LoraPlacement p);
LoraPlacement ParsePlacement(const std::string& name);

struct PeftConfig {
  PeftMethod method = PeftMethod::kFull;
  int64_t rank = 8;
  LoraPlacement placement = LoraPlacement::kFFN;
  // Std-dev of the Gaussian used for the LoRA/RP down-projection. -1
  // means "method default": 0.4 for LoRA, 0.3 for RP.
  double init_sigma = -1.0;
  double lora_scale = 1.0;
  int64_t bottleneck = 16;
  bool freeze_norm_bias = true;
  bool decoder_head_trainable = true;
  // LoRA/RP at FFN placement: adapt both FFN matrices, or only the first.
  bool lora_ffn_both = true;

  double EffectiveInitSigma() const;
  void Validate() const;
};

void to_json(nlohmann::json& j, const PeftConfig& c);
void from_json(const nlohmann::json& j, PeftConfig& c);

struct PeftReport {
  int64_t added_params = 0;
  int64_t added_trainable_params = 0;
  int64_t trainable_params = 0;
  int64_t total_params = 0;
  double trainable_fraction = 0.0;
};

void to_json(nlohmann::json& j, const PeftReport& r);

// Installs the PEFT method on a freshly loaded base model and sets the
// trainable mask.
//
//   Full     everything trainable
//   BitFit   kind == bias (plus norm biases unless freeze_norm_bias)
//   LoRA     per target linear: "<t>/lora_a" [r, d_in] ~ N(0, sigma^2) and
//            "<t>/lora_b" [d_out, r] = 0, both trainable; base frozen
//   RP       LoRA with lora_a frozen at its random draw
//   Adapter  per layer, after the FFN and before the residual add:
//            h + up(swish(down(h))) with up zero-initialised; base frozen
//
// Targets are ffn/w1 and ffn/w2 for FFN placement, attn/q and attn/v for
// attention placement. In every PEFT mode the CTC head stays trainable when
// decoder_head_trainable is set. Because lora_b and the adapter up-projection
// start at zero, the adapted model computes exactly the base model's outputs.
//
// Throws InvalidArgumentError for a rank or bottleneck larger than the layer
// it attaches to, or if PEFT parameters are already installed.
std::pair<ParamStore, PeftReport> ApplyPeft(ParamStore params,
                                            const ModelConfig& model,
                                            const PeftConfig& cfg,
                                            const Rng& rng);

// Exactly the parameters an optimizer step may update, in store order.
std::vector<std::pair<std::string, const TensorF*>> TrainableParameters(
    const ParamStore& params);

// Target linear prefixes ("layer0/ffn/w1", ...) for a placement.
std::vector<std::string> LoraTargets(const ModelConfig& model,
                                     LoraPlacement placement,
                                     bool ffn_both = true);

// y = x W + scale * (x A^T) B^T for row-vector inputs x [n, d_in], with
// W [d_in, d_out], A [r, d_in], B [d_out, r]. Equivalent to the column form
// W'x + scale * B A x. Throws ShapeError on mismatched shapes.
template <typename T>
Tensor<T> LoraForward(const Tensor<T>& w, const Tensor<T>& a,
                      const Tensor<T>& b, double scale, const Tensor<T>& x);

}  // namespace dpasr

#endif  // DPASR_PEFT_H_
