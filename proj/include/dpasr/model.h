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

#ifndef DPASR_MODEL_H_
#define DPASR_MODEL_H_

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "dpasr/ctc.h"
#include "dpasr/executor.h"
#include "dpasr/graph.h"
#include "dpasr/rng.h"
#include "dpasr/tensor.h"
#include "json.hpp"

namespace dpasr {

// Conformer-lite encoder with a linear CTC head.
//
// Per layer:  x += Attention(GroupNorm(x))
//             x += Conv(GroupNorm(x))          (conv_module_enabled only)
//             x += FFN(GroupNorm(x))           FFN = W2 swish(W1 x + b1) + b2
// Input: stack frame_stack consecutive frames, project to model_dim, add
// sinusoidal positions. Output: GroupNorm, linear head, log-softmax.
//
// GroupNorm here normalizes each frame over the channels of each group, so
// nothing is shared across frames or across examples.
//
// Parameter count with d = model_dim, f = ffn_dim, F = feature_dim,
// s = frame_stack, V = vocab_size, L = num_layers:
//
//   (F*s + 1)*d                       subsampling projection
//   + L * (4d + 4(d^2 + d) + 2df + f + d)   norms, attention, FFN
//   + L * (2d + 2(d^2 + d) + 4d)      conv module, when enabled
//   + 2d                              final norm
//   + (d + 1)*V                       CTC head
struct ModelConfig {
  int64_t num_layers = 4;
  int64_t model_dim = 64;
  int64_t ffn_dim = 256;
  int64_t num_heads = 4;
  int64_t groupnorm_groups = 8;
  bool conv_module_enabled = false;
  int64_t conv_kernel = 3;
  int64_t feature_dim = 16;
  int64_t frame_stack = 2;
  int64_t vocab_size = CharTokenizer::kVocabSize;

  // Throws InvalidArgumentError naming the violated constraint.
  void Validate() const;
  int64_t ExpectedParamCount() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

enum class ParamKind { kWeight, kBias, kNormScale, kNormBias, kPeft };

std::string ParamKindName(ParamKind kind);
ParamKind ParamKindFromName(const std::string& name);

struct Param {
  std::string name;
  TensorF value;
  bool trainable = true;
  ParamKind kind = ParamKind::kWeight;
};

// Insertion-ordered parameter table. The order is the canonical order for
// gradients, optimizer state and noise draws.
class ParamStore {
 public:
  void Add(std::string name, TensorF value, ParamKind kind,
           bool trainable = true);
  bool Contains(const std::string& name) const;
  Param& Get(const std::string& name);
  const Param& Get(const std::string& name) const;

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  size_t size() const { return params_.size(); }

  void SetAllTrainable(bool trainable);
  std::vector<std::string> TrainableNames() const;

  // Ratio applied to every LoRA branch; saved with the checkpoint.
  double lora_scale() const { return lora_scale_; }
  void set_lora_scale(double s) { lora_scale_ = s; }

  bool BitEqual(const ParamStore& other) const;

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, size_t> index_;
  double lora_scale_ = 1.0;
};

struct ParamCounts {
  int64_t total = 0;
  int64_t trainable = 0;
  double fraction = 0.0;
};

ParamCounts CountParams(const ParamStore& params);

// Fresh model. Each tensor draws from its own stream rng.Split(name), so the
// result does not depend on creation order. Weights ~ N(0, 1/fan_in), biases
// and norm biases zero, norm scales one; everything trainable.
ParamStore InitModel(const ModelConfig& config, const Rng& rng);

// One utterance: features [frames, feature_dim] and its label sequence.
struct Example {
  TensorF features;
  LabelSeq labels;
};

// Binds ParamStore entries to graph inputs on first use, so several example
// subgraphs in one Graph share the same parameter nodes.
class GraphParams {
 public:
  GraphParams(Graph* graph, const ParamStore* params)
      : graph_(graph), params_(params) {}
  NodeId Get(const std::string& name);
  bool Has(const std::string& name) const { return params_->Contains(name); }
  Graph& graph() { return *graph_; }
  const ParamStore& store() const { return *params_; }

 private:
  Graph* graph_;
  const ParamStore* params_;
  std::map<std::string, NodeId> nodes_;
};

class AsrModel {
 public:
  explicit AsrModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  int64_t OutputFrames(int64_t input_frames) const {
    return input_frames / config_.frame_stack;
  }

  // Adds one example's encoder to the graph. `features` is an input node of
  // shape [frames, feature_dim]. Returns the [T', V] log-probability node.
  NodeId AddEncoder(GraphParams& gp, NodeId features) const;

  // Linear map y = x W + b, plus scale * (x A^T) B^T when a LoRA pair
  // "<prefix>/lora_a" [r, d_in], "<prefix>/lora_b" [d_out, r] is installed.
  NodeId AddLinear(GraphParams& gp, const std::string& prefix, NodeId x) const;

 private:
  NodeId AddGroupNorm(GraphParams& gp, const std::string& prefix,
                      NodeId x) const;
  NodeId AddAttention(GraphParams& gp, const std::string& prefix,
                      NodeId x) const;
  NodeId AddConvModule(GraphParams& gp, const std::string& prefix,
                       NodeId x) const;
  NodeId AddFeedForward(GraphParams& gp, const std::string& prefix,
                        NodeId x) const;

  ModelConfig config_;
};

// Graph for a single example: features input named "features", outputs
// "log_probs" and, when labels are given, a scalar "loss".
struct ExampleGraph {
  Graph graph;
  NodeId log_probs = -1;
  NodeId loss = -1;
};

// Throws InfeasibleLabelsError when the labels do not fit the output frames.
ExampleGraph BuildExampleGraph(const AsrModel& model, const ParamStore& params,
                               int64_t frames, const LabelSeq* labels);

// One graph holding every example of the batch; "loss" is the mean CTC loss.
// Used as the single-pass reference for batch gradients.
ExampleGraph BuildBatchLossGraph(const AsrModel& model,
                                 const ParamStore& params,
                                 const std::vector<Example>& batch);

// Feeds that borrow the store's tensors.
Feeds<float> ParamFeeds(const ParamStore& params);
// Double-precision copies of every parameter, for gradient checks. Bind them
// with FeedsFrom.
std::vector<TensorD> ParamsAsDouble(const ParamStore& params);
Feeds<double> FeedsFrom(const std::vector<TensorD>& values,
                        const ParamStore& params);

struct EncodeResult {
  TensorF log_probs;                  // [B, T'max, V]
  std::vector<int64_t> out_lengths;   // T'_i = floor(len_i / frame_stack)
};

// Batched encoder. features is [B, T, F] zero-padded; lengths[i] <= T.
// Every example is evaluated on its own subgraph of exactly lengths[i]
// frames, so row i depends on example i alone. Padded output frames hold
// the uniform distribution.
EncodeResult Encode(const AsrModel& model, const ParamStore& params,
                    const TensorF& features,
                    const std::vector<int64_t>& lengths);

// Single-example convenience: [T', V] log-probabilities.
TensorF EncodeOne(const AsrModel& model, const ParamStore& params,
                  const TensorF& features);

// Checkpoints: ModelConfig and lora_scale go into the JSON metadata.
void SaveModel(const std::string& path, const ModelConfig& config,
               const ParamStore& params,
               const nlohmann::json& extra = nlohmann::json::object());
struct LoadedModel {
  ModelConfig config;
  ParamStore params;
  nlohmann::json metadata;
};
LoadedModel LoadModel(const std::string& path);

}  // namespace dpasr

#endif  // DPASR_MODEL_H_
