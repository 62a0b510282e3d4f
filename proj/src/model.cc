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

#include "dpasr/model.h"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dpasr/checkpoint.h"
#include "dpasr/executor.h"
#include "dpasr/status.h"

namespace dpasr {
namespace {

constexpr double kNormEps = 1e-5;

std::string LayerPrefix(int64_t layer) {
  return "layer" + std::to_string(layer);
}

TensorD SinusoidalPositions(int64_t frames, int64_t dim) {
  TensorD pe({frames, dim});
  for (int64_t t = 0; t < frames; ++t) {
    for (int64_t i = 0; i < dim / 2; ++i) {
      const double freq =
          std::pow(10000.0, -2.0 * static_cast<double>(i) /
                                static_cast<double>(dim));
      pe.at(t, 2 * i) = std::sin(static_cast<double>(t) * freq);
      pe.at(t, 2 * i + 1) = std::cos(static_cast<double>(t) * freq);
    }
  }
  return pe;
}

}  // namespace

void ModelConfig::Validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw InvalidArgumentError("model config: " + what);
  };
  require(num_layers >= 1, "num_layers must be >= 1");
  require(model_dim >= 2 && model_dim % 2 == 0, "model_dim must be even");
  require(ffn_dim >= 1, "ffn_dim must be >= 1");
  require(num_heads >= 1 && model_dim % num_heads == 0,
          "model_dim " + std::to_string(model_dim) +
              " not divisible by num_heads " + std::to_string(num_heads));
  require(groupnorm_groups >= 1 && model_dim % groupnorm_groups == 0,
          "model_dim " + std::to_string(model_dim) +
              " not divisible by groupnorm_groups " +
              std::to_string(groupnorm_groups));
  require(feature_dim >= 1, "feature_dim must be >= 1");
  require(frame_stack >= 1, "frame_stack must be >= 1");
  require(vocab_size >= 2, "vocab_size must be >= 2 (blank plus one label)");
  require(!conv_module_enabled || (conv_kernel >= 1 && conv_kernel % 2 == 1),
          "conv_kernel must be odd");
}

int64_t ModelConfig::ExpectedParamCount() const {
  const int64_t d = model_dim, f = ffn_dim;
  int64_t per_layer = 4 * d + 4 * d * d + 3 * d + 2 * d * f + f + d;  // no key bias
  if (conv_module_enabled) per_layer += 2 * d + 2 * (d * d + d) + (conv_kernel + 1) * d;
  return (feature_dim * frame_stack + 1) * d + num_layers * per_layer + 2 * d +
         (d + 1) * vocab_size;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"num_layers", c.num_layers},
       {"model_dim", c.model_dim},
       {"ffn_dim", c.ffn_dim},
       {"num_heads", c.num_heads},
       {"groupnorm_groups", c.groupnorm_groups},
       {"conv_module_enabled", c.conv_module_enabled},
       {"conv_kernel", c.conv_kernel},
       {"feature_dim", c.feature_dim},
       {"frame_stack", c.frame_stack},
       {"vocab_size", c.vocab_size}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.num_layers = j.value("num_layers", d.num_layers);
  c.model_dim = j.value("model_dim", d.model_dim);
  c.ffn_dim = j.value("ffn_dim", d.ffn_dim);
  c.num_heads = j.value("num_heads", d.num_heads);
  c.groupnorm_groups = j.value("groupnorm_groups", d.groupnorm_groups);
  c.conv_module_enabled = j.value("conv_module_enabled", d.conv_module_enabled);
  c.conv_kernel = j.value("conv_kernel", d.conv_kernel);
  c.feature_dim = j.value("feature_dim", d.feature_dim);
  c.frame_stack = j.value("frame_stack", d.frame_stack);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
}

std::string ParamKindName(ParamKind kind) {
  switch (kind) {
    case ParamKind::kWeight: return "weight";
    case ParamKind::kBias: return "bias";
    case ParamKind::kNormScale: return "norm_scale";
    case ParamKind::kNormBias: return "norm_bias";
    case ParamKind::kPeft: return "peft";
  }
  return "weight";
}

ParamKind ParamKindFromName(const std::string& name) {
  if (name == "weight") return ParamKind::kWeight;
  if (name == "bias") return ParamKind::kBias;
  if (name == "norm_scale") return ParamKind::kNormScale;
  if (name == "norm_bias") return ParamKind::kNormBias;
  if (name == "peft") return ParamKind::kPeft;
  throw InvalidArgumentError("unknown parameter kind '" + name + "'");
}

void ParamStore::Add(std::string name, TensorF value, ParamKind kind,
                     bool trainable) {
  if (index_.count(name)) {
    throw InvalidArgumentError("param store: duplicate parameter '" + name + "'");
  }
  index_[name] = params_.size();
  params_.push_back(Param{std::move(name), std::move(value), trainable, kind});
}

bool ParamStore::Contains(const std::string& name) const {
  return index_.count(name) > 0;
}

Param& ParamStore::Get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw InvalidArgumentError("param store: no parameter '" + name + "'");
  }
  return params_[it->second];
}

const Param& ParamStore::Get(const std::string& name) const {
  return const_cast<ParamStore*>(this)->Get(name);
}

void ParamStore::SetAllTrainable(bool trainable) {
  for (Param& p : params_) p.trainable = trainable;
}

std::vector<std::string> ParamStore::TrainableNames() const {
  std::vector<std::string> names;
  for (const Param& p : params_) {
    if (p.trainable) names.push_back(p.name);
  }
  return names;
}

bool ParamStore::BitEqual(const ParamStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (size_t i = 0; i < params_.size(); ++i) {
    const Param& a = params_[i];
    const Param& b = other.params_[i];
    if (a.name != b.name || a.kind != b.kind || a.trainable != b.trainable ||
        !a.value.BitEqual(b.value)) {
      return false;
    }
  }
  return lora_scale_ == other.lora_scale_;
}

ParamCounts CountParams(const ParamStore& params) {
  ParamCounts c;
  for (const Param& p : params.params()) {
    c.total += p.value.size();
    if (p.trainable) c.trainable += p.value.size();
  }
  c.fraction = c.total > 0 ? static_cast<double>(c.trainable) /
                                 static_cast<double>(c.total)
                           : 0.0;
  return c;
}

ParamStore InitModel(const ModelConfig& config, const Rng& rng) {
  config.Validate();
  ParamStore store;
  const int64_t d = config.model_dim;
  auto weight = [&](const std::string& name, int64_t fan_in, int64_t fan_out) {
    Rng r = rng.Split(name);
    store.Add(name,
              GaussianInit<float>({fan_in, fan_out},
                                  1.0 / std::sqrt(static_cast<double>(fan_in)),
                                  r),
              ParamKind::kWeight);
  };
  auto bias = [&](const std::string& name, int64_t n) {
    store.Add(name, TensorF({n}), ParamKind::kBias);
  };
  auto linear = [&](const std::string& prefix, int64_t in, int64_t out) {
    weight(prefix + "/w", in, out);
    bias(prefix + "/b", out);
  };
  auto norm = [&](const std::string& prefix) {
    store.Add(prefix + "/scale", TensorF::Filled({d}, 1.0f),
              ParamKind::kNormScale);
    store.Add(prefix + "/bias", TensorF({d}), ParamKind::kNormBias);
  };

  linear("subsample", config.feature_dim * config.frame_stack, d);
  for (int64_t l = 0; l < config.num_layers; ++l) {
    const std::string p = LayerPrefix(l);
    norm(p + "/attn_norm");
    linear(p + "/attn/q", d, d);
    // No key bias: it shifts every score in a softmax row equally, so its
    // gradient is zero and under DP it would only soak up noise.
    weight(p + "/attn/k/w", d, d);
    linear(p + "/attn/v", d, d);
    linear(p + "/attn/o", d, d);
    if (config.conv_module_enabled) {
      norm(p + "/conv_norm");
      linear(p + "/conv/pw1", d, d);
      weight(p + "/conv/dw/w", config.conv_kernel, d);
      bias(p + "/conv/dw/b", d);
      linear(p + "/conv/pw2", d, d);
    }
    norm(p + "/ffn_norm");
    linear(p + "/ffn/w1", d, config.ffn_dim);
    linear(p + "/ffn/w2", config.ffn_dim, d);
  }
  norm("final_norm");
  linear("head", d, config.vocab_size);
  return store;
}

NodeId GraphParams::Get(const std::string& name) {
  auto it = nodes_.find(name);
  if (it != nodes_.end()) return it->second;
  const Param& p = params_->Get(name);
  const std::string saved = graph_->scope();
  graph_->SetScope("");
  const NodeId id = graph_->Input(name, p.value.shape(), p.trainable);
  graph_->SetScope(saved);
  nodes_[name] = id;
  return id;
}

AsrModel::AsrModel(ModelConfig config) : config_(std::move(config)) {
  config_.Validate();
}

NodeId AsrModel::AddLinear(GraphParams& gp, const std::string& prefix,
                           NodeId x) const {
  Graph& g = gp.graph();
  NodeId y = g.MatMul(x, gp.Get(prefix + "/w"));
  if (gp.Has(prefix + "/b")) y = g.BiasAdd(y, gp.Get(prefix + "/b"));
  if (gp.Has(prefix + "/lora_a")) {
    const NodeId down = g.MatMul(x, gp.Get(prefix + "/lora_a"), false, true);
    NodeId up = g.MatMul(down, gp.Get(prefix + "/lora_b"), false, true);
    if (gp.store().lora_scale() != 1.0) up = g.Scale(up, gp.store().lora_scale());
    y = g.Add(y, up);
  }
  return y;
}

NodeId AsrModel::AddGroupNorm(GraphParams& gp, const std::string& prefix,
                              NodeId x) const {
  Graph& g = gp.graph();
  const NodeId z = g.GroupStandardize(x, config_.groupnorm_groups, kNormEps);
  return g.BiasAdd(g.MulCols(z, gp.Get(prefix + "/scale")),
                   gp.Get(prefix + "/bias"));
}

NodeId AsrModel::AddAttention(GraphParams& gp, const std::string& prefix,
                              NodeId x) const {
  Graph& g = gp.graph();
  const NodeId q = AddLinear(gp, prefix + "/q", x);
  const NodeId k = AddLinear(gp, prefix + "/k", x);
  const NodeId v = AddLinear(gp, prefix + "/v", x);
  const int64_t head_dim = config_.model_dim / config_.num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<NodeId> heads;
  for (int64_t h = 0; h < config_.num_heads; ++h) {
    const int64_t b = h * head_dim, e = b + head_dim;
    const NodeId qh = g.SliceCols(q, b, e);
    const NodeId kh = g.SliceCols(k, b, e);
    const NodeId vh = g.SliceCols(v, b, e);
    const NodeId scores = g.Scale(g.MatMul(qh, kh, false, true), scale);
    heads.push_back(g.MatMul(g.Softmax(scores), vh));
  }
  const NodeId merged = heads.size() == 1 ? heads[0] : g.ConcatCols(heads);
  return AddLinear(gp, prefix + "/o", merged);
}

NodeId AsrModel::AddConvModule(GraphParams& gp, const std::string& prefix,
                               NodeId x) const {
  Graph& g = gp.graph();
  const int64_t frames = g.shape(x)[0];
  const int64_t d = config_.model_dim;
  const NodeId h = g.Swish(AddLinear(gp, prefix + "/pw1", x));
  const NodeId kernel = gp.Get(prefix + "/dw/w");
  const int64_t half = config_.conv_kernel / 2;
  // Depthwise conv over time with zero padding, as a sum of shifted copies.
  NodeId acc = -1;
  for (int64_t j = 0; j < config_.conv_kernel; ++j) {
    const int64_t shift = j - half;  // output t reads input t + shift
    NodeId shifted;
    if (shift == 0) {
      shifted = h;
    } else if (std::abs(shift) >= frames) {
      shifted = g.Constant(TensorD({frames, d}));
    } else if (shift > 0) {
      shifted = g.ConcatRows({g.SliceRows(h, shift, frames),
                              g.Constant(TensorD({shift, d}))});
    } else {
      shifted = g.ConcatRows({g.Constant(TensorD({-shift, d})),
                              g.SliceRows(h, 0, frames + shift)});
    }
    const NodeId tap = g.Reshape(g.SliceRows(kernel, j, j + 1), {d});
    const NodeId term = g.MulCols(shifted, tap);
    acc = acc < 0 ? term : g.Add(acc, term);
  }
  acc = g.Swish(g.BiasAdd(acc, gp.Get(prefix + "/dw/b")));
  return AddLinear(gp, prefix + "/pw2", acc);
}

NodeId AsrModel::AddFeedForward(GraphParams& gp, const std::string& prefix,
                                NodeId x) const {
  Graph& g = gp.graph();
  const NodeId h = g.Swish(AddLinear(gp, prefix + "/w1", x));
  return AddLinear(gp, prefix + "/w2", h);
}

NodeId AsrModel::AddEncoder(GraphParams& gp, NodeId features) const {
  Graph& g = gp.graph();
  const std::string saved_scope = g.scope();
  const Shape& fs = g.shape(features);
  if (fs.size() != 2 || fs[1] != config_.feature_dim) {
    throw ShapeError("encoder: features must be [frames, " +
                     std::to_string(config_.feature_dim) + "], got " +
                     ShapeString(fs));
  }
  const int64_t out_frames = OutputFrames(fs[0]);
  if (out_frames < 1) {
    throw ShapeError("encoder: " + std::to_string(fs[0]) +
                     " frames is fewer than frame_stack " +
                     std::to_string(config_.frame_stack));
  }
  g.SetScope(saved_scope + "subsample");
  NodeId x = features;
  if (out_frames * config_.frame_stack != fs[0]) {
    x = g.SliceRows(x, 0, out_frames * config_.frame_stack);
  }
  x = g.Reshape(x, {out_frames, config_.feature_dim * config_.frame_stack});
  x = AddLinear(gp, "subsample", x);
  x = g.Add(x, g.Constant(SinusoidalPositions(out_frames, config_.model_dim)));

  for (int64_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = LayerPrefix(l);
    g.SetScope(saved_scope + p + "/attn");
    x = g.Add(x, AddAttention(gp, p + "/attn", AddGroupNorm(gp, p + "/attn_norm", x)));
    if (config_.conv_module_enabled) {
      g.SetScope(saved_scope + p + "/conv");
      x = g.Add(x, AddConvModule(gp, p + "/conv", AddGroupNorm(gp, p + "/conv_norm", x)));
    }
    g.SetScope(saved_scope + p + "/ffn");
    NodeId h = AddFeedForward(gp, p + "/ffn", AddGroupNorm(gp, p + "/ffn_norm", x));
    if (gp.Has(p + "/adapter/down/w")) {
      const NodeId a = g.Swish(AddLinear(gp, p + "/adapter/down", h));
      h = g.Add(h, AddLinear(gp, p + "/adapter/up", a));
    }
    x = g.Add(x, h);
  }
  g.SetScope(saved_scope + "head");
  x = AddGroupNorm(gp, "final_norm", x);
  const NodeId logits = AddLinear(gp, "head", x);
  const NodeId log_probs = g.LogSoftmax(logits);
  g.SetScope(saved_scope);
  return log_probs;
}

ExampleGraph BuildExampleGraph(const AsrModel& model, const ParamStore& params,
                               int64_t frames, const LabelSeq* labels) {
  ExampleGraph eg;
  GraphParams gp(&eg.graph, &params);
  const NodeId features = eg.graph.Input(
      "features", {frames, model.config().feature_dim}, false);
  eg.log_probs = model.AddEncoder(gp, features);
  eg.graph.MarkOutput("log_probs", eg.log_probs);
  if (labels != nullptr) {
    eg.loss = eg.graph.CtcLoss(eg.log_probs, *labels);
    eg.graph.MarkOutput("loss", eg.loss);
  }
  return eg;
}

ExampleGraph BuildBatchLossGraph(const AsrModel& model,
                                 const ParamStore& params,
                                 const std::vector<Example>& batch) {
  if (batch.empty()) throw InvalidArgumentError("batch loss: empty batch");
  ExampleGraph eg;
  GraphParams gp(&eg.graph, &params);
  NodeId total = -1;
  for (size_t i = 0; i < batch.size(); ++i) {
    eg.graph.SetScope("example" + std::to_string(i) + "/");
    const NodeId features =
        eg.graph.Input("features/" + std::to_string(i),
                       batch[i].features.shape(), false);
    const NodeId lp = model.AddEncoder(gp, features);
    const NodeId loss = eg.graph.CtcLoss(lp, batch[i].labels);
    total = total < 0 ? loss : eg.graph.Add(total, loss);
  }
  eg.graph.SetScope("");
  eg.loss = eg.graph.Scale(total, 1.0 / static_cast<double>(batch.size()));
  eg.graph.MarkOutput("loss", eg.loss);
  return eg;
}

Feeds<float> ParamFeeds(const ParamStore& params) {
  Feeds<float> feeds;
  for (const Param& p : params.params()) feeds[p.name] = &p.value;
  return feeds;
}

std::vector<TensorD> ParamsAsDouble(const ParamStore& params) {
  std::vector<TensorD> out;
  out.reserve(params.size());
  for (const Param& p : params.params()) out.push_back(p.value.Cast<double>());
  return out;
}

Feeds<double> FeedsFrom(const std::vector<TensorD>& values,
                        const ParamStore& params) {
  if (values.size() != params.size()) {
    throw InvalidArgumentError("FeedsFrom: value count does not match store");
  }
  Feeds<double> feeds;
  for (size_t i = 0; i < values.size(); ++i) {
    feeds[params.params()[i].name] = &values[i];
  }
  return feeds;
}

TensorF EncodeOne(const AsrModel& model, const ParamStore& params,
                  const TensorF& features) {
  if (features.rank() != 2 || features.dim(1) != model.config().feature_dim) {
    throw ShapeError("encode: features must be [frames, " +
                     std::to_string(model.config().feature_dim) + "], got " +
                     ShapeString(features.shape()));
  }
  ExampleGraph eg = BuildExampleGraph(model, params, features.dim(0), nullptr);
  Feeds<float> feeds = ParamFeeds(params);
  feeds["features"] = &features;
  Values<float> values = Forward(eg.graph, feeds);
  return values[eg.log_probs];
}

EncodeResult Encode(const AsrModel& model, const ParamStore& params,
                    const TensorF& features,
                    const std::vector<int64_t>& lengths) {
  const ModelConfig& cfg = model.config();
  if (features.rank() != 3 || features.dim(2) != cfg.feature_dim) {
    throw ShapeError("encode: features must be [B, T, " +
                     std::to_string(cfg.feature_dim) + "], got " +
                     ShapeString(features.shape()));
  }
  const int64_t batch = features.dim(0), frames = features.dim(1);
  if (static_cast<int64_t>(lengths.size()) != batch) {
    throw InvalidArgumentError("encode: " + std::to_string(lengths.size()) +
                               " lengths for batch of " + std::to_string(batch));
  }
  EncodeResult result;
  const int64_t max_out = model.OutputFrames(frames);
  const int64_t vocab = cfg.vocab_size;
  result.log_probs = TensorF::Filled(
      {batch, max_out, vocab},
      static_cast<float>(-std::log(static_cast<double>(vocab))));
  for (int64_t b = 0; b < batch; ++b) {
    if (lengths[b] < cfg.frame_stack || lengths[b] > frames) {
      throw InvalidArgumentError("encode: example " + std::to_string(b) +
                                 " has length " + std::to_string(lengths[b]));
    }
    TensorF one({lengths[b], cfg.feature_dim});
    std::memcpy(one.raw(), features.raw() + b * frames * cfg.feature_dim,
                sizeof(float) * one.size());
    const TensorF lp = EncodeOne(model, params, one);
    std::memcpy(result.log_probs.raw() + b * max_out * vocab, lp.raw(),
                sizeof(float) * lp.size());
    result.out_lengths.push_back(lp.dim(0));
  }
  return result;
}

void SaveModel(const std::string& path, const ModelConfig& config,
               const ParamStore& params, const nlohmann::json& extra) {
  std::vector<NamedTensor> tensors;
  for (const Param& p : params.params()) {
    tensors.push_back({p.name, p.value, p.trainable, ParamKindName(p.kind)});
  }
  nlohmann::json meta = extra;
  meta["model_config"] = config;
  meta["lora_scale"] = params.lora_scale();
  WriteCheckpoint(path, tensors, meta);
}

LoadedModel LoadModel(const std::string& path) {
  CheckpointContents c = ReadCheckpoint(path);
  LoadedModel m;
  if (!c.metadata.contains("model_config")) {
    throw IoError("checkpoint '" + path + "' has no model_config");
  }
  m.config = c.metadata.at("model_config").get<ModelConfig>();
  m.config.Validate();
  for (NamedTensor& t : c.tensors) {
    m.params.Add(t.name, std::move(t.tensor), ParamKindFromName(t.kind),
                 t.trainable);
  }
  m.params.set_lora_scale(c.metadata.value("lora_scale", 1.0));
  m.metadata = std::move(c.metadata);
  return m;
}

}  // namespace dpasr
