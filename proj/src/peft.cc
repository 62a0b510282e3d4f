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

#include "dpasr/peft.h"

#include <algorithm>
#include <cmath>

#include "dpasr/executor.h"
#include "dpasr/status.h"

namespace dpasr {
namespace {

bool IsHead(const std::string& name) { return name.rfind("head/", 0) == 0; }

}  // namespace

std::string PeftMethodName(PeftMethod m) {
  switch (m) {
    case PeftMethod::kFull: return "full";
    case PeftMethod::kBitFit: return "bitfit";
    case PeftMethod::kLoRA: return "lora";
    case PeftMethod::kRP: return "rp";
    case PeftMethod::kAdapter: return "adapter";
  }
  return "full";
}

PeftMethod ParsePeftMethod(const std::string& raw) {
  std::string name = raw;
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (name == "full" || name == "ft") return PeftMethod::kFull;
  if (name == "bitfit") return PeftMethod::kBitFit;
  if (name == "lora") return PeftMethod::kLoRA;
  if (name == "rp") return PeftMethod::kRP;
  if (name == "adapter") return PeftMethod::kAdapter;
  throw InvalidArgumentError("unknown PEFT method '" + raw + "'");
}

std::string PlacementName(LoraPlacement p) {
  return p == LoraPlacement::kFFN ? "ffn" : "attention";
}

LoraPlacement ParsePlacement(const std::string& raw) {
  std::string name = raw;
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (name == "ffn") return LoraPlacement::kFFN;
  if (name == "attention" || name == "attn") return LoraPlacement::kAttention;
  throw InvalidArgumentError("unknown LoRA placement '" + raw + "'");
}

double PeftConfig::EffectiveInitSigma() const {
  if (init_sigma >= 0.0) return init_sigma;
  return method == PeftMethod::kRP ? 0.3 : 0.4;
}

void PeftConfig::Validate() const {
  if (rank < 1) throw InvalidArgumentError("peft: rank must be >= 1");
  if (bottleneck < 1) throw InvalidArgumentError("peft: bottleneck must be >= 1");
  if (std::isnan(init_sigma) || (init_sigma < 0 && init_sigma != -1.0)) {
    throw InvalidArgumentError("peft: init_sigma must be >= 0 (or -1 for the default)");
  }
}

void to_json(nlohmann::json& j, const PeftConfig& c) {
  j = {{"method", PeftMethodName(c.method)},
       {"rank", c.rank},
       {"placement", PlacementName(c.placement)},
       {"init_sigma", c.EffectiveInitSigma()},
       {"lora_scale", c.lora_scale},
       {"bottleneck", c.bottleneck},
       {"freeze_norm_bias", c.freeze_norm_bias},
       {"decoder_head_trainable", c.decoder_head_trainable},
       {"lora_ffn_both", c.lora_ffn_both}};
}

void from_json(const nlohmann::json& j, PeftConfig& c) {
  PeftConfig d;
  c.method = ParsePeftMethod(j.value("method", PeftMethodName(d.method)));
  c.rank = j.value("rank", d.rank);
  c.placement = ParsePlacement(j.value("placement", PlacementName(d.placement)));
  c.init_sigma = j.value("init_sigma", d.init_sigma);
  c.lora_scale = j.value("lora_scale", d.lora_scale);
  c.bottleneck = j.value("bottleneck", d.bottleneck);
  c.freeze_norm_bias = j.value("freeze_norm_bias", d.freeze_norm_bias);
  c.decoder_head_trainable =
      j.value("decoder_head_trainable", d.decoder_head_trainable);
  c.lora_ffn_both = j.value("lora_ffn_both", d.lora_ffn_both);
}

void to_json(nlohmann::json& j, const PeftReport& r) {
  j = {{"added_params", r.added_params},
       {"added_trainable_params", r.added_trainable_params},
       {"trainable_params", r.trainable_params},
       {"total_params", r.total_params},
       {"trainable_fraction", r.trainable_fraction}};
}

std::vector<std::string> LoraTargets(const ModelConfig& model,
                                     LoraPlacement placement, bool ffn_both) {
  std::vector<std::string> out;
  for (int64_t l = 0; l < model.num_layers; ++l) {
    const std::string p = "layer" + std::to_string(l);
    if (placement == LoraPlacement::kFFN) {
      out.push_back(p + "/ffn/w1");
      if (ffn_both) out.push_back(p + "/ffn/w2");
    } else {
      out.push_back(p + "/attn/q");
      out.push_back(p + "/attn/v");
    }
  }
  return out;
}

std::pair<ParamStore, PeftReport> ApplyPeft(ParamStore params,
                                            const ModelConfig& model,
                                            const PeftConfig& cfg,
                                            const Rng& rng) {
  cfg.Validate();
  for (const Param& p : params.params()) {
    if (p.kind == ParamKind::kPeft) {
      throw InvalidArgumentError("peft: store already has PEFT parameter '" +
                                 p.name + "'");
    }
  }
  const int64_t base_total = CountParams(params).total;
  PeftReport report;

  switch (cfg.method) {
    case PeftMethod::kFull:
      params.SetAllTrainable(true);
      break;
    case PeftMethod::kBitFit:
      for (Param& p : params.params()) {
        p.trainable = p.kind == ParamKind::kBias ||
                      (p.kind == ParamKind::kNormBias && !cfg.freeze_norm_bias);
      }
      break;
    case PeftMethod::kLoRA:
    case PeftMethod::kRP: {
      params.SetAllTrainable(false);
      const double sigma = cfg.EffectiveInitSigma();
      const bool train_down = cfg.method == PeftMethod::kLoRA;
      for (const std::string& target : LoraTargets(model, cfg.placement, cfg.lora_ffn_both)) {
        const Shape& ws = params.Get(target + "/w").value.shape();
        const int64_t d_in = ws[0], d_out = ws[1];
        if (cfg.rank > std::min(d_in, d_out)) {
          throw InvalidArgumentError(
              "peft: rank " + std::to_string(cfg.rank) + " exceeds " + target +
              " dims [" + std::to_string(d_in) + "," + std::to_string(d_out) +
              "]");
        }
        Rng r = rng.Split(target + "/lora_a");
        params.Add(target + "/lora_a",
                   GaussianInit<float>({cfg.rank, d_in}, sigma, r),
                   ParamKind::kPeft, train_down);
        params.Add(target + "/lora_b", TensorF({d_out, cfg.rank}),
                   ParamKind::kPeft, true);
        report.added_params += cfg.rank * (d_in + d_out);
        report.added_trainable_params +=
            cfg.rank * (train_down ? d_in + d_out : d_out);
      }
      params.set_lora_scale(cfg.lora_scale);
      break;
    }
    case PeftMethod::kAdapter: {
      params.SetAllTrainable(false);
      const int64_t d = model.model_dim;
      if (cfg.bottleneck > d) {
        throw InvalidArgumentError("peft: bottleneck " +
                                   std::to_string(cfg.bottleneck) +
                                   " exceeds model_dim " + std::to_string(d));
      }
      for (int64_t l = 0; l < model.num_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + "/adapter";
        Rng r = rng.Split(p + "/down/w");
        params.Add(p + "/down/w",
                   GaussianInit<float>({d, cfg.bottleneck},
                                       1.0 / std::sqrt(static_cast<double>(d)),
                                       r),
                   ParamKind::kPeft);
        params.Add(p + "/down/b", TensorF({cfg.bottleneck}), ParamKind::kPeft);
        params.Add(p + "/up/w", TensorF({cfg.bottleneck, d}), ParamKind::kPeft);
        params.Add(p + "/up/b", TensorF({d}), ParamKind::kPeft);
        const int64_t added = 2 * d * cfg.bottleneck + cfg.bottleneck + d;
        report.added_params += added;
        report.added_trainable_params += added;
      }
      break;
    }
  }

  if (cfg.method != PeftMethod::kFull && cfg.decoder_head_trainable) {
    for (Param& p : params.params()) {
      if (IsHead(p.name)) p.trainable = true;
    }
  }

  const ParamCounts counts = CountParams(params);
  report.trainable_params = counts.trainable;
  report.total_params = counts.total;
  report.trainable_fraction = counts.fraction;
  if (counts.total != base_total + report.added_params) {
    throw InvariantViolation("peft: parameter recount mismatch");
  }
  return {std::move(params), report};
}

std::vector<std::pair<std::string, const TensorF*>> TrainableParameters(
    const ParamStore& params) {
  std::vector<std::pair<std::string, const TensorF*>> out;
  for (const Param& p : params.params()) {
    if (p.trainable) out.emplace_back(p.name, &p.value);
  }
  return out;
}

template <typename T>
Tensor<T> LoraForward(const Tensor<T>& w, const Tensor<T>& a,
                      const Tensor<T>& b, double scale, const Tensor<T>& x) {
  if (w.rank() != 2 || a.rank() != 2 || b.rank() != 2 || x.rank() != 2) {
    throw ShapeError("lora_forward: all operands must be rank 2");
  }
  const int64_t d_in = w.dim(0), d_out = w.dim(1), r = a.dim(0);
  if (a.dim(1) != d_in || b.dim(0) != d_out || b.dim(1) != r ||
      x.dim(1) != d_in) {
    throw ShapeError("lora_forward: expected W [d_in,d_out], A [r,d_in], "
                     "B [d_out,r], x [n,d_in]; got W " + ShapeString(w.shape()) +
                     ", A " + ShapeString(a.shape()) + ", B " +
                     ShapeString(b.shape()) + ", x " + ShapeString(x.shape()));
  }
  // Same graph fragment the encoder uses for adapted linears, minus the bias.
  Graph g;
  const NodeId xn = g.Input("x", x.shape(), false);
  const NodeId wn = g.Input("w", w.shape(), false);
  const NodeId an = g.Input("a", a.shape(), false);
  const NodeId bn = g.Input("b", b.shape(), false);
  const NodeId base = g.MatMul(xn, wn);
  const NodeId low = g.Scale(g.MatMul(g.MatMul(xn, an, false, true), bn, false, true),
                             scale);
  const NodeId y = g.Add(base, low);
  Feeds<T> feeds{{"x", &x}, {"w", &w}, {"a", &a}, {"b", &b}};
  return Forward(g, feeds)[y];
}

template TensorF LoraForward<float>(const TensorF&, const TensorF&,
                                    const TensorF&, double, const TensorF&);
template TensorD LoraForward<double>(const TensorD&, const TensorD&,
                                     const TensorD&, double, const TensorD&);

}  // namespace dpasr
