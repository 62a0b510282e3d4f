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

#include "dpasr/dpsgd.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <numeric>
#include <thread>

#include "dpasr/executor.h"
#include "dpasr/status.h"

namespace dpasr {

std::string SamplingName(Sampling s) {
  return s == Sampling::kPoisson ? "poisson" : "shuffle";
}

Sampling ParseSampling(const std::string& name) {
  if (name == "poisson") return Sampling::kPoisson;
  if (name == "shuffle") return Sampling::kShuffle;
  throw InvalidArgumentError("unknown sampling '" + name +
                             "' (expected poisson or shuffle)");
}

double DpConfig::EffectiveDelta(int64_t dataset_size) const {
  if (!delta_from_dataset) return target_delta;
  if (dataset_size < 2) {
    throw InvalidArgumentError("dp: delta = 1/N needs N >= 2");
  }
  return 1.0 / static_cast<double>(dataset_size);
}

void DpConfig::Validate() const {
  if (!(clip_bound > 0.0)) throw InvalidArgumentError("dp: clip_bound must be > 0");
  if (std::isnan(noise_multiplier)) {
    throw InvalidArgumentError("dp: noise_multiplier is NaN");
  }
  if (batch_size < 1) throw InvalidArgumentError("dp: batch_size must be >= 1");
  if (steps < 0) throw InvalidArgumentError("dp: steps must be >= 0");
  if (!(target_epsilon > 0.0)) {
    throw InvalidArgumentError("dp: target_epsilon must be > 0");
  }
  if (!(target_delta > 0.0 && target_delta < 1.0)) {
    throw InvalidArgumentError("dp: target_delta must be in (0, 1)");
  }
}

void to_json(nlohmann::json& j, const DpConfig& c) {
  j = {{"clip_bound", c.clip_bound},
       {"noise_multiplier", c.noise_multiplier},
       {"sampling", SamplingName(c.sampling)},
       {"batch_size", c.batch_size},
       {"steps", c.steps},
       {"target_epsilon", c.target_epsilon},
       {"target_delta", c.target_delta},
       {"delta_from_dataset", c.delta_from_dataset},
       {"dp_enabled", c.dp_enabled}};
}

void from_json(const nlohmann::json& j, DpConfig& c) {
  DpConfig d;
  c.clip_bound = j.value("clip_bound", d.clip_bound);
  c.noise_multiplier = j.value("noise_multiplier", d.noise_multiplier);
  c.sampling = ParseSampling(j.value("sampling", SamplingName(d.sampling)));
  c.batch_size = j.value("batch_size", d.batch_size);
  c.steps = j.value("steps", d.steps);
  c.target_epsilon = j.value("target_epsilon", d.target_epsilon);
  c.target_delta = j.value("target_delta", d.target_delta);
  c.delta_from_dataset = j.value("delta_from_dataset", d.delta_from_dataset);
  c.dp_enabled = j.value("dp_enabled", d.dp_enabled);
}

void to_json(nlohmann::json& j, const AdamConfig& c) {
  j = {{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
}

void from_json(const nlohmann::json& j, AdamConfig& c) {
  AdamConfig d;
  c.lr = j.value("lr", d.lr);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.eps = j.value("eps", d.eps);
}

GradientMap ZeroGradients(const ParamStore& params) {
  GradientMap g;
  for (const Param& p : params.params()) {
    if (!p.trainable) continue;
    g.names.push_back(p.name);
    g.tensors.emplace_back(p.value.shape());
  }
  return g;
}

double GlobalNorm(const GradientMap& g) {
  double sq = 0.0;
  for (const TensorF& t : g.tensors) {
    for (float x : t.data()) sq += static_cast<double>(x) * x;
  }
  return std::sqrt(sq);
}

int DefaultWorkerCount() {
  if (const char* env = std::getenv("DPASR_WORKERS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

ExampleGradient OneExample(const AsrModel& model, const ParamStore& params,
                           const Feeds<float>& param_feeds,
                           const Example& ex) {
  ExampleGradient out;
  ExampleGraph eg;
  try {
    eg = BuildExampleGraph(model, params, ex.features.dim(0), &ex.labels);
  } catch (const InfeasibleLabelsError&) {
    out.grad = ZeroGradients(params);
    out.feasible = false;
    return out;
  }
  Feeds<float> feeds = param_feeds;
  feeds["features"] = &ex.features;
  const Values<float> values = Forward(eg.graph, feeds);
  out.loss = values[eg.loss].data()[0];
  TensorMap<float> grads = Backward(eg.graph, values, eg.loss);
  for (const Param& p : params.params()) {
    if (!p.trainable) continue;
    out.grad.names.push_back(p.name);
    auto it = grads.find(p.name);
    // A trainable tensor the graph never touches gets a zero gradient.
    out.grad.tensors.push_back(it != grads.end() ? std::move(it->second)
                                                 : TensorF(p.value.shape()));
  }
  return out;
}

}  // namespace

std::vector<ExampleGradient> PerExampleGradients(
    const AsrModel& model, const ParamStore& params,
    const std::vector<const Example*>& batch, int workers) {
  if (batch.empty()) {
    throw InvalidArgumentError("per_example_gradients: empty batch");
  }
  const Feeds<float> param_feeds = ParamFeeds(params);
  std::vector<ExampleGradient> results(batch.size());
  const int n_workers =
      std::max(1, std::min<int>(workers, static_cast<int>(batch.size())));
  if (n_workers == 1) {
    for (size_t i = 0; i < batch.size(); ++i) {
      results[i] = OneExample(model, params, param_feeds, *batch[i]);
    }
    return results;
  }
  std::vector<std::exception_ptr> errors(n_workers);
  std::vector<std::thread> threads;
  threads.reserve(n_workers);
  for (int w = 0; w < n_workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (size_t i = w; i < batch.size(); i += n_workers) {
          results[i] = OneExample(model, params, param_feeds, *batch[i]);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : threads) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

ClipInfo Clip(GradientMap* g, double clip_bound) {
  if (!(clip_bound > 0.0)) throw InvalidArgumentError("clip: bound must be > 0");
  ClipInfo info;
  info.norm = GlobalNorm(*g);
  if (info.norm <= clip_bound) return info;
  info.clipped = true;
  const double factor = clip_bound / info.norm;
  for (TensorF& t : g->tensors) {
    for (float& x : t.data()) x = static_cast<float>(x * factor);
  }
  // Float rounding can leave the norm a few ulps above the bound.
  double post = GlobalNorm(*g);
  while (post > clip_bound) {
    const double shrink = (1.0 - 2e-7) * clip_bound / post;
    for (TensorF& t : g->tensors) {
      for (float& x : t.data()) x = static_cast<float>(x * shrink);
    }
    post = GlobalNorm(*g);
  }
  return info;
}

GradientMap AggregateAndNoise(const std::vector<GradientMap>& clipped,
                              double clip_bound, double noise_multiplier,
                              Rng& rng, double denominator) {
  if (clipped.empty()) {
    throw InvalidArgumentError("aggregate: need at least one gradient map");
  }
  if (!(denominator > 0.0)) {
    throw InvalidArgumentError("aggregate: denominator must be > 0");
  }
  if (noise_multiplier < 0.0) {
    throw InvalidArgumentError("aggregate: noise multiplier must be >= 0");
  }
  const GradientMap& first = clipped.front();
  GradientMap out;
  out.names = first.names;
  const double noise_std = noise_multiplier * clip_bound;
  for (size_t k = 0; k < first.size(); ++k) {
    const int64_t n = first.tensors[k].size();
    std::vector<double> acc(n, 0.0);
    for (const GradientMap& g : clipped) {
      if (g.names.size() != first.names.size() || g.names[k] != first.names[k] ||
          g.tensors[k].size() != n) {
        throw ShapeError("aggregate: gradient maps disagree on '" +
                         first.names[k] + "'");
      }
      const float* src = g.tensors[k].raw();
      for (int64_t e = 0; e < n; ++e) acc[e] += src[e];
    }
    TensorF t(first.tensors[k].shape());
    float* dst = t.raw();
    for (int64_t e = 0; e < n; ++e) {
      double v = acc[e];
      if (noise_std > 0.0) v += noise_std * rng.Normal();
      dst[e] = static_cast<float>(v / denominator);
    }
    out.tensors.push_back(std::move(t));
  }
  return out;
}

template <typename T>
void AdamUpdate(std::span<T> param, std::span<const T> grad, std::span<T> m,
                std::span<T> v, int64_t t, const AdamConfig& cfg) {
  if (grad.size() != param.size() || m.size() != param.size() ||
      v.size() != param.size()) {
    throw ShapeError("adam: buffer sizes differ");
  }
  if (t < 1) throw InvalidArgumentError("adam: step must be >= 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double m_hat = mi / bc1;
    const double v_hat = vi / bc2;
    param[i] = static_cast<T>(param[i] -
                              cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
  }
}

template void AdamUpdate<float>(std::span<float>, std::span<const float>,
                                std::span<float>, std::span<float>, int64_t,
                                const AdamConfig&);
template void AdamUpdate<double>(std::span<double>, std::span<const double>,
                                 std::span<double>, std::span<double>, int64_t,
                                 const AdamConfig&);

AdamState::AdamState(const ParamStore& params, AdamConfig cfg) : cfg_(cfg) {
  for (const Param& p : params.params()) {
    if (!p.trainable) continue;
    m_.emplace(p.name, TensorF(p.value.shape()));
    v_.emplace(p.name, TensorF(p.value.shape()));
  }
}

void AdamState::Step(ParamStore* params, const GradientMap& grad) {
  if (grad.size() != m_.size()) {
    throw ShapeError("adam: gradient has " + std::to_string(grad.size()) +
                     " tensors, optimizer tracks " + std::to_string(m_.size()));
  }
  ++step_;
  for (size_t k = 0; k < grad.size(); ++k) {
    auto mit = m_.find(grad.names[k]);
    if (mit == m_.end()) {
      throw ShapeError("adam: no moments for '" + grad.names[k] + "'");
    }
    Param& p = params->Get(grad.names[k]);
    if (!p.trainable) {
      throw InvariantViolation("adam: '" + p.name + "' is frozen");
    }
    TensorF& v = v_.at(grad.names[k]);
    if (p.value.shape() != grad.tensors[k].shape()) {
      throw ShapeError("adam: shape mismatch for '" + p.name + "'");
    }
    AdamUpdate<float>(p.value.data(), grad.tensors[k].data(),
                      mit->second.data(), v.data(), step_, cfg_);
  }
}

StepStats TrainStep(const AsrModel& model, ParamStore* params,
                    const std::vector<const Example*>& batch,
                    const DpConfig& dp, double noise_multiplier,
                    AdamState* adam, PrivacyLedger* ledger, Rng& noise_rng,
                    int workers) {
  StepStats stats;
  stats.realized_batch = static_cast<int64_t>(batch.size());
  std::vector<ExampleGradient> per_example;
  if (!batch.empty()) {
    per_example = PerExampleGradients(model, *params, batch, workers);
  }
  std::vector<GradientMap> grads;
  grads.reserve(per_example.size());
  int64_t feasible = 0;
  double loss_sum = 0.0;
  for (ExampleGradient& e : per_example) {
    if (e.feasible) {
      ++feasible;
      loss_sum += e.loss;
    } else {
      ++stats.infeasible;
    }
    grads.push_back(std::move(e.grad));
  }
  stats.loss = feasible > 0 ? loss_sum / static_cast<double>(feasible) : 0.0;

  if (!dp.dp_enabled) {
    if (feasible == 0) return stats;
    for (const GradientMap& g : grads) stats.grad_norms.push_back(GlobalNorm(g));
    GradientMap mean = AggregateAndNoise(grads, 1.0, 0.0, noise_rng,
                                         static_cast<double>(feasible));
    adam->Step(params, mean);
    return stats;
  }

  for (GradientMap& g : grads) {
    const ClipInfo info = Clip(&g, dp.clip_bound);
    stats.grad_norms.push_back(info.norm);
    if (info.clipped) ++stats.clipped;
  }
  if (grads.empty()) grads.push_back(ZeroGradients(*params));
  GradientMap noisy =
      AggregateAndNoise(grads, dp.clip_bound, noise_multiplier, noise_rng,
                        static_cast<double>(dp.batch_size));
  adam->Step(params, noisy);
  if (ledger != nullptr) ledger->RecordStep();
  return stats;
}

BatchSampler::BatchSampler(int64_t n, Sampling sampling, int64_t batch_size,
                           Rng rng)
    : n_(n), sampling_(sampling), batch_size_(batch_size), rng_(rng) {
  if (n_ < 1) throw InvalidArgumentError("sampler: empty dataset");
  if (batch_size_ < 1 || batch_size_ > n_) {
    throw InvalidArgumentError("sampler: batch size " +
                               std::to_string(batch_size_) +
                               " must be in [1, " + std::to_string(n_) + "]");
  }
}

std::vector<int64_t> BatchSampler::Next() {
  std::vector<int64_t> out;
  if (sampling_ == Sampling::kPoisson) {
    const double q = static_cast<double>(batch_size_) / static_cast<double>(n_);
    Rng r = rng_.Split(static_cast<uint64_t>(step_));
    for (int64_t i = 0; i < n_; ++i) {
      if (r.Bernoulli(q)) out.push_back(i);
    }
  } else {
    if (perm_.empty() || cursor_ + batch_size_ > perm_.size()) {
      perm_.resize(n_);
      std::iota(perm_.begin(), perm_.end(), 0);
      Rng r = rng_.Split("epoch").Split(static_cast<uint64_t>(epoch_++));
      for (int64_t i = n_ - 1; i > 0; --i) {
        const int64_t j = static_cast<int64_t>(r.UniformInt(i + 1));
        std::swap(perm_[i], perm_[j]);
      }
      cursor_ = 0;
    }
    out.assign(perm_.begin() + cursor_, perm_.begin() + cursor_ + batch_size_);
    cursor_ += batch_size_;
  }
  ++step_;
  return out;
}

}  // namespace dpasr
