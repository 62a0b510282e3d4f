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

#ifndef DPASR_DPSGD_H_
#define DPASR_DPSGD_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dpasr/accountant.h"
#include "dpasr/model.h"
#include "dpasr/rng.h"
#include "json.hpp"

namespace dpasr {

enum class Sampling { kPoisson, kShuffle };

std::string SamplingName(Sampling s);
Sampling ParseSampling(const std::string& name);

struct DpConfig {
  double clip_bound = 2.5;
  // Noise std / clip_bound. Negative: calibrate from the privacy target.
  double noise_multiplier = -1.0;
  Sampling sampling = Sampling::kPoisson;
  // Expected batch size B; q = B / N.
  int64_t batch_size = 64;
  int64_t steps = 2000;
  double target_epsilon = 10.0;
  double target_delta = 3.52e-6;
  // Use delta = 1/N instead of target_delta.
  bool delta_from_dataset = false;
  bool dp_enabled = true;

  double EffectiveDelta(int64_t dataset_size) const;
  void Validate() const;
};

void to_json(nlohmann::json& j, const DpConfig& c);
void from_json(const nlohmann::json& j, DpConfig& c);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void to_json(nlohmann::json& j, const AdamConfig& c);
void from_json(const nlohmann::json& j, AdamConfig& c);

// Gradients of the trainable parameters, in ParamStore order.
struct GradientMap {
  std::vector<std::string> names;
  std::vector<TensorF> tensors;

  size_t size() const { return names.size(); }
};

// Zeros for every trainable parameter.
GradientMap ZeroGradients(const ParamStore& params);
// L2 norm over all tensors concatenated, accumulated in double.
double GlobalNorm(const GradientMap& g);

struct ExampleGradient {
  GradientMap grad;
  double loss = 0.0;
  // False when the labels cannot fit the output frames; grad is then zero.
  bool feasible = true;
};

// Worker count from DPASR_WORKERS, else the hardware concurrency (>= 1).
int DefaultWorkerCount();

// One independent forward/backward per example, restricted to trainable
// parameters. Examples are spread over `workers` threads but each result
// depends on its example alone, so the output does not depend on the worker
// count. Throws InvalidArgumentError on an empty batch.
std::vector<ExampleGradient> PerExampleGradients(
    const AsrModel& model, const ParamStore& params,
    const std::vector<const Example*>& batch, int workers = 1);

struct ClipInfo {
  double norm = 0.0;
  bool clipped = false;
};

// g *= min(1, C / ||g||). A map already within the bound is left untouched.
ClipInfo Clip(GradientMap* g, double clip_bound);

// (sum_i g_i + N(0, (sigma C)^2 I)) / denominator. The sum runs in input
// order; noise is drawn from `rng` in parameter order, one draw per
// coordinate, and skipped entirely when sigma = 0.
GradientMap AggregateAndNoise(const std::vector<GradientMap>& clipped,
                              double clip_bound, double noise_multiplier,
                              Rng& rng, double denominator);

// Adam with bias correction on a flat buffer. t is the 1-based step.
template <typename T>
void AdamUpdate(std::span<T> param, std::span<const T> grad, std::span<T> m,
                std::span<T> v, int64_t t, const AdamConfig& cfg);

class AdamState {
 public:
  AdamState() = default;
  // Zero moments for exactly the trainable parameters of `params`.
  AdamState(const ParamStore& params, AdamConfig cfg);

  int64_t step() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  const std::map<std::string, TensorF>& first_moments() const { return m_; }
  const std::map<std::string, TensorF>& second_moments() const { return v_; }

  // Applies one update. The gradient names must equal the moment names.
  void Step(ParamStore* params, const GradientMap& grad);

 private:
  AdamConfig cfg_;
  std::map<std::string, TensorF> m_;
  std::map<std::string, TensorF> v_;
  int64_t step_ = 0;
};

struct StepStats {
  double loss = 0.0;            // mean over feasible examples
  int64_t realized_batch = 0;
  int64_t infeasible = 0;
  int64_t clipped = 0;
  std::vector<double> grad_norms;  // pre-clip, one per example
};

// One training step. With dp_enabled: per-example gradients, clipping,
// noise scaled by noise_multiplier, division by the expected batch size
// dp.batch_size, Adam, and one ledger step. Otherwise the plain mean of the
// feasible examples' gradients feeds Adam and the ledger is not touched.
// An empty DP batch still adds noise and counts as a step.
StepStats TrainStep(const AsrModel& model, ParamStore* params,
                    const std::vector<const Example*>& batch,
                    const DpConfig& dp, double noise_multiplier,
                    AdamState* adam, PrivacyLedger* ledger, Rng& noise_rng,
                    int workers = 1);

// Batch index generator. Poisson includes each index with probability
// batch_size / n, independently per step. Shuffle walks a fresh permutation
// per epoch in fixed-size chunks and drops the remainder.
class BatchSampler {
 public:
  BatchSampler(int64_t n, Sampling sampling, int64_t batch_size, Rng rng);
  std::vector<int64_t> Next();

 private:
  int64_t n_;
  Sampling sampling_;
  int64_t batch_size_;
  Rng rng_;
  int64_t step_ = 0;
  int64_t epoch_ = 0;
  std::vector<int64_t> perm_;
  size_t cursor_ = 0;
};

}  // namespace dpasr

#endif  // DPASR_DPSGD_H_
