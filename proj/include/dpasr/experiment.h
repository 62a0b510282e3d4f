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

#ifndef DPASR_EXPERIMENT_H_
#define DPASR_EXPERIMENT_H_

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dpasr/ctc.h"
#include "dpasr/data.h"
#include "dpasr/dpsgd.h"
#include "dpasr/model.h"
#include "dpasr/peft.h"
#include "json.hpp"

namespace dpasr {

struct EvalSplit {
  std::string name;
  std::string path;
};

struct ExperimentConfig {
  ModelConfig model;
  PeftConfig peft;
  DpConfig dp;
  AdamConfig adam;

  std::string train_data;
  std::vector<EvalSplit> eval_data;
  // Starting weights; empty means a fresh InitModel(model, seed).
  std::string base_checkpoint;

  // Learning rates to try. Each runs to completion; the report keeps every
  // outcome and promotes the run with the lowest final WER on the first
  // eval split. Empty means {adam.lr}.
  std::vector<double> lr_grid;

  uint64_t seed = 0;
  // Evaluate on the first split every this many steps (0: only at the end),
  // using at most eval_max_utterances utterances for the periodic checks.
  int64_t eval_every = 0;
  int64_t eval_max_utterances = 64;

  // Pre-training: BitFit mask plus decoder head, non-private.
  int64_t pretrain_steps = 300;
  int64_t pretrain_batch = 64;
  // Utterances at the end of the training corpus held out for loss checks.
  int64_t pretrain_heldout = 128;

  void Validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);
ExperimentConfig LoadExperimentConfig(const std::string& path);

// Wall-clock numbers are kept apart from the report body so the body stays
// byte-identical across repeated runs.
struct Timing {
  double wall_seconds = 0.0;
  double steps_per_second = 0.0;
};

struct RunReport {
  nlohmann::json body = nlohmann::json::object();
  Timing timing;

  // Canonical serialization of the body.
  std::string Canonical() const { return body.dump(2) + "\n"; }
};

struct EvalResult {
  WerReport wer;
  double mean_loss = 0.0;
  int64_t utterances = 0;
  int64_t infeasible = 0;
};

// Greedy decoding + corpus WER over the first max_utterances (0 = all).
EvalResult EvaluateSplit(const AsrModel& model, const ParamStore& params,
                         const Dataset& data, int64_t max_utterances = 0,
                         int workers = 1);

// Throws InvalidArgumentError if the dataset vocabulary or feature_dim does
// not fit the model.
void CheckCompatible(const ModelConfig& model, const Manifest& manifest);

// Trains the encoder biases and the CTC head without privacy, writes the
// checkpoint when a path is given and returns the pre-training report.
RunReport RunPretrain(const ExperimentConfig& cfg,
                      const std::string& checkpoint_out, int workers = 1);

RunReport RunDpFinetune(const ExperimentConfig& cfg, int workers = 1,
                        const std::string& checkpoint_out = "");

RunReport RunEvaluate(const std::string& checkpoint,
                      const std::vector<EvalSplit>& splits, int workers = 1);

// One finetune per multiplier m: batch * m, steps / m (floored), sigma
// recalibrated to the same (epsilon, delta). Rows whose step count floors to
// zero are skipped and listed under "skipped".
RunReport RunSweep(const ExperimentConfig& cfg,
                   const std::vector<int64_t>& multipliers = {1, 2, 4, 8, 12},
                   int workers = 1);

struct CalibrationResult {
  double noise_multiplier = 0.0;
  PrivacySpent spent;
};
CalibrationResult Calibrate(double q, int64_t steps, double epsilon,
                            double delta);

// The corpora used by the toy recipe, keyed by directory name: "public"
// (pre-training), "sensitive" (fine-tuning), "clean" and "other" (eval).
std::vector<std::pair<std::string, CorpusSpec>> ToyCorpora();
// Recipe defaults wired to the directories ToyCorpora() produces under root.
ExperimentConfig ToyExperiment(const std::string& data_root);

// Aligned-column text rendering of any report body.
std::string RenderReportText(const nlohmann::json& body);

void WriteReport(const RunReport& report, const std::string& path);

}  // namespace dpasr

#endif  // DPASR_EXPERIMENT_H_
