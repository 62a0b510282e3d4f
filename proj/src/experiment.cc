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

#include "dpasr/experiment.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>

#include "dpasr/accountant.h"
#include "dpasr/executor.h"
#include "dpasr/status.h"

namespace dpasr {
namespace fs = std::filesystem;
using nlohmann::json;

void ExperimentConfig::Validate() const {
  model.Validate();
  peft.Validate();
  dp.Validate();
  if (train_data.empty()) throw InvalidArgumentError("config: train_data is empty");
  if (!fs::exists(fs::path(train_data) / "manifest.json")) {
    throw InvalidArgumentError("config: no dataset at '" + train_data + "'");
  }
  for (const EvalSplit& s : eval_data) {
    if (!fs::exists(fs::path(s.path) / "manifest.json")) {
      throw InvalidArgumentError("config: no dataset at '" + s.path +
                                 "' (split " + s.name + ")");
    }
  }
  if (!base_checkpoint.empty() && !fs::exists(base_checkpoint)) {
    throw InvalidArgumentError("config: base checkpoint '" + base_checkpoint +
                               "' does not exist");
  }
  for (double lr : lr_grid) {
    if (!(lr > 0.0)) throw InvalidArgumentError("config: learning rates must be > 0");
  }
  if (!(adam.lr > 0.0)) throw InvalidArgumentError("config: adam.lr must be > 0");
  if (eval_every < 0 || eval_max_utterances < 0) {
    throw InvalidArgumentError("config: eval cadence must be >= 0");
  }
  if (pretrain_steps < 0 || pretrain_batch < 1 || pretrain_heldout < 0) {
    throw InvalidArgumentError("config: bad pretrain settings");
  }
}

void to_json(json& j, const ExperimentConfig& c) {
  json splits = json::array();
  for (const EvalSplit& s : c.eval_data) {
    splits.push_back({{"name", s.name}, {"path", s.path}});
  }
  j = {{"model", c.model},
       {"peft", c.peft},
       {"dp", c.dp},
       {"adam", c.adam},
       {"train_data", c.train_data},
       {"eval_data", splits},
       {"base_checkpoint", c.base_checkpoint},
       {"lr_grid", c.lr_grid},
       {"seed", c.seed},
       {"eval_every", c.eval_every},
       {"eval_max_utterances", c.eval_max_utterances},
       {"pretrain_steps", c.pretrain_steps},
       {"pretrain_batch", c.pretrain_batch},
       {"pretrain_heldout", c.pretrain_heldout}};
}

void from_json(const json& j, ExperimentConfig& c) {
  ExperimentConfig d;
  c.model = j.value("model", d.model);
  c.peft = j.value("peft", d.peft);
  c.dp = j.value("dp", d.dp);
  c.adam = j.value("adam", d.adam);
  c.train_data = j.value("train_data", d.train_data);
  c.eval_data.clear();
  if (j.contains("eval_data")) {
    for (const auto& s : j.at("eval_data")) {
      c.eval_data.push_back(
          {s.at("name").get<std::string>(), s.at("path").get<std::string>()});
    }
  }
  c.base_checkpoint = j.value("base_checkpoint", d.base_checkpoint);
  c.lr_grid = j.value("lr_grid", d.lr_grid);
  c.seed = j.value("seed", d.seed);
  c.eval_every = j.value("eval_every", d.eval_every);
  c.eval_max_utterances = j.value("eval_max_utterances", d.eval_max_utterances);
  c.pretrain_steps = j.value("pretrain_steps", d.pretrain_steps);
  c.pretrain_batch = j.value("pretrain_batch", d.pretrain_batch);
  c.pretrain_heldout = j.value("pretrain_heldout", d.pretrain_heldout);
}

ExperimentConfig LoadExperimentConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  try {
    return json::parse(in).get<ExperimentConfig>();
  } catch (const json::exception& e) {
    throw InvalidArgumentError("bad config '" + path + "': " + e.what());
  }
}

void CheckCompatible(const ModelConfig& model, const Manifest& manifest) {
  if (static_cast<int64_t>(manifest.vocabulary.size()) != model.vocab_size) {
    throw InvalidArgumentError(
        "vocabulary mismatch: dataset '" + manifest.dataset_id + "' has " +
        std::to_string(manifest.vocabulary.size()) + " symbols, model has " +
        std::to_string(model.vocab_size));
  }
  if (manifest.feature_dim != model.feature_dim) {
    throw InvalidArgumentError(
        "feature_dim mismatch: dataset '" + manifest.dataset_id + "' has " +
        std::to_string(manifest.feature_dim) + ", model expects " +
        std::to_string(model.feature_dim));
  }
}

namespace {

struct UttEval {
  WerReport wer;
  double loss = 0.0;
  bool feasible = true;
};

UttEval EvalOne(const AsrModel& model, const ParamStore& params,
                const Feeds<float>& param_feeds, const Utterance& u) {
  UttEval out;
  const LabelSeq labels = TranscriptLabels(u.transcript);
  ExampleGraph eg;
  try {
    eg = BuildExampleGraph(model, params, u.frames(), &labels);
  } catch (const InfeasibleLabelsError&) {
    eg = BuildExampleGraph(model, params, u.frames(), nullptr);
    out.feasible = false;
  }
  Feeds<float> feeds = param_feeds;
  feeds["features"] = &u.features;
  const Values<float> values = Forward(eg.graph, feeds);
  if (out.feasible) out.loss = values[eg.loss].data()[0];
  const LabelSeq hyp = GreedyDecode(values[eg.log_probs]);
  out.wer = ComputeWer(u.transcript, SplitWords(CharTokenizer::Decode(hyp)));
  return out;
}

template <typename Fn>
void ParallelFor(int64_t n, int workers, const Fn& fn) {
  const int w_count =
      std::max(1, std::min<int>(workers, static_cast<int>(std::max<int64_t>(n, 1))));
  if (w_count == 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(w_count);
  std::vector<std::thread> threads;
  for (int w = 0; w < w_count; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (int64_t i = w; i < n; i += w_count) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

json WerJson(const EvalResult& r) {
  return {{"wer", r.wer.wer},
          {"substitutions", r.wer.substitutions},
          {"insertions", r.wer.insertions},
          {"deletions", r.wer.deletions},
          {"reference_words", r.wer.reference_words},
          {"mean_loss", r.mean_loss},
          {"utterances", r.utterances},
          {"infeasible", r.infeasible}};
}

double Quantile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  const size_t k = std::min(v.size() - 1,
                            static_cast<size_t>(p * static_cast<double>(v.size())));
  std::nth_element(v.begin(), v.begin() + k, v.end());
  return v[k];
}

double Seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// Base weights for a finetune: checkpoint if configured, else fresh init.
std::pair<ModelConfig, ParamStore> LoadBase(const ExperimentConfig& cfg) {
  if (!cfg.base_checkpoint.empty()) {
    LoadedModel lm = LoadModel(cfg.base_checkpoint);
    return {lm.config, std::move(lm.params)};
  }
  return {cfg.model, InitModel(cfg.model, Rng(cfg.seed).Split("init"))};
}

std::vector<std::pair<std::string, TensorF>> FrozenSnapshot(
    const ParamStore& params) {
  std::vector<std::pair<std::string, TensorF>> out;
  for (const Param& p : params.params()) {
    if (!p.trainable) out.emplace_back(p.name, p.value);
  }
  return out;
}

void CheckFrozen(const std::vector<std::pair<std::string, TensorF>>& before,
                 const ParamStore& params) {
  for (const auto& [name, value] : before) {
    if (!value.BitEqual(params.Get(name).value)) {
      throw InvariantViolation("frozen parameter '" + name +
                               "' changed during training");
    }
  }
}

double MeanLoss(const AsrModel& model, const ParamStore& params,
                const std::vector<Example>& examples, int workers) {
  if (examples.empty()) return 0.0;
  const Feeds<float> param_feeds = ParamFeeds(params);
  std::vector<double> losses(examples.size(), 0.0);
  std::vector<char> ok(examples.size(), 1);
  ParallelFor(static_cast<int64_t>(examples.size()), workers, [&](int64_t i) {
    const Example& ex = examples[i];
    ExampleGraph eg;
    try {
      eg = BuildExampleGraph(model, params, ex.features.dim(0), &ex.labels);
    } catch (const InfeasibleLabelsError&) {
      ok[i] = 0;
      return;
    }
    Feeds<float> feeds = param_feeds;
    feeds["features"] = &ex.features;
    losses[i] = Forward(eg.graph, feeds)[eg.loss].data()[0];
  });
  double sum = 0.0;
  int64_t n = 0;
  for (size_t i = 0; i < losses.size(); ++i) {
    if (ok[i]) {
      sum += losses[i];
      ++n;
    }
  }
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

struct FinetuneOutcome {
  json body;
  ParamStore params;
  ModelConfig model;
  int64_t steps = 0;
};

FinetuneOutcome FinetuneOnce(const ExperimentConfig& cfg, double lr,
                             const std::vector<Example>& train,
                             const std::vector<Dataset>& evals, int workers) {
  auto [model_cfg, base] = LoadBase(cfg);
  const AsrModel model(model_cfg);
  const Rng root(cfg.seed);
  auto [params, peft_report] =
      ApplyPeft(std::move(base), model_cfg, cfg.peft, root.Split("peft"));

  const DpConfig& dp = cfg.dp;
  const int64_t n = static_cast<int64_t>(train.size());
  if (dp.batch_size > n) {
    throw InvalidArgumentError("finetune: batch size " +
                               std::to_string(dp.batch_size) +
                               " exceeds dataset size " + std::to_string(n));
  }
  const double q = static_cast<double>(dp.batch_size) / static_cast<double>(n);
  const double delta = dp.EffectiveDelta(n);
  double sigma = 0.0;
  if (dp.dp_enabled) {
    sigma = dp.noise_multiplier >= 0.0
                ? dp.noise_multiplier
                : CalibrateSigma(q, dp.steps, dp.target_epsilon, delta);
  }
  std::unique_ptr<PrivacyLedger> ledger;
  if (dp.dp_enabled) {
    if (sigma <= 0.0) {
      throw InvalidArgumentError(
          "finetune: dp_enabled needs a positive noise multiplier for "
          "accounting");
    }
    ledger = std::make_unique<PrivacyLedger>(q, sigma);
  }

  AdamConfig adam_cfg = cfg.adam;
  adam_cfg.lr = lr;
  AdamState adam(params, adam_cfg);
  BatchSampler sampler(n, dp.sampling, dp.batch_size, root.Split("batches"));
  Rng noise_rng = root.Split("noise");
  const auto frozen = FrozenSnapshot(params);

  json loss_curve = json::array();
  json eval_curve = json::array();
  std::vector<double> norms;
  int64_t clipped = 0, infeasible = 0, processed = 0;
  double best_first = std::numeric_limits<double>::infinity();
  for (int64_t step = 0; step < dp.steps; ++step) {
    std::vector<const Example*> batch;
    for (int64_t i : sampler.Next()) batch.push_back(&train[i]);
    const StepStats st = TrainStep(model, &params, batch, dp, sigma, &adam,
                                   ledger.get(), noise_rng, workers);
    loss_curve.push_back(st.loss);
    clipped += st.clipped;
    infeasible += st.infeasible;
    processed += st.realized_batch;
    norms.insert(norms.end(), st.grad_norms.begin(), st.grad_norms.end());
    if (cfg.eval_every > 0 && !evals.empty() && (step + 1) % cfg.eval_every == 0 &&
        step + 1 < dp.steps) {
      const EvalResult r = EvaluateSplit(model, params, evals[0],
                                         cfg.eval_max_utterances, workers);
      eval_curve.push_back({{"step", step + 1}, {"wer", r.wer.wer}});
      best_first = std::min(best_first, r.wer.wer);
    }
  }
  CheckFrozen(frozen, params);

  json final_wer = json::object(), best_wer = json::object(),
       eval = json::object();
  for (size_t s = 0; s < evals.size(); ++s) {
    const EvalResult r = EvaluateSplit(model, params, evals[s], 0, workers);
    const std::string& name = cfg.eval_data[s].name;
    final_wer[name] = r.wer.wer;
    // Periodic checks only cover the first split, on a subset.
    best_wer[name] = s == 0 ? std::min(best_first, r.wer.wer) : r.wer.wer;
    eval[name] = WerJson(r);
  }

  json body;
  body["kind"] = "finetune";
  body["seed"] = cfg.seed;
  body["config"] = cfg;
  body["method"] = PeftMethodName(cfg.peft.method);
  body["dp_enabled"] = dp.dp_enabled;
  body["lr"] = lr;
  body["dataset_size"] = n;
  body["batch_size"] = dp.batch_size;
  body["steps"] = dp.steps;
  body["q"] = q;
  body["delta"] = delta;
  body["noise_multiplier"] = sigma;
  if (ledger) {
    const PrivacySpent spent = ledger->Spent(delta);
    if (spent.epsilon > dp.target_epsilon + 1e-3) {
      throw InvariantViolation(
          "budget exceeded: epsilon " + std::to_string(spent.epsilon) +
          " > target " + std::to_string(dp.target_epsilon));
    }
    body["epsilon"] = spent.epsilon;
    body["achieving_order"] = spent.achieving_order;
    body["accounting"] = "rdp, poisson-subsampled gaussian";
  } else {
    body["epsilon"] = nullptr;
  }
  body["target_epsilon"] = dp.target_epsilon;
  body["params"] = peft_report;
  body["examples_processed"] = processed;
  body["expected_examples_processed"] = dp.batch_size * dp.steps;
  body["infeasible_examples"] = infeasible;
  body["clipped_fraction"] =
      norms.empty() ? 0.0
                    : static_cast<double>(clipped) / static_cast<double>(norms.size());
  double norm_sum = 0.0;
  for (double v : norms) norm_sum += v;
  body["grad_norm"] = {
      {"mean", norms.empty() ? 0.0 : norm_sum / static_cast<double>(norms.size())},
      {"p50", Quantile(norms, 0.5)},
      {"p90", Quantile(norms, 0.9)},
      {"max", norms.empty() ? 0.0 : *std::max_element(norms.begin(), norms.end())}};
  body["loss_curve"] = loss_curve;
  body["eval_curve"] = eval_curve;
  body["final_wer"] = final_wer;
  body["best_wer"] = best_wer;
  body["eval"] = eval;
  return {std::move(body), std::move(params), model_cfg, dp.steps};
}

std::vector<Dataset> OpenEvals(const std::vector<EvalSplit>& splits,
                               const ModelConfig& model) {
  std::vector<Dataset> out;
  for (const EvalSplit& s : splits) {
    out.push_back(Dataset::Open(s.path));
    CheckCompatible(model, out.back().manifest());
  }
  return out;
}

}  // namespace

EvalResult EvaluateSplit(const AsrModel& model, const ParamStore& params,
                         const Dataset& data, int64_t max_utterances,
                         int workers) {
  int64_t n = data.size();
  if (max_utterances > 0) n = std::min(n, max_utterances);
  if (n == 0) throw InvalidArgumentError("evaluate: dataset is empty");
  const Feeds<float> param_feeds = ParamFeeds(params);
  std::vector<UttEval> per(n);
  ParallelFor(n, workers, [&](int64_t i) {
    per[i] = EvalOne(model, params, param_feeds, data.Load(i));
  });
  EvalResult out;
  out.utterances = n;
  double loss_sum = 0.0;
  int64_t feasible = 0;
  for (const UttEval& u : per) {
    out.wer = Accumulate(out.wer, u.wer);
    if (u.feasible) {
      loss_sum += u.loss;
      ++feasible;
    } else {
      ++out.infeasible;
    }
  }
  out.mean_loss = feasible > 0 ? loss_sum / static_cast<double>(feasible) : 0.0;
  return out;
}

RunReport RunPretrain(const ExperimentConfig& cfg,
                      const std::string& checkpoint_out, int workers) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.model.Validate();
  const Dataset data = Dataset::Open(cfg.train_data);
  CheckCompatible(cfg.model, data.manifest());
  const int64_t heldout = std::min(cfg.pretrain_heldout, data.size() / 2);
  const int64_t n_train = data.size() - heldout;
  if (n_train < cfg.pretrain_batch) {
    throw InvalidArgumentError("pretrain: corpus too small for batch " +
                               std::to_string(cfg.pretrain_batch));
  }

  const AsrModel model(cfg.model);
  const Rng root(cfg.seed);
  ParamStore init = InitModel(cfg.model, root.Split("init"));
  PeftConfig mask;
  mask.method = PeftMethod::kBitFit;
  mask.freeze_norm_bias = true;
  mask.decoder_head_trainable = true;
  auto [params, report] = ApplyPeft(init, cfg.model, mask, root.Split("peft"));
  for (const Param& p : params.params()) {
    const bool head = p.name.rfind("head/", 0) == 0;
    if (p.trainable != (head || p.kind == ParamKind::kBias)) {
      throw InvariantViolation("pretrain: unexpected trainable mask at '" +
                               p.name + "'");
    }
  }

  std::vector<Example> held;
  for (int64_t i = n_train; i < data.size(); ++i) held.push_back(data.LoadExample(i));
  const double loss0 = MeanLoss(model, params, held, workers);

  DpConfig plain;
  plain.dp_enabled = false;
  AdamState adam(params, cfg.adam);
  BatchSampler sampler(n_train, Sampling::kShuffle, cfg.pretrain_batch,
                       root.Split("batches"));
  Rng unused = root.Split("noise");
  const auto frozen = FrozenSnapshot(params);
  json loss_curve = json::array();
  for (int64_t step = 0; step < cfg.pretrain_steps; ++step) {
    std::vector<Example> batch_data;
    for (int64_t i : sampler.Next()) batch_data.push_back(data.LoadExample(i));
    std::vector<const Example*> batch;
    for (const Example& e : batch_data) batch.push_back(&e);
    const StepStats st = TrainStep(model, &params, batch, plain, 0.0, &adam,
                                   nullptr, unused, workers);
    loss_curve.push_back(st.loss);
  }
  CheckFrozen(frozen, params);
  const double loss1 = MeanLoss(model, params, held, workers);

  json body;
  body["kind"] = "pretrain";
  body["seed"] = cfg.seed;
  body["config"] = cfg;
  body["steps"] = cfg.pretrain_steps;
  body["batch_size"] = cfg.pretrain_batch;
  body["train_utterances"] = n_train;
  body["heldout_utterances"] = heldout;
  body["params"] = report;
  body["heldout_loss_initial"] = loss0;
  body["heldout_loss_final"] = loss1;
  body["loss_curve"] = loss_curve;

  if (!checkpoint_out.empty()) {
    SaveModel(checkpoint_out, cfg.model, params,
              {{"stage", "pretrain"}, {"seed", cfg.seed}});
  }
  RunReport out;
  out.body = std::move(body);
  out.timing.wall_seconds = Seconds(t0);
  out.timing.steps_per_second =
      out.timing.wall_seconds > 0 ? cfg.pretrain_steps / out.timing.wall_seconds : 0;
  return out;
}

RunReport RunDpFinetune(const ExperimentConfig& cfg, int workers,
                        const std::string& checkpoint_out) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.Validate();
  const Dataset train_ds = Dataset::Open(cfg.train_data);
  const ModelConfig model_cfg =
      cfg.base_checkpoint.empty() ? cfg.model : LoadModel(cfg.base_checkpoint).config;
  CheckCompatible(model_cfg, train_ds.manifest());
  const std::vector<Example> train = train_ds.LoadAllExamples();
  const std::vector<Dataset> evals = OpenEvals(cfg.eval_data, model_cfg);

  std::vector<double> grid = cfg.lr_grid;
  if (grid.empty()) grid.push_back(cfg.adam.lr);

  std::optional<FinetuneOutcome> best;
  double best_score = std::numeric_limits<double>::infinity();
  json grid_rows = json::array();
  for (double lr : grid) {
    FinetuneOutcome o = FinetuneOnce(cfg, lr, train, evals, workers);
    const double score = evals.empty()
                             ? o.body["loss_curve"].back().get<double>()
                             : o.body["final_wer"][cfg.eval_data[0].name].get<double>();
    grid_rows.push_back({{"lr", lr}, {"score", score}});
    if (!best || score < best_score) {
      best_score = score;
      best = std::move(o);
    }
  }
  RunReport out;
  out.body = std::move(best->body);
  out.body["lr_grid"] = grid_rows;
  if (!checkpoint_out.empty()) {
    SaveModel(checkpoint_out, best->model, best->params,
              {{"stage", "finetune"},
               {"seed", cfg.seed},
               {"peft", cfg.peft}});
  }
  out.timing.wall_seconds = Seconds(t0);
  const double total_steps = static_cast<double>(cfg.dp.steps * grid.size());
  out.timing.steps_per_second =
      out.timing.wall_seconds > 0 ? total_steps / out.timing.wall_seconds : 0;
  return out;
}

RunReport RunEvaluate(const std::string& checkpoint,
                      const std::vector<EvalSplit>& splits, int workers) {
  const auto t0 = std::chrono::steady_clock::now();
  if (splits.empty()) throw InvalidArgumentError("evaluate: no splits given");
  LoadedModel lm = LoadModel(checkpoint);
  const AsrModel model(lm.config);
  json eval = json::object();
  for (const EvalSplit& s : splits) {
    const Dataset ds = Dataset::Open(s.path);
    CheckCompatible(lm.config, ds.manifest());
    eval[s.name] = WerJson(EvaluateSplit(model, lm.params, ds, 0, workers));
  }
  RunReport out;
  out.body = {{"kind", "evaluate"},
              {"checkpoint", fs::path(checkpoint).filename().string()},
              {"model", lm.config},
              {"eval", eval}};
  out.timing.wall_seconds = Seconds(t0);
  return out;
}

RunReport RunSweep(const ExperimentConfig& cfg,
                   const std::vector<int64_t>& multipliers, int workers) {
  const auto t0 = std::chrono::steady_clock::now();
  if (multipliers.empty()) throw InvalidArgumentError("sweep: no multipliers");
  json rows = json::array();
  json skipped = json::array();
  std::string split0 = cfg.eval_data.empty() ? "" : cfg.eval_data[0].name;
  double best = std::numeric_limits<double>::infinity();
  int64_t best_m = 0;
  double total_steps = 0;
  for (int64_t m : multipliers) {
    if (m < 1) throw InvalidArgumentError("sweep: multipliers must be >= 1");
    ExperimentConfig c = cfg;
    c.dp.batch_size = cfg.dp.batch_size * m;
    c.dp.steps = cfg.dp.steps / m;
    if (c.dp.steps == 0) {
      skipped.push_back({{"multiplier", m}, {"reason", "steps floor to zero"}});
      continue;
    }
    // Re-calibrate unless the base config pins sigma.
    RunReport r = RunDpFinetune(c, workers);
    total_steps += static_cast<double>(c.dp.steps);
    json row = {{"method", r.body["method"]},
                {"multiplier", m},
                {"batch_size", c.dp.batch_size},
                {"steps", c.dp.steps},
                {"noise_multiplier", r.body["noise_multiplier"]},
                {"epsilon", r.body["epsilon"]},
                {"examples_budget", c.dp.batch_size * c.dp.steps},
                {"examples_processed", r.body["examples_processed"]},
                {"final_wer", r.body["final_wer"]}};
    rows.push_back(row);
    if (!split0.empty()) {
      const double w = r.body["final_wer"][split0].get<double>();
      if (w < best) {
        best = w;
        best_m = m;
      }
    }
  }
  RunReport out;
  out.body = {{"kind", "sweep"},
              {"seed", cfg.seed},
              {"config", cfg},
              {"multipliers", multipliers},
              {"rows", rows},
              {"skipped", skipped},
              {"optimal_multiplier", best_m}};
  out.timing.wall_seconds = Seconds(t0);
  out.timing.steps_per_second =
      out.timing.wall_seconds > 0 ? total_steps / out.timing.wall_seconds : 0;
  return out;
}

CalibrationResult Calibrate(double q, int64_t steps, double epsilon,
                            double delta) {
  CalibrationResult r;
  r.noise_multiplier = CalibrateSigma(q, steps, epsilon, delta);
  r.spent = ComputeEpsilon(q, r.noise_multiplier, steps, delta);
  return r;
}

std::vector<std::pair<std::string, CorpusSpec>> ToyCorpora() {
  CorpusSpec pub;  // 20000 x 7 words, voices from seed 11
  pub.seed = 1;
  CorpusSpec sensitive;
  sensitive.num_utterances = 2048;
  sensitive.words_per_utterance = 4;
  sensitive.seed = 101;
  sensitive.voice_seed = 202;
  CorpusSpec clean = sensitive;
  clean.num_utterances = 256;
  clean.seed = 303;
  clean.jitter = 0.05;
  CorpusSpec other = sensitive;
  other.num_utterances = 256;
  other.seed = 404;
  other.voice_seed = 505;
  other.jitter = 0.2;
  return {{"public", pub}, {"sensitive", sensitive}, {"clean", clean},
          {"other", other}};
}

ExperimentConfig ToyExperiment(const std::string& data_root) {
  ExperimentConfig c;
  c.train_data = (fs::path(data_root) / "sensitive").string();
  c.eval_data = {{"clean", (fs::path(data_root) / "clean").string()},
                 {"other", (fs::path(data_root) / "other").string()}};
  c.dp.batch_size = 64;
  c.dp.steps = 2000;
  c.dp.delta_from_dataset = true;
  return c;
}

namespace {

std::string Cell(const json& v) {
  if (v.is_null()) return "-";
  if (v.is_number_float()) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v.get<double>();
    return os.str();
  }
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::string Table(const std::vector<std::string>& header,
                  const std::vector<std::vector<std::string>>& rows) {
  std::vector<size_t> width(header.size());
  for (size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows) {
    for (size_t c = 0; c < r.size() && c < width.size(); ++c) {
      width[c] = std::max(width[c], r[c].size());
    }
  }
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& r) {
    for (size_t c = 0; c < width.size(); ++c) {
      const std::string& s = c < r.size() ? r[c] : "";
      os << (c ? "  " : "") << std::left << std::setw(static_cast<int>(width[c])) << s;
    }
    os << "\n";
  };
  line(header);
  std::vector<std::string> rule;
  for (size_t w : width) rule.push_back(std::string(w, '-'));
  line(rule);
  for (const auto& r : rows) line(r);
  return os.str();
}

std::string EvalTable(const json& eval) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& [name, r] : eval.items()) {
    rows.push_back({name, Cell(r["wer"]), Cell(r["substitutions"]),
                    Cell(r["insertions"]), Cell(r["deletions"]),
                    Cell(r["reference_words"]), Cell(r["mean_loss"])});
  }
  return Table({"split", "wer", "sub", "ins", "del", "words", "loss"}, rows);
}

}  // namespace

std::string RenderReportText(const json& body) {
  std::ostringstream os;
  const std::string kind = body.value("kind", "");
  if (kind == "sweep") {
    std::vector<std::string> header = {"method", "mult", "batch", "steps",
                                       "sigma", "epsilon", "examples"};
    std::vector<std::string> splits;
    if (!body["rows"].empty()) {
      for (const auto& [name, _] : body["rows"][0]["final_wer"].items()) {
        splits.push_back(name);
        header.push_back("wer_" + name);
      }
    }
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : body["rows"]) {
      std::vector<std::string> row = {
          Cell(r["method"]),   Cell(r["multiplier"]),       Cell(r["batch_size"]),
          Cell(r["steps"]),    Cell(r["noise_multiplier"]), Cell(r["epsilon"]),
          Cell(r["examples_budget"])};
      for (const std::string& s : splits) row.push_back(Cell(r["final_wer"][s]));
      rows.push_back(row);
    }
    os << Table(header, rows);
    os << "optimal multiplier: " << Cell(body["optimal_multiplier"]) << "\n";
    for (const auto& s : body["skipped"]) {
      os << "skipped multiplier " << Cell(s["multiplier"]) << ": "
         << Cell(s["reason"]) << "\n";
    }
    return os.str();
  }
  std::vector<std::vector<std::string>> kv;
  for (const auto& [key, v] : body.items()) {
    if (v.is_primitive()) kv.push_back({key, Cell(v)});
  }
  if (body.contains("params")) {
    for (const auto& [key, v] : body["params"].items()) {
      kv.push_back({"params." + key, Cell(v)});
    }
  }
  if (body.contains("loss_curve") && !body["loss_curve"].empty()) {
    kv.push_back({"loss_first", Cell(body["loss_curve"].front())});
    kv.push_back({"loss_last", Cell(body["loss_curve"].back())});
  }
  os << Table({"field", "value"}, kv);
  if (body.contains("eval")) os << "\n" << EvalTable(body["eval"]);
  return os.str();
}

void WriteReport(const RunReport& report, const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    fs::create_directories(parent, ec);
  }
  {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write report '" + path + "'");
    out << report.Canonical();
  }
  const fs::path p(path);
  const fs::path timing = p.parent_path() / (p.stem().string() + ".timing.json");
  std::ofstream out(timing, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + timing.string() + "'");
  out << json{{"wall_seconds", report.timing.wall_seconds},
              {"steps_per_second", report.timing.steps_per_second}}
             .dump(2)
      << "\n";
}

}  // namespace dpasr
