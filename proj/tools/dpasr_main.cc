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

// dpasr: command-line harness for data generation, pre-training, private
// fine-tuning, noise calibration, evaluation and batch-size sweeps.
//
//   dpasr gen-data --preset toy --out data/
//   dpasr pretrain --train data/public --steps 300 --checkpoint base.ckpt
//   dpasr finetune --toy-data data/ --method bitfit --base base.ckpt
//   dpasr calibrate --batch 64 --dataset-size 2048 --steps 2000
//   dpasr evaluate --checkpoint ft.ckpt --split clean=data/clean
//   dpasr sweep --toy-data data/ --method bitfit
//   dpasr report run.json
//
// DPASR_WORKERS sets the number of threads for per-example work.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dpasr/accountant.h"
#include "dpasr/data.h"
#include "dpasr/experiment.h"
#include "dpasr/status.h"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using dpasr::ExperimentConfig;
using nlohmann::json;

// Flags shared by the training subcommands. Unset optionals leave the
// config file (or toy recipe) value alone.
struct RunFlags {
  std::string config;
  std::string toy_data;
  std::string train;
  std::vector<std::string> splits;
  std::string base;
  std::optional<std::string> method;
  std::optional<int64_t> rank;
  std::optional<std::string> placement;
  std::optional<double> init_sigma;
  std::optional<int64_t> bottleneck;
  bool train_norm_bias = false;
  bool freeze_head = false;
  bool lora_ffn_first_only = false;
  std::optional<int64_t> steps;
  std::optional<int64_t> batch;
  std::optional<double> lr;
  std::vector<double> lr_grid;
  std::optional<double> sigma;
  std::optional<double> clip;
  std::optional<double> epsilon;
  std::optional<double> delta;
  bool delta_from_dataset = false;
  bool no_dp = false;
  std::optional<std::string> sampling;
  std::optional<uint64_t> seed;
  std::optional<int64_t> eval_every;
  std::string report;
  std::string checkpoint;
  bool text = false;
};

void AddRunFlags(CLI::App* app, RunFlags* f) {
  app->add_option("--config", f->config, "Experiment config (JSON)");
  app->add_option("--toy-data", f->toy_data,
                  "Root produced by `gen-data --preset toy`; wires the toy recipe");
  app->add_option("--train", f->train, "Training dataset directory");
  app->add_option("--split", f->splits, "Eval split as name=dir (repeatable)");
  app->add_option("--base", f->base, "Base checkpoint");
  app->add_option("--method", f->method, "full | bitfit | lora | rp | adapter");
  app->add_option("--rank", f->rank, "LoRA/RP rank");
  app->add_option("--placement", f->placement, "ffn | attention");
  app->add_option("--init-sigma", f->init_sigma, "LoRA/RP down-projection init std");
  app->add_option("--bottleneck", f->bottleneck, "Adapter bottleneck");
  app->add_flag("--train-norm-bias", f->train_norm_bias,
                "BitFit: also train group-norm biases");
  app->add_flag("--freeze-head", f->freeze_head, "PEFT: keep the CTC head frozen");
  app->add_flag("--lora-ffn-first-only", f->lora_ffn_first_only,
                "LoRA/RP at ffn placement: adapt w1 only");
  app->add_option("--steps", f->steps, "Training steps");
  app->add_option("--batch", f->batch, "Expected batch size");
  app->add_option("--lr", f->lr, "Adam learning rate");
  app->add_option("--lr-grid", f->lr_grid, "Learning rates to try")->delimiter(',');
  app->add_option("--sigma", f->sigma, "Noise multiplier (skips calibration)");
  app->add_option("--clip", f->clip, "Per-example L2 clip bound");
  app->add_option("--epsilon", f->epsilon, "Target epsilon");
  app->add_option("--delta", f->delta, "Target delta");
  app->add_flag("--delta-from-dataset", f->delta_from_dataset, "Use delta = 1/N");
  app->add_flag("--no-dp", f->no_dp, "Disable clipping, noise and accounting");
  app->add_option("--sampling", f->sampling, "poisson | shuffle");
  app->add_option("--seed", f->seed, "Run seed");
  app->add_option("--eval-every", f->eval_every, "Periodic eval cadence in steps");
  app->add_option("--report", f->report, "Write the JSON report here");
  app->add_flag("--text", f->text, "Also print the text rendering");
}

ExperimentConfig BuildConfig(const RunFlags& f) {
  ExperimentConfig c;
  if (!f.config.empty()) {
    c = dpasr::LoadExperimentConfig(f.config);
  } else if (!f.toy_data.empty()) {
    c = dpasr::ToyExperiment(f.toy_data);
  }
  if (!f.train.empty()) c.train_data = f.train;
  if (!f.splits.empty()) {
    c.eval_data.clear();
    for (const std::string& s : f.splits) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        throw dpasr::InvalidArgumentError("--split expects name=dir, got '" + s + "'");
      }
      c.eval_data.push_back({s.substr(0, eq), s.substr(eq + 1)});
    }
  }
  if (!f.base.empty()) c.base_checkpoint = f.base;
  if (f.method) c.peft.method = dpasr::ParsePeftMethod(*f.method);
  if (f.rank) c.peft.rank = *f.rank;
  if (f.placement) c.peft.placement = dpasr::ParsePlacement(*f.placement);
  if (f.init_sigma) c.peft.init_sigma = *f.init_sigma;
  if (f.bottleneck) c.peft.bottleneck = *f.bottleneck;
  if (f.train_norm_bias) c.peft.freeze_norm_bias = false;
  if (f.freeze_head) c.peft.decoder_head_trainable = false;
  if (f.lora_ffn_first_only) c.peft.lora_ffn_both = false;
  if (f.steps) c.dp.steps = *f.steps;
  if (f.batch) c.dp.batch_size = *f.batch;
  if (f.lr) c.adam.lr = *f.lr;
  if (!f.lr_grid.empty()) c.lr_grid = f.lr_grid;
  if (f.sigma) c.dp.noise_multiplier = *f.sigma;
  if (f.clip) c.dp.clip_bound = *f.clip;
  if (f.epsilon) c.dp.target_epsilon = *f.epsilon;
  if (f.delta) {
    c.dp.target_delta = *f.delta;
    c.dp.delta_from_dataset = false;
  }
  if (f.delta_from_dataset) c.dp.delta_from_dataset = true;
  if (f.no_dp) c.dp.dp_enabled = false;
  if (f.sampling) c.dp.sampling = dpasr::ParseSampling(*f.sampling);
  if (f.seed) c.seed = *f.seed;
  if (f.eval_every) c.eval_every = *f.eval_every;
  return c;
}

void Emit(const dpasr::RunReport& r, const std::string& path, bool text) {
  if (!path.empty()) {
    dpasr::WriteReport(r, path);
    std::cerr << "wrote " << path << "\n";
  } else {
    std::cout << r.Canonical();
  }
  if (text) std::cout << dpasr::RenderReportText(r.body);
  std::cerr << "wall " << r.timing.wall_seconds << " s";
  if (r.timing.steps_per_second > 0) {
    std::cerr << ", " << r.timing.steps_per_second << " steps/s";
  }
  std::cerr << "\n";
}

int Run(int argc, char** argv) {
  CLI::App app{"Differentially private PEFT for a miniature CTC recognizer"};
  app.require_subcommand(1);
  const int workers = dpasr::DefaultWorkerCount();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  dpasr::CorpusSpec spec;
  std::string gen_out, gen_preset, gen_id;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--preset", gen_preset, "toy: public, sensitive, clean, other");
  gen->add_option("--id", gen_id, "Dataset id (default: directory name)");
  gen->add_option("--num-utterances", spec.num_utterances);
  gen->add_option("--words-per-utterance", spec.words_per_utterance);
  gen->add_option("--vocab-words", spec.vocab_words);
  gen->add_option("--num-voices", spec.num_voices);
  gen->add_option("--seed", spec.seed);
  gen->add_option("--lexicon-seed", spec.lexicon_seed);
  gen->add_option("--voice-seed", spec.voice_seed);
  gen->add_option("--embedding-seed", spec.embedding_seed);
  gen->add_option("--jitter", spec.jitter);
  gen->add_flag("--zipf", spec.zipf, "Zipf-weighted word sampling");
  gen->add_option("--feature-dim", spec.feature_dim);

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Non-private bias + head pre-training");
  RunFlags pre_flags;
  int64_t pre_steps = -1;
  AddRunFlags(pre, &pre_flags);
  pre->add_option("--pretrain-steps", pre_steps, "Pre-training steps");
  pre->add_option("--checkpoint", pre_flags.checkpoint, "Output checkpoint")->required();

  // finetune
  auto* ft = app.add_subcommand("finetune", "(DP) fine-tuning with a PEFT method");
  RunFlags ft_flags;
  AddRunFlags(ft, &ft_flags);
  ft->add_option("--checkpoint", ft_flags.checkpoint, "Write the tuned checkpoint");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "Noise multiplier for a budget");
  double cal_q = -1.0, cal_eps = 10.0, cal_delta = 3.52e-6;
  int64_t cal_batch = 0, cal_n = 0, cal_steps = 0;
  bool cal_json = false;
  cal->add_option("--q", cal_q, "Sampling rate");
  cal->add_option("--batch", cal_batch, "Expected batch size (with --dataset-size)");
  cal->add_option("--dataset-size", cal_n, "Dataset size (with --batch)");
  cal->add_option("--steps", cal_steps, "Training steps")->required();
  cal->add_option("--epsilon", cal_eps, "Target epsilon");
  cal->add_option("--delta", cal_delta, "Target delta");
  cal->add_flag("--json", cal_json, "JSON output");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Greedy decoding WER per split");
  std::string ev_ckpt, ev_report;
  std::vector<std::string> ev_splits;
  bool ev_text = false;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint")->required();
  ev->add_option("--split", ev_splits, "name=dir (repeatable)")->required();
  ev->add_option("--report", ev_report, "Write the JSON report here");
  ev->add_flag("--text", ev_text, "Also print the text rendering");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Compute-matched batch-size sweep");
  RunFlags sw_flags;
  std::vector<int64_t> multipliers = {1, 2, 4, 8, 12};
  AddRunFlags(sw, &sw_flags);
  sw->add_option("--multipliers", multipliers, "Batch multipliers")->delimiter(',');

  // report
  auto* rep = app.add_subcommand("report", "Render JSON reports as text");
  std::vector<std::string> rep_files;
  rep->add_option("files", rep_files, "Report files")->required();

  CLI11_PARSE(app, argc, argv);

  if (*gen) {
    if (gen_preset == "toy") {
      for (const auto& [name, s] : dpasr::ToyCorpora()) {
        const std::string dir = (fs::path(gen_out) / name).string();
        dpasr::WriteDataset(dir, name, dpasr::GenerateCorpus(s, name, workers),
                            s.feature_dim, s);
        std::cerr << "wrote " << dir << " (" << s.num_utterances
                  << " utterances)\n";
      }
    } else if (!gen_preset.empty()) {
      throw dpasr::InvalidArgumentError("unknown preset '" + gen_preset + "'");
    } else {
      const std::string id =
          gen_id.empty() ? fs::path(gen_out).filename().string() : gen_id;
      dpasr::WriteDataset(gen_out, id, dpasr::GenerateCorpus(spec, id, workers),
                          spec.feature_dim, spec);
      std::cerr << "wrote " << gen_out << " (" << spec.num_utterances
                << " utterances)\n";
    }
  } else if (*pre) {
    ExperimentConfig c = BuildConfig(pre_flags);
    if (pre_steps >= 0) c.pretrain_steps = pre_steps;
    Emit(dpasr::RunPretrain(c, pre_flags.checkpoint, workers), pre_flags.report,
         pre_flags.text);
  } else if (*ft) {
    ExperimentConfig c = BuildConfig(ft_flags);
    Emit(dpasr::RunDpFinetune(c, workers, ft_flags.checkpoint), ft_flags.report,
         ft_flags.text);
  } else if (*cal) {
    double q = cal_q;
    if (q < 0.0) {
      if (cal_batch < 1 || cal_n < 1) {
        throw dpasr::InvalidArgumentError(
            "calibrate: give --q, or --batch and --dataset-size");
      }
      q = static_cast<double>(cal_batch) / static_cast<double>(cal_n);
    }
    const dpasr::CalibrationResult r = dpasr::Calibrate(q, cal_steps, cal_eps, cal_delta);
    if (cal_json) {
      std::cout << json{{"q", q},
                        {"steps", cal_steps},
                        {"target_epsilon", cal_eps},
                        {"delta", cal_delta},
                        {"noise_multiplier", r.noise_multiplier},
                        {"epsilon", r.spent.epsilon},
                        {"achieving_order", r.spent.achieving_order}}
                       .dump(2)
                << "\n";
    } else {
      std::printf("q                 %.6g\n", q);
      std::printf("steps             %lld\n", static_cast<long long>(cal_steps));
      std::printf("delta             %.6g\n", cal_delta);
      std::printf("noise_multiplier  %.6f\n", r.noise_multiplier);
      std::printf("epsilon           %.6f\n", r.spent.epsilon);
      std::printf("achieving_order   %d\n", r.spent.achieving_order);
    }
  } else if (*ev) {
    std::vector<dpasr::EvalSplit> splits;
    for (const std::string& s : ev_splits) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        throw dpasr::InvalidArgumentError("--split expects name=dir, got '" + s + "'");
      }
      splits.push_back({s.substr(0, eq), s.substr(eq + 1)});
    }
    Emit(dpasr::RunEvaluate(ev_ckpt, splits, workers), ev_report, ev_text);
  } else if (*sw) {
    ExperimentConfig c = BuildConfig(sw_flags);
    Emit(dpasr::RunSweep(c, multipliers, workers), sw_flags.report, sw_flags.text);
  } else if (*rep) {
    for (const std::string& path : rep_files) {
      std::ifstream in(path);
      if (!in) throw dpasr::IoError("cannot open '" + path + "'");
      std::cout << "== " << path << "\n"
                << dpasr::RenderReportText(json::parse(in)) << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return Run(argc, argv);
  } catch (const dpasr::InvariantViolation& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
