/*
 *   Copyright 2026 The mcout Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcout/checkpoint.hpp"
#include "mcout/config.hpp"
#include "mcout/dataset.hpp"
#include "mcout/optimizer.hpp"
#include "mcout/reasoning.hpp"

namespace mcout {

struct PreparedBatch {
  InterleavedBatch batch;
  AnswerTargets targets;
  std::vector<std::string> golds;
};

/// Images and questions interleaved; answers tokenized as teacher-forcing
/// targets.
PreparedBatch prepare_batch(const ModelParams& params,
                            std::span<const SyntheticSample> samples);

struct StepResult {
  LossBreakdown loss;
  double grad_norm = 0.0;
};

/// Aux terms are differentiated only when they enter the objective; with
/// mu = 0 they are still computed for the log.
AuxMode aux_mode_for(const RunConfig& cfg);

/// Forward, backward and one optimizer update at learning rate `lr`.
/// Throws NumericalError when the loss or the gradient is not finite.
StepResult train_step(const ModelParams& params, AdamW& optimizer,
                      std::span<const SyntheticSample> samples, const RunConfig& cfg,
                      double lr, std::uint64_t dropout_seed, std::size_t step);

AdamW make_optimizer(const ModelParams& params, const RunConfig& cfg);

/// Mean final answer loss without dropout or gradient.
double eval_loss(const ModelParams& params, const RunConfig& cfg,
                 std::span<const SyntheticSample> samples);

struct EvalReport {
  double accuracy = 0.0;
  double bleu = 0.0;
  std::size_t n_samples = 0;
  std::string config_hash;
  std::vector<std::string> predictions;

  /// {accuracy, bleu, n_samples, config_hash}
  nlohmann::json to_json() const;
};

/// Reasoning followed by sampled decoding. Batches are independent and may
/// run in parallel; batch i samples from mix(generation.seed, i).
EvalReport evaluate(const ModelParams& params, const ReasoningConfig& reasoning,
                    const GenerationConfig& generation,
                    std::span<const SyntheticSample> samples, AnswerMode mode,
                    std::size_t batch_size);
EvalReport evaluate(const ModelParams& params, const RunConfig& cfg,
                    std::span<const SyntheticSample> samples);

struct StepRecord {
  std::size_t step = 0;  // global update index, 0-based
  std::string phase;
  std::size_t epoch = 0;  // 1-based within the phase
  double lr = 0.0;
  double total = 0.0;
  double final = 0.0;
  std::vector<double> aux;
  double mu = 0.0;

  nlohmann::json to_json() const;
};

struct TrainingProgress {
  std::size_t phase = 0;  // index into the run's phases
  std::size_t epoch = 0;  // completed epochs of that phase
  std::size_t step = 0;   // completed updates overall
};

struct TrainingOutcome {
  ModelParams params;
  std::vector<StepRecord> records;
  TrainingProgress progress;
  std::string final_checkpoint;
};

Checkpoint make_checkpoint(const ModelParams& params, const AdamW* optimizer,
                           const RunConfig& cfg, const TrainingProgress& progress);
/// Rebuilds the run config (without out_dir) and the parameters stored in a
/// checkpoint.
std::pair<RunConfig, ModelParams> params_from_checkpoint(const Checkpoint& ckpt);

/// Optional pretrain phase, then the fine-tune phase. Writes metrics.jsonl,
/// timing.jsonl, run_meta.json, one checkpoint per epoch and final.bin to
/// cfg.out_dir (when set). A resume checkpoint must come from the same
/// configuration; training continues with the epoch after it.
TrainingOutcome run_training(const RunConfig& cfg,
                             const std::optional<std::string>& resume = std::nullopt);

}  // namespace mcout
