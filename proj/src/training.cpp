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

#include "mcout/training.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mcout/errors.hpp"
#include "mcout/metrics.hpp"
#include "mcout/schedule.hpp"

namespace mcout {

namespace {

struct Phase {
  std::string name;
  std::string data;
  std::size_t epochs = 0;
};

std::vector<Phase> phases_of(const RunConfig& cfg) {
  std::vector<Phase> out;
  if (cfg.pretrain_epochs > 0) out.push_back({"pretrain", cfg.pretrain_data, cfg.pretrain_epochs});
  out.push_back({"finetune", cfg.train_data, cfg.epochs});
  return out;
}

std::vector<SyntheticSample> load_phase_data(const RunConfig& cfg, const std::string& path) {
  if (path.empty()) throw ConfigError("no dataset path configured");
  auto data = load_dataset(cfg.resolve(path));
  if (data.empty()) throw ConfigError("dataset '" + path + "' is empty");
  return data;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << text;
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

std::string nonfinite_grads(const ModelParams& params) {
  std::string names;
  for (const auto& [name, p] : params.named()) {
    if (!p.has_grad()) continue;
    double sq = 0.0;
    for (double g : p.grad()) sq += g * g;
    if (!std::isfinite(sq)) names += (names.empty() ? "" : ", ") + name;
  }
  return names;
}

}  // namespace

PreparedBatch prepare_batch(const ModelParams& params,
                            std::span<const SyntheticSample> samples) {
  if (samples.empty()) throw ContractError("prepare_batch: empty batch");
  const Vocabulary& vocab = Vocabulary::instance();
  std::vector<Image> images;
  std::vector<TokenSequence> questions, answers;
  PreparedBatch out;
  for (const auto& s : samples) {
    images.push_back(s.image);
    questions.push_back(vocab.encode(s.question));
    answers.push_back(vocab.encode(s.answer));
    out.golds.push_back(s.answer);
  }
  out.batch = interleave(params, encode_images(params, images), questions);
  out.targets = AnswerTargets::from_answers(answers);
  return out;
}

AuxMode aux_mode_for(const RunConfig& cfg) {
  if (cfg.objective == Objective::Final) return AuxMode::None;
  return cfg.mu > 0.0 ? AuxMode::Differentiable : AuxMode::Values;
}

AdamW make_optimizer(const ModelParams& params, const RunConfig& cfg) {
  return AdamW(params.named(), {cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay});
}

StepResult train_step(const ModelParams& params, AdamW& optimizer,
                      std::span<const SyntheticSample> samples, const RunConfig& cfg,
                      double lr, std::uint64_t dropout_seed, std::size_t step) {
  params.zero_grad();
  ForwardOptions options{cfg.model.decoder.dropout > 0.0, dropout_seed};
  const PreparedBatch prepared = prepare_batch(params, samples);
  const ReasoningResult r = run_reasoning(params, prepared.batch, cfg.reasoning,
                                          &prepared.targets, aux_mode_for(cfg), options);
  const bool final_only = cfg.objective == Objective::Final;
  const ReasoningTrace no_aux;
  StepResult out;
  out.loss = total_loss(params, r.state, prepared.targets, final_only ? no_aux : r.trace,
                        final_only ? 0.0 : cfg.mu, options);
  out.loss.objective.backward();
  out.grad_norm = optimizer.grad_norm();
  if (!std::isfinite(out.loss.total) || !std::isfinite(out.grad_norm)) {
    std::string msg = "non-finite training state at step " + std::to_string(step) + ": loss " +
                      format_double(out.loss.total) + ", lr " + format_double(lr) +
                      ", grad norm " + format_double(out.grad_norm);
    const std::string bad = nonfinite_grads(params);
    if (!bad.empty()) msg += "; non-finite gradients in " + bad;
    throw NumericalError(msg);
  }
  const double scale = cfg.grad_clip > 0.0 && out.grad_norm > cfg.grad_clip
                           ? cfg.grad_clip / out.grad_norm
                           : 1.0;
  optimizer.step(lr, scale);
  return out;
}

double eval_loss(const ModelParams& params, const RunConfig& cfg,
                 std::span<const SyntheticSample> samples) {
  NoGradGuard no_grad;
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < samples.size(); i += cfg.eval_batch_size) {
    const auto chunk = samples.subspan(i, std::min(cfg.eval_batch_size, samples.size() - i));
    const PreparedBatch p = prepare_batch(params, chunk);
    const ReasoningResult r = run_reasoning(params, p.batch, cfg.reasoning);
    const AnswerLoss l = answer_loss(params, r.state, p.targets);
    for (double v : l.per_sample) sum += v;
    counted += l.per_sample.size();
  }
  return counted ? sum / static_cast<double>(counted) : 0.0;
}

nlohmann::json EvalReport::to_json() const {
  return {{"accuracy", accuracy}, {"bleu", bleu}, {"n_samples", n_samples},
          {"config_hash", config_hash}};
}

EvalReport evaluate(const ModelParams& params, const ReasoningConfig& reasoning,
                    const GenerationConfig& generation,
                    std::span<const SyntheticSample> samples, AnswerMode mode,
                    std::size_t batch_size) {
  if (samples.empty()) throw ContractError("evaluate: no samples");
  if (batch_size == 0) throw ContractError("evaluate: batch size must be positive");
  const std::size_t n_batches = (samples.size() + batch_size - 1) / batch_size;
  std::vector<std::string> predictions(samples.size());
  std::vector<std::string> errors(n_batches);
  const Vocabulary& vocab = Vocabulary::instance();
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t bi = 0; bi < static_cast<std::int64_t>(n_batches); ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    try {
      NoGradGuard no_grad;
      const std::size_t start = b * batch_size;
      const auto chunk = samples.subspan(start, std::min(batch_size, samples.size() - start));
      const PreparedBatch p = prepare_batch(params, chunk);
      const ReasoningResult r = run_reasoning(params, p.batch, reasoning);
      GenerationConfig g = generation;
      g.seed = mix_seed(generation.seed, b);
      const auto outputs = generate(params, r.state.batch, g);
      for (std::size_t i = 0; i < outputs.size(); ++i)
        predictions[start + i] = vocab.decode(outputs[i]);
    } catch (const std::exception& e) {
      errors[b] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw ContractError("evaluate: " + e);

  EvalReport report;
  std::vector<std::string> golds;
  std::vector<std::vector<std::string>> refs;
  for (const auto& s : samples) {
    golds.push_back(s.answer);
    refs.push_back({s.answer});
  }
  report.accuracy = accuracy(predictions, golds, mode);
  report.bleu = corpus_bleu(predictions, refs);
  report.n_samples = samples.size();
  report.predictions = std::move(predictions);
  return report;
}

EvalReport evaluate(const ModelParams& params, const RunConfig& cfg,
                    std::span<const SyntheticSample> samples) {
  EvalReport r = evaluate(params, cfg.reasoning, cfg.generation, samples, cfg.eval_mode,
                          cfg.eval_batch_size);
  r.config_hash = cfg.hash();
  return r;
}

nlohmann::json StepRecord::to_json() const {
  return {{"step", step}, {"phase", phase}, {"epoch", epoch}, {"lr", lr},
          {"total", total}, {"final", final}, {"aux", aux}, {"mu", mu}};
}

Checkpoint make_checkpoint(const ModelParams& params, const AdamW* optimizer,
                           const RunConfig& cfg, const TrainingProgress& progress) {
  Checkpoint ckpt;
  add_parameters(ckpt, params,
                 precision() == Precision::F32 ? DType::F32 : DType::F64);
  if (optimizer) optimizer->save(ckpt);
  nlohmann::json run = nlohmann::json::object();
  for (const auto& [k, v] : cfg.to_key_values()) run[k] = v;
  ckpt.config = {{"run", run},
                 {"config_hash", cfg.hash()},
                 {"progress",
                  {{"phase", progress.phase},
                   {"epoch", progress.epoch},
                   {"step", progress.step},
                   {"optimizer_steps", optimizer ? optimizer->steps() : 0}}}};
  return ckpt;
}

std::pair<RunConfig, ModelParams> params_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.config.contains("run") || !ckpt.config["run"].is_object())
    throw FormatError("checkpoint: missing run configuration");
  KeyValues kv;
  for (const auto& [k, v] : ckpt.config["run"].items()) {
    if (!v.is_string()) throw FormatError("checkpoint: run configuration value is not text");
    kv[k] = v.get<std::string>();
  }
  RunConfig cfg = RunConfig::from_key_values(kv);
  ModelParams params = ModelParams::initialize(cfg.model, 0);
  restore_parameters(ckpt, params);
  return {cfg, std::move(params)};
}

TrainingOutcome run_training(const RunConfig& cfg, const std::optional<std::string>& resume) {
  cfg.validate();
  set_precision(cfg.precision);
  const std::vector<Phase> phases = phases_of(cfg);
  TrainingOutcome outcome{ModelParams::initialize(cfg.model, mix_seed(cfg.seed, 1)), {}, {}, {}};
  ModelParams& params = outcome.params;
  AdamW optimizer = make_optimizer(params, cfg);
  TrainingProgress& progress = outcome.progress;

  if (resume) {
    const Checkpoint ckpt = load_checkpoint(*resume);
    if (ckpt.config.value("config_hash", std::string()) != cfg.hash())
      throw ConfigError("resume checkpoint '" + *resume + "' comes from a different configuration");
    restore_parameters(ckpt, params);
    try {
      const auto& p = ckpt.config.at("progress");
      progress.phase = p.at("phase").get<std::size_t>();
      progress.epoch = p.at("epoch").get<std::size_t>();
      progress.step = p.at("step").get<std::size_t>();
      optimizer.load(ckpt, p.at("optimizer_steps").get<std::uint64_t>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("checkpoint: bad progress record: ") + e.what());
    }
  }

  const std::filesystem::path out = cfg.out_dir;
  std::ofstream metrics, timing;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(out);
    metrics.open(out / "metrics.jsonl", std::ios::binary);
    timing.open(out / "timing.jsonl", std::ios::binary);
    if (!metrics || !timing) throw IoError("cannot write logs in '" + cfg.out_dir + "'");
    nlohmann::json meta{{"config", nlohmann::json::object()},
                        {"config_hash", cfg.hash()},
                        {"deviations", cfg.deviations()},
                        {"parameter_count", params.parameter_count()},
                        {"resumed_from", resume ? *resume : std::string()}};
    for (const auto& [k, v] : cfg.to_key_values()) meta["config"][k] = v;
    write_text(out / "run_meta.json", meta.dump(2) + "\n");
  }

  for (std::size_t pi = progress.phase; pi < phases.size(); ++pi) {
    const Phase& phase = phases[pi];
    if (pi > progress.phase) progress.epoch = 0;
    if (progress.epoch >= phase.epochs) continue;
    const std::vector<SyntheticSample> data = load_phase_data(cfg, phase.data);
    const std::size_t per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
    std::size_t phase_total = per_epoch * phase.epochs;
    if (cfg.max_steps > 0) phase_total = std::min(phase_total, cfg.max_steps);
    const LRSchedule schedule{cfg.warmup_lr, cfg.init_lr, cfg.min_lr,
                              std::min(cfg.warmup_steps, phase_total - 1), phase_total};

    for (std::size_t epoch = progress.epoch; epoch < phase.epochs; ++epoch) {
      const std::size_t first = epoch * per_epoch;
      if (first >= phase_total) break;
      std::vector<std::size_t> order(data.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng rng(mix_seed(cfg.seed, pi * 1000 + epoch));
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[uniform_index(rng, i)]);

      for (std::size_t b = 0; b < per_epoch && first + b < phase_total; ++b) {
        std::vector<SyntheticSample> batch;
        for (std::size_t i = b * cfg.batch_size;
             i < std::min(data.size(), (b + 1) * cfg.batch_size); ++i)
          batch.push_back(data[order[i]]);
        const auto started = std::chrono::steady_clock::now();
        const double lr = lr_at(first + b, schedule);
        const StepResult r = train_step(params, optimizer, batch, cfg, lr,
                                        mix_seed(mix_seed(cfg.seed, 2), progress.step),
                                        progress.step);
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        StepRecord rec{progress.step, phase.name, epoch + 1, lr,
                       r.loss.total,  r.loss.final, r.loss.aux, r.loss.mu};
        if (metrics.is_open()) {
          metrics << rec.to_json().dump() << '\n';
          timing << nlohmann::json{{"step", progress.step}, {"wallclock", seconds}}.dump()
                 << '\n';
        }
        outcome.records.push_back(std::move(rec));
        ++progress.step;
      }
      progress.phase = pi;
      progress.epoch = epoch + 1;
      if (!cfg.out_dir.empty()) {
        const auto path =
            out / ("checkpoint_" + phase.name + "_e" + std::to_string(epoch + 1) + ".bin");
        save_checkpoint(path.string(), make_checkpoint(params, &optimizer, cfg, progress));
        outcome.final_checkpoint = path.string();
      }
    }
  }
  if (!cfg.out_dir.empty()) {
    const auto path = out / "final.bin";
    save_checkpoint(path.string(), make_checkpoint(params, &optimizer, cfg, progress));
    outcome.final_checkpoint = path.string();
    metrics.flush();
    if (!metrics) throw IoError("failed writing metrics log");
  }
  return outcome;
}

}  // namespace mcout
