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

#include "mcout/reasoning.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace mcout {

std::string to_string(Variant v) { return v == Variant::Base ? "base" : "multi"; }

Variant parse_variant(std::string_view text) {
  if (text == "base") return Variant::Base;
  if (text == "multi") return Variant::Multi;
  throw ConfigError("unknown variant '" + std::string(text) + "' (expected base or multi)");
}

LatentAttentionOutput multimodal_latent_attention(const Tensor& h_l, const Tensor& e_m,
                                                  const LatentAttentionParams& params) {
  if (!h_l.defined() || !e_m.defined())
    throw ContractError("latent attention: undefined input");
  if (h_l.rank() != 2 || e_m.rank() != 3 || e_m.dim(0) != h_l.dim(0))
    throw DimensionError("latent attention: expected h_l [B, D] and e_m [B, S_m, D], got " +
                         shape_string(h_l.shape()) + " and " + shape_string(e_m.shape()));
  const std::size_t batch = h_l.dim(0), d = h_l.dim(1), sm = e_m.dim(1);
  if (e_m.dim(2) != d || params.proj.weight.dim(0) != d)
    throw DimensionError("latent attention: model width mismatch between " +
                         shape_string(h_l.shape()) + " and " + shape_string(e_m.shape()));
  const std::size_t heads = params.heads;
  if (heads == 0 || d % heads != 0)
    throw ContractError("latent attention: heads must divide D");
  const std::size_t hd = d / heads;

  Tensor q = reshape(params.proj(h_l), {batch * heads, 1, hd});
  auto split = [&](const Tensor& x) {
    return reshape(permute(reshape(x, {batch, sm, heads, hd}), {0, 2, 1, 3}),
                   {batch * heads, sm, hd});
  };
  Tensor k = split(params.key(e_m));
  Tensor v = split(params.value(e_m));
  Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(hd)));
  Tensor w = softmax(scores, 2);
  Tensor ctx = reshape(matmul(w, v), {batch, 1, d});

  LatentAttentionOutput out;
  out.pre_norm = params.proj_back(params.out(ctx));
  out.thought.h_t =
      layer_norm(out.pre_norm, params.norm.gain, params.norm.bias, kThoughtNormEps);
  out.weights = reshape(w, {batch, heads, sm});
  return out;
}

ThoughtEmbedding base_thought(const Tensor& h_l) {
  if (h_l.rank() != 2)
    throw DimensionError("base_thought: expected [B, D], got " + shape_string(h_l.shape()));
  return {reshape(h_l, {h_l.dim(0), 1, h_l.dim(1)}), 0};
}

VectorStats vector_stats(std::span<const double> values) {
  VectorStats s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  double total = 0.0, sq = 0.0;
  for (double v : values) {
    total += v;
    sq += v * v;
  }
  s.mean = total / n;
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / n);
  s.norm = std::sqrt(sq);
  return s;
}

std::vector<VectorStats> row_stats(std::span<const double> values, std::size_t dim) {
  std::vector<VectorStats> out;
  for (std::size_t off = 0; off + dim <= values.size(); off += dim)
    out.push_back(vector_stats(values.subspan(off, dim)));
  return out;
}

AnswerTargets AnswerTargets::from_answers(const std::vector<TokenSequence>& answers) {
  if (answers.empty()) throw ContractError("answer targets: empty batch");
  AnswerTargets t;
  t.batch = answers.size();
  for (const auto& a : answers) t.length = std::max(t.length, a.size());
  t.inputs.assign(t.batch * t.length, Vocabulary::kPad);
  t.targets.assign(t.batch * (t.length + 1), kIgnoreIndex);
  for (std::size_t b = 0; b < t.batch; ++b) {
    const auto& a = answers[b];
    t.answer_lengths.push_back(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) {
      t.inputs[b * t.length + j] = a[j];
      t.targets[b * (t.length + 1) + j] = a[j];
    }
    t.targets[b * (t.length + 1) + a.size()] = Vocabulary::kEos;
  }
  return t;
}

ReasoningState begin_reasoning(const ModelParams& params, const InterleavedBatch& batch,
                               const ForwardOptions& options) {
  ReasoningState state;
  state.batch = batch;
  state.base_length = batch.length();
  state.context = batch.visual();
  Tensor h = forward(params, batch.embeddings, batch.mask, &state.cache, options);
  state.last_hidden = last_hidden(h, batch.mask);
  return state;
}

ReasoningState reasoning_step(const ModelParams& params, const ReasoningState& state,
                              const ReasoningConfig& config, TraceStep* record,
                              const ForwardOptions& options) {
  const std::size_t k = state.steps + 1;
  const std::size_t batch = state.batch.batch();
  const std::size_t d = params.config.decoder.d_model;
  if (state.batch.length() + 1 > params.config.decoder.max_positions)
    throw CapacityError("reasoning step " + std::to_string(k) + " would exceed " +
                        std::to_string(params.config.decoder.max_positions) +
                        " positions");

  ThoughtEmbedding thought;
  Tensor pre_norm;
  if (config.variant == Variant::Base) {
    thought = base_thought(state.last_hidden);
  } else {
    auto att = multimodal_latent_attention(state.last_hidden, state.context, params.latent);
    thought = att.thought;
    pre_norm = att.pre_norm;
  }
  thought.k = k;

  const Tensor appended = config.detach_thoughts ? thought.h_t.detach() : thought.h_t;
  ReasoningState next;
  next.base_length = state.base_length;
  next.context = state.context;
  next.steps = k;
  next.batch = state.batch;
  next.batch.embeddings = concat({state.batch.embeddings, appended}, 1);
  next.batch.mask = state.batch.mask.with_ones_column();
  for (auto& len : next.batch.lengths) ++len;

  if (config.incremental) {
    next.cache = state.cache;
    Tensor h = forward(params, appended, next.batch.mask, &next.cache, options);
    next.last_hidden = reshape(h, {batch, d});
  } else {
    Tensor h = forward(params, next.batch.embeddings, next.batch.mask, &next.cache, options);
    next.last_hidden = last_hidden(h, next.batch.mask);
  }

  if (record) {
    record->k = k;
    record->h_l = next.last_hidden;
    record->h_t = thought.h_t;
    record->hl_stats = row_stats(next.last_hidden.values(), d);
    record->ht_stats = row_stats(thought.h_t.values(), d);
    if (pre_norm.defined()) {
      record->h_t_pre_norm = pre_norm;
      record->ht_pre_stats = row_stats(pre_norm.values(), d);
    }
  }
  return next;
}

AnswerLoss answer_loss(const ModelParams& params, const ReasoningState& state,
                       const AnswerTargets& targets, const ForwardOptions& options) {
  const std::size_t batch = state.batch.batch();
  if (targets.batch != batch)
    throw DimensionError("answer_loss: " + std::to_string(targets.batch) +
                         " targets for batch " + std::to_string(batch));
  const std::size_t d = params.config.decoder.d_model;
  const std::size_t len = targets.length;
  Tensor first = reshape(state.last_hidden, {batch, 1, d});
  Tensor hidden = first;
  if (len > 0) {
    std::vector<std::uint8_t> bits;
    Mask mask = state.batch.mask;
    for (std::size_t j = 0; j < len; ++j) {
      std::vector<std::uint8_t> col(batch);
      for (std::size_t b = 0; b < batch; ++b) col[b] = j < targets.answer_lengths[b];
      mask = mask.with_column(col);
    }
    KVCache branch = state.cache;
    if (branch.length != state.batch.length())
      throw ContractError("answer_loss: cache does not cover the reasoning sequence");
    Tensor emb = embed_tokens(params, targets.inputs, {batch, len});
    Tensor h = forward(params, emb, mask, &branch, options);
    hidden = concat({first, h}, 1);
  }
  auto ce = cross_entropy(logits(params, hidden), targets.targets, kIgnoreIndex);
  AnswerLoss out;
  out.loss = ce.loss;
  out.per_sample.assign(batch, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t j = 0; j <= len; ++j) {
      const std::size_t i = b * (len + 1) + j;
      if (targets.targets[i] == kIgnoreIndex) continue;
      total += ce.position_nll[i];
      ++n;
    }
    out.per_sample[b] = n ? total / static_cast<double>(n) : 0.0;
  }
  return out;
}

ReasoningResult run_reasoning(const ModelParams& params, const InterleavedBatch& batch,
                              const ReasoningConfig& config, const AnswerTargets* targets,
                              AuxMode aux_mode, const ForwardOptions& options) {
  if (aux_mode != AuxMode::None && !targets)
    throw ContractError("run_reasoning: auxiliary losses need answer targets");
  ReasoningResult result;
  result.state = begin_reasoning(params, batch, options);
  result.trace.initial_hidden = result.state.last_hidden;
  const bool recording = grad_enabled();
  for (std::size_t k = 1; k <= config.n_thoughts; ++k) {
    TraceStep step;
    {
      GradModeScope loop_mode(recording && config.backprop_through_loop);
      result.state = reasoning_step(params, result.state, config, &step, options);
    }
    if (aux_mode != AuxMode::None) {
      GradModeScope aux_mode_scope(recording && aux_mode == AuxMode::Differentiable);
      auto aux = answer_loss(params, result.state, *targets, options);
      step.aux_loss = aux.loss;
      step.aux_value = aux.loss.item();
      step.aux_per_sample = std::move(aux.per_sample);
    }
    result.trace.steps.push_back(std::move(step));
  }
  return result;
}

double compose_total(std::span<const double> aux, double final, double mu) {
  double weighted = 0.0;
  for (double a : aux) weighted += mu * a;
  return weighted + final;
}

LossBreakdown total_loss(const ModelParams& params, const ReasoningState& state,
                         const AnswerTargets& targets, const ReasoningTrace& trace,
                         double mu, const ForwardOptions& options) {
  if (targets.batch == 0) throw ContractError("total_loss: empty targets");
  if (!(mu >= 0.0)) throw ContractError("total_loss: mu must be >= 0");
  LossBreakdown out;
  out.mu = mu;
  auto final_loss = answer_loss(params, state, targets, options);
  out.final = final_loss.loss.item();
  out.objective = final_loss.loss;
  for (const auto& step : trace.steps) {
    if (!step.aux_loss.defined())
      throw ContractError("total_loss: trace step " + std::to_string(step.k) +
                          " carries no auxiliary loss");
    out.aux.push_back(step.aux_value);
    if (mu > 0.0) out.objective = add(out.objective, scale(step.aux_loss, mu));
  }
  out.total = compose_total(out.aux, out.final, mu);
  return out;
}

void write_trace_csv(std::ostream& os, const ReasoningTrace& trace,
                     std::size_t first_sample_id, bool header) {
  if (header) os << "sample_id,k,hl_mean,hl_std,hl_norm,ht_mean,ht_std,ht_norm,aux_loss\n";
  if (trace.steps.empty()) return;
  const std::size_t batch = trace.steps.front().hl_stats.size();
  char buf[512];
  for (std::size_t b = 0; b < batch; ++b)
    for (const auto& step : trace.steps) {
      const auto& hl = step.hl_stats[b];
      const auto& ht = step.ht_stats[b];
      const double aux = step.aux_per_sample.empty()
                             ? std::numeric_limits<double>::quiet_NaN()
                             : step.aux_per_sample[b];
      std::snprintf(buf, sizeof buf,
                    "%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                    first_sample_id + b, step.k, hl.mean, hl.std, hl.norm, ht.mean,
                    ht.std, ht.norm, aux);
      os << buf;
    }
}

}  // namespace mcout
