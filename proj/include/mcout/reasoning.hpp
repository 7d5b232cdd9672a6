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

#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mcout/model.hpp"

namespace mcout {

/// Base feeds the last hidden state straight back as the next input
/// embedding; Multi first lets it attend over the visual embeddings.
enum class Variant { Base, Multi };

std::string to_string(Variant v);
Variant parse_variant(std::string_view text);

struct ReasoningConfig {
  std::size_t n_thoughts = 5;
  Variant variant = Variant::Base;
  /// When false the thought loop runs without recording a graph.
  bool backprop_through_loop = true;
  /// Cut the gradient path from each appended thought back into the step
  /// that produced it.
  bool detach_thoughts = false;
  /// Extend the KV cache one column per step instead of re-running the
  /// whole extended sequence.
  bool incremental = true;
};

/// A continuous thought h_t of shape [B, 1, D] produced at step k.
struct ThoughtEmbedding {
  Tensor h_t;
  std::size_t k = 0;
};

struct LatentAttentionOutput {
  ThoughtEmbedding thought;
  /// Back-projected attention output before the final norm, [B, 1, D].
  Tensor pre_norm;
  /// Attention weights [B, heads, S_m]; every row sums to one.
  Tensor weights;
};

/// The thought norm's epsilon. Visual embeddings are small at init, so the
/// usual 1e-5 would pull thought norms well below sqrt(D).
constexpr double kThoughtNormEps = 1e-8;

/// h_t = Norm(ProjBack(MultiHeadAttn(Proj(h_l), e_m))).
/// h_l: [B, D], e_m: [B, S_m, D].
LatentAttentionOutput multimodal_latent_attention(const Tensor& h_l, const Tensor& e_m,
                                                  const LatentAttentionParams& params);

/// h_t = h_l reshaped to [B, 1, D].
ThoughtEmbedding base_thought(const Tensor& h_l);

struct VectorStats {
  double mean = 0.0;
  double std = 0.0;  // population
  double norm = 0.0;
};

VectorStats vector_stats(std::span<const double> values);
/// Stats of each length-`dim` row.
std::vector<VectorStats> row_stats(std::span<const double> values, std::size_t dim);

constexpr TokenId kIgnoreIndex = -100;

/// Teacher-forcing layout of answers: `inputs` [B, L] are the answer tokens
/// (pad-filled), `targets` [B, L + 1] are the answer followed by the end
/// token (ignore-filled). The first target is predicted from the last
/// hidden state of the reasoning sequence.
struct AnswerTargets {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<TokenId> inputs;
  std::vector<TokenId> targets;
  std::vector<std::size_t> answer_lengths;

  static AnswerTargets from_answers(const std::vector<TokenSequence>& answers);
};

/// Step k holds the thought h_t^(k) and the last hidden state h_l^(k)
/// computed after appending it.
struct TraceStep {
  std::size_t k = 0;
  Tensor h_l;           // [B, D]
  Tensor h_t;           // [B, 1, D]
  Tensor h_t_pre_norm;  // Multi only
  std::vector<VectorStats> hl_stats;
  std::vector<VectorStats> ht_stats;
  std::vector<VectorStats> ht_pre_stats;
  Tensor aux_loss;  // scalar, set when targets were given
  double aux_value = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> aux_per_sample;
};

struct ReasoningTrace {
  Tensor initial_hidden;  // h_l^(0), [B, D]
  std::vector<TraceStep> steps;
  std::size_t size() const { return steps.size(); }
};

/// Everything needed to continue from a point in the loop: the extended
/// sequence, its KV cache and the current last hidden state.
struct ReasoningState {
  InterleavedBatch batch;
  KVCache cache;
  Tensor last_hidden;  // [B, D]
  Tensor context;      // e_m, the visual slice, fixed across steps
  std::size_t base_length = 0;
  std::size_t steps = 0;
};

/// Initial forward over the interleaved batch and last-hidden extraction.
ReasoningState begin_reasoning(const ModelParams& params, const InterleavedBatch& batch,
                               const ForwardOptions& options = {});

/// One thought: make h_t, append it with a mask column of ones, and run the
/// decoder to get the next last hidden state. `record`, when given, receives
/// the step's tensors and statistics.
ReasoningState reasoning_step(const ModelParams& params, const ReasoningState& state,
                              const ReasoningConfig& config, TraceStep* record = nullptr,
                              const ForwardOptions& options = {});

enum class AuxMode {
  None,            // inference
  Values,          // computed for logging, no graph
  Differentiable,  // part of the training objective
};

struct ReasoningResult {
  ReasoningState state;
  ReasoningTrace trace;
};

ReasoningResult run_reasoning(const ModelParams& params, const InterleavedBatch& batch,
                              const ReasoningConfig& config,
                              const AnswerTargets* targets = nullptr,
                              AuxMode aux_mode = AuxMode::None,
                              const ForwardOptions& options = {});

struct AnswerLoss {
  Tensor loss;
  std::vector<double> per_sample;
};

/// Cross-entropy of the answer given the state's sequence, by branching the
/// cache and appending the teacher-forced answer tokens.
AnswerLoss answer_loss(const ModelParams& params, const ReasoningState& state,
                       const AnswerTargets& targets, const ForwardOptions& options = {});

struct LossBreakdown {
  std::vector<double> aux;
  double final = 0.0;
  double mu = 0.0;
  double total = 0.0;
  /// The differentiable objective; aux terms are only attached when mu > 0.
  Tensor objective;
};

double compose_total(std::span<const double> aux, double final, double mu);

/// total = mu * sum_k aux_k + final, aux taken from the trace.
LossBreakdown total_loss(const ModelParams& params, const ReasoningState& state,
                         const AnswerTargets& targets, const ReasoningTrace& trace,
                         double mu, const ForwardOptions& options = {});

/// One row per (sample, step): sample_id,k,hl_mean,hl_std,hl_norm,ht_mean,
/// ht_std,ht_norm,aux_loss. Sample ids are `first_sample_id + b`.
void write_trace_csv(std::ostream& os, const ReasoningTrace& trace,
                     std::size_t first_sample_id = 0, bool header = true);

}  // namespace mcout
