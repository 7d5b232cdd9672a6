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
#include <vector>

#include "mcout/dataset.hpp"
#include "mcout/reasoning.hpp"

namespace mcout {

/// Pooled statistics of one quantity at one iteration.
struct PooledStats {
  static constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
  double mean = kMissing;  // over every element of every sample
  double std = kMissing;   // population, same pool
  double norm = kMissing;  // mean of the per-sample L2 norms
};

/// Iteration k aggregated over samples. Row 0 describes the state before
/// any thought (h_l only); row k >= 1 has the thought h_t^(k) appended at
/// step k and the last hidden state after it. Pre-norm thought statistics
/// exist for the Multi variant only.
struct LatentRow {
  std::size_t k = 0;
  std::size_t n_samples = 0;
  PooledStats hl;
  PooledStats ht;
  PooledStats ht_pre;
  double aux_loss = PooledStats::kMissing;  // mean over samples
};

/// `hl[k]` etc. are [n, D] row-major blocks gathered across traces.
PooledStats pool_rows(std::span<const double> rows, std::size_t dim);

/// Traces may come from batches of different sizes; all must have the same
/// number of steps. Empty when the traces have no steps.
std::vector<LatentRow> aggregate_latents(const std::vector<ReasoningTrace>& traces);

void write_latent_csv(std::ostream& os, const std::vector<LatentRow>& rows);

struct LatentAnalysis {
  std::vector<LatentRow> rows;
  std::vector<ReasoningTrace> traces;
};

/// Runs the loop on the first `n_samples` samples with aux losses computed
/// for logging. N_t = 0 yields no rows and a warning on stderr.
LatentAnalysis analyze_latents(const ModelParams& params, const ReasoningConfig& reasoning,
                               std::span<const SyntheticSample> samples,
                               std::size_t n_samples = 100, std::size_t batch_size = 32);

/// Writes `path` (aggregated) and `<stem>.trace.csv` (per sample) next to it.
void write_latent_analysis(const std::string& path, const LatentAnalysis& analysis);

}  // namespace mcout
