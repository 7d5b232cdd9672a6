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

#include "mcout/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mcout/errors.hpp"
#include "mcout/training.hpp"

namespace mcout {

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void append(std::vector<double>& dst, const Tensor& t) {
  if (!t.defined()) return;
  const auto v = t.values();
  dst.insert(dst.end(), v.begin(), v.end());
}

}  // namespace

PooledStats pool_rows(std::span<const double> rows, std::size_t dim) {
  PooledStats s;
  if (rows.empty() || dim == 0) return s;
  if (rows.size() % dim != 0) throw DimensionError("pool_rows: ragged rows");
  double sum = 0.0;
  for (double v : rows) sum += v;
  s.mean = sum / static_cast<double>(rows.size());
  double sq = 0.0;
  for (double v : rows) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(rows.size()));
  double norms = 0.0;
  const std::size_t n = rows.size() / dim;
  for (std::size_t r = 0; r < n; ++r) {
    double nn = 0.0;
    for (std::size_t j = 0; j < dim; ++j) nn += rows[r * dim + j] * rows[r * dim + j];
    norms += std::sqrt(nn);
  }
  s.norm = norms / static_cast<double>(n);
  return s;
}

std::vector<LatentRow> aggregate_latents(const std::vector<ReasoningTrace>& traces) {
  if (traces.empty() || traces.front().steps.empty()) return {};
  const std::size_t n_steps = traces.front().size();
  const std::size_t dim = traces.front().initial_hidden.dim(-1);
  std::vector<LatentRow> rows(n_steps + 1);
  for (std::size_t k = 0; k <= n_steps; ++k) {
    std::vector<double> hl, ht, ht_pre;
    double aux_sum = 0.0;
    std::size_t aux_n = 0, samples = 0;
    for (const auto& tr : traces) {
      if (tr.size() != n_steps) throw ContractError("aggregate_latents: traces differ in length");
      if (k == 0) {
        append(hl, tr.initial_hidden);
        samples += tr.initial_hidden.dim(0);
        continue;
      }
      const TraceStep& st = tr.steps[k - 1];
      append(hl, st.h_l);
      append(ht, st.h_t);
      append(ht_pre, st.h_t_pre_norm);
      samples += st.h_l.dim(0);
      for (double a : st.aux_per_sample) {
        aux_sum += a;
        ++aux_n;
      }
    }
    rows[k].k = k;
    rows[k].n_samples = samples;
    rows[k].hl = pool_rows(hl, dim);
    rows[k].ht = pool_rows(ht, dim);
    rows[k].ht_pre = pool_rows(ht_pre, dim);
    if (aux_n) rows[k].aux_loss = aux_sum / static_cast<double>(aux_n);
  }
  return rows;
}

void write_latent_csv(std::ostream& os, const std::vector<LatentRow>& rows) {
  os << "k,n_samples,hl_mean,hl_std,hl_norm,ht_mean,ht_std,ht_norm,"
        "htpre_mean,htpre_std,htpre_norm,aux_loss\n";
  for (const auto& r : rows) {
    os << r.k << ',' << r.n_samples;
    for (const PooledStats* s : {&r.hl, &r.ht, &r.ht_pre})
      os << ',' << num(s->mean) << ',' << num(s->std) << ',' << num(s->norm);
    os << ',' << num(r.aux_loss) << '\n';
  }
}

LatentAnalysis analyze_latents(const ModelParams& params, const ReasoningConfig& reasoning,
                               std::span<const SyntheticSample> samples,
                               std::size_t n_samples, std::size_t batch_size) {
  if (batch_size == 0) throw ContractError("analyze_latents: batch size must be positive");
  LatentAnalysis out;
  if (reasoning.n_thoughts == 0) {
    std::cerr << "warning: N_t = 0, there are no thought iterations to analyze\n";
    return out;
  }
  const std::size_t n = std::min(n_samples, samples.size());
  if (n == 0) throw ContractError("analyze_latents: no samples");
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < n; i += batch_size) {
    const auto chunk = samples.subspan(i, std::min(batch_size, n - i));
    const PreparedBatch p = prepare_batch(params, chunk);
    out.traces.push_back(
        run_reasoning(params, p.batch, reasoning, &p.targets, AuxMode::Values).trace);
  }
  out.rows = aggregate_latents(out.traces);
  return out;
}

void write_latent_analysis(const std::string& path, const LatentAnalysis& analysis) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write '" + path + "'");
  write_latent_csv(os, analysis.rows);
  std::filesystem::path trace_path(path);
  trace_path.replace_extension(".trace.csv");
  std::ofstream ts(trace_path, std::ios::binary);
  if (!ts) throw IoError("cannot write '" + trace_path.string() + "'");
  std::size_t first = 0;
  bool header = true;
  for (const auto& tr : analysis.traces) {
    write_trace_csv(ts, tr, first, header);
    header = false;
    first += tr.initial_hidden.dim(0);
  }
  if (analysis.traces.empty())
    write_trace_csv(ts, ReasoningTrace{}, 0, true);
  if (!os || !ts) throw IoError("failed writing latent statistics");
}

}  // namespace mcout
