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

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <unistd.h>

#include "mcout/config.hpp"
#include "mcout/dataset.hpp"
#include "mcout/training.hpp"

namespace mcout::testing {

// A model small enough for exhaustive checks in unit tests.
inline RunConfig tiny_config() {
  RunConfig c;
  c.model.decoder.d_model = 16;
  c.model.decoder.layers = 2;
  c.model.decoder.heads = 2;
  c.model.decoder.max_positions = 64;
  c.model.decoder.max_context = 48;
  c.model.latent_heads = 2;
  c.reasoning.n_thoughts = 2;
  c.batch_size = 4;
  c.seed = 3;
  c.warmup_steps = 2;
  c.init_lr = 1e-3;
  c.min_lr = 1e-4;
  c.eval_batch_size = 4;
  return c;
}

inline std::vector<SyntheticSample> tiny_samples(std::size_t n, TaskKind task = TaskKind::Count,
                                                 std::uint64_t seed = 17) {
  DatasetSpec s;
  s.task = task;
  s.samples = n;
  s.seed = seed;
  return generate_dataset(s);
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// A fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() /
           ("mcout-test-" + name + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

// The training objective mu * sum(aux) + final through the unrolled loop,
// rebuilt from the parameters on every call.
inline Tensor composed_objective(const ModelParams& params, std::span<const SyntheticSample> samples,
                                 const ReasoningConfig& reasoning, double mu) {
  const PreparedBatch p = prepare_batch(params, samples);
  const auto r = run_reasoning(params, p.batch, reasoning, &p.targets, AuxMode::Differentiable);
  return total_loss(params, r.state, p.targets, r.trace, mu).objective;
}

}  // namespace mcout::testing
