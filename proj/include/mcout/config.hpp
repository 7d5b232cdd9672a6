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
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "mcout/dataset.hpp"
#include "mcout/model.hpp"
#include "mcout/reasoning.hpp"
#include "mcout/tensor.hpp"

namespace mcout {

using KeyValues = std::map<std::string, std::string>;

/// `key = value` lines; blank lines and `#` comments are skipped. A
/// repeated key is an error.
KeyValues parse_key_values(std::istream& is, const std::string& source = "config");
KeyValues read_key_values(const std::string& path);

/// Which loss drives the gradient: the full objective with auxiliary terms,
/// or the final answer loss alone.
enum class Objective { Total, Final };

struct RunConfig {
  ModelConfig model;
  ReasoningConfig reasoning;
  GenerationConfig generation;
  double mu = 0.3;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  std::size_t epochs = 1;
  std::size_t pretrain_epochs = 0;
  /// Caps the updates of each phase; 0 leaves it to the epoch count.
  std::size_t max_steps = 0;
  std::string pretrain_data;
  std::string train_data;
  std::string eval_data;
  double warmup_lr = 1e-6;
  double init_lr = 3e-4;
  double min_lr = 3e-5;
  std::size_t warmup_steps = 100;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Global gradient-norm clip; 0 disables it.
  double grad_clip = 1.0;
  Objective objective = Objective::Total;
  Precision precision = Precision::F32;
  std::size_t eval_batch_size = 32;
  AnswerMode eval_mode = AnswerMode::Open;
  /// Not part of the configuration identity: excluded from the hash.
  std::string out_dir;
  /// Directory relative data paths are resolved against.
  std::string base_dir;

  void validate() const;
  std::string resolve(const std::string& path) const;

  /// Every key with its canonical text value; out_dir and base_dir excluded.
  KeyValues to_key_values() const;
  static RunConfig from_key_values(const KeyValues& kv);
  /// Reads a config file; relative data paths resolve against its directory.
  static RunConfig load(const std::string& path);
  /// FNV-1a over the canonical key-value text, as 16 hex digits.
  std::string hash() const;
  /// Settings the method leaves open that this run had to pick.
  std::vector<std::string> deviations() const;
};

std::string format_double(double v);

}  // namespace mcout
