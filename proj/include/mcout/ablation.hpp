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

#include <string>
#include <vector>

#include <json.hpp>

#include "mcout/config.hpp"

namespace mcout {

struct AblationGrid {
  std::vector<double> mu{0.0, 0.3, 0.5, 0.8};
  std::vector<std::size_t> n_thoughts{5, 10};
  std::vector<Variant> variants{Variant::Base, Variant::Multi};
  /// Adds the N_t = 0 cell every delta is measured against.
  bool baseline = true;

  /// Keys: mu, n_thoughts, variants (comma-separated lists), baseline.
  static AblationGrid from_key_values(const KeyValues& kv);
  void validate() const;
};

struct AblationCell {
  std::string label;
  Variant variant = Variant::Base;
  std::size_t n_thoughts = 0;
  double mu = 0.0;
  bool ok = false;
  std::string error;
  double accuracy = 0.0;
  double bleu = 0.0;
  std::size_t n_samples = 0;
  std::string config_hash;
};

struct AblationResult {
  std::vector<AblationCell> cells;  // baseline first when present

  nlohmann::json to_json() const;
  /// Aligned table; values in percent followed by "(↑ x.xx%)" or
  /// "(↓ x.xx%)", the relative change against the baseline cell.
  std::string to_text() const;
};

/// The cell configurations in table order.
std::vector<RunConfig> ablation_configs(const RunConfig& base, const AblationGrid& grid);

/// Every cell trains from the same seed in its own subdirectory of
/// `out_dir` and is evaluated on eval_data (train_data when unset). Cells
/// run in parallel; a failing cell is recorded and the rest continue.
/// Writes ablation.json and ablation.txt when out_dir is set.
AblationResult run_ablation(const RunConfig& base, const AblationGrid& grid,
                            const std::string& out_dir);

/// Relative change (value - base) / base in percent; 0 when base is 0 and
/// value equals it.
double relative_delta(double value, double base);
std::string format_delta(double value, double base);

}  // namespace mcout
