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

#include "mcout/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mcout/errors.hpp"
#include "mcout/training.hpp"

namespace mcout {

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string cell_label(const RunConfig& c) {
  if (c.reasoning.n_thoughts == 0) return "baseline";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s-nt%zu-mu%g", to_string(c.reasoning.variant).c_str(),
                c.reasoning.n_thoughts, c.mu);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  // Width in code points so the arrows do not skew the columns.
  std::size_t cps = 0;
  for (unsigned char ch : s) cps += (ch & 0xC0) != 0x80;
  return s + std::string(width > cps ? width - cps : 0, ' ');
}

}  // namespace

AblationGrid AblationGrid::from_key_values(const KeyValues& kv) {
  AblationGrid g;
  for (const auto& [key, value] : kv) {
    if (key == "mu") {
      g.mu.clear();
      for (const auto& v : split_list(value)) {
        try {
          g.mu.push_back(std::stod(v));
        } catch (const std::exception&) {
          throw ConfigError("grid: bad mu value '" + v + "'");
        }
      }
    } else if (key == "n_thoughts") {
      g.n_thoughts.clear();
      for (const auto& v : split_list(value)) {
        try {
          g.n_thoughts.push_back(std::stoul(v));
        } catch (const std::exception&) {
          throw ConfigError("grid: bad n_thoughts value '" + v + "'");
        }
      }
    } else if (key == "variants") {
      g.variants.clear();
      for (const auto& v : split_list(value)) g.variants.push_back(parse_variant(v));
    } else if (key == "baseline") {
      if (value != "true" && value != "false")
        throw ConfigError("grid: baseline must be true or false");
      g.baseline = value == "true";
    } else {
      throw ConfigError("grid: unknown key '" + key + "'");
    }
  }
  g.validate();
  return g;
}

void AblationGrid::validate() const {
  for (double m : mu)
    if (!(m >= 0.0)) throw ConfigError("grid: mu values must be non-negative");
  const bool thought_cells = !mu.empty() && !variants.empty() &&
                             std::any_of(n_thoughts.begin(), n_thoughts.end(),
                                         [](std::size_t n) { return n > 0; });
  if (!baseline && !thought_cells) throw ConfigError("grid: no cells");
}

std::vector<RunConfig> ablation_configs(const RunConfig& base, const AblationGrid& grid) {
  grid.validate();
  std::vector<RunConfig> out;
  if (grid.baseline) {
    RunConfig c = base;
    c.reasoning.n_thoughts = 0;
    out.push_back(c);
  }
  for (Variant v : grid.variants)
    for (std::size_t nt : grid.n_thoughts) {
      if (nt == 0) continue;
      for (double mu : grid.mu) {
        RunConfig c = base;
        c.reasoning.variant = v;
        c.reasoning.n_thoughts = nt;
        c.mu = mu;
        out.push_back(c);
      }
    }
  return out;
}

double relative_delta(double value, double base) {
  if (base == 0.0) return value == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return (value - base) / base * 100.0;
}

std::string format_delta(double value, double base) {
  const double d = relative_delta(value, base);
  if (std::isinf(d)) return "(↑ n/a)";
  char buf[48];
  std::snprintf(buf, sizeof buf, "(%s %.2f%%)", d < 0.0 ? "↓" : "↑", std::fabs(d));
  return buf;
}

AblationResult run_ablation(const RunConfig& base, const AblationGrid& grid,
                            const std::string& out_dir) {
  const std::vector<RunConfig> configs = ablation_configs(base, grid);
  AblationResult result;
  result.cells.resize(configs.size());
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t ci = 0; ci < static_cast<std::int64_t>(configs.size()); ++ci) {
    const auto i = static_cast<std::size_t>(ci);
    RunConfig cfg = configs[i];
    AblationCell& cell = result.cells[i];
    cell.label = cell_label(cfg);
    cell.variant = cfg.reasoning.variant;
    cell.n_thoughts = cfg.reasoning.n_thoughts;
    cell.mu = cfg.mu;
    try {
      cfg.out_dir = out_dir.empty()
                        ? std::string()
                        : (std::filesystem::path(out_dir) / cell.label).string();
      const TrainingOutcome trained = run_training(cfg);
      const auto data =
          load_dataset(cfg.resolve(cfg.eval_data.empty() ? cfg.train_data : cfg.eval_data));
      const EvalReport report = evaluate(trained.params, cfg, data);
      cell.accuracy = report.accuracy;
      cell.bleu = report.bleu;
      cell.n_samples = report.n_samples;
      cell.config_hash = report.config_hash;
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  }
  if (!out_dir.empty()) {
    const std::filesystem::path out(out_dir);
    std::ofstream js(out / "ablation.json", std::ios::binary);
    js << result.to_json().dump(2) << '\n';
    std::ofstream txt(out / "ablation.txt", std::ios::binary);
    txt << result.to_text();
    if (!js || !txt) throw IoError("cannot write ablation results in '" + out_dir + "'");
  }
  return result;
}

nlohmann::json AblationResult::to_json() const {
  const AblationCell* base = nullptr;
  for (const auto& c : cells)
    if (c.n_thoughts == 0 && c.ok) base = &c;
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : cells) {
    nlohmann::json j{{"label", c.label},
                     {"variant", to_string(c.variant)},
                     {"n_thoughts", c.n_thoughts},
                     {"mu", c.mu},
                     {"status", c.ok ? "ok" : "failed"}};
    if (c.ok) {
      j["accuracy"] = c.accuracy;
      j["bleu"] = c.bleu;
      j["n_samples"] = c.n_samples;
      j["config_hash"] = c.config_hash;
      if (base) {
        const double da = relative_delta(c.accuracy, base->accuracy);
        const double db = relative_delta(c.bleu, base->bleu);
        j["accuracy_delta_pct"] = std::isinf(da) ? nlohmann::json(nullptr) : nlohmann::json(da);
        j["bleu_delta_pct"] = std::isinf(db) ? nlohmann::json(nullptr) : nlohmann::json(db);
      }
    } else {
      j["error"] = c.error;
    }
    out.push_back(j);
  }
  return {{"cells", out}};
}

std::string AblationResult::to_text() const {
  const AblationCell* base = nullptr;
  for (const auto& c : cells)
    if (c.n_thoughts == 0 && c.ok) base = &c;
  std::vector<std::vector<std::string>> rows{
      {"cell", "variant", "N_t", "mu", "accuracy", "bleu"}};
  for (const auto& c : cells) {
    char mu[32];
    std::snprintf(mu, sizeof mu, "%g", c.mu);
    std::vector<std::string> row{c.label, c.n_thoughts == 0 ? "-" : to_string(c.variant),
                                 std::to_string(c.n_thoughts), c.n_thoughts == 0 ? "-" : mu};
    if (!c.ok) {
      row.push_back("failed: " + c.error);
      row.push_back("");
    } else {
      for (auto [v, b] : {std::pair{c.accuracy, base ? base->accuracy : 0.0},
                          std::pair{c.bleu, base ? base->bleu : 0.0}}) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", v * 100.0);
        row.push_back(base ? std::string(buf) + " " + format_delta(v, b) : std::string(buf));
      }
    }
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) {
      std::size_t cps = 0;
      for (unsigned char ch : r[i]) cps += (ch & 0xC0) != 0x80;
      width[i] = std::max(width[i], cps);
    }
  std::string out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i)
      line += (i ? "  " : "") + (i + 1 < r.size() ? pad(r[i], width[i]) : r[i]);
    out += line + "\n";
  }
  return out;
}

}  // namespace mcout
