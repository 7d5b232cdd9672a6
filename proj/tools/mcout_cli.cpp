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

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mcout/ablation.hpp"
#include "mcout/analysis.hpp"
#include "mcout/checkpoint.hpp"
#include "mcout/config.hpp"
#include "mcout/dataset.hpp"
#include "mcout/errors.hpp"
#include "mcout/training.hpp"

namespace {

using namespace mcout;

int gen_data(const std::string& spec_path, const std::string& out_dir) {
  const DatasetSpec spec = DatasetSpec::from_key_values(read_key_values(spec_path));
  std::filesystem::create_directories(out_dir);
  const auto path = (std::filesystem::path(out_dir) / "dataset.jsonl").string();
  save_dataset(path, generate_dataset(spec));
  std::cout << "wrote " << spec.samples << " samples to " << path << "\n";
  return 0;
}

int train(const std::string& config_path, const std::string& out_dir,
          const std::optional<std::string>& resume) {
  RunConfig cfg = RunConfig::load(config_path);
  cfg.out_dir = out_dir;
  const TrainingOutcome outcome = run_training(cfg, resume);
  std::cout << "trained " << outcome.records.size() << " steps; final checkpoint "
            << outcome.final_checkpoint << "\n";
  if (!cfg.eval_data.empty()) {
    const auto data = load_dataset(cfg.resolve(cfg.eval_data));
    std::cout << evaluate(outcome.params, cfg, data).to_json().dump() << "\n";
  }
  return 0;
}

int eval(const std::string& ckpt_path, const std::string& data_path, const std::string& mode) {
  auto [cfg, params] = params_from_checkpoint(load_checkpoint(ckpt_path));
  set_precision(cfg.precision);
  cfg.eval_mode = parse_answer_mode(mode);
  const auto data = load_dataset(data_path);
  std::cout << evaluate(params, cfg, data).to_json().dump() << "\n";
  return 0;
}

int analyze(const std::string& ckpt_path, const std::string& data_path, std::size_t nt,
            const std::string& variant, std::size_t n_samples, const std::string& out) {
  auto [cfg, params] = params_from_checkpoint(load_checkpoint(ckpt_path));
  set_precision(cfg.precision);
  cfg.reasoning.n_thoughts = nt;
  cfg.reasoning.variant = parse_variant(variant);
  const auto data = load_dataset(data_path);
  const LatentAnalysis a = analyze_latents(params, cfg.reasoning, data, n_samples);
  write_latent_analysis(out, a);
  std::cout << "wrote " << a.rows.size() << " rows to " << out << "\n";
  return 0;
}

int ablate(const std::string& config_path, const std::string& grid_path,
           const std::string& out_dir) {
  const RunConfig cfg = RunConfig::load(config_path);
  const AblationGrid grid = AblationGrid::from_key_values(read_key_values(grid_path));
  const AblationResult r = run_ablation(cfg, grid, out_dir);
  std::cout << r.to_text();
  for (const auto& c : r.cells)
    if (!c.ok) return 1;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mcout: continuous-thought reasoning for a small multimodal model"};
  app.require_subcommand(1);

  std::string spec, out, config, ckpt, data, mode = "open", variant = "multi", grid;
  std::string resume;
  std::size_t nt = 5, n_samples = 100;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--spec", spec, "Dataset spec file")->required();
  gen->add_option("--out", out, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", config, "Run config file")->required();
  tr->add_option("--out", out, "Output directory")->required();
  tr->add_option("--resume", resume, "Checkpoint to resume from");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--ckpt", ckpt, "Checkpoint")->required();
  ev->add_option("--data", data, "Dataset JSONL")->required();
  ev->add_option("--mode", mode, "Answer mode")->check(CLI::IsMember({"open", "choice"}));

  auto* an = app.add_subcommand("analyze", "Latent statistics per thought iteration");
  an->add_option("--ckpt", ckpt, "Checkpoint")->required();
  an->add_option("--data", data, "Dataset JSONL")->required();
  an->add_option("--nt", nt, "Number of thoughts");
  an->add_option("--variant", variant, "base or multi")->check(CLI::IsMember({"base", "multi"}));
  an->add_option("--samples", n_samples, "Samples to analyze");
  an->add_option("--out", out, "Stats CSV path")->required();

  auto* ab = app.add_subcommand("ablate", "Run the ablation grid");
  ab->add_option("--config", config, "Base run config")->required();
  ab->add_option("--grid", grid, "Grid file")->required();
  ab->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return gen_data(spec, out);
    if (*tr) return train(config, out, resume.empty() ? std::nullopt : std::optional(resume));
    if (*ev) return eval(ckpt, data, mode);
    if (*an) return analyze(ckpt, data, nt, variant, n_samples, out);
    if (*ab) return ablate(config, grid, out);
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
