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
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mcout/model.hpp"

namespace mcout {

enum class TaskKind { Count, SpatialRelation, AttributeLookup, MultiHop };
enum class AnswerMode { Open, MultipleChoice };

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);
std::string to_string(AnswerMode mode);
AnswerMode parse_answer_mode(std::string_view text);

struct SceneObject {
  std::size_t row = 0;
  std::size_t col = 0;
  std::string color;
  std::string shape;
};

/// Everything needed to re-render a sample and recompute its answer.
struct SampleMeta {
  TaskKind task = TaskKind::Count;
  AnswerMode mode = AnswerMode::Open;
  std::size_t grid = 4;
  std::size_t image_size = 16;
  std::uint64_t seed = 0;
  std::vector<SceneObject> objects;
  // Question parameters; which ones are used depends on the task.
  std::string color;
  std::string shape;
  std::string relation;  // left, right, above, below
  std::string color2;
  std::string shape2;
  std::string attribute;  // color or shape
  std::size_t row = 0;    // 1-based cell for attribute lookup
  std::size_t col = 0;
  std::vector<std::string> choices;  // multiple-choice mode

  nlohmann::json to_json() const;
  static SampleMeta from_json(const nlohmann::json& j);
};

struct SyntheticSample {
  std::string id;
  Image image;
  std::string question;
  std::string answer;
  std::vector<std::string> choices;
  SampleMeta meta;
};

struct DatasetSpec {
  TaskKind task = TaskKind::Count;
  std::size_t grid = 4;
  std::size_t image_size = 16;
  std::vector<std::string> colors{"red", "green", "blue", "yellow"};
  std::vector<std::string> shapes{"square", "circle", "triangle", "cross"};
  std::size_t samples = 100;
  std::uint64_t seed = 0;
  AnswerMode mode = AnswerMode::Open;
  std::size_t max_objects = 6;
  /// Upper bound on the counted object kind in count scenes.
  std::size_t max_count = 4;
  std::size_t num_choices = 4;

  void validate() const;
  /// Keys: task, grid, image_size, colors, shapes, samples, seed,
  /// answer_mode, max_objects, max_count, choices. Unknown keys throw.
  static DatasetSpec from_key_values(const std::map<std::string, std::string>& kv);
};

/// Sample `index` is drawn from its own seed, mix(spec.seed, index), so the
/// output does not depend on how generation is split across threads.
std::vector<SyntheticSample> generate_dataset(const DatasetSpec& spec);
SyntheticSample generate_sample(const DatasetSpec& spec, std::size_t index);

/// Ground truth recomputed from the scene description. In multiple-choice
/// mode this is the letter of the correct choice.
std::string oracle_answer(const SampleMeta& meta);
/// The question text implied by the meta.
std::string question_text(const SampleMeta& meta);
/// Pixels as integers 0..255, H x W x 3 row-major.
std::vector<int> render_scene(const SampleMeta& meta);
Image to_image(const std::vector<int>& pixels, std::size_t size);

void write_jsonl(std::ostream& os, const std::vector<SyntheticSample>& samples);
void save_dataset(const std::string& path, const std::vector<SyntheticSample>& samples);
std::vector<SyntheticSample> read_jsonl(std::istream& is);
std::vector<SyntheticSample> load_dataset(const std::string& path);

}  // namespace mcout
