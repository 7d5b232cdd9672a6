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

#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "mcout/dataset.hpp"
#include "mcout/errors.hpp"
#include "oracles.hpp"

using namespace mcout;
using namespace mcout::testing;

namespace {

std::string dump(const std::vector<SyntheticSample>& samples) {
  std::ostringstream os;
  write_jsonl(os, samples);
  return os.str();
}

DatasetSpec spec_for(TaskKind task, AnswerMode mode = AnswerMode::Open) {
  DatasetSpec s;
  s.task = task;
  s.mode = mode;
  s.samples = 200;
  s.seed = 21;
  return s;
}

}  // namespace

TEST_CASE("same spec and seed give byte-identical datasets") {
  for (TaskKind t : {TaskKind::Count, TaskKind::SpatialRelation, TaskKind::AttributeLookup,
                     TaskKind::MultiHop}) {
    const auto spec = spec_for(t, AnswerMode::MultipleChoice);
    CHECK(dump(generate_dataset(spec)) == dump(generate_dataset(spec)));
    auto other = spec;
    other.seed = 22;
    CHECK(dump(generate_dataset(spec)) != dump(generate_dataset(other)));
  }
}

TEST_CASE("samples depend only on their own index") {
  auto spec = spec_for(TaskKind::MultiHop);
  const auto all = generate_dataset(spec);
  for (std::size_t i : {0u, 7u, 199u}) CHECK(dump({generate_sample(spec, i)}) == dump({all[i]}));
}

TEST_CASE("counting three red squares") {
  SampleMeta m;
  m.task = TaskKind::Count;
  m.color = "red";
  m.shape = "square";
  m.objects = {{0, 0, "red", "square"}, {1, 2, "red", "square"}, {3, 3, "red", "square"},
               {2, 1, "red", "circle"}, {0, 3, "blue", "square"}};
  CHECK(question_text(m) == "how many red squares are there");
  CHECK(oracle_answer(m) == "3");
  const auto decoded = answer_question(question_text(m), decode_scene(render_scene(m), 4, 16));
  REQUIRE(decoded);
  CHECK(*decoded == "3");
}

TEST_CASE("empty scene counts zero") {
  SampleMeta m;
  m.task = TaskKind::Count;
  m.color = "green";
  m.shape = "cross";
  CHECK(oracle_answer(m) == "0");
  const auto pixels = render_scene(m);
  CHECK(std::all_of(pixels.begin(), pixels.end(), [](int v) { return v == 0; }));
}

TEST_CASE("left of compares columns") {
  SampleMeta m;
  m.task = TaskKind::SpatialRelation;
  m.color = "red";
  m.shape = "circle";
  m.color2 = "blue";
  m.shape2 = "triangle";
  m.relation = "left";
  m.objects = {{2, 1, "red", "circle"}, {0, 3, "blue", "triangle"}};
  CHECK(oracle_answer(m) == "yes");
  m.relation = "right";
  CHECK(oracle_answer(m) == "no");
  m.relation = "above";
  CHECK(oracle_answer(m) == "no");
  m.relation = "below";
  CHECK(oracle_answer(m) == "yes");
}

TEST_CASE("multi-hop counts objects in relation to the anchor") {
  SampleMeta m;
  m.task = TaskKind::MultiHop;
  m.color = "yellow";
  m.shape = "square";
  m.relation = "above";
  m.objects = {{2, 2, "yellow", "square"}, {0, 0, "red", "circle"}, {1, 3, "blue", "cross"},
               {2, 0, "green", "square"}, {3, 1, "red", "triangle"}};
  CHECK(oracle_answer(m) == "2");
  m.objects.erase(m.objects.begin());
  CHECK_THROWS_AS(oracle_answer(m), FormatError);
}

TEST_CASE("attribute lookup reads the addressed cell") {
  SampleMeta m;
  m.task = TaskKind::AttributeLookup;
  m.objects = {{1, 2, "green", "triangle"}};
  m.row = 2;
  m.col = 3;
  m.attribute = "shape";
  CHECK(oracle_answer(m) == "triangle");
  m.attribute = "color";
  CHECK(oracle_answer(m) == "green");
}

TEST_CASE("multiple-choice samples hold the answer among distinct options") {
  for (TaskKind t : {TaskKind::Count, TaskKind::SpatialRelation, TaskKind::AttributeLookup,
                     TaskKind::MultiHop}) {
    for (std::size_t k : {2u, 3u, 4u}) {
      auto spec = spec_for(t, AnswerMode::MultipleChoice);
      spec.num_choices = k;
      for (const auto& s : generate_dataset(spec)) {
        CHECK(s.choices.size() == (t == TaskKind::SpatialRelation ? 2u : k));
        CHECK(std::set<std::string>(s.choices.begin(), s.choices.end()).size() == s.choices.size());
        REQUIRE(s.answer.size() == 1);
        const std::size_t idx = static_cast<std::size_t>(s.answer[0] - 'A');
        REQUIRE(idx < s.choices.size());
        SampleMeta open = s.meta;
        open.mode = AnswerMode::Open;
        CHECK(s.choices[idx] == oracle_answer(open));
      }
    }
  }
}

TEST_CASE("stored answers agree with both oracles") {
  const auto rep = dataset_self_consistency(2000, 5);
  INFO(rep.first_failure);
  CHECK(rep.checked == 2000);
  CHECK(rep.mismatches == 0);
}

TEST_CASE("count scenes respect max_count and max_objects") {
  auto spec = spec_for(TaskKind::Count);
  spec.max_objects = 5;
  spec.max_count = 3;
  for (const auto& s : generate_dataset(spec)) {
    CHECK(s.meta.objects.size() <= 5);
    CHECK(std::stoi(s.answer) <= 3);
  }
}

TEST_CASE("invalid specs are rejected") {
  DatasetSpec s;
  s.max_objects = 17;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.grid = 5;  // 16 is not a multiple of 5
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.grid = 8;
  s.image_size = 16;  // 2-pixel cells
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.colors = {"purple"};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.num_choices = 5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.task = TaskKind::MultiHop;
  s.colors = {"red"};
  s.shapes = {"square"};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.grid = 5;
  s.image_size = 15;  // 3-pixel cells: circle and square coincide
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK_THROWS_AS(DatasetSpec::from_key_values({{"bogus", "1"}}), ConfigError);
  CHECK_THROWS_AS(parse_task_kind("sorting"), ConfigError);
}

TEST_CASE("JSONL round trip preserves every sample") {
  const auto samples = generate_dataset(spec_for(TaskKind::AttributeLookup, AnswerMode::MultipleChoice));
  const std::string text = dump(samples);
  std::istringstream is(text);
  const auto back = read_jsonl(is);
  REQUIRE(back.size() == samples.size());
  CHECK(dump(back) == text);
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].image.pixels == samples[i].image.pixels);
    CHECK(oracle_answer(back[i].meta) == back[i].answer);
  }
  std::istringstream bad("{\"id\": 3}\n");
  CHECK_THROWS_AS(read_jsonl(bad), FormatError);
}
