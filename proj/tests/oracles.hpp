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

// Reference values and independent oracles shared by the metric and dataset
// tests and the acceptance binary.

#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "mcout/dataset.hpp"

namespace mcout::testing {

struct BleuCase {
  std::string name;
  std::vector<std::string> candidates;
  std::vector<std::vector<std::string>> references;
  double expected;
};

// Expected values are written out from hand n-gram counts.
inline std::vector<BleuCase> bleu_cases() {
  const double e = 1e-9;
  return {
      {"exact match", {"the cat sat on the mat"}, {{"the cat sat on the mat"}}, 1.0},
      {"empty candidate", {""}, {{"the cat"}}, 0.0},
      {"short candidate", {"the cat sat"}, {{"the cat sat on the mat"}}, std::exp(-1.0)},
      {"repeated word",
       {"the the the the"},
       {{"the cat is on the mat"}},
       std::exp(1.0 - 6.0 / 4.0) *
           std::pow(0.5 * (e / (3 + e)) * (e / (2 + e)) * (e / (1 + e)), 0.25)},
      {"one substitution", {"a b c d e"}, {{"a b c d f"}}, std::pow(0.2, 0.25)},
      {"length tie picks shorter reference", {"a b c d"}, {{"a b c d e f", "a b"}}, 1.0},
      {"closest reference length", {"a b c d"}, {{"a b c d e f g", "x y z w v"}},
       std::exp(1.0 - 5.0 / 4.0)},
      {"normalization", {"The Cat, sat!"}, {{"the cat sat"}}, 1.0},
      {"corpus sums", {"a b c d", "e f"}, {{"a b c d"}, {"e g"}},
       std::pow(5.0 / 6.0 * 3.0 / 4.0, 0.25)},
      {"clipping across references",
       {"the the the"},
       {{"the cat", "the the dog"}},
       std::pow(2.0 / 3.0 * 0.5 * (e / (1 + e)), 0.25)},
  };
}

// Straightforward sentence BLEU over already-tokenized words, used as an
// oracle for enumerated cases.
inline double brute_force_bleu(const std::vector<std::string>& cand,
                               const std::vector<std::vector<std::string>>& refs) {
  if (cand.empty()) return 0.0;
  const double eps = 1e-9;
  auto grams = [](const std::vector<std::string>& w, std::size_t n) {
    std::map<std::vector<std::string>, int> out;
    for (std::size_t i = 0; i + n <= w.size(); ++i)
      ++out[std::vector<std::string>(w.begin() + i, w.begin() + i + n)];
    return out;
  };
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    double m = 0, t = 0;
    for (const auto& [g, c] : grams(cand, n)) {
      int best = 0;
      for (const auto& r : refs) {
        auto rg = grams(r, n);
        auto it = rg.find(g);
        if (it != rg.end()) best = std::max(best, it->second);
      }
      m += std::min(c, best);
      t += c;
    }
    log_sum += std::log(m > 0 ? m / t : (m + eps) / (t + eps));
  }
  std::size_t r = refs.front().size();
  for (const auto& ref : refs) {
    const auto d = [&](std::size_t x) { return x > cand.size() ? x - cand.size() : cand.size() - x; };
    if (d(ref.size()) < d(r) || (d(ref.size()) == d(r) && ref.size() < r)) r = ref.size();
  }
  const double c = static_cast<double>(cand.size());
  const double bp = c > static_cast<double>(r) ? 1.0 : std::exp(1.0 - static_cast<double>(r) / c);
  return bp * std::exp(log_sum / 4.0);
}

struct ChoiceCase {
  std::string prediction;
  std::string letter;
};

inline std::vector<ChoiceCase> choice_cases() {
  return {
      {"The answer is B.", "B"}, {"B", "B"},        {"(c)", "C"},     {"answer: d", "D"},
      {"A", "A"},                {"Because, B", "B"}, {"ABC", ""},      {"E", ""},
      {"b) the cat", "B"},       {"3B", ""},          {"", ""},         {"C or D", "C"},
  };
}

struct AccuracyCase {
  std::string name;
  std::vector<std::string> predictions;
  std::vector<std::string> golds;
  AnswerMode mode;
  double expected;
};

inline std::vector<AccuracyCase> accuracy_cases() {
  return {
      {"identical", {"3", "yes", "red"}, {"3", "yes", "red"}, AnswerMode::Open, 1.0},
      {"all wrong", {"1", "no"}, {"2", "yes"}, AnswerMode::Open, 0.0},
      {"normalized text", {"Three.", " Yes "}, {"three", "yes"}, AnswerMode::Open, 1.0},
      {"letter in a sentence", {"The answer is B."}, {"B"}, AnswerMode::MultipleChoice, 1.0},
      {"wrong letter", {"The answer is A."}, {"B"}, AnswerMode::MultipleChoice, 0.0},
      {"half", {"c", "x", "d", "B"}, {"C", "A", "D", "D"}, AnswerMode::MultipleChoice, 0.5},
      {"no letter predicted", {"none"}, {"C"}, AnswerMode::MultipleChoice, 0.0},
  };
}

struct DecodedObject {
  std::size_t row, col;
  std::string color, shape;
};

// Reads the scene back from pixels: colors from RGB values, shapes by
// comparing each cell's coverage with a single-object rendering.
inline std::vector<DecodedObject> decode_scene(const std::vector<int>& pixels, std::size_t grid,
                                               std::size_t size) {
  static const std::map<std::vector<int>, std::string> colors{
      {{255, 0, 0}, "red"},       {{0, 255, 0}, "green"},     {{0, 0, 255}, "blue"},
      {{255, 255, 0}, "yellow"},  {{255, 0, 255}, "magenta"}, {{0, 255, 255}, "cyan"},
      {{255, 255, 255}, "white"}, {{255, 128, 0}, "orange"}};
  const std::size_t px = size / grid;
  auto coverage = [&](const std::vector<int>& img, std::size_t row, std::size_t col) {
    std::vector<bool> lit(px * px);
    for (std::size_t dy = 0; dy < px; ++dy)
      for (std::size_t dx = 0; dx < px; ++dx) {
        const int* p = img.data() + ((row * px + dy) * size + col * px + dx) * 3;
        lit[dy * px + dx] = p[0] || p[1] || p[2];
      }
    return lit;
  };
  std::map<std::vector<bool>, std::string> templates;
  for (std::string shape : {"square", "circle", "triangle", "cross"}) {
    SampleMeta one;
    one.grid = grid;
    one.image_size = size;
    one.objects = {{0, 0, "red", shape}};
    templates[coverage(render_scene(one), 0, 0)] = shape;
  }
  std::vector<DecodedObject> out;
  for (std::size_t r = 0; r < grid; ++r)
    for (std::size_t c = 0; c < grid; ++c) {
      auto lit = coverage(pixels, r, c);
      std::size_t first = 0;
      while (first < lit.size() && !lit[first]) ++first;
      if (first == lit.size()) continue;
      const int* p = pixels.data() + ((r * px + first / px) * size + c * px + first % px) * 3;
      out.push_back({r, c, colors.at({p[0], p[1], p[2]}), templates.at(lit)});
    }
  return out;
}

inline bool stands(const std::string& rel, const DecodedObject& a, const DecodedObject& b) {
  if (rel == "left of") return a.col < b.col;
  if (rel == "right of") return a.col > b.col;
  if (rel == "above") return a.row < b.row;
  return a.row > b.row;
}

// Answers a question from its text and the decoded scene alone.
inline std::optional<std::string> answer_question(const std::string& question,
                                                  const std::vector<DecodedObject>& scene) {
  static const std::regex count_re("how many (\\w+) (\\w+?)(es|s) are there");
  static const std::regex rel_re("is the (\\w+) (\\w+) (left of|right of|above|below) the (\\w+) (\\w+)");
  static const std::regex attr_re("what (color|shape) is the object at row (\\d+) column (\\d+)");
  static const std::regex hop_re("how many objects are (left of|right of|above|below) the (\\w+) (\\w+)");
  std::string body = question, options;
  if (auto at = question.find(" options "); at != std::string::npos) {
    body = question.substr(0, at);
    options = question.substr(at + 9);
  }
  auto find = [&](const std::string& color, const std::string& shape) -> const DecodedObject* {
    for (const auto& o : scene)
      if (o.color == color && o.shape == shape) return &o;
    return nullptr;
  };
  std::smatch m;
  std::string value;
  if (std::regex_match(body, m, count_re)) {
    std::string shape = m[2].str() + (m[3] == "es" && m[2] != "cross" ? "e" : "");
    std::size_t n = 0;
    for (const auto& o : scene) n += o.color == m[1] && o.shape == shape;
    value = std::to_string(n);
  } else if (std::regex_match(body, m, rel_re)) {
    const auto* a = find(m[1], m[2]);
    const auto* b = find(m[4], m[5]);
    if (!a || !b) return std::nullopt;
    value = stands(m[3], *a, *b) ? "yes" : "no";
  } else if (std::regex_match(body, m, attr_re)) {
    value = "none";
    for (const auto& o : scene)
      if (o.row + 1 == std::stoul(m[2]) && o.col + 1 == std::stoul(m[3]))
        value = m[1] == "color" ? o.color : o.shape;
  } else if (std::regex_match(body, m, hop_re)) {
    const auto* anchor = find(m[2], m[3]);
    if (!anchor) return std::nullopt;
    std::size_t n = 0;
    for (const auto& o : scene) n += &o != anchor && stands(m[1], o, *anchor);
    value = std::to_string(n);
  } else {
    return std::nullopt;
  }
  if (options.empty()) return value;
  std::istringstream is(options);
  std::string letter, choice;
  while (is >> letter >> choice)
    if (choice == value) return std::string(1, static_cast<char>(letter[0] - 'a' + 'A'));
  return std::nullopt;
}

struct ConsistencyReport {
  std::size_t checked = 0;
  std::size_t mismatches = 0;
  std::string first_failure;
};

// Regenerates samples over every task and answer mode and compares the
// stored answer, the meta oracle and the pixel/question oracle.
inline ConsistencyReport dataset_self_consistency(std::size_t total, std::uint64_t seed) {
  ConsistencyReport rep;
  const TaskKind tasks[] = {TaskKind::Count, TaskKind::SpatialRelation,
                            TaskKind::AttributeLookup, TaskKind::MultiHop};
  const AnswerMode modes[] = {AnswerMode::Open, AnswerMode::MultipleChoice};
  const std::size_t per = total / 8;
  std::size_t cell = 0;
  for (TaskKind task : tasks)
    for (AnswerMode mode : modes) {
      DatasetSpec spec;
      spec.task = task;
      spec.mode = mode;
      spec.samples = per + (cell < total % 8 ? 1 : 0);
      spec.seed = seed + cell++;
      for (const auto& s : generate_dataset(spec)) {
        ++rep.checked;
        std::vector<int> pixels(s.image.pixels.size());
        for (std::size_t i = 0; i < pixels.size(); ++i)
          pixels[i] = static_cast<int>(std::lround(s.image.pixels[i] * 255.0));
        const auto decoded = answer_question(s.question, decode_scene(pixels, spec.grid, spec.image_size));
        const bool ok = decoded && *decoded == s.answer && oracle_answer(s.meta) == s.answer &&
                        question_text(s.meta) == s.question && render_scene(s.meta) == pixels;
        if (!ok) {
          if (rep.mismatches++ == 0) rep.first_failure = s.id + ": " + s.question + " -> " + s.answer;
        }
      }
    }
  return rep;
}

}  // namespace mcout::testing
