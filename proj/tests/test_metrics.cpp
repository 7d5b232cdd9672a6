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
#include <cmath>

#include "mcout/errors.hpp"
#include "mcout/metrics.hpp"
#include "mcout/tokenizer.hpp"
#include "oracles.hpp"

using namespace mcout;
using namespace mcout::testing;

TEST_CASE("bleu matches the hand-computed case list") {
  for (const auto& c : bleu_cases()) {
    INFO(c.name);
    const double got = corpus_bleu(c.candidates, c.references);
    CHECK(std::fabs(got - c.expected) <= 1e-9 * std::max(1.0, c.expected));
    if (c.expected > 0) CHECK(std::fabs(got / c.expected - 1.0) <= 1e-9);
  }
}

TEST_CASE("bleu contracts") {
  CHECK_THROWS_AS(bleu("a b", {}), ContractError);
  CHECK_THROWS_AS(corpus_bleu({"a", "b"}, {{"a"}}), ContractError);
  CHECK(corpus_bleu({}, {}) == 0.0);
  const double v = bleu("x y z", {"a b c d"});
  CHECK(v >= 0.0);
  CHECK(v <= 1.0);
}

TEST_CASE("bleu is symmetric under reference permutation") {
  const std::vector<std::string> refs{"a b c d e", "a c b e", "b c d a a", "e d c b a"};
  for (const std::string cand : {"a b c d", "b c d a a e", "c b e", "a a a a"}) {
    auto perm = refs;
    std::sort(perm.begin(), perm.end());
    const double first = bleu(cand, perm);
    do {
      CHECK(bleu(cand, perm) == first);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST_CASE("bleu agrees with a brute-force counter and never rises when a match is lost") {
  const std::vector<std::string> ref{"a", "b", "a", "c", "b"};
  const std::vector<std::string> alphabet{"a", "b", "c"};
  std::size_t checked = 0;
  std::vector<std::size_t> digits(5, 0);
  for (std::size_t code = 0; code < 243; ++code) {
    std::vector<std::string> cand(5);
    for (std::size_t i = 0, x = code; i < 5; ++i, x /= 3) cand[i] = alphabet[x % 3];
    auto join = [](const std::vector<std::string>& w) {
      std::string s;
      for (const auto& t : w) s += (s.empty() ? "" : " ") + t;
      return s;
    };
    const double base = bleu(join(cand), {join(ref)});
    CHECK(std::fabs(base - brute_force_bleu(cand, {ref})) <= 1e-12);
    for (std::size_t i = 0; i < 5; ++i) {
      auto worse = cand;
      worse[i] = "z";  // never in the reference
      const double lower = bleu(join(worse), {join(ref)});
      CHECK(std::fabs(lower - brute_force_bleu(worse, {ref})) <= 1e-12);
      CHECK(lower <= base);
      ++checked;
    }
  }
  CHECK(checked == 243 * 5);
}

TEST_CASE("choice extraction follows its case list") {
  for (const auto& c : choice_cases()) {
    INFO(c.prediction);
    CHECK(extract_choice(c.prediction) == c.letter);
  }
}

TEST_CASE("accuracy follows its case list") {
  for (const auto& c : accuracy_cases()) {
    INFO(c.name);
    CHECK(accuracy(c.predictions, c.golds, c.mode) == c.expected);
  }
  CHECK_THROWS_AS(accuracy({"a"}, {"a", "b"}, AnswerMode::Open), ContractError);
  CHECK_THROWS_AS(accuracy({}, {}, AnswerMode::Open), ContractError);
}

TEST_CASE("accuracy of a list against itself is one") {
  const std::vector<std::vector<std::string>> lists{
      {"3"}, {"yes", "no", "B"}, {"", "  "}, {"The answer is B.", "c", "zzz", "A b"}};
  for (const auto& x : lists) {
    CHECK(accuracy(x, x, AnswerMode::Open) == 1.0);
    CHECK(accuracy(x, x, AnswerMode::MultipleChoice) == 1.0);
  }
}

TEST_CASE("text normalization") {
  CHECK(normalize_text("  The Cat,  SAT! ") == "the cat sat");
  CHECK(normalize_text("") == "");
  CHECK(split_words("a  b\tc").size() == 3);
}
