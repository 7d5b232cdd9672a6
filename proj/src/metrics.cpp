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

#include "mcout/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "mcout/errors.hpp"
#include "mcout/tokenizer.hpp"

namespace mcout {

namespace {

using NGramCounts = std::map<std::vector<std::string>, std::size_t>;

NGramCounts count_ngrams(const std::vector<std::string>& words, std::size_t n) {
  NGramCounts counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i)
    ++counts[std::vector<std::string>(words.begin() + i, words.begin() + i + n)];
  return counts;
}

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

}  // namespace

double corpus_bleu(const std::vector<std::string>& candidates,
                   const std::vector<std::vector<std::string>>& references,
                   std::size_t max_n) {
  if (candidates.size() != references.size())
    throw ContractError("bleu: candidate and reference counts differ");
  if (max_n == 0) throw ContractError("bleu: max_n must be positive");
  std::vector<double> matches(max_n, 0.0), totals(max_n, 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (references[i].empty()) throw ContractError("bleu: empty reference list");
    const auto cand = split_words(normalize_text(candidates[i]));
    std::vector<std::vector<std::string>> refs;
    for (const auto& r : references[i]) refs.push_back(split_words(normalize_text(r)));

    cand_len += static_cast<double>(cand.size());
    std::size_t best = refs.front().size();
    for (const auto& r : refs) {
      const auto d = [&](std::size_t len) {
        return len > cand.size() ? len - cand.size() : cand.size() - len;
      };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best))
        best = r.size();
    }
    ref_len += static_cast<double>(best);

    for (std::size_t n = 1; n <= max_n; ++n) {
      const NGramCounts cand_counts = count_ngrams(cand, n);
      NGramCounts max_ref;
      for (const auto& r : refs)
        for (const auto& [gram, c] : count_ngrams(r, n))
          max_ref[gram] = std::max(max_ref[gram], c);
      for (const auto& [gram, c] : cand_counts) {
        auto it = max_ref.find(gram);
        matches[n - 1] += static_cast<double>(std::min(c, it == max_ref.end() ? 0 : it->second));
        totals[n - 1] += static_cast<double>(c);
      }
    }
  }
  if (cand_len == 0.0) return 0.0;

  double log_sum = 0.0;
  for (std::size_t n = 0; n < max_n; ++n) {
    const double p = matches[n] > 0.0
                         ? matches[n] / totals[n]
                         : (matches[n] + kBleuEpsilon) / (totals[n] + kBleuEpsilon);
    log_sum += std::log(p);
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum / static_cast<double>(max_n));
}

double bleu(std::string_view candidate, const std::vector<std::string>& references,
            std::size_t max_n) {
  return corpus_bleu({std::string(candidate)}, {references}, max_n);
}

std::string extract_choice(std::string_view text) {
  for (const char lo : {'A', 'a'}) {
    for (std::size_t i = 0; i < text.size(); ++i) {
      const char c = text[i];
      if (c < lo || c > lo + 3) continue;
      const bool left_ok = i == 0 || !is_alnum(text[i - 1]);
      const bool right_ok = i + 1 == text.size() || !is_alnum(text[i + 1]);
      if (left_ok && right_ok)
        return std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
  }
  return {};
}

double accuracy(const std::vector<std::string>& predictions,
                const std::vector<std::string>& golds, AnswerMode mode) {
  if (predictions.size() != golds.size())
    throw ContractError("accuracy: " + std::to_string(predictions.size()) +
                        " predictions for " + std::to_string(golds.size()) + " golds");
  if (golds.empty()) throw ContractError("accuracy: no samples");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (mode == AnswerMode::Open) {
      correct += normalize_text(predictions[i]) == normalize_text(golds[i]);
    } else {
      // Golds without a letter fall back to text comparison.
      const std::string g = extract_choice(golds[i]);
      if (g.empty())
        correct += normalize_text(predictions[i]) == normalize_text(golds[i]);
      else
        correct += extract_choice(predictions[i]) == g;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(golds.size());
}

}  // namespace mcout
