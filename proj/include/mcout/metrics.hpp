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

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "mcout/dataset.hpp"

namespace mcout {

/// Zero-count n-gram precisions are smoothed as (m + eps) / (t + eps).
constexpr double kBleuEpsilon = 1e-9;

/// Corpus BLEU over (candidate, references) pairs: clipped n-gram matches
/// and candidate n-gram totals are summed over the corpus before taking
/// precisions; the brevity penalty uses the summed candidate length and the
/// summed closest reference lengths (ties go to the shorter reference).
/// Text is normalized and split on whitespace first.
double corpus_bleu(const std::vector<std::string>& candidates,
                   const std::vector<std::vector<std::string>>& references,
                   std::size_t max_n = 4);

/// Single-pair BLEU, the one-element corpus.
double bleu(std::string_view candidate, const std::vector<std::string>& references,
            std::size_t max_n = 4);

/// First standalone choice letter: an uppercase A-D not touching other
/// letters or digits; failing that, a lowercase a-d under the same rule.
/// Returns the letter uppercased, or an empty string.
std::string extract_choice(std::string_view prediction);

/// Open mode compares normalized text; choice mode compares the extracted
/// letters.
double accuracy(const std::vector<std::string>& predictions,
                const std::vector<std::string>& golds, AnswerMode mode);

}  // namespace mcout
