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
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mcout/tensor.hpp"

namespace mcout {

using TokenSequence = std::vector<TokenId>;

/// Lowercases, turns punctuation into spaces and collapses whitespace.
std::string normalize_text(std::string_view text);
std::vector<std::string> split_words(std::string_view text);

/// Fixed word-level vocabulary covering every word the synthetic tasks can
/// produce. Ids are stable across builds; unknown words map to `unk`.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kUnk = 2;
  static constexpr TokenId kBos = 3;

  static const Vocabulary& instance();

  std::size_t size() const { return words_.size(); }
  TokenId id(std::string_view word) const;
  const std::string& word(TokenId id) const;

  TokenSequence encode(std::string_view text) const;
  /// Joins words with single spaces, dropping pad/eos/bos.
  std::string decode(const TokenSequence& ids) const;

 private:
  Vocabulary();
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace mcout
