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

#include "mcout/tokenizer.hpp"

#include <cctype>
#include <sstream>

namespace mcout {

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else {
      pending_space = true;
    }
  }
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream is{std::string(text)};
  for (std::string w; is >> w;) words.push_back(std::move(w));
  return words;
}

Vocabulary::Vocabulary() {
  words_ = {"<pad>", "<eos>", "<unk>", "<bos>"};
  for (int n = 0; n <= 64; ++n) words_.push_back(std::to_string(n));
  for (const char* w :
       {"how",     "many",     "are",      "there",     "is",      "the",
        "left",    "right",    "of",       "above",     "below",   "what",
        "color",   "shape",    "object",   "objects",   "at",      "row",
        "column",  "options",  "a",        "b",         "c",       "d",
        "yes",     "no",       "red",      "green",     "blue",    "yellow",
        "magenta", "cyan",     "white",    "orange",    "square",  "circle",
        "triangle", "cross",   "squares",  "circles",   "triangles", "crosses",
        "answer",  "none"})
    words_.emplace_back(w);
  for (std::size_t i = 0; i < words_.size(); ++i)
    index_.emplace(words_[i], static_cast<TokenId>(i));
}

const Vocabulary& Vocabulary::instance() {
  static const Vocabulary vocab;
  return vocab;
}

TokenId Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::word(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size())
    return words_[static_cast<std::size_t>(kUnk)];
  return words_[static_cast<std::size_t>(id)];
}

TokenSequence Vocabulary::encode(std::string_view text) const {
  TokenSequence ids;
  for (const auto& w : split_words(normalize_text(text))) ids.push_back(id(w));
  return ids;
}

std::string Vocabulary::decode(const TokenSequence& ids) const {
  std::string out;
  for (TokenId t : ids) {
    if (t == kPad || t == kEos || t == kBos) continue;
    if (!out.empty()) out.push_back(' ');
    out += word(t);
  }
  return out;
}

}  // namespace mcout
