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

#include "mcout/config.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>

#include "mcout/errors.hpp"

namespace mcout {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (v.empty() || v.front() == '-') throw std::invalid_argument(v);
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(x);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

KeyValues parse_key_values(std::istream& is, const std::string& source) {
  KeyValues kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": repeated key '" + key + "'");
  }
  return kv;
}

KeyValues read_key_values(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  return parse_key_values(is, path);
}

void RunConfig::validate() const {
  model.validate();
  generation.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (eval_batch_size == 0) throw ConfigError("eval_batch_size must be positive");
  if (mu < 0.0) throw ConfigError("mu must be non-negative");
  if (!(min_lr <= init_lr)) throw ConfigError("min_lr must not exceed init_lr");
  if (warmup_lr < 0.0 || min_lr < 0.0) throw ConfigError("learning rates must be non-negative");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  if (adam_eps <= 0.0) throw ConfigError("adam_eps must be positive");
  if (grad_clip < 0.0) throw ConfigError("grad_clip must be non-negative");
  if (pretrain_epochs > 0 && pretrain_data.empty())
    throw ConfigError("pretrain_epochs is set but pretrain_data is empty");
}

std::string RunConfig::resolve(const std::string& path) const {
  if (path.empty() || base_dir.empty() || std::filesystem::path(path).is_absolute()) return path;
  return (std::filesystem::path(base_dir) / path).string();
}

KeyValues RunConfig::to_key_values() const {
  const auto& d = model.decoder;
  const auto& e = model.encoder;
  return {
      {"d_model", std::to_string(d.d_model)},
      {"layers", std::to_string(d.layers)},
      {"heads", std::to_string(d.heads)},
      {"vocab", std::to_string(d.vocab)},
      {"max_positions", std::to_string(d.max_positions)},
      {"max_context", std::to_string(d.max_context)},
      {"dropout", format_double(d.dropout)},
      {"image_size", std::to_string(e.image_height)},
      {"channels", std::to_string(e.channels)},
      {"patch_size", std::to_string(e.patch_size)},
      {"latent_heads", std::to_string(model.latent_heads)},
      {"init_std", format_double(model.init_std)},
      {"n_thoughts", std::to_string(reasoning.n_thoughts)},
      {"variant", to_string(reasoning.variant)},
      {"backprop_through_loop", from_bool(reasoning.backprop_through_loop)},
      {"detach_thoughts", from_bool(reasoning.detach_thoughts)},
      {"incremental", from_bool(reasoning.incremental)},
      {"temperature", format_double(generation.temperature)},
      {"max_new_tokens", std::to_string(generation.max_new_tokens)},
      {"mu", format_double(mu)},
      {"batch_size", std::to_string(batch_size)},
      {"seed", std::to_string(seed)},
      {"epochs", std::to_string(epochs)},
      {"pretrain_epochs", std::to_string(pretrain_epochs)},
      {"max_steps", std::to_string(max_steps)},
      {"pretrain_data", pretrain_data},
      {"train_data", train_data},
      {"eval_data", eval_data},
      {"warmup_lr", format_double(warmup_lr)},
      {"init_lr", format_double(init_lr)},
      {"min_lr", format_double(min_lr)},
      {"warmup_steps", std::to_string(warmup_steps)},
      {"weight_decay", format_double(weight_decay)},
      {"beta1", format_double(beta1)},
      {"beta2", format_double(beta2)},
      {"adam_eps", format_double(adam_eps)},
      {"grad_clip", format_double(grad_clip)},
      {"objective", objective == Objective::Total ? "total" : "final"},
      {"precision", precision == Precision::F32 ? "f32" : "f64"},
      {"eval_batch_size", std::to_string(eval_batch_size)},
      {"eval_mode", to_string(eval_mode)},
  };
}

RunConfig RunConfig::from_key_values(const KeyValues& kv) {
  RunConfig c;
  auto& d = c.model.decoder;
  auto& e = c.model.encoder;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters{
      {"d_model", [&](auto& k, auto& v) { d.d_model = to_size(k, v); }},
      {"layers", [&](auto& k, auto& v) { d.layers = to_size(k, v); }},
      {"heads", [&](auto& k, auto& v) { d.heads = to_size(k, v); }},
      {"vocab", [&](auto& k, auto& v) { d.vocab = to_size(k, v); }},
      {"max_positions", [&](auto& k, auto& v) { d.max_positions = to_size(k, v); }},
      {"max_context", [&](auto& k, auto& v) { d.max_context = to_size(k, v); }},
      {"dropout", [&](auto& k, auto& v) { d.dropout = to_double(k, v); }},
      {"image_size",
       [&](auto& k, auto& v) { e.image_height = e.image_width = to_size(k, v); }},
      {"channels", [&](auto& k, auto& v) { e.channels = to_size(k, v); }},
      {"patch_size", [&](auto& k, auto& v) { e.patch_size = to_size(k, v); }},
      {"latent_heads", [&](auto& k, auto& v) { c.model.latent_heads = to_size(k, v); }},
      {"init_std", [&](auto& k, auto& v) { c.model.init_std = to_double(k, v); }},
      {"n_thoughts", [&](auto& k, auto& v) { c.reasoning.n_thoughts = to_size(k, v); }},
      {"variant", [&](auto&, auto& v) { c.reasoning.variant = parse_variant(v); }},
      {"backprop_through_loop",
       [&](auto& k, auto& v) { c.reasoning.backprop_through_loop = to_bool(k, v); }},
      {"detach_thoughts",
       [&](auto& k, auto& v) { c.reasoning.detach_thoughts = to_bool(k, v); }},
      {"incremental", [&](auto& k, auto& v) { c.reasoning.incremental = to_bool(k, v); }},
      {"temperature", [&](auto& k, auto& v) { c.generation.temperature = to_double(k, v); }},
      {"max_new_tokens",
       [&](auto& k, auto& v) { c.generation.max_new_tokens = to_size(k, v); }},
      {"mu", [&](auto& k, auto& v) { c.mu = to_double(k, v); }},
      {"batch_size", [&](auto& k, auto& v) { c.batch_size = to_size(k, v); }},
      {"seed", [&](auto& k, auto& v) { c.seed = to_size(k, v); }},
      {"epochs", [&](auto& k, auto& v) { c.epochs = to_size(k, v); }},
      {"pretrain_epochs", [&](auto& k, auto& v) { c.pretrain_epochs = to_size(k, v); }},
      {"max_steps", [&](auto& k, auto& v) { c.max_steps = to_size(k, v); }},
      {"pretrain_data", [&](auto&, auto& v) { c.pretrain_data = v; }},
      {"train_data", [&](auto&, auto& v) { c.train_data = v; }},
      {"eval_data", [&](auto&, auto& v) { c.eval_data = v; }},
      {"warmup_lr", [&](auto& k, auto& v) { c.warmup_lr = to_double(k, v); }},
      {"init_lr", [&](auto& k, auto& v) { c.init_lr = to_double(k, v); }},
      {"min_lr", [&](auto& k, auto& v) { c.min_lr = to_double(k, v); }},
      {"warmup_steps", [&](auto& k, auto& v) { c.warmup_steps = to_size(k, v); }},
      {"weight_decay", [&](auto& k, auto& v) { c.weight_decay = to_double(k, v); }},
      {"beta1", [&](auto& k, auto& v) { c.beta1 = to_double(k, v); }},
      {"beta2", [&](auto& k, auto& v) { c.beta2 = to_double(k, v); }},
      {"adam_eps", [&](auto& k, auto& v) { c.adam_eps = to_double(k, v); }},
      {"grad_clip", [&](auto& k, auto& v) { c.grad_clip = to_double(k, v); }},
      {"objective",
       [&](auto& k, auto& v) {
         if (v == "total") c.objective = Objective::Total;
         else if (v == "final") c.objective = Objective::Final;
         else throw ConfigError("key '" + k + "': expected total or final");
       }},
      {"precision",
       [&](auto& k, auto& v) {
         if (v == "f32") c.precision = Precision::F32;
         else if (v == "f64") c.precision = Precision::F64;
         else throw ConfigError("key '" + k + "': expected f32 or f64");
       }},
      {"eval_batch_size", [&](auto& k, auto& v) { c.eval_batch_size = to_size(k, v); }},
      {"eval_mode", [&](auto&, auto& v) { c.eval_mode = parse_answer_mode(v); }},
      {"out_dir", [&](auto&, auto& v) { c.out_dir = v; }},
  };
  for (const auto& [key, value] : kv) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(key, value);
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  RunConfig c = from_key_values(read_key_values(path));
  c.base_dir = std::filesystem::path(path).parent_path().string();
  return c;
}

std::string RunConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [k, v] : to_key_values())
    for (char ch : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ull;
    }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

std::vector<std::string> RunConfig::deviations() const {
  std::vector<std::string> out{
      "optimizer: AdamW (beta1 " + format_double(beta1) + ", beta2 " + format_double(beta2) +
          ", eps " + format_double(adam_eps) + "), decoupled weight decay " +
          format_double(weight_decay) + " on all parameters",
      "dropout: " + format_double(model.decoder.dropout),
      grad_clip > 0.0 ? "gradient clipping: global norm " + format_double(grad_clip)
                      : "gradient clipping: disabled",
      "learning rates: warmup " + format_double(warmup_lr) + ", init " +
          format_double(init_lr) + ", min " + format_double(min_lr),
      "model: " + std::to_string(model.decoder.d_model) + "-dim, " +
          std::to_string(model.decoder.layers) + "-layer decoder trained from scratch on " +
          std::to_string(model.encoder.image_height) + "x" +
          std::to_string(model.encoder.image_width) + " synthetic images",
  };
  if (precision == Precision::F64) out.push_back("precision: float64");
  return out;
}

}  // namespace mcout
