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

#include "mcout/model.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <memory>

namespace mcout {

void EncoderConfig::validate() const {
  if (patch_size == 0 || image_height == 0 || image_width == 0)
    throw ConfigError("encoder: image and patch sizes must be positive");
  if (image_height % patch_size != 0 || image_width % patch_size != 0)
    throw ConfigError("encoder: image " + std::to_string(image_height) + "x" +
                      std::to_string(image_width) + " not divisible by patch " +
                      std::to_string(patch_size));
  if (channels != 1 && channels != 3)
    throw ConfigError("encoder: channels must be 1 or 3");
}

void DecoderConfig::validate() const {
  if (layers == 0 || heads == 0 || d_model == 0 || vocab == 0)
    throw ConfigError("decoder: layers, heads, d_model and vocab must be positive");
  if (d_model % heads != 0)
    throw ConfigError("decoder: d_model " + std::to_string(d_model) +
                      " not divisible by heads " + std::to_string(heads));
  if (d_model % 2 != 0) throw ConfigError("decoder: d_model must be even");
  if (max_context == 0 || max_context > max_positions)
    throw ConfigError("decoder: need 0 < max_context <= max_positions");
  if (vocab < Vocabulary::instance().size())
    throw ConfigError("decoder: vocab " + std::to_string(vocab) +
                      " smaller than the tokenizer's " +
                      std::to_string(Vocabulary::instance().size()));
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("decoder: dropout must lie in [0, 1)");
}

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate();
  if (latent_heads == 0 || decoder.d_model % latent_heads != 0)
    throw ConfigError("latent_heads must divide d_model");
  if (encoder.visual_tokens() > decoder.max_context)
    throw ConfigError("visual tokens exceed max_context");
  if (init_std <= 0.0) throw ConfigError("init_std must be positive");
}

void GenerationConfig::validate() const {
  if (!(temperature > 0.0))
    throw ConfigError("generation: temperature must be > 0");
}

// --- parameters ----------------------------------------------------------------

namespace {

Linear make_linear(std::size_t in, std::size_t out) {
  return {Tensor::zeros({in, out}, true), Tensor::zeros({out}, true)};
}

Norm make_norm(std::size_t d) {
  return {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)};
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const auto& dec = config.decoder;
  const std::size_t d = dec.d_model;
  ModelParams p;
  p.config = config;
  p.patch_proj = make_linear(config.encoder.patch_dim(), d);
  p.patch_pos = Tensor::zeros({config.encoder.visual_tokens(), d}, true);
  p.token_embedding = Tensor::zeros({dec.vocab, d}, true);
  p.position_embedding = Tensor::zeros({dec.max_positions, d}, true);
  for (std::size_t l = 0; l < dec.layers; ++l) {
    DecoderLayer layer{make_norm(d),          make_linear(d, d),     make_linear(d, d),
                       make_linear(d, d),     make_linear(d, d),     make_norm(d),
                       make_linear(d, 4 * d), make_linear(4 * d, d)};
    p.layers.push_back(std::move(layer));
  }
  p.final_norm = make_norm(d);
  p.lm_head = Tensor::zeros({d, dec.vocab}, true);
  p.latent = {make_linear(d, d), make_linear(d, d), make_linear(d, d),
              make_linear(d, d), make_linear(d, d), make_norm(d),
              config.latent_heads};

  Rng rng(seed);
  const double residual_std =
      config.init_std / std::sqrt(2.0 * static_cast<double>(dec.layers));
  for (auto& [name, t] : p.named()) {
    const bool is_matrix = ends_with(name, ".weight") || name == "patch_pos" ||
                           name == "token_embedding" ||
                           name == "position_embedding" || name == "lm_head";
    if (!is_matrix) continue;
    const bool residual = ends_with(name, "attn.out.weight") ||
                          ends_with(name, "mlp.fc2.weight");
    // The latent module keeps the scale of e_m: std 1/sqrt(D) maps.
    const double std = name.rfind("latent.", 0) == 0
                           ? 1.0 / std::sqrt(static_cast<double>(d))
                           : residual ? residual_std : config.init_std;
    for (auto& v : t.mutable_values()) v = std * standard_normal(rng);
    round_to_precision(t.mutable_values());
  }
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto lin = [&](const std::string& prefix, const Linear& l) {
    out.emplace_back(prefix + ".weight", l.weight);
    out.emplace_back(prefix + ".bias", l.bias);
  };
  auto norm = [&](const std::string& prefix, const Norm& n) {
    out.emplace_back(prefix + ".gain", n.gain);
    out.emplace_back(prefix + ".bias", n.bias);
  };
  lin("patch_proj", patch_proj);
  out.emplace_back("patch_pos", patch_pos);
  out.emplace_back("token_embedding", token_embedding);
  out.emplace_back("position_embedding", position_embedding);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    const auto& layer = layers[l];
    norm(pre + "ln1", layer.ln1);
    lin(pre + "attn.query", layer.query);
    lin(pre + "attn.key", layer.key);
    lin(pre + "attn.value", layer.value);
    lin(pre + "attn.out", layer.out);
    norm(pre + "ln2", layer.ln2);
    lin(pre + "mlp.fc1", layer.fc1);
    lin(pre + "mlp.fc2", layer.fc2);
  }
  norm("final_norm", final_norm);
  out.emplace_back("lm_head", lm_head);
  lin("latent.proj", latent.proj);
  lin("latent.key", latent.key);
  lin("latent.value", latent.value);
  lin("latent.out", latent.out);
  lin("latent.proj_back", latent.proj_back);
  norm("latent.norm", latent.norm);
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams copy = *this;
  auto fresh = [](Tensor& t) {
    auto v = t.values();
    t = Tensor::from_values(t.shape(), {v.begin(), v.end()}, t.requires_grad());
  };
  auto lin = [&](Linear& l) { fresh(l.weight); fresh(l.bias); };
  auto norm = [&](Norm& n) { fresh(n.gain); fresh(n.bias); };
  lin(copy.patch_proj);
  fresh(copy.patch_pos);
  fresh(copy.token_embedding);
  fresh(copy.position_embedding);
  for (auto& layer : copy.layers) {
    norm(layer.ln1);
    lin(layer.query); lin(layer.key); lin(layer.value); lin(layer.out);
    norm(layer.ln2);
    lin(layer.fc1); lin(layer.fc2);
  }
  norm(copy.final_norm);
  fresh(copy.lm_head);
  lin(copy.latent.proj); lin(copy.latent.key); lin(copy.latent.value);
  lin(copy.latent.out); lin(copy.latent.proj_back);
  norm(copy.latent.norm);
  return copy;
}

void ModelParams::zero_grad() const {
  for (auto& [name, t] : named()) {
    Tensor handle = t;
    handle.zero_grad();
  }
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += t.numel();
  return n;
}

// --- masks and batches ---------------------------------------------------------

Mask Mask::ones(std::size_t batch, std::size_t length) {
  return {batch, length, std::vector<std::uint8_t>(batch * length, 1)};
}

std::size_t Mask::row_sum(std::size_t b) const {
  std::size_t s = 0;
  for (std::size_t j = 0; j < length; ++j) s += bits[b * length + j];
  return s;
}

Mask Mask::with_column(std::span<const std::uint8_t> column) const {
  if (column.size() != batch)
    throw DimensionError("mask column has " + std::to_string(column.size()) +
                         " entries for batch " + std::to_string(batch));
  Mask m{batch, length + 1, {}};
  m.bits.reserve(batch * (length + 1));
  for (std::size_t b = 0; b < batch; ++b) {
    m.bits.insert(m.bits.end(), bits.begin() + static_cast<std::ptrdiff_t>(b * length),
                  bits.begin() + static_cast<std::ptrdiff_t>((b + 1) * length));
    m.bits.push_back(column[b] ? 1 : 0);
  }
  return m;
}

Mask Mask::with_ones_column() const {
  std::vector<std::uint8_t> col(batch, 1);
  return with_column(col);
}

bool Mask::right_padded() const {
  for (std::size_t b = 0; b < batch; ++b) {
    bool seen_zero = false;
    for (std::size_t j = 0; j < length; ++j) {
      if (!(*this)(b, j)) seen_zero = true;
      else if (seen_zero) return false;
    }
  }
  return true;
}

Tensor InterleavedBatch::visual() const {
  return slice(embeddings, 1, 0, visual_tokens);
}

// --- encoder and embeddings ----------------------------------------------------

namespace {

std::vector<double> patch_matrix(const EncoderConfig& cfg, const Image& image) {
  if (image.height != cfg.image_height || image.width != cfg.image_width ||
      image.channels != cfg.channels)
    throw ConfigError("encode_image: image " + std::to_string(image.height) + "x" +
                      std::to_string(image.width) + "x" +
                      std::to_string(image.channels) + " does not match encoder " +
                      std::to_string(cfg.image_height) + "x" +
                      std::to_string(cfg.image_width) + "x" +
                      std::to_string(cfg.channels));
  if (image.pixels.size() != image.height * image.width * image.channels)
    throw ContractError("encode_image: pixel buffer size mismatch");
  const std::size_t ps = cfg.patch_size;
  std::vector<double> rows;
  rows.reserve(cfg.visual_tokens() * cfg.patch_dim());
  for (std::size_t pr = 0; pr < cfg.patch_rows(); ++pr)
    for (std::size_t pc = 0; pc < cfg.patch_cols(); ++pc)
      for (std::size_t y = 0; y < ps; ++y)
        for (std::size_t x = 0; x < ps; ++x)
          for (std::size_t c = 0; c < cfg.channels; ++c)
            rows.push_back(image.at(pr * ps + y, pc * ps + x, c));
  return rows;
}

}  // namespace

Tensor encode_image(const ModelParams& params, const Image& image) {
  const auto& cfg = params.config.encoder;
  auto patches = Tensor::from_values({cfg.visual_tokens(), cfg.patch_dim()},
                                     patch_matrix(cfg, image));
  return add(params.patch_proj(patches), params.patch_pos);
}

Tensor encode_images(const ModelParams& params, std::span<const Image> images) {
  if (images.empty()) throw ContractError("encode_images: empty batch");
  const auto& cfg = params.config.encoder;
  std::vector<double> all;
  for (const auto& img : images) {
    auto rows = patch_matrix(cfg, img);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  auto patches = Tensor::from_values(
      {images.size(), cfg.visual_tokens(), cfg.patch_dim()}, std::move(all));
  return add(params.patch_proj(patches), params.patch_pos);
}

Tensor embed_tokens(const ModelParams& params, std::span<const TokenId> ids,
                    const Shape& ids_shape) {
  return embedding_lookup(params.token_embedding, ids, ids_shape);
}

InterleavedBatch interleave(const ModelParams& params, const Tensor& visual,
                            const std::vector<TokenSequence>& texts,
                            TokenId pad_id) {
  if (texts.empty()) throw ContractError("interleave: empty batch");
  if (visual.rank() != 3 || visual.dim(0) != texts.size())
    throw DimensionError("interleave: visual " + shape_string(visual.shape()) +
                         " does not match " + std::to_string(texts.size()) +
                         " text samples");
  const std::size_t batch = texts.size();
  const std::size_t sv = visual.dim(1);
  const std::size_t max_context = params.config.decoder.max_context;
  if (sv > max_context)
    throw ConfigError("interleave: visual tokens exceed max context");

  InterleavedBatch out;
  out.visual_tokens = sv;
  std::vector<std::size_t> text_len(batch);
  std::size_t longest = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    text_len[b] = texts[b].size();
    if (sv + text_len[b] > max_context) {
      text_len[b] = max_context - sv;
      ++out.truncated_samples;
      std::cerr << "warning: sample " << b << " text truncated from "
                << texts[b].size() << " to " << text_len[b] << " tokens\n";
    }
    longest = std::max(longest, text_len[b]);
  }
  const std::size_t s_max = sv + longest;
  out.mask = Mask{batch, s_max, std::vector<std::uint8_t>(batch * s_max, 0)};
  for (std::size_t b = 0; b < batch; ++b) {
    out.lengths.push_back(sv + text_len[b]);
    for (std::size_t j = 0; j < sv + text_len[b]; ++j) out.mask.bits[b * s_max + j] = 1;
  }
  if (longest == 0) {
    out.embeddings = visual;
    return out;
  }
  std::vector<TokenId> ids(batch * longest, pad_id);
  for (std::size_t b = 0; b < batch; ++b)
    std::copy_n(texts[b].begin(), text_len[b], ids.begin() + static_cast<std::ptrdiff_t>(b * longest));
  Tensor text = embed_tokens(params, ids, {batch, longest});
  out.embeddings = concat({visual, text}, 1);
  return out;
}

// --- decoder ---------------------------------------------------------------------

namespace {

Tensor split_heads(const Tensor& x, std::size_t batch, std::size_t n,
                   std::size_t heads, std::size_t head_dim) {
  return permute(reshape(x, {batch, n, heads, head_dim}), {0, 2, 1, 3});
}

}  // namespace

Tensor forward(const ModelParams& params, const Tensor& inputs, const Mask& mask,
               KVCache* cache, const ForwardOptions& options) {
  const auto& dec = params.config.decoder;
  if (inputs.rank() != 3 || inputs.dim(2) != dec.d_model)
    throw DimensionError("forward: inputs must be [B, n, " +
                         std::to_string(dec.d_model) + "], got " +
                         shape_string(inputs.shape()));
  const std::size_t batch = inputs.dim(0), n = inputs.dim(1);
  const std::size_t past = cache ? cache->length : 0;
  const std::size_t total = past + n;
  if (mask.batch != batch || mask.length != total)
    throw DimensionError("forward: mask [" + std::to_string(mask.batch) + "x" +
                         std::to_string(mask.length) + "] does not cover " +
                         std::to_string(batch) + "x" + std::to_string(total));
  if (total > dec.max_positions)
    throw CapacityError("forward: sequence length " + std::to_string(total) +
                        " exceeds max_positions " + std::to_string(dec.max_positions));
  if (cache && !cache->keys.empty() && cache->keys.size() != dec.layers)
    throw ContractError("forward: cache layer count mismatch");

  std::vector<TokenId> pos_ids(batch * n);
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < past; ++j) count += mask(b, j);
    for (std::size_t i = 0; i < n; ++i) {
      const bool real = mask(b, past + i) != 0;
      pos_ids[b * n + i] = static_cast<TokenId>(real ? count : std::min(count, total - 1));
      if (real) ++count;
    }
  }
  auto allowed = std::make_shared<std::vector<std::uint8_t>>(batch * n * total, 0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= past + i; ++j)
        (*allowed)[(b * n + i) * total + j] = mask(b, j);

  const std::size_t heads = dec.heads;
  const std::size_t head_dim = dec.d_model / heads;
  const double score_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const bool use_dropout = options.training && dec.dropout > 0.0;
  auto dropout_seed = [&](std::size_t layer, std::size_t site) {
    return mix_seed(mix_seed(options.dropout_seed, past), layer * 2 + site);
  };

  Tensor h = add(inputs, embedding_lookup(params.position_embedding, pos_ids, {batch, n}));
  for (std::size_t l = 0; l < dec.layers; ++l) {
    const auto& layer = params.layers[l];
    Tensor a = layer.ln1(h);
    Tensor q = split_heads(layer.query(a), batch, n, heads, head_dim);
    Tensor k = split_heads(layer.key(a), batch, n, heads, head_dim);
    Tensor v = split_heads(layer.value(a), batch, n, heads, head_dim);
    if (cache) {
      if (cache->keys.size() == dec.layers) {
        k = concat({cache->keys[l], k}, 2);
        v = concat({cache->values[l], v}, 2);
        cache->keys[l] = k;
        cache->values[l] = v;
      } else {
        cache->keys.push_back(k);
        cache->values.push_back(v);
      }
    }
    Tensor q3 = reshape(q, {batch * heads, n, head_dim});
    Tensor k3 = reshape(k, {batch * heads, total, head_dim});
    Tensor v3 = reshape(v, {batch * heads, total, head_dim});
    Tensor scores = scale(matmul(q3, transpose(k3)), score_scale);
    Tensor probs = masked_softmax(scores, allowed, heads);
    Tensor ctx = matmul(probs, v3);
    ctx = reshape(permute(reshape(ctx, {batch, heads, n, head_dim}), {0, 2, 1, 3}),
                  {batch, n, dec.d_model});
    Tensor attn_out = layer.out(ctx);
    if (use_dropout) attn_out = dropout(attn_out, dec.dropout, dropout_seed(l, 0));
    h = add(h, attn_out);
    Tensor m = layer.fc2(gelu(layer.fc1(layer.ln2(h))));
    if (use_dropout) m = dropout(m, dec.dropout, dropout_seed(l, 1));
    h = add(h, m);
  }
  if (cache) cache->length = total;
  return params.final_norm(h);
}

std::vector<std::size_t> last_positions(const Mask& mask) {
  std::vector<std::size_t> pos(mask.batch);
  for (std::size_t b = 0; b < mask.batch; ++b) {
    std::size_t j = mask.length;
    while (j > 0 && !mask(b, j - 1)) --j;
    if (j == 0)
      throw ContractError("last_hidden: mask row " + std::to_string(b) +
                          " has no unmasked position");
    pos[b] = j - 1;
  }
  return pos;
}

Tensor last_hidden(const Tensor& hidden, const Mask& mask) {
  if (hidden.rank() != 3 || hidden.dim(0) != mask.batch || hidden.dim(1) != mask.length)
    throw DimensionError("last_hidden: hidden " + shape_string(hidden.shape()) +
                         " does not match mask");
  auto pos = last_positions(mask);
  return gather_positions(hidden, pos);
}

Tensor logits(const ModelParams& params, const Tensor& hidden) {
  return matmul(hidden, params.lm_head);
}

TokenId argmax_token(std::span<const double> logits) {
  return static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) -
                              logits.begin());
}

TokenId sample_token(std::span<const double> logits, double temperature, Rng& rng) {
  if (!(temperature > 0.0)) throw ConfigError("sample_token: temperature must be > 0");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - mx) / temperature);
    total += p[i];
  }
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  std::size_t last_nonzero = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    last_nonzero = i;
    acc += p[i];
    if (u < acc) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last_nonzero);
}

std::vector<TokenSequence> generate(const ModelParams& params,
                                    const InterleavedBatch& batch,
                                    const GenerationConfig& config) {
  config.validate();
  NoGradGuard no_grad;
  const std::size_t bsz = batch.batch();
  const std::size_t vocab = params.config.decoder.vocab;
  KVCache cache;
  Mask mask = batch.mask;
  Tensor h = forward(params, batch.embeddings, mask, &cache);
  Tensor lg = logits(params, last_hidden(h, mask));

  Rng rng(config.seed);
  std::vector<TokenSequence> out(bsz);
  std::vector<bool> done(bsz, false);
  for (std::size_t step = 0; step < config.max_new_tokens; ++step) {
    std::vector<TokenId> next(bsz, Vocabulary::kPad);
    std::vector<std::uint8_t> active(bsz, 0);
    auto lv = lg.values();
    for (std::size_t b = 0; b < bsz; ++b) {
      if (done[b]) continue;
      const TokenId t = sample_token(lv.subspan(b * vocab, vocab), config.temperature, rng);
      if (t == config.eos) {
        done[b] = true;
        continue;
      }
      out[b].push_back(t);
      next[b] = t;
      active[b] = 1;
    }
    if (std::all_of(done.begin(), done.end(), [](bool d) { return d; })) break;
    if (step + 1 == config.max_new_tokens) break;
    mask = mask.with_column(active);
    Tensor emb = embed_tokens(params, next, {bsz, 1});
    h = forward(params, emb, mask, &cache);
    lg = logits(params, reshape(h, {bsz, params.config.decoder.d_model}));
  }
  return out;
}

}  // namespace mcout
