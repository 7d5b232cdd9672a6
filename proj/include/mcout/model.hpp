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
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mcout/random.hpp"
#include "mcout/tensor.hpp"
#include "mcout/tokenizer.hpp"

namespace mcout {

/// Row-major H x W x C pixels in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> pixels;

  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
};

struct EncoderConfig {
  std::size_t image_height = 16;
  std::size_t image_width = 16;
  std::size_t channels = 3;
  std::size_t patch_size = 4;

  std::size_t patch_rows() const { return image_height / patch_size; }
  std::size_t patch_cols() const { return image_width / patch_size; }
  std::size_t visual_tokens() const { return patch_rows() * patch_cols(); }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  void validate() const;
};

struct DecoderConfig {
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t d_model = 64;
  std::size_t vocab = 256;
  /// Size of the learned position table; bounds prompt + thoughts + answer.
  std::size_t max_positions = 160;
  /// Longest interleaved prompt; longer text is tail-truncated.
  std::size_t max_context = 128;
  double dropout = 0.0;
  void validate() const;
};

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  /// Heads of the multimodal latent attention module.
  std::size_t latent_heads = 4;
  double init_std = 0.02;
  void validate() const;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
  Tensor operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }
};

struct Norm {
  Tensor gain;
  Tensor bias;
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

struct DecoderLayer {
  Norm ln1;
  Linear query, key, value, out;
  Norm ln2;
  Linear fc1, fc2;
};

/// Parameters of the thought-producing attention over multimodal inputs:
/// query projection, keyed/valued attention over the visual embeddings,
/// back-projection and a final layer norm.
struct LatentAttentionParams {
  Linear proj;
  Linear key;
  Linear value;
  Linear out;
  Linear proj_back;
  Norm norm;
  std::size_t heads = 4;
};

struct ModelParams {
  ModelConfig config;
  Linear patch_proj;
  Tensor patch_pos;  // [S_v, D]
  Tensor token_embedding;     // [V, D]
  Tensor position_embedding;  // [max_positions, D]
  std::vector<DecoderLayer> layers;
  Norm final_norm;
  Tensor lm_head;  // [D, V]
  LatentAttentionParams latent;

  /// Normal(0, init_std) weights, residual output maps scaled by
  /// 1/sqrt(2 * layers), zero biases, unit norm gains. Latent-module maps
  /// use std 1/sqrt(D) instead. The latent module is
  /// always allocated (and drawn last) so every variant shares one layout.
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);

  /// Stable, ordered parameter names used by checkpoints and the optimizer.
  std::vector<std::pair<std::string, Tensor>> named() const;
  /// Deep copy with fresh leaves.
  ModelParams clone() const;
  void zero_grad() const;
  std::size_t parameter_count() const;
};

/// Binary attention mask, row-major [batch, length].
struct Mask {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::uint8_t> bits;

  static Mask ones(std::size_t batch, std::size_t length);
  std::uint8_t operator()(std::size_t b, std::size_t j) const {
    return bits[b * length + j];
  }
  std::size_t row_sum(std::size_t b) const;
  /// Appends one column.
  Mask with_column(std::span<const std::uint8_t> column) const;
  Mask with_ones_column() const;
  /// Every row is a run of ones followed by a run of zeros.
  bool right_padded() const;
};

/// Visual embeddings followed by text embeddings, right-padded to the
/// longest sample in the batch.
struct InterleavedBatch {
  Tensor embeddings;  // [B, S_max, D]
  Mask mask;          // [B, S_max]
  std::vector<std::size_t> lengths;
  std::size_t visual_tokens = 0;
  std::size_t truncated_samples = 0;

  std::size_t batch() const { return mask.batch; }
  std::size_t length() const { return mask.length; }
  /// The visual slice [B, S_v, D]; the multimodal context of the latent
  /// attention module.
  Tensor visual() const;
};

/// Per-layer keys and values, each [B, H, length, D/H]. Copies share the
/// stored tensors, so a copy is a cheap branch point.
struct KVCache {
  std::vector<Tensor> keys;
  std::vector<Tensor> values;
  std::size_t length = 0;
};

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

struct GenerationConfig {
  double temperature = 0.1;
  std::size_t max_new_tokens = 8;
  std::uint64_t seed = 0;
  TokenId eos = Vocabulary::kEos;
  void validate() const;
};

/// Non-overlapping patches, flattened (row, col, channel), projected to D
/// plus a learned per-patch position. Result [S_v, D].
Tensor encode_image(const ModelParams& params, const Image& image);
/// Batched encode_image, result [B, S_v, D].
Tensor encode_images(const ModelParams& params, std::span<const Image> images);

Tensor embed_tokens(const ModelParams& params, std::span<const TokenId> ids,
                    const Shape& ids_shape);

InterleavedBatch interleave(const ModelParams& params, const Tensor& visual,
                            const std::vector<TokenSequence>& texts,
                            TokenId pad_id = Vocabulary::kPad);

/// Pre-norm causal decoder over `inputs` [B, n, D]. `mask` covers every
/// column seen so far, cached ones included: [B, cache_length + n]. Keys
/// whose mask bit is zero are never attended. Position ids count the real
/// (mask = 1) columns before each position, so padding does not shift them.
/// When `cache` is given it is extended in place. Returns the final-norm
/// hidden states [B, n, D].
Tensor forward(const ModelParams& params, const Tensor& inputs, const Mask& mask,
               KVCache* cache = nullptr, const ForwardOptions& options = {});

/// Index of the last column whose mask bit is set, per row. For a
/// right-padded mask that is row_sum - 1.
std::vector<std::size_t> last_positions(const Mask& mask);
/// Hidden state at the last non-padded position of each row, [B, D].
Tensor last_hidden(const Tensor& hidden, const Mask& mask);

Tensor logits(const ModelParams& params, const Tensor& hidden);

/// Draws a token from softmax(logits / temperature) with one uniform draw.
TokenId sample_token(std::span<const double> logits, double temperature, Rng& rng);
TokenId argmax_token(std::span<const double> logits);

/// Autoregressive decoding after the batch's last real column. Generated
/// tokens exclude the end token.
std::vector<TokenSequence> generate(const ModelParams& params,
                                    const InterleavedBatch& batch,
                                    const GenerationConfig& config);

}  // namespace mcout
