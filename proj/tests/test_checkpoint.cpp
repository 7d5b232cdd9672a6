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

#include <cstring>

#include "fixtures.hpp"
#include "mcout/checkpoint.hpp"
#include "mcout/errors.hpp"
#include "mcout/training.hpp"

using namespace mcout;
using namespace mcout::testing;

namespace {

std::string sample_bytes() {
  const RunConfig cfg = tiny_config();
  const auto params = ModelParams::initialize(cfg.model, 5);
  return serialize_checkpoint(make_checkpoint(params, nullptr, cfg, {}));
}

// Offset of the first tensor's first dimension.
std::size_t first_dim_offset(const std::string& bytes) {
  std::uint16_t name_len = 0;
  std::memcpy(&name_len, bytes.data() + 14, 2);
  return 14 + 2 + name_len + 2;
}

}  // namespace

TEST_CASE("save, load, save is byte-identical") {
  TempDir dir("ckpt-rt");
  const RunConfig cfg = tiny_config();
  const auto params = ModelParams::initialize(cfg.model, 5);
  AdamW opt = make_optimizer(params, cfg);
  const Checkpoint ckpt = make_checkpoint(params, &opt, cfg, {0, 1, 7});
  save_checkpoint(dir / "a.bin", ckpt);
  save_checkpoint(dir / "b.bin", load_checkpoint(dir / "a.bin"));
  CHECK(read_file(dir / "a.bin") == read_file(dir / "b.bin"));
  CHECK(read_file(dir / "a.bin").substr(0, 6) == "MCOUT1");
}

TEST_CASE("every parameter survives the round trip bit-exactly") {
  const RunConfig cfg = tiny_config();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto params = ModelParams::initialize(cfg.model, seed);
    const auto loaded = params_from_checkpoint(parse_checkpoint(
                                                   serialize_checkpoint(make_checkpoint(
                                                       params, nullptr, cfg, {}))))
                            .second;
    const auto a = params.named(), b = loaded.named();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].first == b[i].first);
      CHECK(std::memcmp(a[i].second.values().data(), b[i].second.values().data(),
                        a[i].second.numel() * sizeof(double)) == 0);
    }
  }
}

TEST_CASE("float64 tensors keep every bit") {
  Checkpoint c;
  c.tensors.push_back({"x", DType::F64, {3}, {0.1, -1e-300, 1.0 / 3.0}});
  const Checkpoint back = parse_checkpoint(serialize_checkpoint(c));
  CHECK(back.tensors[0].data == c.tensors[0].data);
  CHECK(back.tensors[0].dtype == DType::F64);
}

TEST_CASE("tampered headers are format errors") {
  const std::string good = sample_bytes();
  CHECK_NOTHROW(parse_checkpoint(good));

  std::string bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(parse_checkpoint(bad), FormatError);

  bad = good;
  bad[6] = 9;  // version
  CHECK_THROWS_AS(parse_checkpoint(bad), FormatError);

  bad = good;
  bad[first_dim_offset(good)] += 1;
  CHECK_THROWS_AS(parse_checkpoint(bad), FormatError);
}

TEST_CASE("a dimension swap that keeps the payload size is still caught") {
  Checkpoint c;
  c.tensors.push_back({"w", DType::F32, {2, 3}, {1, 2, 3, 4, 5, 6}});
  std::string bytes = serialize_checkpoint(c);
  const std::size_t at = first_dim_offset(bytes);
  std::uint64_t d0 = 0, d1 = 0;
  std::memcpy(&d0, bytes.data() + at, 8);
  std::memcpy(&d1, bytes.data() + at + 8, 8);
  std::memcpy(bytes.data() + at, &d1, 8);
  std::memcpy(bytes.data() + at + 8, &d0, 8);
  CHECK_THROWS_AS(parse_checkpoint(bytes), FormatError);
}

TEST_CASE("truncated files are I/O errors") {
  TempDir dir("ckpt-trunc");
  const std::string good = sample_bytes();
  for (std::size_t keep : {good.size() - 1, good.size() / 2, std::size_t{10}}) {
    std::ofstream(dir / "t.bin", std::ios::binary) << good.substr(0, keep);
    CHECK_THROWS_AS(load_checkpoint(dir / "t.bin"), IoError);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.bin"), IoError);
}

TEST_CASE("restoring rejects unknown, missing and misshapen parameters") {
  const RunConfig cfg = tiny_config();
  auto params = ModelParams::initialize(cfg.model, 5);
  Checkpoint c = make_checkpoint(params, nullptr, cfg, {});

  Checkpoint extra = c;
  extra.tensors.push_back({"decoder.bogus", DType::F32, {1}, {0.0}});
  CHECK_THROWS_AS(restore_parameters(extra, params), FormatError);

  Checkpoint with_moments = c;
  with_moments.tensors.push_back({"adam.m.anything", DType::F64, {1}, {0.0}});
  CHECK_NOTHROW(restore_parameters(with_moments, params));

  Checkpoint missing = c;
  missing.tensors.pop_back();
  CHECK_THROWS_AS(restore_parameters(missing, params), FormatError);

  Checkpoint reshaped = c;
  reshaped.tensors[0].shape.push_back(1);
  CHECK_THROWS_AS(restore_parameters(reshaped, params), FormatError);
}

TEST_CASE("a loaded checkpoint reproduces the evaluation loss exactly") {
  TempDir dir("ckpt-eval");
  RunConfig cfg = tiny_config();
  const auto samples = tiny_samples(8);
  const auto params = ModelParams::initialize(cfg.model, 9);
  AdamW opt = make_optimizer(params, cfg);
  train_step(params, opt, samples, cfg, 1e-3, 0, 0);
  const double before = eval_loss(params, cfg, samples);
  save_checkpoint(dir / "c.bin", make_checkpoint(params, &opt, cfg, {0, 0, 1}));
  const auto [cfg2, loaded] = params_from_checkpoint(load_checkpoint(dir / "c.bin"));
  CHECK(cfg2.hash() == cfg.hash());
  CHECK(eval_loss(loaded, cfg2, samples) == before);
}
