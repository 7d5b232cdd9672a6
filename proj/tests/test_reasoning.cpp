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

#include <cmath>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "mcout/errors.hpp"
#include "mcout/reasoning.hpp"

using namespace mcout;
using namespace mcout::testing;

namespace {

Linear identity_linear(std::size_t d) {
  std::vector<double> eye(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
  return {Tensor::from_values({d, d}, eye), Tensor::zeros({d})};
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::fabs(a.values()[i] - b.values()[i]));
  return worst;
}

struct Setup {
  RunConfig cfg = tiny_config();
  ModelParams params;
  std::vector<SyntheticSample> samples;
  PreparedBatch prepared;

  explicit Setup(Variant v, std::size_t nt = 2, std::uint64_t seed = 1) {
    cfg.reasoning.variant = v;
    cfg.reasoning.n_thoughts = nt;
    params = ModelParams::initialize(cfg.model, seed);
    samples = tiny_samples(3, TaskKind::MultiHop, seed);
    prepared = prepare_batch(params, samples);
  }
};

}  // namespace

TEST_CASE("latent attention output shape for several context sizes") {
  const auto params = ModelParams::initialize(tiny_config().model, 1);
  for (std::size_t sm : {1u, 16u, 64u}) {
    const auto out = multimodal_latent_attention(random_tensor({3, 16}, sm, false),
                                                 random_tensor({3, sm, 16}, sm + 1, false),
                                                 params.latent);
    CHECK(out.thought.h_t.shape() == Shape{3, 1, 16});
    CHECK(out.weights.shape() == Shape{3, 2, sm});
  }
  CHECK_THROWS_AS(multimodal_latent_attention(random_tensor({3, 8}, 1, false),
                                              random_tensor({3, 4, 16}, 2, false), params.latent),
                  DimensionError);
}

TEST_CASE("attention over identical values returns that value") {
  PrecisionScope p(Precision::F64);
  const std::size_t d = 8;
  LatentAttentionParams lp{identity_linear(d), identity_linear(d), identity_linear(d),
                           identity_linear(d), identity_linear(d),
                           Norm{Tensor::full({d}, 1.0), Tensor::zeros({d})}, 1};
  const Tensor v = random_tensor({1, 1, d}, 3, false);
  std::vector<double> rows;
  for (int r = 0; r < 5; ++r) rows.insert(rows.end(), v.values().begin(), v.values().end());
  const Tensor em = Tensor::from_values({1, 5, d}, rows);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto out = multimodal_latent_attention(random_tensor({1, d}, seed, false), em, lp);
    CHECK(max_abs_diff(out.pre_norm, v) <= 1e-12);
    CHECK(max_abs_diff(out.thought.h_t, layer_norm(v, lp.norm.gain, lp.norm.bias, kThoughtNormEps)) <= 1e-12);
  }
}

TEST_CASE("latent attention output has norm sqrt(D) and normalized weights") {
  const auto params = ModelParams::initialize(ModelConfig{}, 4);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto out = multimodal_latent_attention(random_tensor({4, 64}, seed, false, 3.0),
                                                 random_tensor({4, 16, 64}, seed + 9, false),
                                                 params.latent);
    for (const auto& s : row_stats(out.thought.h_t.values(), 64))
      CHECK(std::fabs(s.norm / 8.0 - 1.0) <= 1e-3);
    for (const auto& s : row_stats(out.weights.values(), 16))
      CHECK(std::fabs(s.mean * 16.0 - 1.0) <= 1e-6);
  }
}

TEST_CASE("base thought is the hidden state reshaped") {
  const Tensor h = Tensor::from_values({1, 4}, {1.5, -2.0, 0.0, 3.0});
  const auto t = base_thought(h);
  CHECK(t.h_t.shape() == Shape{1, 1, 4});
  CHECK(std::equal(h.values().begin(), h.values().end(), t.h_t.values().begin()));
  const auto twice = base_thought(reshape(t.h_t, {1, 4}));
  CHECK(bit_equal(twice.h_t, t.h_t));

  PrecisionScope p(Precision::F64);
  Tensor x = random_tensor({2, 5}, 7);
  const Tensor w = random_tensor({2, 1, 5}, 8, false);
  const auto g = check_gradients({x}, [&] { return sum(multiply(base_thought(x).h_t, w)); }, 1e-6);
  CHECK(g.ok);
  x.zero_grad();
  sum(multiply(base_thought(x).h_t, w)).backward();
  CHECK(std::equal(x.grad().begin(), x.grad().end(), w.values().begin()));
}

TEST_CASE("the loop appends one position and one mask column per thought") {
  for (Variant v : {Variant::Base, Variant::Multi}) {
    for (std::size_t nt : {0u, 1u, 5u, 10u}) {
      Setup s(v, nt);
      const auto& b = s.prepared.batch;
      const auto r = run_reasoning(s.params, b, s.cfg.reasoning);
      CHECK(r.trace.size() == nt);
      CHECK(r.state.batch.length() == b.length() + nt);
      CHECK(r.state.batch.embeddings.dim(1) == b.length() + nt);
      for (std::size_t row = 0; row < b.batch(); ++row) {
        CHECK(r.state.batch.mask.row_sum(row) == b.mask.row_sum(row) + nt);
        for (std::size_t j = b.length(); j < b.length() + nt; ++j) CHECK(r.state.batch.mask(row, j) == 1);
      }
    }
  }
}

TEST_CASE("no thoughts leaves generation identical to the plain model") {
  for (Variant v : {Variant::Base, Variant::Multi}) {
    Setup s(v, 0);
    const auto r = run_reasoning(s.params, s.prepared.batch, s.cfg.reasoning);
    CHECK(bit_equal(r.state.batch.embeddings, s.prepared.batch.embeddings));
    CHECK(r.state.batch.mask.bits == s.prepared.batch.mask.bits);
    for (double temp : {0.1, 1.0}) {
      GenerationConfig g{temp, 4, 9};
      CHECK(generate(s.params, r.state.batch, g) == generate(s.params, s.prepared.batch, g));
    }
  }
}

TEST_CASE("incremental stepping equals full recompute") {
  for (Variant v : {Variant::Base, Variant::Multi}) {
    for (std::size_t nt : {1u, 3u, 10u}) {
      Setup s(v, nt, 5);
      ReasoningConfig full = s.cfg.reasoning;
      full.incremental = false;
      const auto a = run_reasoning(s.params, s.prepared.batch, s.cfg.reasoning);
      const auto b = run_reasoning(s.params, s.prepared.batch, full);
      for (std::size_t k = 0; k < nt; ++k) {
        CHECK(max_abs_diff(a.trace.steps[k].h_l, b.trace.steps[k].h_l) <= 1e-5);
        CHECK(max_abs_diff(a.trace.steps[k].h_t, b.trace.steps[k].h_t) <= 1e-5);
      }
      CHECK(max_abs_diff(a.state.last_hidden, b.state.last_hidden) <= 1e-5);
    }
  }
}

TEST_CASE("base thoughts repeat the preceding hidden state exactly") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Setup s(Variant::Base, 5, seed);
    const auto r = run_reasoning(s.params, s.prepared.batch, s.cfg.reasoning);
    CHECK(bit_equal(reshape(r.trace.steps[0].h_t, {3, 16}), r.trace.initial_hidden));
    for (std::size_t k = 1; k < 5; ++k)
      CHECK(bit_equal(reshape(r.trace.steps[k].h_t, {3, 16}), r.trace.steps[k - 1].h_l));
  }
}

TEST_CASE("reasoning is deterministic") {
  Setup s(Variant::Multi, 4);
  const auto a = run_reasoning(s.params, s.prepared.batch, s.cfg.reasoning, &s.prepared.targets,
                               AuxMode::Values);
  const auto b = run_reasoning(s.params, s.prepared.batch, s.cfg.reasoning, &s.prepared.targets,
                               AuxMode::Values);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(bit_equal(a.trace.steps[k].h_t, b.trace.steps[k].h_t));
    CHECK(a.trace.steps[k].aux_value == b.trace.steps[k].aux_value);
  }
}

TEST_CASE("trace statistics are recomputable from the stored tensors") {
  Setup s(Variant::Multi, 3);
  const auto r = run_reasoning(s.params, s.prepared.batch, s.cfg.reasoning);
  for (const auto& st : r.trace.steps) {
    const auto hl = row_stats(st.h_l.values(), 16);
    const auto pre = row_stats(st.h_t_pre_norm.values(), 16);
    for (std::size_t b = 0; b < 3; ++b) {
      CHECK(st.hl_stats[b].mean == hl[b].mean);
      CHECK(st.hl_stats[b].norm == hl[b].norm);
      CHECK(st.ht_pre_stats[b].std == pre[b].std);
    }
  }
  const auto stats = vector_stats(std::vector<double>{1, 2, 3, 4});
  CHECK(stats.mean == 2.5);
  CHECK(stats.std == doctest::Approx(std::sqrt(1.25)).epsilon(1e-15));
  CHECK(stats.norm == doctest::Approx(std::sqrt(30.0)).epsilon(1e-15));
}

TEST_CASE("loss composition") {
  CHECK(compose_total(std::vector<double>{0.5, 0.7}, 1.0, 1.0) == doctest::Approx(2.2).epsilon(1e-15));
  Setup s(Variant::Multi, 3);
  const auto r = run_reasoning(s.params, s.prepared.batch, s.cfg.reasoning, &s.prepared.targets,
                               AuxMode::Values);
  const auto zero = total_loss(s.params, r.state, s.prepared.targets, r.trace, 0.0);
  CHECK(zero.total == zero.final);
  const auto lo = total_loss(s.params, r.state, s.prepared.targets, r.trace, 0.2);
  const auto hi = total_loss(s.params, r.state, s.prepared.targets, r.trace, 0.6);
  double sum_aux = 0.0;
  for (double a : lo.aux) sum_aux += a;
  CHECK(std::fabs((hi.total - lo.total) - 0.4 * sum_aux) <= 1e-6);
  CHECK(lo.aux.size() == 3);
  CHECK_THROWS_AS(total_loss(s.params, r.state, s.prepared.targets, r.trace, -1.0), ContractError);
  AnswerTargets empty;
  CHECK_THROWS_AS(total_loss(s.params, r.state, empty, r.trace, 0.3), ContractError);
}

TEST_CASE("too many thoughts exceed the position table") {
  Setup s(Variant::Base, 60);
  CHECK_THROWS_AS(run_reasoning(s.params, s.prepared.batch, s.cfg.reasoning), CapacityError);
}

TEST_CASE("gradients reach the latent attention parameters") {
  PrecisionScope p(Precision::F64);
  Setup s(Variant::Multi, 1, 3);
  const auto f = [&] { return composed_objective(s.params, s.samples, s.cfg.reasoning, 0.0); };
  s.params.zero_grad();
  f().backward();
  double sq = 0.0;
  for (double g : s.params.latent.proj.weight.grad()) sq += g * g;
  CHECK(sq > 0.0);
  const auto g = check_gradients({s.params.latent.proj.weight, s.params.latent.value.weight}, f,
                                 1e-3, 1e-5, 1e-8, 12, 4);
  INFO(g.worst);
  CHECK(g.ok);
}

TEST_CASE("the composed loss through two thoughts matches finite differences") {
  PrecisionScope p(Precision::F64);
  for (Variant v : {Variant::Base, Variant::Multi}) {
    Setup s(v, 2, 8);
    const auto f = [&] { return composed_objective(s.params, s.samples, s.cfg.reasoning, 0.3); };
    const auto g = check_gradients({s.params.token_embedding, s.params.layers[0].query.weight,
                                    s.params.layers[1].fc2.weight, s.params.patch_proj.weight,
                                    s.params.latent.key.weight, s.params.lm_head},
                                   f, 1e-3, 1e-5, 1e-8, 8, 6);
    INFO(g.worst);
    CHECK(g.ok);
  }
}

TEST_CASE("detached thoughts cut the gradient path through the loop") {
  PrecisionScope p(Precision::F64);
  Setup s(Variant::Base, 2, 2);
  s.cfg.reasoning.detach_thoughts = true;
  const auto f = [&] { return composed_objective(s.params, s.samples, s.cfg.reasoning, 0.3); };
  const auto g = check_gradients({s.params.layers[0].fc1.weight}, f, 1e-3, 1e-5, 1e-8, 8, 1);
  CHECK_FALSE(g.ok);
}
