// Copyright 2026 The mllc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mllc/error.hpp"
#include "mllc/model.hpp"
#include "mllc/trainer.hpp"
#include "fixtures.hpp"
#include "gradient_suite.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace mllc;
using namespace mllc::testing;

namespace {

constexpr SimilarityKind kSims[] = {SimilarityKind::distance, SimilarityKind::mult, SimilarityKind::normalized_mult,
                                    SimilarityKind::tall_sim};
constexpr TefMode kTefs[] = {TefMode::none, TefMode::tef, TefMode::contef};

void set(ad::Parameter& p, std::initializer_list<double> row_major) {
  std::vector<double> v(row_major);
  p.value = Tensor::from_row_major(p.value.shape(), v);
}

}  // namespace

TEST_SUITE("mllc") {

TEST_CASE("config validation and serialization") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(ModelConfig::from_key_values(c.to_key_values()) == c);

  ModelConfig bad = c;
  bad.margin = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.joint_dim = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.fusion_lambda = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.context_mode = ContextMode::global;  // strong supervision needs latent contexts
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  KeyValues kv = c.to_key_values();
  kv.set("colour", "blue");
  CHECK_THROWS_AS(ModelConfig::from_key_values(kv), ConfigError);
  kv = c.to_key_values();
  kv.set("similarity", "cosine");
  CHECK_THROWS_AS(ModelConfig::from_key_values(kv), ConfigError);

  const auto parsed = KeyValues::parse("tef_mode = tef\nsimilarity = distance\ncontext_mode = global\n"
                                       "loss = ranking\ncontext_supervision = weak\n");
  const auto mcn = ModelConfig::from_key_values(parsed);
  CHECK(mcn.similarity == SimilarityKind::distance);
  CHECK(mcn.context_mode == ContextMode::global);
}

TEST_CASE("similarity kinds") {
  ad::Tape tape;
  Mlp none;
  const auto a = tape.constant(Tensor::vector((Vector(2) << 1, 0).finished()));
  const auto b = tape.constant(Tensor::vector((Vector(2) << 0, 1).finished()));
  CHECK(similarity(tape, a, a, SimilarityKind::distance, none).item() == 0.0);
  CHECK(similarity(tape, a, b, SimilarityKind::distance, none).item() == -2.0);
  CHECK_THROWS_AS(similarity(tape, a, tape.constant(Tensor::vector(Vector::Ones(3))), SimilarityKind::mult, none),
                  DimensionError);

  for (auto kind : kSims) {
    ModelConfig c = tiny_config(4);
    c.similarity = kind;
    const auto p = random_params(c, 3, 5, 1);
    const auto& sim = p.modalities[0].similarity;
    if (kind == SimilarityKind::distance) {
      CHECK(sim.hidden.weight.name.empty());
    } else {
      CHECK(sim.hidden.weight.value.cols() == (kind == SimilarityKind::tall_sim ? 4 * c.joint_dim : c.joint_dim));
      CHECK(sim.output.weight.value.rows() == 1);
    }
  }
}

TEST_CASE("global context is a singleton spanning the video") {
  std::mt19937 rng(2);
  ModelConfig c = tiny_config();
  c.context_mode = ContextMode::global;
  c.context_supervision = Supervision::weak;
  c.tef_mode = TefMode::tef;
  const auto p = random_params(c, 3, 6, 2);
  const Video v = random_video("v", 6, 3, rng);
  const std::vector<int> tokens{1, 2, 3};
  for (const auto& base : enumerate_moments(6)) {
    const auto s = score(v, tokens, base, c, p);
    CHECK(s.chosen_context == ContextMoment::single({0, 5}));
    ad::Tape tape;
    const auto fl0 = encode_query(tape, tokens, p.modalities[0].encoder);
    const auto fl1 = encode_query(tape, tokens, p.modalities[1].encoder);
    const auto ctx = ContextMoment::single({0, 5});
    auto sim = [&](std::size_t m, ad::Var fl) {
      const auto& mm = p.modalities[m];
      return similarity(tape, project_visual(tape, visual_feature(tape, v.tables[m], base, ctx, c.tef_mode, mm.encoder), mm.encoder),
                        fl, c.similarity, mm.similarity)
          .item();
    };
    CHECK(s.score == late_fusion(sim(0, fl0), sim(1, fl1), c.fusion_lambda));
  }
}

TEST_CASE("a dominating context is chosen") {
  ModelConfig c = tiny_config(1);
  c.tef_mode = TefMode::none;
  c.similarity = SimilarityKind::mult;
  auto p = random_params(c, 1, 3, 3, 1);
  auto& e = p.modalities[0].encoder;
  set(e.base_mlp.hidden.weight, {0});
  set(e.base_mlp.output.weight, {0});
  set(e.context_mlp.hidden.weight, {1});
  set(e.context_mlp.output.weight, {1});
  set(e.visual_projection.weight, {0, 1});
  set(e.language_projection.weight, {0});
  set(e.language_projection.bias, {1});
  auto& s = p.modalities[0].similarity;
  set(s.hidden.weight, {1});
  set(s.output.weight, {1});
  Video v{"v", 6, {{"v", Modality::rgb, Matrix::Constant(6, 1, -3.0)}}};
  v.tables[0].features(3, 0) = 5.0;

  const std::vector<int> tokens{1, 2};
  const auto r = score(v, tokens, {0, 1}, c, p);
  CHECK(r.score == doctest::Approx(5.0));
  CHECK(r.chosen_context == ContextMoment::single({3, 3}));
  ad::Tape tape;
  ScoreGraph g(tape, c, p);
  const auto q = g.encode(tokens);
  const auto ctxs = context_set(ContextMode::latent, {0, 1}, 6);
  const auto cs = g.context_scores(v, q, {0, 1}, ctxs);
  for (std::size_t i = 0; i < ctxs.size(); ++i)
    if (!(ctxs[i] == ContextMoment::single({3, 3}))) CHECK(cs.per_modality[0][i].item() <= 1.0 + 1e-12);
}

TEST_CASE("latent score equals the exhaustive oracle") {
  std::mt19937 rng(4);
  int triples = 0;
  for (auto kind : kSims)
    for (auto tef : kTefs) {
      ModelConfig c = tiny_config(3);
      c.similarity = kind;
      c.tef_mode = tef;
      const auto p = random_params(c, 4, 8, 100 + triples);
      for (int t = 0; t < 20; ++t, ++triples) {
        const int n = std::uniform_int_distribution<int>(1, 7)(rng);
        const Video v = random_video("v", n, 4, rng);
        const auto tokens = random_tokens(8, rng);
        const auto moments = enumerate_moments(n);
        const Moment base = moments[std::uniform_int_distribution<std::size_t>(0, moments.size() - 1)(rng)];
        const auto got = score(v, tokens, base, c, p);
        const auto want = oracle::exhaustive_latent_score(v, tokens, base, c, p);
        CHECK(got.score == want.value);
        CHECK(got.chosen_context == want.chosen);
        // Scoring at the chosen context alone reproduces the value when
        // both modalities agree on it.
        const auto fixed = score(v, tokens, base, c, p, got.chosen_context);
        CHECK(fixed.score <= got.score);
      }
    }
  CHECK(triples == 240);
}

TEST_CASE("argmax context reproduces the score with one modality") {
  std::mt19937 rng(5);
  ModelConfig c = tiny_config(3);
  const auto p = random_params(c, 4, 8, 5, 1);
  for (int t = 0; t < 50; ++t) {
    const Video v = random_video("v", 6, 4, rng, 1);
    const auto tokens = random_tokens(8, rng);
    const Moment base = enumerate_moments(6)[static_cast<std::size_t>(t % 21)];
    const auto latent = score(v, tokens, base, c, p);
    CHECK(score(v, tokens, base, c, p, latent.chosen_context).score == latent.score);
  }
}

TEST_CASE("context order changes only the tie winner") {
  std::mt19937 rng(6);
  ModelConfig c = tiny_config(3);
  const auto p = random_params(c, 4, 8, 6);
  const Video v = random_video("v", 5, 4, rng);
  const std::vector<int> tokens{1, 4, 2};
  ad::Tape tape;
  ScoreGraph g(tape, c, p);
  const auto q = g.encode(tokens);
  auto ctxs = context_set(ContextMode::latent, {1, 2}, 5);
  auto max_of = [&](const std::vector<ContextMoment>& cs) {
    const auto s = g.context_scores(v, q, {1, 2}, cs);
    double best = -1e300;
    for (const auto& x : s.per_modality[0]) best = std::max(best, x.item());
    return best;
  };
  const double m0 = max_of(ctxs);
  std::shuffle(ctxs.begin(), ctxs.end(), rng);
  CHECK(max_of(ctxs) == m0);
}

TEST_CASE("fixed contexts must fit the layout") {
  std::mt19937 rng(7);
  ModelConfig c = tiny_config();
  const auto p = random_params(c, 3, 4, 7);
  const Video v = random_video("v", 4, 3, rng);
  const std::vector<int> tokens{1};
  CHECK_THROWS_AS(score(v, tokens, {0, 1}, c, p, ContextMoment::before_after(std::nullopt, Moment{2, 3})),
                  ArgumentError);
  CHECK_THROWS_AS(score(v, tokens, {0, 1}, c, p, ContextMoment::single({3, 4})), ArgumentError);
  CHECK_THROWS_AS(score(v, tokens, {0, 4}, c, p), ArgumentError);
}

TEST_CASE("ranking loss") {
  ad::Tape tape;
  auto s = [&](double x) { return tape.constant(x); };
  const ad::Var one[1] = {s(0.0)};
  CHECK(ranking_loss(s(1.0), one, {}, 0.1).item() == 0.0);
  CHECK(ranking_loss(s(0.0), one, {}, 0.1).item() == doctest::Approx(0.1));
  CHECK_THROWS_AS(ranking_loss(s(0.0), {}, {}, 0.1), ArgumentError);

  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 200; ++t) {
    ad::Parameter pos{"pos", Tensor(u(rng))};
    ad::Tape tp;
    const auto vp = tp.parameter(pos);
    std::vector<ad::Var> intra, inter;
    std::vector<double> vi, ve;
    const int ni = t % 4, ne = (t % 3) + (ni == 0 ? 1 : 0);
    for (int i = 0; i < ni; ++i) vi.push_back(u(rng)), intra.push_back(tp.constant(vi.back()));
    for (int i = 0; i < ne; ++i) ve.push_back(u(rng)), inter.push_back(tp.constant(ve.back()));
    const double margin = 0.2;
    auto hinge_mean = [&](const std::vector<double>& xs) {
      double total = 0;
      for (double x : xs) total += std::max(0.0, margin + x - pos.value.item());
      return xs.empty() ? 0.0 : total / static_cast<double>(xs.size());
    };
    const auto loss = ranking_loss(vp, intra, inter, margin);
    CHECK(loss.item() == doctest::Approx(hinge_mean(vi) + hinge_mean(ve)).epsilon(1e-12));
    CHECK(loss.item() >= 0.0);
    tp.backward(loss);
    CHECK(tp.gradient(pos).item() <= 0.0);
  }
}

TEST_CASE("tall loss") {
  ad::Tape tape;
  const ad::Var big[1] = {tape.constant(1e4)};
  const ad::Var small[1] = {tape.constant(-1e4)};
  CHECK(tall_loss(big, small, 1.0, 1.0).item() < 1e-12);
  const ad::Var zero[1] = {tape.constant(0.0)};
  CHECK(tall_loss(zero, zero, 1.0, 1.0).item() == doctest::Approx(2 * std::log(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(tall_loss({}, zero, 1.0, 1.0), ArgumentError);

  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-30, 30);
  auto stable_softplus = [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); };
  for (int t = 0; t < 100; ++t) {
    ad::Tape tp;
    std::vector<ad::Var> ps, ns;
    double sp = 0, sn = 0;
    const int np = 1 + t % 3, nn = t % 4;
    for (int i = 0; i < np; ++i) {
      const double x = u(rng);
      ps.push_back(tp.constant(x));
      sp += stable_softplus(-x);
    }
    for (int i = 0; i < nn; ++i) {
      const double x = u(rng);
      ns.push_back(tp.constant(x));
      sn += stable_softplus(x);
    }
    const double want = 0.7 * sp / np + (nn ? 1.3 * sn / nn : 0.0);
    CHECK(std::abs(tall_loss(ps, ns, 0.7, 1.3).item() - want) <= 1e-12 * std::max(1.0, want));
  }
}

TEST_CASE("full loss gradients for every similarity, endpoint mode and loss") {
  const auto sweep = loss_gradient_sweep(20, 10);
  CHECK(sweep.size() == 24);
  for (const auto& r : sweep) {
    INFO(r.name, " worst ", r.worst);
    CHECK(r.passed == r.points);
    CHECK(r.points == 20);
  }
}

TEST_CASE("checkpoint tensors round trip") {
  ModelConfig c = tiny_config(3);
  c.similarity = SimilarityKind::tall_sim;
  const auto p = random_params(c, 5, 9, 11);
  const auto tensors = to_named_tensors(p);
  const auto back = from_named_tensors(c, tensors);
  const auto again = to_named_tensors(back);
  REQUIRE(again.size() == tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    CHECK(again[i].name == tensors[i].name);
    CHECK(again[i].tensor == tensors[i].tensor);
  }
  CHECK(shape_of(back) == shape_of(p));

  auto missing = tensors;
  missing.pop_back();
  CHECK_THROWS_AS(from_named_tensors(c, missing), IntegrityError);
  auto extra = tensors;
  extra.push_back({"rgb.unknown", Tensor(1.0)});
  CHECK_THROWS_AS(from_named_tensors(c, extra), IntegrityError);
}

TEST_CASE("model directory round trip") {
  std::mt19937 rng(12);
  Model m;
  m.config = tiny_config(3);
  const std::vector<std::vector<std::string>> lists{{"a", "dog", "runs"}};
  m.vocab = Vocabulary::build(lists);
  m.params = random_params(m.config, 4, m.vocab.size(), 12);
  const auto dir = std::filesystem::temp_directory_path() / "mllc_test_model_dir";
  std::filesystem::remove_all(dir);
  m.save(dir);
  const Model back = Model::load(dir);
  CHECK(back.config == m.config);
  CHECK(back.vocab == m.vocab);
  const Video v = random_video("v", 6, 4, rng);
  const std::vector<int> tokens{1, 2};
  CHECK(score(v, tokens, {1, 3}, back.config, back.params).score == score(v, tokens, {1, 3}, m.config, m.params).score);
  const Model by_file = Model::load(dir / "checkpoint.bin");
  CHECK(by_file.config == m.config);
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
