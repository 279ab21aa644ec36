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
#include "mllc/trainer.hpp"
#include "fixtures.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace mllc;
using namespace mllc::testing;

namespace {

Corpus small_synthetic(std::uint64_t seed = 3) {
  SyntheticCorpusConfig s;
  s.n_videos = 12;
  s.n_test_videos = 3;
  s.n_events = 8;
  s.feature_dim = 4;
  s.queries_per_video = 4;
  s.seed = seed;
  return generate_synthetic(s);
}

TrainConfig quick(int epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.lr_decay_every = 2;
  t.batch_size = 8;
  return t;
}

void check_same(const ModelParams& a, const ModelParams& b) {
  const auto ta = to_named_tensors(a), tb = to_named_tensors(b);
  REQUIRE(ta.size() == tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i].tensor == tb[i].tensor);
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("learning rate schedule") {
  TrainConfig t;
  CHECK(lr_at(0, t) == 0.05);
  CHECK(lr_at(29, t) == 0.05);
  CHECK(lr_at(30, t) == doctest::Approx(0.005).epsilon(1e-12));
  CHECK(lr_at(59, t) == doctest::Approx(0.005).epsilon(1e-12));
  CHECK(lr_at(60, t) == doctest::Approx(0.0005).epsilon(1e-12));
  CHECK(lr_at(89, t) == doctest::Approx(0.0005).epsilon(1e-12));
  CHECK_THROWS_AS(lr_at(-1, t), ArgumentError);
}

TEST_CASE("training config") {
  TrainConfig t;
  CHECK(t.epochs == 90);
  CHECK(t.intra_negatives == 1);
  CHECK(t.inter_negatives == 1);
  const auto back = TrainConfig::from_key_values(t.to_key_values());
  CHECK(back.to_text() == t.to_text());
  TrainConfig bad = t;
  bad.intra_negatives = bad.inter_negatives = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = t;
  bad.lr_decay_factor = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  auto kv = t.to_key_values();
  kv.set("momentum", "0.9");
  CHECK_THROWS_AS(TrainConfig::from_key_values(kv), ConfigError);
}

TEST_CASE("negative sampling") {
  std::mt19937 rng(1);
  Corpus corpus = random_corpus(5, 6, 2, rng);
  corpus.videos[3].n_segments = 2;
  corpus.videos[3].tables[0].features.conservativeResize(2, 2);
  corpus.videos[3].tables[1].features.conservativeResize(2, 2);
  std::mt19937_64 rng64(2);
  for (int trial = 0; trial < 300; ++trial) {
    TrainingExample ex;
    ex.video = static_cast<std::size_t>(trial % 5 == 3 ? 0 : trial % 5);
    const auto all = enumerate_moments(corpus.videos[ex.video].n_segments);
    ex.base = all[static_cast<std::size_t>(trial) % all.size()];
    const int k = 1 + trial % 4;
    const auto negs = sample_negatives(ex, corpus, k, k, rng64);
    CHECK(negs.intra.size() == static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < negs.intra.size(); ++i) {
      CHECK(negs.intra[i] != ex.base);
      CHECK(iou(negs.intra[i], ex.base) < 1.0);
      for (std::size_t j = i + 1; j < negs.intra.size(); ++j) CHECK(negs.intra[i] != negs.intra[j]);
    }
    for (const auto& [v, m] : negs.inter) {
      CHECK(v != ex.video);
      CHECK(m == ex.base);
      CHECK(m.valid_for(corpus.videos[v].n_segments));
    }
  }

  std::mt19937 rng2(3);
  const Corpus two = random_corpus(2, 4, 2, rng2);
  TrainingExample ex;
  ex.base = {1, 2};
  for (int trial = 0; trial < 20; ++trial) {
    const auto negs = sample_negatives(ex, two, 1, 3, rng64);
    CHECK(negs.inter.size() == 3);
    for (const auto& n : negs.inter) CHECK(n.first == 1);
  }
  const Corpus one = random_corpus(1, 4, 2, rng2);
  CHECK_THROWS_AS(sample_negatives(ex, one, 1, 1, rng64), ArgumentError);
}

TEST_CASE("strong supervision never takes the latent max on examples with a context") {
  std::mt19937 rng(4);
  const Corpus corpus = random_corpus(3, 5, 2, rng);
  ModelConfig c = tiny_config();
  const auto params = random_params(c, 2, 6, 4);
  TrainingExample ex;
  ex.tokens = {1, 2};
  ex.base = {0, 1};
  ex.word = TemporalWord::before;
  ex.context = ContextMoment::single({3, 4});
  std::mt19937_64 rng64(5);
  const auto negs = sample_negatives(ex, corpus, 3, 2, rng64, &*ex.context);
  for (const auto& [v, m] : negs.inter) CHECK(ex.context->valid_for(corpus.videos[v].n_segments));
  {
    ad::Tape tape;
    ScoreGraph g(tape, c, params);
    example_loss(g, corpus, ex, negs);
    CHECK(g.latent_max_count() == 0);
  }
  c.context_supervision = Supervision::weak;
  {
    ad::Tape tape;
    ScoreGraph g(tape, c, params);
    example_loss(g, corpus, ex, negs);
    CHECK(g.latent_max_count() > 0);
  }
  c.context_supervision = Supervision::strong;
  ex.word = TemporalWord::none;
  ex.context.reset();
  {
    ad::Tape tape;
    ScoreGraph g(tape, c, params);
    example_loss(g, corpus, ex, negs);
    CHECK(g.latent_max_count() > 0);
  }
}

TEST_CASE("fixed context selection") {
  ModelConfig c;
  TrainingExample ex;
  ex.word = TemporalWord::after;
  ex.context = ContextMoment::single({0, 0});
  CHECK(uses_fixed_context(c, ex));
  ex.word = TemporalWord::none;
  CHECK_FALSE(uses_fixed_context(c, ex));
  ex.word = TemporalWord::after;
  c.context_supervision = Supervision::weak;
  CHECK_FALSE(uses_fixed_context(c, ex));
}

TEST_CASE("epoch order follows the mix ratio and seed") {
  std::vector<TrainingExample> ex(30);
  for (std::size_t i = 0; i < ex.size(); ++i) ex[i].word = i < 5 ? TemporalWord::before : TemporalWord::none;
  TrainConfig t;
  t.mix_ratio = 1.0;
  const auto order = epoch_order(ex, t, 0);
  CHECK(order.size() == ex.size());
  std::size_t temporal = 0;
  for (auto i : order) temporal += ex[i].word != TemporalWord::none;
  CHECK(temporal == 15);
  CHECK(epoch_order(ex, t, 0) == order);
  CHECK(epoch_order(ex, t, 1) != order);
  t.mix_ratio = 0;
  auto natural = epoch_order(ex, t, 0);
  std::sort(natural.begin(), natural.end());
  for (std::size_t i = 0; i < natural.size(); ++i) CHECK(natural[i] == i);
}

TEST_CASE("training is deterministic and resumable") {
  const Corpus corpus = small_synthetic();
  ModelConfig c = tiny_config(4);
  const auto a = train(corpus, c, quick(4));
  const auto b = train(corpus, c, quick(4));
  CHECK(a.history == b.history);
  check_same(a.model.params, b.model.params);
  REQUIRE(a.history.size() == 4);
  CHECK(a.history[2].lr == doctest::Approx(0.005));
  for (const auto& r : a.history) CHECK(std::isfinite(r.mean_loss));

  auto half = train(corpus, c, quick(2));
  train(corpus, half.model, quick(4), half.history);
  CHECK(half.history == a.history);
  check_same(half.model.params, a.model.params);

  const auto zero = train(corpus, c, quick(0));
  CHECK(zero.history.empty());
  check_same(zero.model.params, init_model(corpus, c).params);

  c.seed = 2;
  const auto other = train(corpus, c, quick(1));
  CHECK_FALSE(to_named_tensors(other.model.params)[0].tensor == to_named_tensors(a.model.params)[0].tensor);
}

TEST_CASE("training lowers the loss") {
  const Corpus corpus = small_synthetic(5);
  ModelConfig c = tiny_config(8);
  c.context_mode = ContextMode::global;
  c.context_supervision = Supervision::weak;
  c.tef_mode = TefMode::tef;
  TrainConfig t = quick(12);
  t.lr_decay_every = 10;
  t.lr0 = 0.2;
  const auto out = train(corpus, c, t);
  CHECK(out.history.back().mean_loss < out.history.front().mean_loss);
}

TEST_CASE("loss falls over the first epochs on the synthetic corpus") {
  // The acceptance corpus settings with fewer videos.
  SyntheticCorpusConfig s;
  s.n_videos = 120;
  s.n_test_videos = 20;
  const Corpus corpus = generate_synthetic(s);
  TrainConfig t;
  t.epochs = 11;
  const auto out = train(corpus, ModelConfig{}, t);
  int falling = 0;
  for (std::size_t e = 1; e < out.history.size(); ++e) falling += out.history[e].mean_loss < out.history[e - 1].mean_loss;
  CHECK(falling >= 8);
}

TEST_CASE("strong supervision requires contexts") {
  Corpus corpus = small_synthetic();
  for (auto& q : corpus.train)
    if (q.word != TemporalWord::none) q.context.reset();
  CHECK_THROWS_AS(train(corpus, tiny_config(), quick(1)), ConfigError);
}

TEST_CASE("history file") {
  const auto path = std::filesystem::temp_directory_path() / "mllc_test_history.csv";
  const std::vector<EpochRecord> h{{0, 0.5, 0.05}, {1, 0.25, 0.005}};
  write_history(path, h);
  CHECK(read_history(path) == h);
  {
    std::ofstream out(path);
    out << "epoch,mean_loss,lr\n1,0.5,0.05\n";
  }
  CHECK_THROWS_AS(read_history(path), ParseError);
  {
    std::ofstream out(path);
    out << "epoch,loss\n";
  }
  CHECK_THROWS_AS(read_history(path), ParseError);
  std::filesystem::remove(path);
}

}  // TEST_SUITE
