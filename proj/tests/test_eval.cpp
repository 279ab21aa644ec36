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
#include "mllc/eval.hpp"
#include "mllc/trainer.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>
#include <json.hpp>

using namespace mllc;
using namespace mllc::testing;

namespace {

Corpus small_corpus() {
  SyntheticCorpusConfig s;
  s.n_videos = 10;
  s.n_test_videos = 4;
  s.n_events = 8;
  s.feature_dim = 4;
  s.queries_per_video = 6;
  s.seed = 21;
  return generate_synthetic(s);
}

EvaluatedQuery evaluated(TemporalWord w, std::vector<Moment> ranking, std::vector<Moment> anns) {
  return {w, std::move(ranking), std::move(anns)};
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("consensus of annotators") {
  const std::vector<Moment> few{{0, 0}, {3, 4}, {5, 5}};
  CHECK(consensus(few) == few);
  const std::vector<Moment> four{{0, 0}, {5, 5}, {0, 1}, {0, 0}};
  CHECK(consensus(four) == std::vector<Moment>{{0, 0}, {0, 1}, {0, 0}});
  const std::vector<Moment> tied{{1, 1}, {2, 2}, {3, 3}, {4, 4}};
  CHECK(consensus(tied) == std::vector<Moment>{{1, 1}, {2, 2}, {3, 3}});

  std::mt19937 rng(1);
  for (int t = 0; t < 300; ++t) {
    const auto q = oracle::random_evaluated_query(rng);
    CHECK(consensus(q.annotations) == oracle::reference_consensus(q.annotations));
  }
}

TEST_CASE("metrics on hand-built rankings") {
  const std::vector<EvaluatedQuery> qs{
      evaluated(TemporalWord::none, {{0, 0}, {1, 1}}, {{0, 0}}),
      evaluated(TemporalWord::none, {{1, 2}, {0, 0}, {4, 5}}, {{1, 1}}),
      evaluated(TemporalWord::before, {{0, 5}, {2, 2}, {3, 3}, {4, 4}, {5, 5}, {1, 1}}, {{1, 1}}),
  };
  const Metrics m = metrics(qs);
  CHECK(m.count == 3);
  CHECK(m.r1 == doctest::Approx(1.0 / 3));
  CHECK(m.r5 == doctest::Approx(1.0 / 3));
  CHECK(m.miou == doctest::Approx((1.0 + 0.5 + 1.0 / 6) / 3));

  const auto report = metrics_report(qs, "row");
  CHECK(report.label == "row");
  REQUIRE(report.buckets.size() == 2);
  CHECK(report.buckets.at(TemporalWord::none).r1 == doctest::Approx(0.5));
  CHECK(report.buckets.at(TemporalWord::before).r1 == 0.0);
  CHECK(report.average.r1 == doctest::Approx(0.25));
  CHECK(report.overall.r1 == doctest::Approx(1.0 / 3));
  CHECK(metrics({}).count == 0);
}

TEST_CASE("metrics match the reference implementation") {
  std::mt19937 rng(2);
  int cases = 0, four_plus = 0;
  for (; cases < 50; ++cases) {
    std::vector<EvaluatedQuery> qs;
    const int n = std::uniform_int_distribution<int>(1, 12)(rng);
    for (int i = 0; i < n; ++i) {
      qs.push_back(oracle::random_evaluated_query(rng));
      four_plus += qs.back().annotations.size() >= 4;
    }
    const Metrics got = metrics(qs);
    const auto want = oracle::reference_metrics(qs);
    CHECK(got.r1 == want.r1);
    CHECK(got.r5 == want.r5);
    CHECK(got.miou == doctest::Approx(want.miou).epsilon(1e-14));
    CHECK(got.count == qs.size());
  }
  CHECK(four_plus > 0);
}

TEST_CASE("report rendering") {
  const std::vector<EvaluatedQuery> qs{evaluated(TemporalWord::none, {{0, 0}}, {{0, 0}}),
                                       evaluated(TemporalWord::then, {{0, 1}}, {{0, 0}})};
  const std::vector<MetricsReport> reports{metrics_report(qs, "A"), metrics_report(qs, "B")};
  const auto j = nlohmann::json::parse(reports_json(reports));
  CHECK(j.at("schema") == 1);
  CHECK(j.at("reports").size() == 2);
  const std::string table = reports_table(reports);
  CHECK(table.find("Simple") != std::string::npos);
  CHECK(table.find("Then") != std::string::npos);
  CHECK(table.find("Before") == std::string::npos);
  CHECK(table.find("100.00") != std::string::npos);
}

TEST_CASE("moment ranking") {
  const Corpus corpus = small_corpus();
  ModelConfig c = tiny_config(4);
  const Model model = init_model(corpus, c);
  const auto& q = corpus.test.front();
  const Video& video = corpus.video(q.video_id);
  const auto tokens = model.encode_tokens(q.tokens);
  const auto ranked = rank_moments(model, video, tokens);
  REQUIRE(ranked.size() == 21);
  for (std::size_t i = 1; i < ranked.size(); ++i) CHECK(ranked[i - 1].score >= ranked[i].score);
  for (const auto& r : ranked) CHECK(r.score == score(video, tokens, r.moment, c, model.params).score);

  const auto gt = ContextMoment::single({2, 3});
  for (const auto& r : rank_moments(model, video, tokens, ContextEval::gt_context, gt)) {
    CHECK(r.chosen_context == gt);
    CHECK(r.score == score(video, tokens, r.moment, c, model.params, gt).score);
  }
}

TEST_CASE("ties keep enumeration order") {
  const Corpus corpus = small_corpus();
  ModelConfig c = tiny_config(2);
  c.similarity = SimilarityKind::mult;
  Model model = init_model(corpus, c);
  visit_parameters(model.params, [](ad::Parameter& p) { p.value.mat().setZero(); });
  const Video& video = corpus.videos.front();
  const std::vector<int> tokens{1};
  const auto ranked = rank_moments(model, video, tokens);
  const auto moments = enumerate_moments(video.n_segments);
  REQUIRE(ranked.size() == moments.size());
  for (std::size_t i = 0; i < moments.size(); ++i) CHECK(ranked[i].moment == moments[i]);
}

TEST_CASE("query evaluation modes") {
  Corpus corpus = small_corpus();
  const Model model = init_model(corpus, tiny_config(3));
  const auto latent = evaluate_queries(model, corpus, corpus.test);
  const auto gt = evaluate_queries(model, corpus, corpus.test, ContextEval::gt_context);
  REQUIRE(latent.size() == corpus.test.size());
  for (std::size_t i = 0; i < latent.size(); ++i) {
    const auto& q = *latent[i].query;
    if (q.word == TemporalWord::none) {
      CHECK(latent[i].ranking.front().score == gt[i].ranking.front().score);
    } else {
      for (const auto& r : gt[i].ranking) CHECK(r.chosen_context == *q.context);
      CHECK(latent[i].ranking.front().score >= gt[i].ranking.front().score);
    }
  }
  const auto ev = as_evaluated(latent);
  CHECK(ev.size() == latent.size());
  CHECK(ev.front().ranking.size() == latent.front().ranking.size());

  for (auto& q : corpus.test)
    if (q.word != TemporalWord::none) q.context.reset();
  CHECK_NOTHROW(evaluate_queries(model, corpus, corpus.test));
  CHECK_THROWS_AS(evaluate_queries(model, corpus, corpus.test, ContextEval::gt_context), ArgumentError);
}

TEST_CASE("context conditioned delta") {
  const Corpus corpus = small_corpus();
  const Model model = init_model(corpus, tiny_config(3));
  const auto deltas = context_conditioned_delta(model, corpus, corpus.train);
  std::map<TemporalWord, std::pair<std::vector<EvaluatedQuery>, std::vector<EvaluatedQuery>>> want;
  for (const auto& q : corpus.train) {
    if (q.word != TemporalWord::before && q.word != TemporalWord::after && q.word != TemporalWord::then) continue;
    const auto frag = split_fragments(q.sentence, q.word);
    REQUIRE(frag);
    const Video& v = corpus.video(q.video_id);
    EvaluatedQuery e{q.word, {}, q.annotations()};
    for (const auto& r : rank_moments(model, v, model.encode_tokens(q.tokens))) e.ranking.push_back(r.moment);
    want[q.word].first.push_back(e);
    const auto top = rank_moments(model, v, model.encode_tokens(tokenize(frag->context))).front().moment;
    if (ContextMoment::single(top) == *q.context) want[q.word].second.push_back(e);
  }
  CHECK(deltas.size() == want.size());
  for (const auto& d : deltas) {
    const auto& [full, sub] = want.at(d.word);
    CHECK(d.full_count == full.size());
    CHECK(d.subset_count == sub.size());
    if (sub.empty()) {
      CHECK_FALSE(d.r1_delta);
    } else {
      REQUIRE(d.r1_delta);
      CHECK(*d.r1_delta == doctest::Approx(metrics(sub).r1 - metrics(full).r1));
      CHECK(*d.miou_delta == doctest::Approx(metrics(sub).miou - metrics(full).miou));
    }
  }
}

TEST_CASE("context fragment table") {
  const Corpus corpus = small_corpus();
  const Model model = init_model(corpus, tiny_config(3));
  const auto table = context_fragment_eval(model, corpus, corpus.test);
  std::size_t split_ok = 0;
  for (const auto& q : corpus.test)
    split_ok += (q.word == TemporalWord::before || q.word == TemporalWord::after) &&
                split_fragments(q.sentence, q.word).has_value();
  CHECK(table.evaluated == split_ok);
  CHECK(table.evaluated + table.excluded == corpus.test.size());
  CHECK(table.context_fragment.count == table.evaluated);
  CHECK(table.full_sentence.r1 <= table.full_sentence.r5);
  const auto& q = corpus.test.back();
  const auto ctxs = ranked_contexts(model, corpus.video(q.video_id), model.encode_tokens(q.tokens), q.base);
  CHECK(ctxs.size() == context_set(ContextMode::latent, q.base, 6).size());
}

TEST_CASE("frequency prior") {
  std::vector<TemporalQuery> train{
      make_query("a", "v", "x", TemporalWord::none, {2, 2}),
      make_query("b", "v", "x", TemporalWord::none, {2, 2}),
      make_query("c", "v", "x", TemporalWord::none, {0, 1}),
      make_query("d", "v", "x", TemporalWord::before, {0, 5}),
      make_query("e", "v", "x", TemporalWord::none, {7, 7}),
  };
  const auto prior = frequency_prior_baseline(train);
  const auto r = prior.rank(TemporalWord::none, 6);
  REQUIRE(r.size() == 21);
  CHECK(r[0] == Moment{2, 2});
  CHECK(r[1] == Moment{0, 1});
  CHECK(r[2] == Moment{0, 0});
  CHECK(prior.rank(TemporalWord::before, 6).front() == Moment{0, 5});
  CHECK(prior.rank(TemporalWord::then, 6) == enumerate_moments(6));
  CHECK(prior.rank(TemporalWord::none, 2).front() == Moment{0, 1});

  const Corpus corpus = small_corpus();
  const auto ev = evaluate_prior(frequency_prior_baseline(corpus.train), corpus, corpus.test);
  CHECK(ev.size() == corpus.test.size());
  for (const auto& e : ev) CHECK(e.ranking.size() == 21);
}

}  // TEST_SUITE
