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

#include "mllc/eval.hpp"

#include "mllc/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

namespace mllc {

std::vector<ScoredMoment> rank_moments(const Model& model, const Video& video, std::span<const int> tokens,
                                       ContextEval mode, const std::optional<ContextMoment>& gt) {
  if (mode == ContextEval::gt_context && !gt) throw ArgumentError("rank_moments: gt_context mode needs a context");
  ad::Tape tape;
  ScoreGraph graph(tape, model.config, model.params);
  const QueryEncoding q = graph.encode(tokens);
  std::vector<ScoredMoment> out;
  for (const Moment& m : enumerate_moments(video.n_segments)) {
    const MomentScore s = graph.score(video, q, m, mode == ContextEval::gt_context ? &*gt : nullptr);
    out.push_back({m, s.score.item(), s.chosen_context});
  }
  std::stable_sort(out.begin(), out.end(), [](const ScoredMoment& a, const ScoredMoment& b) { return a.score > b.score; });
  return out;
}

std::vector<Moment> consensus(std::span<const Moment> annotations) {
  if (annotations.size() < 4) return {annotations.begin(), annotations.end()};
  const std::size_t n = annotations.size();
  double best = -1;
  std::array<std::size_t, 3> pick{0, 1, 2};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      for (std::size_t k = j + 1; k < n; ++k) {
        const double total = iou(annotations[i], annotations[j]) + iou(annotations[i], annotations[k]) +
                             iou(annotations[j], annotations[k]);
        if (total > best) best = total, pick = {i, j, k};
      }
  return {annotations[pick[0]], annotations[pick[1]], annotations[pick[2]]};
}

Metrics metrics(std::span<const EvaluatedQuery> queries) {
  Metrics m;
  m.count = queries.size();
  if (queries.empty()) return m;
  std::size_t hit1 = 0, hit5 = 0;
  double iou_sum = 0;
  for (const auto& q : queries) {
    if (q.ranking.empty()) throw ArgumentError("metrics: empty ranking");
    const auto gt = consensus(q.annotations);
    if (gt.empty()) throw ArgumentError("metrics: query without annotations");
    auto matches = [&](const Moment& p) { return std::find(gt.begin(), gt.end(), p) != gt.end(); };
    if (matches(q.ranking[0])) ++hit1;
    const std::size_t top = std::min<std::size_t>(5, q.ranking.size());
    if (std::any_of(q.ranking.begin(), q.ranking.begin() + static_cast<std::ptrdiff_t>(top), matches)) ++hit5;
    double best = 0;
    for (const auto& g : gt) best = std::max(best, iou(q.ranking[0], g));
    iou_sum += best;
  }
  const double n = static_cast<double>(queries.size());
  m.r1 = hit1 / n;
  m.r5 = hit5 / n;
  m.miou = iou_sum / n;
  return m;
}

MetricsReport metrics_report(std::span<const EvaluatedQuery> queries, std::string label) {
  MetricsReport r;
  r.label = std::move(label);
  std::map<TemporalWord, std::vector<EvaluatedQuery>> by_word;
  for (const auto& q : queries) by_word[q.word].push_back(q);
  for (const auto& [w, list] : by_word) r.buckets[w] = metrics(list);
  r.overall = metrics(queries);
  if (!r.buckets.empty()) {
    for (const auto& [w, m] : r.buckets) {
      r.average.r1 += m.r1;
      r.average.r5 += m.r5;
      r.average.miou += m.miou;
    }
    const double k = static_cast<double>(r.buckets.size());
    r.average.r1 /= k;
    r.average.r5 /= k;
    r.average.miou /= k;
    r.average.count = queries.size();
  }
  return r;
}

namespace {

nlohmann::json metrics_json(const Metrics& m) {
  return {{"r1", m.r1}, {"r5", m.r5}, {"miou", m.miou}, {"count", m.count}};
}

std::string bucket_title(TemporalWord w) {
  if (w == TemporalWord::none) return "Simple";
  std::string s(to_string(w));
  s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

}  // namespace

std::string reports_json(std::span<const MetricsReport> reports) {
  nlohmann::json doc;
  doc["schema"] = 1;
  doc["reports"] = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json j;
    j["label"] = r.label;
    j["buckets"] = nlohmann::json::object();
    for (const auto& [w, m] : r.buckets) j["buckets"][std::string(to_string(w))] = metrics_json(m);
    j["overall"] = metrics_json(r.overall);
    j["average"] = metrics_json(r.average);
    doc["reports"].push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

std::string reports_table(std::span<const MetricsReport> reports) {
  std::set<TemporalWord> words;
  for (const auto& r : reports)
    for (const auto& [w, m] : r.buckets) words.insert(w);

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> groups{""}, heads{""};
  for (TemporalWord w : words) {
    groups.insert(groups.end(), {bucket_title(w), ""});
    heads.insert(heads.end(), {"R@1", "mIoU"});
  }
  groups.insert(groups.end(), {"Average", "", ""});
  heads.insert(heads.end(), {"R@1", "R@5", "mIoU"});
  rows.push_back(groups);
  rows.push_back(heads);
  for (const auto& r : reports) {
    std::vector<std::string> row{r.label};
    for (TemporalWord w : words) {
      auto it = r.buckets.find(w);
      row.push_back(it == r.buckets.end() ? "-" : pct(it->second.r1));
      row.push_back(it == r.buckets.end() ? "-" : pct(it->second.miou));
    }
    row.insert(row.end(), {pct(r.average.r1), pct(r.average.r5), pct(r.average.miou)});
    rows.push_back(std::move(row));
  }

  std::vector<std::size_t> width(heads.size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const std::string& cell = rows[r][c];
      if (c == 0) line += cell + std::string(width[c] - cell.size(), ' ');
      else line += "  " + std::string(width[c] - cell.size(), ' ') + cell;
      if (c == 0 || (c % 2 == 0 && c <= 2 * words.size())) line += " |";
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
    if (r == 1) out << std::string(line.size(), '-') << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Model evaluation

std::vector<QueryEvaluation> evaluate_queries(const Model& model, const Corpus& corpus,
                                              std::span<const TemporalQuery> queries, ContextEval mode) {
  std::vector<QueryEvaluation> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    ContextEval m = mode;
    if (m == ContextEval::gt_context && !q.context) {
      if (q.word != TemporalWord::none)
        throw ArgumentError("query '" + q.id + "' has no ground-truth context for gt_context evaluation");
      m = ContextEval::latent;
    }
    const auto tokens = model.encode_tokens(q.tokens);
    out.push_back({&q, rank_moments(model, corpus.video(q.video_id), tokens, m, q.context)});
  }
  return out;
}

std::vector<EvaluatedQuery> as_evaluated(std::span<const QueryEvaluation> evaluations) {
  std::vector<EvaluatedQuery> out;
  out.reserve(evaluations.size());
  for (const auto& e : evaluations) {
    EvaluatedQuery q;
    q.word = e.query->word;
    q.annotations = e.query->annotations();
    for (const auto& s : e.ranking) q.ranking.push_back(s.moment);
    out.push_back(std::move(q));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Analyses

namespace {

std::optional<Moment> single_region(const std::optional<ContextMoment>& c) {
  if (!c) return std::nullopt;
  return c->hull();
}

}  // namespace

std::vector<ContextDelta> context_conditioned_delta(const Model& model, const Corpus& corpus,
                                                    std::span<const TemporalQuery> queries) {
  std::map<TemporalWord, std::vector<EvaluatedQuery>> full, subset;
  for (const auto& q : queries) {
    const auto gt_ctx = single_region(q.context);
    const auto frag = split_fragments(q.sentence, q.word);
    if (!gt_ctx || !frag) continue;
    const Video& video = corpus.video(q.video_id);
    const auto frag_tokens = model.encode_tokens(tokenize(frag->context));
    const bool localized = rank_moments(model, video, frag_tokens).front().moment == *gt_ctx;

    EvaluatedQuery e;
    e.word = q.word;
    e.annotations = q.annotations();
    for (const auto& s : rank_moments(model, video, model.encode_tokens(q.tokens))) e.ranking.push_back(s.moment);
    full[q.word].push_back(e);
    if (localized) subset[q.word].push_back(std::move(e));
  }
  std::vector<ContextDelta> out;
  for (const auto& [w, list] : full) {
    ContextDelta d;
    d.word = w;
    d.full_count = list.size();
    auto it = subset.find(w);
    if (it != subset.end() && !it->second.empty()) {
      d.subset_count = it->second.size();
      const Metrics all = metrics(list), sub = metrics(it->second);
      d.r1_delta = sub.r1 - all.r1;
      d.miou_delta = sub.miou - all.miou;
    }
    out.push_back(d);
  }
  return out;
}

std::vector<ContextMoment> ranked_contexts(const Model& model, const Video& video, std::span<const int> tokens,
                                           const Moment& base) {
  ad::Tape tape;
  ScoreGraph graph(tape, model.config, model.params);
  const QueryEncoding q = graph.encode(tokens);
  const auto contexts = context_set(model.config.context_mode, base, video.n_segments);
  const ContextScores cs = graph.context_scores(video, q, base, contexts);
  std::vector<double> fused(contexts.size());
  for (std::size_t c = 0; c < contexts.size(); ++c)
    fused[c] = cs.per_modality.size() == 1 ? cs.per_modality[0][c].item()
                                           : late_fusion(cs.per_modality[0][c].item(), cs.per_modality[1][c].item(),
                                                         model.config.fusion_lambda);
  std::vector<std::size_t> order(contexts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fused[a] > fused[b]; });
  std::vector<ContextMoment> out;
  for (std::size_t i : order) out.push_back(contexts[i]);
  return out;
}

FragmentTable context_fragment_eval(const Model& model, const Corpus& corpus, std::span<const TemporalQuery> queries) {
  FragmentTable t;
  std::vector<EvaluatedQuery> frag_rows, full_rows;
  for (const auto& q : queries) {
    const auto gt_ctx = single_region(q.context);
    const auto frag = (q.word == TemporalWord::before || q.word == TemporalWord::after)
                          ? split_fragments(q.sentence, q.word)
                          : std::nullopt;
    if (!gt_ctx || !frag) {
      ++t.excluded;
      continue;
    }
    ++t.evaluated;
    const Video& video = corpus.video(q.video_id);

    EvaluatedQuery fe;
    fe.word = q.word;
    fe.annotations = {*gt_ctx};
    for (const auto& s : rank_moments(model, video, model.encode_tokens(tokenize(frag->context))))
      fe.ranking.push_back(s.moment);
    frag_rows.push_back(std::move(fe));

    const auto tokens = model.encode_tokens(q.tokens);
    const auto ranking = rank_moments(model, video, tokens);
    const auto contexts = ranked_contexts(model, video, tokens, ranking.front().moment);
    EvaluatedQuery se;
    se.word = q.word;
    se.annotations = {*gt_ctx};
    // The stored argmax leads; the rest follow the rescored order.
    se.ranking.push_back(*ranking.front().chosen_context.hull());
    for (const auto& c : contexts) {
      if (se.ranking.size() >= 5) break;
      if (c == ranking.front().chosen_context) continue;
      if (auto h = c.hull()) se.ranking.push_back(*h);
    }
    full_rows.push_back(std::move(se));
  }
  t.context_fragment = metrics(frag_rows);
  t.full_sentence = metrics(full_rows);
  return t;
}

FrequencyPrior::FrequencyPrior(std::span<const TemporalQuery> train_queries) {
  for (const auto& q : train_queries)
    for (const auto& m : q.annotations()) ++counts_[q.word][m];
}

std::vector<Moment> FrequencyPrior::rank(TemporalWord word, int n_segments) const {
  std::vector<Moment> moments = enumerate_moments(n_segments);
  auto it = counts_.find(word);
  if (it == counts_.end()) return moments;
  const auto& counts = it->second;
  auto count = [&](const Moment& m) {
    auto c = counts.find(m);
    return c == counts.end() ? std::size_t{0} : c->second;
  };
  std::stable_sort(moments.begin(), moments.end(), [&](const Moment& a, const Moment& b) { return count(a) > count(b); });
  return moments;
}

FrequencyPrior frequency_prior_baseline(std::span<const TemporalQuery> train_queries) {
  return FrequencyPrior(train_queries);
}

std::vector<EvaluatedQuery> evaluate_prior(const FrequencyPrior& prior, const Corpus& corpus,
                                           std::span<const TemporalQuery> queries) {
  std::vector<EvaluatedQuery> out;
  for (const auto& q : queries) {
    EvaluatedQuery e;
    e.word = q.word;
    e.annotations = q.annotations();
    e.ranking = prior.rank(q.word, corpus.video(q.video_id).n_segments);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace mllc
