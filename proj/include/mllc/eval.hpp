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

#pragma once

#include "mllc/dataset.hpp"
#include "mllc/model.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mllc {

enum class ContextEval { latent, gt_context };

/// Every candidate moment scored and sorted by descending fused score; ties
/// keep enumeration order. gt_context mode scores each candidate at `gt`.
std::vector<ScoredMoment> rank_moments(const Model& model, const Video& video, std::span<const int> tokens,
                                       ContextEval mode = ContextEval::latent,
                                       const std::optional<ContextMoment>& gt = std::nullopt);

/// With four or more annotations, the three with the largest total pairwise
/// IoU (ties to the earliest index triple); otherwise all of them.
std::vector<Moment> consensus(std::span<const Moment> annotations);

/// One query as seen by the metrics: its bucket, the ranked moments and the
/// raw annotations.
struct EvaluatedQuery {
  TemporalWord word = TemporalWord::none;
  std::vector<Moment> ranking;
  std::vector<Moment> annotations;
};

struct Metrics {
  double r1 = 0;
  double r5 = 0;
  double miou = 0;
  std::size_t count = 0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

struct MetricsReport {
  std::string label;
  std::map<TemporalWord, Metrics> buckets;  // only buckets with queries
  Metrics overall;                          // over all queries
  Metrics average;                          // unweighted mean of the buckets
};

/// R@k: top k holds a consensus moment exactly. mIoU: best IoU between the
/// rank-1 moment and the consensus moments.
Metrics metrics(std::span<const EvaluatedQuery> queries);
MetricsReport metrics_report(std::span<const EvaluatedQuery> queries, std::string label = {});

/// {"schema": 1, "reports": [...]}.
std::string reports_json(std::span<const MetricsReport> reports);
/// Rows are reports; column groups are the buckets present in any report,
/// then the Average group. Values are percentages.
std::string reports_table(std::span<const MetricsReport> reports);

// ---------------------------------------------------------------------------
// Model evaluation

struct QueryEvaluation {
  const TemporalQuery* query = nullptr;
  std::vector<ScoredMoment> ranking;
};

/// In gt_context mode simple queries, which carry no context, keep the
/// latent max; a relational query without one is an error.
std::vector<QueryEvaluation> evaluate_queries(const Model& model, const Corpus& corpus,
                                              std::span<const TemporalQuery> queries,
                                              ContextEval mode = ContextEval::latent);
std::vector<EvaluatedQuery> as_evaluated(std::span<const QueryEvaluation> evaluations);

// ---------------------------------------------------------------------------
// Analyses

/// Per temporal word: subset metric minus full-set metric, where the subset
/// holds the queries whose context fragment, ranked alone, puts the
/// ground-truth context first. nullopt when the subset is empty.
struct ContextDelta {
  TemporalWord word = TemporalWord::none;
  std::size_t full_count = 0;
  std::size_t subset_count = 0;
  std::optional<double> r1_delta;
  std::optional<double> miou_delta;
};

std::vector<ContextDelta> context_conditioned_delta(const Model& model, const Corpus& corpus,
                                                    std::span<const TemporalQuery> queries);

struct FragmentTable {
  Metrics context_fragment;  // the context clause ranked on its own
  Metrics full_sentence;     // the context chosen while scoring the whole sentence
  std::size_t evaluated = 0;
  std::size_t excluded = 0;  // no gt context or no clean split
};

/// Full Sentence uses the rank-1 base: R@1 checks its chosen context, R@5
/// the five best contexts by fused score, mIoU the chosen context's hull.
FragmentTable context_fragment_eval(const Model& model, const Corpus& corpus, std::span<const TemporalQuery> queries);

/// Context candidates for a fixed base, best first by fused score; ties keep
/// context-set order.
std::vector<ContextMoment> ranked_contexts(const Model& model, const Video& video, std::span<const int> tokens,
                                           const Moment& base);

/// Ranks moments by how often each temporal-word bucket's training ground
/// truth used them.
class FrequencyPrior {
 public:
  explicit FrequencyPrior(std::span<const TemporalQuery> train_queries);

  /// Unseen buckets fall back to enumeration order.
  std::vector<Moment> rank(TemporalWord word, int n_segments) const;

 private:
  std::map<TemporalWord, std::map<Moment, std::size_t>> counts_;
};

FrequencyPrior frequency_prior_baseline(std::span<const TemporalQuery> train_queries);

std::vector<EvaluatedQuery> evaluate_prior(const FrequencyPrior& prior, const Corpus& corpus,
                                           std::span<const TemporalQuery> queries);

}  // namespace mllc
