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

// Independent reference implementations shared by the unit tests and the
// acceptance binary.

#include "mllc/dataset.hpp"
#include "mllc/eval.hpp"
#include "mllc/model.hpp"

#include <algorithm>
#include <random>
#include <string>
#include <vector>

namespace mllc::oracle {

struct ExhaustiveScore {
  double value = 0;
  ContextMoment chosen;
};

/// Latent-context score by brute force: every single-region context from a plain double
/// loop over (start, end), one fresh graph per pair, per-modality maxima
/// fused afterwards.
inline ExhaustiveScore exhaustive_latent_score(const Video& video, const std::vector<int>& tokens, const Moment& base,
                                               const ModelConfig& cfg, const ModelParams& params) {
  const std::size_t n_mod = params.modalities.size();
  std::vector<ContextMoment> contexts;
  for (int s = 0; s < video.n_segments; ++s)
    for (int e = s; e < video.n_segments; ++e) contexts.push_back(ContextMoment::single({s, e}));

  std::vector<std::vector<double>> sims(n_mod);
  for (std::size_t m = 0; m < n_mod; ++m) {
    const auto& mm = params.modalities[m];
    for (const auto& ctx : contexts) {
      ad::Tape tape;
      const ad::Var fl = encode_query(tape, tokens, mm.encoder);
      const ad::Var fv = project_visual(
          tape, visual_feature(tape, video.tables[m], base, ctx, cfg.tef_mode, mm.encoder), mm.encoder);
      sims[m].push_back(similarity(tape, fv, fl, cfg.similarity, mm.similarity).item());
    }
  }
  std::vector<double> maxima(n_mod);
  for (std::size_t m = 0; m < n_mod; ++m) {
    double best = sims[m][0];
    for (double v : sims[m])
      if (v > best) best = v;
    maxima[m] = best;
  }
  ExhaustiveScore out;
  out.value = n_mod == 1 ? maxima[0] : late_fusion(maxima[0], maxima[1], cfg.fusion_lambda);
  double best_fused = 0;
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    const double f = n_mod == 1 ? sims[0][c] : late_fusion(sims[0][c], sims[1][c], cfg.fusion_lambda);
    if (c == 0 || f > best_fused) {
      best_fused = f;
      out.chosen = contexts[c];
    }
  }
  return out;
}

inline double segment_iou(const Moment& a, const Moment& b) {
  int inter = 0, uni = 0;
  for (int s = std::min(a.start, b.start); s <= std::max(a.end, b.end); ++s) {
    const bool in_a = a.start <= s && s <= a.end;
    const bool in_b = b.start <= s && s <= b.end;
    inter += in_a && in_b;
    uni += in_a || in_b;
  }
  return static_cast<double>(inter) / uni;
}

/// Best-agreeing three of four or more annotations by summed pairwise IoU.
inline std::vector<Moment> reference_consensus(const std::vector<Moment>& anns) {
  if (anns.size() < 4) return anns;
  double best = -1;
  std::vector<Moment> out;
  for (std::size_t i = 0; i < anns.size(); ++i)
    for (std::size_t j = i + 1; j < anns.size(); ++j)
      for (std::size_t k = j + 1; k < anns.size(); ++k) {
        const double t = segment_iou(anns[i], anns[j]) + segment_iou(anns[i], anns[k]) + segment_iou(anns[j], anns[k]);
        if (t > best) {
          best = t;
          out = {anns[i], anns[j], anns[k]};
        }
      }
  return out;
}

struct ReferenceMetrics {
  double r1 = 0, r5 = 0, miou = 0;
};

inline ReferenceMetrics reference_metrics(const std::vector<EvaluatedQuery>& qs) {
  ReferenceMetrics m;
  if (qs.empty()) return m;
  for (const auto& q : qs) {
    const auto gt = reference_consensus(q.annotations);
    auto hit = [&](std::size_t k) {
      for (std::size_t i = 0; i < std::min(k, q.ranking.size()); ++i)
        for (const auto& g : gt)
          if (q.ranking[i] == g) return 1.0;
      return 0.0;
    };
    m.r1 += hit(1);
    m.r5 += hit(5);
    double best = 0;
    for (const auto& g : gt) best = std::max(best, segment_iou(q.ranking.front(), g));
    m.miou += best;
  }
  const double n = static_cast<double>(qs.size());
  m.r1 /= n;
  m.r5 /= n;
  m.miou /= n;
  return m;
}

/// Random evaluation queries over a 6-segment video: a random permutation of
/// the 21 moments as the ranking and one to five annotations.
inline EvaluatedQuery random_evaluated_query(std::mt19937& rng) {
  auto moments = enumerate_moments(6);
  std::shuffle(moments.begin(), moments.end(), rng);
  EvaluatedQuery q;
  q.word = kTemporalWords[std::uniform_int_distribution<std::size_t>(0, kTemporalWords.size() - 1)(rng)];
  q.ranking = moments;
  const int n_ann = std::uniform_int_distribution<int>(1, 5)(rng);
  const auto all = enumerate_moments(6);
  // Annotators mostly agree around one moment, sometimes disagree.
  const Moment centre = all[std::uniform_int_distribution<std::size_t>(0, all.size() - 1)(rng)];
  for (int a = 0; a < n_ann; ++a) {
    if (std::bernoulli_distribution(0.6)(rng)) {
      Moment m = centre;
      if (std::bernoulli_distribution(0.3)(rng)) m.end = std::min(5, m.end + 1);
      q.annotations.push_back(m);
    } else {
      q.annotations.push_back(all[std::uniform_int_distribution<std::size_t>(0, all.size() - 1)(rng)]);
    }
  }
  return q;
}

}  // namespace mllc::oracle
