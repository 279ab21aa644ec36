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

// Finite-difference sweeps over every tape operation and over the full
// training loss of every model variant.

#include "mllc/trainer.hpp"
#include "fixtures.hpp"

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace mllc::testing {

struct SweepResult {
  std::string name;
  int points = 0;
  int passed = 0;
  double worst = 0;
};

inline constexpr double kGradientTolerance = 1e-4;

namespace detail {

using OpBuilder = std::function<ad::Var(ad::Tape&, std::vector<ad::Var>&)>;

struct OpCase {
  std::string name;
  std::vector<std::pair<Index, Index>> shapes;  // (rows, cols); cols 0 marks a vector
  OpBuilder build;
  bool kinks = false;
};

inline std::vector<OpCase> op_cases() {
  using namespace ad;
  // Weighting by a fixed pattern keeps sum() from hiding per-element errors.
  auto weighted = [](Var v) {
    Tensor w = Tensor::zeros_like(v.value());
    for (Index i = 0; i < w.size(); ++i) w.mat().data()[i] = 0.3 + 0.17 * static_cast<double>(i % 7);
    return sum(hadamard(v, v.tape().constant(w)));
  };
  std::vector<OpCase> c;
  c.push_back({"matmul", {{3, 4}, {4, 0}}, [=](Tape&, std::vector<Var>& p) { return weighted(matmul(p[0], p[1])); }});
  c.push_back({"matmul (matrix)", {{2, 3}, {3, 2}}, [=](Tape&, std::vector<Var>& p) { return weighted(matmul(p[0], p[1])); }});
  c.push_back({"add", {{4, 0}, {4, 0}}, [=](Tape&, std::vector<Var>& p) { return weighted(add(p[0], p[1])); }});
  c.push_back({"sub", {{4, 0}, {4, 0}}, [=](Tape&, std::vector<Var>& p) { return weighted(sub(p[0], p[1])); }});
  c.push_back({"hadamard", {{4, 0}, {4, 0}}, [=](Tape&, std::vector<Var>& p) { return weighted(hadamard(p[0], p[1])); }});
  c.push_back({"scale", {{4, 0}}, [=](Tape&, std::vector<Var>& p) { return weighted(scale(p[0], -1.7)); }});
  c.push_back({"concat", {{2, 0}, {3, 0}}, [=](Tape&, std::vector<Var>& p) { return weighted(concat({p[0], p[1], p[0]})); }});
  c.push_back({"slice", {{6, 0}}, [=](Tape&, std::vector<Var>& p) { return weighted(slice(p[0], 1, 3)); }});
  c.push_back({"row", {{3, 4}}, [=](Tape&, std::vector<Var>& p) { return weighted(row(p[0], 2)); }});
  c.push_back({"tanh", {{5, 0}}, [=](Tape&, std::vector<Var>& p) { return weighted(tanh(p[0])); }});
  c.push_back({"sigmoid", {{5, 0}}, [=](Tape&, std::vector<Var>& p) { return weighted(sigmoid(p[0])); }});
  c.push_back({"relu", {{5, 0}}, [=](Tape&, std::vector<Var>& p) { return weighted(relu(p[0])); }, true});
  c.push_back({"softplus", {{5, 0}}, [=](Tape&, std::vector<Var>& p) { return weighted(softplus(scale(p[0], 4.0))); }});
  c.push_back({"l2_normalize", {{4, 0}}, [=](Tape&, std::vector<Var>& p) { return weighted(l2_normalize(p[0])); }});
  c.push_back({"squared_distance", {{4, 0}, {4, 0}}, [](Tape&, std::vector<Var>& p) { return squared_distance(p[0], p[1]); }});
  c.push_back({"sum", {{2, 3}}, [](Tape&, std::vector<Var>& p) { return sum(tanh(p[0])); }});
  c.push_back({"add_n", {{3, 0}, {3, 0}, {3, 0}}, [=](Tape&, std::vector<Var>& p) { return weighted(add_n(p)); }});
  c.push_back({"mean", {{3, 0}, {3, 0}}, [=](Tape&, std::vector<Var>& p) { return weighted(mean(p)); }});
  c.push_back({"max_select",
               {{1, 0}, {1, 0}, {1, 0}, {1, 0}},
               [](Tape& t, std::vector<Var>& p) {
                 std::vector<Var> s;
                 for (auto& v : p) s.push_back(sum(v));
                 return scale(max_select(s).value, 2.0) + t.constant(0.0);
               },
               true});
  return c;
}

}  // namespace detail

/// Every tape operation at `points` random parameter values.
inline std::vector<SweepResult> op_gradient_sweep(int points, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::vector<SweepResult> out;
  for (const auto& op : detail::op_cases()) {
    SweepResult r{op.name};
    for (int pt = 0; pt < points; ++pt) {
      std::vector<ad::Parameter> params;
      for (std::size_t i = 0; i < op.shapes.size(); ++i) {
        const auto [rows, cols] = op.shapes[i];
        const Tensor t = cols == 0 ? Tensor::vector(random_vector(rows, rng, 2.0))
                                   : Tensor::matrix(random_matrix(rows, cols, rng, 2.0));
        params.emplace_back("p" + std::to_string(i), t);
      }
      std::vector<ad::Parameter*> ptrs;
      for (auto& p : params) ptrs.push_back(&p);
      const auto check = check_gradients(
          ptrs,
          [&](ad::Tape& tape) {
            std::vector<ad::Var> vars;
            for (auto& p : params) vars.push_back(tape.parameter(p));
            return op.build(tape, vars);
          },
          1e-5, op.kinks);
      ++r.points;
      r.worst = std::max(r.worst, check.relative_error);
      r.passed += check.relative_error < kGradientTolerance && (check.analytic_norm > 0 || op.kinks);
    }
    out.push_back(r);
  }
  return out;
}

inline constexpr SimilarityKind kAllSimilarities[] = {SimilarityKind::distance, SimilarityKind::mult,
                                                      SimilarityKind::normalized_mult, SimilarityKind::tall_sim};
inline constexpr TefMode kAllTefModes[] = {TefMode::none, TefMode::tef, TefMode::contef};
inline constexpr LossKind kAllLosses[] = {LossKind::ranking, LossKind::tall};

/// The full example loss for every (similarity, endpoint mode, loss) at
/// `points` parameter draws, cycling context modes and supervision.
inline std::vector<SweepResult> loss_gradient_sweep(int points, std::uint32_t seed) {
  std::mt19937 rng(seed);
  const Corpus corpus = random_corpus(3, 3, 2, rng);
  const ContextMode modes[] = {ContextMode::global, ContextMode::before_after, ContextMode::latent};
  std::vector<SweepResult> out;
  std::uint64_t draw = 0;
  for (auto kind : kAllSimilarities)
    for (auto tef : kAllTefModes)
      for (auto loss : kAllLosses) {
        SweepResult r{std::string(to_string(kind)) + "/" + std::string(to_string(tef)) + "/" +
                      std::string(to_string(loss))};
        for (int pt = 0; pt < points; ++pt) {
          ModelConfig c = tiny_config(2);
          c.similarity = kind;
          c.tef_mode = tef;
          c.loss = loss;
          c.context_mode = modes[pt % 3];
          c.context_supervision =
              c.context_mode == ContextMode::latent && pt % 2 ? Supervision::strong : Supervision::weak;
          auto params = random_params(c, 2, 4, 1000 + ++draw);
          // Zero biases meet the zero-pooled padding slot exactly at a relu hinge.
          std::uniform_real_distribution<double> jitter(-0.2, 0.2);
          visit_parameters(params, [&](ad::Parameter& q) {
            for (Index i = 0; i < q.value.size(); ++i) q.value.mat().data()[i] += jitter(rng);
          });
          TrainingExample ex;
          ex.tokens = random_tokens(4, rng);
          ex.base = {0, 0};
          ex.word = TemporalWord::before;
          if (c.context_mode == ContextMode::latent) ex.context = ContextMoment::single({1, 2});
          Negatives negs;
          negs.intra = {{1, 1}, {0, 2}};
          negs.inter = {{1, {0, 0}}, {2, {0, 0}}};
          const auto check = check_gradients(
              trainable_parameters(params),
              [&](ad::Tape& t) {
                ScoreGraph g(t, c, params);
                return example_loss(g, corpus, ex, negs);
              },
              1e-5, true);
          ++r.points;
          r.worst = std::max(r.worst, check.relative_error);
          r.passed += check.relative_error < kGradientTolerance && check.checked > 0;
        }
        out.push_back(r);
      }
  return out;
}

}  // namespace mllc::testing
