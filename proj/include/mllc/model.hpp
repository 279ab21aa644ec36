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

#include "mllc/autodiff.hpp"
#include "mllc/checkpoint.hpp"
#include "mllc/config.hpp"
#include "mllc/encoders.hpp"
#include "mllc/temporal.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace mllc {

enum class SimilarityKind { distance, mult, normalized_mult, tall_sim };
enum class LossKind { ranking, tall };
enum class Supervision { weak, strong };

std::string_view to_string(SimilarityKind k);
std::string_view to_string(LossKind k);
std::string_view to_string(Supervision s);
SimilarityKind parse_similarity(std::string_view s);
LossKind parse_loss(std::string_view s);
Supervision parse_supervision(std::string_view s);

/// Every model variant is a point in this space: endpoint features,
/// similarity, context set, loss and context supervision, plus sizes.
struct ModelConfig {
  TefMode tef_mode = TefMode::contef;
  SimilarityKind similarity = SimilarityKind::normalized_mult;
  ContextMode context_mode = ContextMode::latent;
  LossKind loss = LossKind::ranking;
  Supervision context_supervision = Supervision::strong;
  double fusion_lambda = 0.5;

  int visual_hidden = 128;
  int visual_dim = 64;
  int embed_dim = 32;
  int lstm_hidden = 64;
  int joint_dim = 64;
  int sim_hidden = 64;

  double margin = 0.1;
  double alpha_c = 1.0;
  double alpha_w = 1.0;
  std::uint64_t seed = 1;

  std::string embedding_file;  // optional pretrained vectors
  bool embedding_trainable = true;

  void validate() const;

  static ModelConfig from_key_values(const KeyValues& kv);
  static ModelConfig load(const std::filesystem::path& path) { return from_key_values(KeyValues::load(path)); }
  KeyValues to_key_values() const;
  std::string to_text() const { return to_key_values().to_text(); }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Context slots implied by a context mode (2 for before/after).
int context_slots(ContextMode mode);

/// Weights of one modality's network; similarity MLP unused for `distance`.
struct ModalityModel {
  Modality modality = Modality::rgb;
  EncoderParams encoder;
  Mlp similarity;
};

struct ModelParams {
  std::vector<ModalityModel> modalities;
};

/// Input-dependent sizes not carried by ModelConfig.
struct ModelShape {
  std::vector<Modality> modalities;
  std::vector<int> feature_dims;  // per modality
  int vocab_size = 1;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

template <class Params, class F>
void visit_parameters(Params& params, F&& f) {
  for (auto& m : params.modalities) {
    visit_encoder(m.encoder, f);
    if (m.similarity.hidden.weight.name.empty()) continue;  // distance similarity has no MLP
    f(m.similarity.hidden.weight), f(m.similarity.hidden.bias);
    f(m.similarity.output.weight), f(m.similarity.output.bias);
  }
}

ModelParams init_params(const ModelConfig& cfg, const ModelShape& shape, std::mt19937_64& rng);
ModelShape shape_of(const ModelParams& params);

std::vector<NamedTensor> to_named_tensors(const ModelParams& params);
/// Rebuilds parameters from checkpoint tensors; every name and shape must match.
ModelParams from_named_tensors(const ModelConfig& cfg, std::span<const NamedTensor> tensors);

std::vector<ad::Parameter*> trainable_parameters(ModelParams& params);
/// Adds weight * d(root)/d(p) from `tape` into each parameter's gradient.
void accumulate_gradients(const ad::Tape& tape, ModelParams& params, double weight = 1.0);
void sgd_step(ModelParams& params, double lr);

/// A video's per-segment features, one table per model modality in order.
struct Video {
  std::string id;
  int n_segments = 0;
  std::vector<SegmentFeatureTable> tables;
};

/// Scalar similarity, higher is better. `distance` returns the negated
/// squared distance; the other kinds end in the similarity MLP.
ad::Var similarity(ad::Tape& tape, ad::Var visual, ad::Var language, SimilarityKind kind, const Mlp& sim);

struct QueryEncoding {
  std::vector<ad::Var> per_modality;
};

/// Similarity of every candidate context for one base moment, per modality.
struct ContextScores {
  std::vector<ContextMoment> contexts;
  std::vector<std::vector<ad::Var>> per_modality;  // [modality][context]
};

struct MomentScore {
  ad::Var score;  // fused over modalities, differentiable
  ContextMoment chosen_context;
  std::size_t chosen_index = 0;
};

/// Builds scoring graphs on a tape, memoizing region embeddings per video so
/// latent maxima over many contexts reuse them.
class ScoreGraph {
 public:
  ScoreGraph(ad::Tape& tape, const ModelConfig& cfg, const ModelParams& params);

  ad::Tape& tape() const noexcept { return tape_; }
  const ModelConfig& config() const noexcept { return cfg_; }

  QueryEncoding encode(std::span<const int> tokens);

  ContextScores context_scores(const Video& video, const QueryEncoding& query, const Moment& base,
                               std::span<const ContextMoment> contexts);

  /// Max over the configured context set per modality, maxima fused. With
  /// `fixed`, the set is replaced by that single context.
  MomentScore score(const Video& video, const QueryEncoding& query, const Moment& base,
                    const ContextMoment* fixed = nullptr);

  /// Fusion weights for the model's modalities.
  std::vector<double> fusion_weights() const;

  /// Number of latent maxima taken so far (contexts sets larger than one).
  std::size_t latent_max_count() const noexcept { return latent_max_count_; }

 private:
  using RegionKey = std::tuple<const Video*, std::size_t, bool, int, int, int, int>;
  ad::Var base_embedding_cached(const Video& v, std::size_t m, const Moment& base);
  ad::Var context_embedding_cached(const Video& v, std::size_t m, const ContextMoment& ctx);
  ad::Var pair_similarity(const Video& v, std::size_t m, const QueryEncoding& q, const Moment& base,
                          const ContextMoment& ctx);

  ad::Tape& tape_;
  const ModelConfig& cfg_;
  const ModelParams& params_;
  std::map<RegionKey, ad::Var> base_cache_;
  std::map<RegionKey, ad::Var> context_cache_;
  std::size_t latent_max_count_ = 0;
};

/// Result of scoring one (video, query, base moment) triple.
struct ScoredMoment {
  Moment moment;
  double score = 0;
  ContextMoment chosen_context;
};

ScoredMoment score(const Video& video, std::span<const int> query_tokens, const Moment& base, const ModelConfig& cfg,
                   const ModelParams& params, const std::optional<ContextMoment>& gt_context = std::nullopt);

/// Hinge terms max(0, margin + s_neg - s_pos) averaged within each negative
/// class, class means summed.
ad::Var ranking_loss(ad::Var positive, std::span<const ad::Var> intra, std::span<const ad::Var> inter, double margin);

/// alpha_c * mean softplus(-s_pos) + alpha_w * mean softplus(s_neg).
ad::Var tall_loss(std::span<const ad::Var> positives, std::span<const ad::Var> negatives, double alpha_c,
                  double alpha_w);

/// Configuration, weights and vocabulary of a trained or initialized model.
struct Model {
  ModelConfig config;
  ModelParams params;
  Vocabulary vocab;

  std::vector<int> encode_tokens(std::span<const std::string> tokens) const { return vocab.encode(tokens); }

  /// Writes model.cfg, checkpoint.bin and vocab.txt into `dir`.
  void save(const std::filesystem::path& dir) const;
  /// Accepts a model directory or the checkpoint file inside one.
  static Model load(const std::filesystem::path& path);
};

}  // namespace mllc
