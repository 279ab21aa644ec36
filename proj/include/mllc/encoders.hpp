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
#include "mllc/error.hpp"
#include "mllc/temporal.hpp"
#include "mllc/tensor.hpp"

#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mllc {

enum class Modality { rgb, flow, symbolic };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view s);

/// Per-segment features of one video in one modality (n_segments x d).
struct SegmentFeatureTable {
  std::string video_id;
  Modality modality = Modality::rgb;
  Matrix features;

  int n_segments() const noexcept { return static_cast<int>(features.rows()); }
  int dim() const noexcept { return static_cast<int>(features.cols()); }
};

/// Mean of the rows covered by `m`.
template <class Derived>
Vector pool(const Eigen::MatrixBase<Derived>& features, const Moment& m) {
  if (!m.valid_for(static_cast<int>(features.rows())))
    throw ArgumentError("pool: region " + to_string(m) + " out of range for " + std::to_string(features.rows()) +
                        " segments");
  return features.middleRows(m.start, m.length()).colwise().mean().transpose();
}

/// Per-slot means concatenated in slot order; an absent slot contributes zeros.
template <class Derived>
Vector pool(const Eigen::MatrixBase<Derived>& features, const ContextMoment& c) {
  const Index d = features.cols();
  Vector out = Vector::Zero(c.slot_count() * d);
  for (int i = 0; i < c.slot_count(); ++i)
    if (const auto& region = c.slot(i)) out.segment(i * d, d) = pool(features, *region);
  return out;
}

// ---------------------------------------------------------------------------
// Text

/// Lower-cased alphanumeric runs (apostrophes kept inside words).
std::vector<std::string> tokenize(std::string_view text);

/// Token to dense index map. Index 0 is the unknown token.
class Vocabulary {
 public:
  static constexpr int kUnknown = 0;
  static constexpr std::string_view kUnknownToken = "<unk>";

  Vocabulary();

  /// Sorted, de-duplicated vocabulary over the given sentences' tokens.
  static Vocabulary build(std::span<const std::vector<std::string>> token_lists);

  int add(const std::string& token);
  int index_of(std::string_view token) const;
  const std::string& token(int index) const { return tokens_.at(static_cast<std::size_t>(index)); }
  int size() const noexcept { return static_cast<int>(tokens_.size()); }
  std::vector<int> encode(std::span<const std::string> tokens) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Pretrained word vectors: one token per line followed by e reals.
struct EmbeddingTable {
  std::vector<std::string> tokens;
  Matrix vectors;  // |tokens| x e
};

EmbeddingTable load_embedding_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Parameters

struct Dense {
  ad::Parameter weight;  // out x in
  ad::Parameter bias;    // out
};

/// One relu hidden layer followed by a linear output layer.
struct Mlp {
  Dense hidden;
  Dense output;
};

struct LstmParams {
  ad::Parameter weight;  // 4H x (E + H); gate order input, forget, output, cell
  ad::Parameter bias;    // 4H
};

/// Per-modality weights owned by the visual and language encoders.
struct EncoderParams {
  Mlp base_mlp;
  Mlp context_mlp;
  Dense visual_projection;  // f_V -> joint space
  ad::Parameter embedding;  // |V| x E
  bool embedding_trainable = true;
  LstmParams lstm;
  Dense language_projection;  // H -> joint space
};

enum class TefMode { none, tef, contef };

std::string_view to_string(TefMode m);
TefMode parse_tef_mode(std::string_view s);

struct EncoderDims {
  int feature_dim = 0;
  int context_slots = 1;  // 2 for before/after contexts
  int visual_hidden = 128;
  int visual_dim = 64;
  TefMode tef_mode = TefMode::contef;
  int vocab_size = 1;
  int embed_dim = 32;
  int lstm_hidden = 64;
  int joint_dim = 64;
};

/// Length of the endpoint block appended to the pooled embeddings.
int endpoint_width(TefMode mode, int context_slots);
/// Length of f_V before projection: 2 * visual_dim + endpoint_width.
int visual_feature_width(const EncoderDims& dims);

/// Recurrent weights (and embeddings) uniform in [-0.08, 0.08]; MLP and
/// projection weights uniform in +-1/sqrt(fan_in); biases zero.
EncoderParams init_encoder(const std::string& prefix, const EncoderDims& dims, std::mt19937_64& rng);

/// Copies pretrained vectors into the embedding rows of matching tokens.
/// Returns the number of vocabulary tokens found in the table.
int load_pretrained_embeddings(EncoderParams& params, const Vocabulary& vocab, const EmbeddingTable& table);

/// Calls f(Parameter&) for every trainable tensor, in a fixed order.
template <class Params, class F>
void visit_encoder(Params& p, F&& f) {
  for (auto* mlp : {&p.base_mlp, &p.context_mlp}) {
    f(mlp->hidden.weight), f(mlp->hidden.bias), f(mlp->output.weight), f(mlp->output.bias);
  }
  f(p.visual_projection.weight), f(p.visual_projection.bias);
  f(p.embedding);
  f(p.lstm.weight), f(p.lstm.bias);
  f(p.language_projection.weight), f(p.language_projection.bias);
}

// ---------------------------------------------------------------------------
// Graph builders

ad::Var dense(ad::Tape& tape, const Dense& layer, ad::Var x);
ad::Var mlp(ad::Tape& tape, const Mlp& net, ad::Var x);

/// MLP embedding of the pooled base region.
ad::Var base_embedding(ad::Tape& tape, const SegmentFeatureTable& table, const Moment& base, const EncoderParams& p);
/// MLP embedding of the pooled (possibly two-slot) context.
ad::Var context_embedding(ad::Tape& tape, const SegmentFeatureTable& table, const ContextMoment& ctx,
                          const EncoderParams& p);

/// Endpoint block: empty (none), base TEF (tef), or base TEF followed by one
/// TEF per context slot with padded slots written as (-1, -1) (contef).
Vector endpoint_features(const Moment& base, const ContextMoment& ctx, TefMode mode, int n_segments);

/// concat(base_emb, ctx_emb, endpoint block) from already built embeddings.
ad::Var assemble_visual_feature(ad::Tape& tape, ad::Var base_emb, ad::Var ctx_emb, const Moment& base,
                                const ContextMoment& ctx, TefMode mode, int n_segments);

/// f_V = concat(MLP(pool(base)), MLP(pool(ctx)), endpoint block).
ad::Var visual_feature(ad::Tape& tape, const SegmentFeatureTable& table, const Moment& base, const ContextMoment& ctx,
                       TefMode mode, const EncoderParams& p);

/// Affine map of f_V into the joint video-language space.
ad::Var project_visual(ad::Tape& tape, ad::Var visual, const EncoderParams& p);

/// Single-layer LSTM over the token embeddings, final hidden state projected
/// into the joint space.
ad::Var encode_query(ad::Tape& tape, std::span<const int> tokens, const EncoderParams& p);

/// lambda * rgb + (1 - lambda) * flow.
double late_fusion(double score_rgb, double score_flow, double lambda);
ad::Var late_fusion(ad::Var score_rgb, ad::Var score_flow, double lambda);

// ---------------------------------------------------------------------------
// Feature files: repeated blocks of a `video_id n_segments d` header line
// followed by n_segments lines of d reals.

void write_feature_file(const std::filesystem::path& path, std::span<const SegmentFeatureTable> tables);
std::vector<SegmentFeatureTable> read_feature_file(const std::filesystem::path& path, Modality modality);

/// Shortest decimal text that reads back to the same double.
std::string format_real(double v);

}  // namespace mllc
