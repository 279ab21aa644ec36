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

#include "mllc/model.hpp"

#include "mllc/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

namespace mllc {

std::string_view to_string(SimilarityKind k) {
  switch (k) {
    case SimilarityKind::distance: return "distance";
    case SimilarityKind::mult: return "mult";
    case SimilarityKind::normalized_mult: return "normalized_mult";
    case SimilarityKind::tall_sim: return "tall_sim";
  }
  return "?";
}

std::string_view to_string(LossKind k) { return k == LossKind::ranking ? "ranking" : "tall"; }
std::string_view to_string(Supervision s) { return s == Supervision::weak ? "weak" : "strong"; }

SimilarityKind parse_similarity(std::string_view s) {
  if (s == "distance") return SimilarityKind::distance;
  if (s == "mult") return SimilarityKind::mult;
  if (s == "normalized_mult") return SimilarityKind::normalized_mult;
  if (s == "tall_sim") return SimilarityKind::tall_sim;
  throw ConfigError("unknown similarity '" + std::string(s) + "'");
}

LossKind parse_loss(std::string_view s) {
  if (s == "ranking") return LossKind::ranking;
  if (s == "tall") return LossKind::tall;
  throw ConfigError("unknown loss '" + std::string(s) + "'");
}

Supervision parse_supervision(std::string_view s) {
  if (s == "weak") return Supervision::weak;
  if (s == "strong") return Supervision::strong;
  throw ConfigError("unknown context supervision '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Config

void ModelConfig::validate() const {
  auto positive = [](const char* key, int v) {
    if (v <= 0) throw ConfigError(std::string(key) + " must be positive, got " + std::to_string(v));
  };
  positive("visual_hidden", visual_hidden);
  positive("visual_dim", visual_dim);
  positive("embed_dim", embed_dim);
  positive("lstm_hidden", lstm_hidden);
  positive("joint_dim", joint_dim);
  positive("sim_hidden", sim_hidden);
  if (!(fusion_lambda >= 0.0 && fusion_lambda <= 1.0))
    throw ConfigError("fusion_lambda must lie in [0, 1], got " + format_real(fusion_lambda));
  if (!(margin > 0.0)) throw ConfigError("margin must be positive, got " + format_real(margin));
  if (!(alpha_c >= 0.0) || !(alpha_w >= 0.0) || alpha_c + alpha_w == 0.0)
    throw ConfigError("alpha_c and alpha_w must be non-negative and not both zero");
  if (context_supervision == Supervision::strong && context_mode != ContextMode::latent)
    throw ConfigError("strong context supervision needs context_mode = latent, got " +
                      std::string(to_string(context_mode)));
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
  ModelConfig c;
  for (const auto& [key, value] : kv.entries()) {
    if (key == "tef_mode") c.tef_mode = parse_tef_mode(value);
    else if (key == "similarity") c.similarity = parse_similarity(value);
    else if (key == "context_mode") c.context_mode = parse_context_mode(value);
    else if (key == "loss") c.loss = parse_loss(value);
    else if (key == "context_supervision") c.context_supervision = parse_supervision(value);
    else if (key == "fusion_lambda") c.fusion_lambda = parse_real(key, value);
    else if (key == "visual_hidden") c.visual_hidden = parse_int(key, value);
    else if (key == "visual_dim") c.visual_dim = parse_int(key, value);
    else if (key == "embed_dim") c.embed_dim = parse_int(key, value);
    else if (key == "lstm_hidden") c.lstm_hidden = parse_int(key, value);
    else if (key == "joint_dim") c.joint_dim = parse_int(key, value);
    else if (key == "sim_hidden") c.sim_hidden = parse_int(key, value);
    else if (key == "margin") c.margin = parse_real(key, value);
    else if (key == "alpha_c") c.alpha_c = parse_real(key, value);
    else if (key == "alpha_w") c.alpha_w = parse_real(key, value);
    else if (key == "seed") c.seed = parse_u64(key, value);
    else if (key == "embedding_file") c.embedding_file = value;
    else if (key == "embedding_trainable") c.embedding_trainable = parse_bool(key, value);
    else throw ConfigError(kv.source() + ": unknown model key '" + key + "'");
  }
  c.validate();
  return c;
}

KeyValues ModelConfig::to_key_values() const {
  KeyValues kv;
  kv.set("tef_mode", std::string(to_string(tef_mode)));
  kv.set("similarity", std::string(to_string(similarity)));
  kv.set("context_mode", std::string(to_string(context_mode)));
  kv.set("loss", std::string(to_string(loss)));
  kv.set("context_supervision", std::string(to_string(context_supervision)));
  kv.set("fusion_lambda", format_real(fusion_lambda));
  kv.set("visual_hidden", std::to_string(visual_hidden));
  kv.set("visual_dim", std::to_string(visual_dim));
  kv.set("embed_dim", std::to_string(embed_dim));
  kv.set("lstm_hidden", std::to_string(lstm_hidden));
  kv.set("joint_dim", std::to_string(joint_dim));
  kv.set("sim_hidden", std::to_string(sim_hidden));
  kv.set("margin", format_real(margin));
  kv.set("alpha_c", format_real(alpha_c));
  kv.set("alpha_w", format_real(alpha_w));
  kv.set("seed", std::to_string(seed));
  if (!embedding_file.empty()) kv.set("embedding_file", embedding_file);
  kv.set("embedding_trainable", embedding_trainable ? "true" : "false");
  return kv;
}

int context_slots(ContextMode mode) { return mode == ContextMode::before_after ? 2 : 1; }

// ---------------------------------------------------------------------------
// Parameters

namespace {

Dense make_dense(const std::string& name, int in, int out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix w(out, in);
  for (Index r = 0; r < w.rows(); ++r)
    for (Index c = 0; c < w.cols(); ++c) w(r, c) = u(rng);
  return {ad::Parameter(name + ".weight", Tensor::matrix(std::move(w))),
          ad::Parameter(name + ".bias", Tensor::vector(Vector::Zero(out)))};
}

int similarity_input(const ModelConfig& cfg) {
  return cfg.similarity == SimilarityKind::tall_sim ? 4 * cfg.joint_dim : cfg.joint_dim;
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, const ModelShape& shape, std::mt19937_64& rng) {
  cfg.validate();
  if (shape.modalities.empty()) throw ConfigError("a model needs at least one modality");
  if (shape.modalities.size() > 2) throw ConfigError("at most two modalities can be fused");
  if (shape.feature_dims.size() != shape.modalities.size())
    throw DimensionError("one feature width per modality expected");
  std::set<Modality> seen(shape.modalities.begin(), shape.modalities.end());
  if (seen.size() != shape.modalities.size()) throw ConfigError("duplicate modality");

  ModelParams params;
  for (std::size_t i = 0; i < shape.modalities.size(); ++i) {
    const std::string prefix(to_string(shape.modalities[i]));
    EncoderDims d;
    d.feature_dim = shape.feature_dims[i];
    d.context_slots = context_slots(cfg.context_mode);
    d.visual_hidden = cfg.visual_hidden;
    d.visual_dim = cfg.visual_dim;
    d.tef_mode = cfg.tef_mode;
    d.vocab_size = shape.vocab_size;
    d.embed_dim = cfg.embed_dim;
    d.lstm_hidden = cfg.lstm_hidden;
    d.joint_dim = cfg.joint_dim;

    ModalityModel m;
    m.modality = shape.modalities[i];
    m.encoder = init_encoder(prefix, d, rng);
    m.encoder.embedding_trainable = cfg.embedding_trainable;
    if (cfg.similarity != SimilarityKind::distance) {
      m.similarity.hidden = make_dense(prefix + ".similarity.hidden", similarity_input(cfg), cfg.sim_hidden, rng);
      m.similarity.output = make_dense(prefix + ".similarity.output", cfg.sim_hidden, 1, rng);
    }
    params.modalities.push_back(std::move(m));
  }
  return params;
}

ModelShape shape_of(const ModelParams& params) {
  ModelShape s;
  for (const auto& m : params.modalities) {
    s.modalities.push_back(m.modality);
    s.feature_dims.push_back(static_cast<int>(m.encoder.base_mlp.hidden.weight.value.cols()));
    s.vocab_size = static_cast<int>(m.encoder.embedding.value.rows());
  }
  return s;
}

std::vector<NamedTensor> to_named_tensors(const ModelParams& params) {
  std::vector<NamedTensor> out;
  visit_parameters(params, [&](const ad::Parameter& p) { out.push_back({p.name, p.value}); });
  return out;
}

ModelParams from_named_tensors(const ModelConfig& cfg, std::span<const NamedTensor> tensors) {
  std::unordered_map<std::string, const Tensor*> by_name;
  ModelShape shape;
  for (const auto& t : tensors) {
    if (!by_name.emplace(t.name, &t.tensor).second)
      throw IntegrityError("checkpoint holds tensor '" + t.name + "' twice");
    const auto dot = t.name.find('.');
    if (dot == std::string::npos) throw IntegrityError("checkpoint tensor '" + t.name + "' has no modality prefix");
    const Modality m = parse_modality(t.name.substr(0, dot));
    if (std::find(shape.modalities.begin(), shape.modalities.end(), m) == shape.modalities.end()) {
      shape.modalities.push_back(m);
      shape.feature_dims.push_back(0);
    }
  }
  for (std::size_t i = 0; i < shape.modalities.size(); ++i) {
    const std::string prefix(to_string(shape.modalities[i]));
    auto find = [&](const std::string& suffix) -> const Tensor& {
      auto it = by_name.find(prefix + suffix);
      if (it == by_name.end()) throw IntegrityError("checkpoint lacks tensor '" + prefix + suffix + "'");
      return *it->second;
    };
    shape.feature_dims[i] = static_cast<int>(find(".visual.base.hidden.weight").cols());
    shape.vocab_size = static_cast<int>(find(".language.embedding").rows());
  }
  std::mt19937_64 rng(cfg.seed);
  ModelParams params = init_params(cfg, shape, rng);
  std::size_t matched = 0;
  visit_parameters(params, [&](ad::Parameter& p) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw IntegrityError("checkpoint lacks tensor '" + p.name + "'");
    if (!it->second->same_shape(p.value))
      throw IntegrityError("checkpoint tensor '" + p.name + "' has the wrong shape for this configuration");
    p.value = *it->second;
    p.grad = Tensor::zeros_like(p.value);
    ++matched;
  });
  if (matched != tensors.size()) throw IntegrityError("checkpoint holds tensors this configuration does not use");
  return params;
}

std::vector<ad::Parameter*> trainable_parameters(ModelParams& params) {
  std::vector<ad::Parameter*> out;
  for (auto& m : params.modalities) {
    auto push = [&](ad::Parameter& p) {
      if (&p == &m.encoder.embedding && !m.encoder.embedding_trainable) return;
      out.push_back(&p);
    };
    visit_encoder(m.encoder, push);
    if (!m.similarity.hidden.weight.name.empty()) {
      push(m.similarity.hidden.weight), push(m.similarity.hidden.bias);
      push(m.similarity.output.weight), push(m.similarity.output.bias);
    }
  }
  return out;
}

void accumulate_gradients(const ad::Tape& tape, ModelParams& params, double weight) {
  std::unordered_map<const ad::Parameter*, ad::Parameter*> lookup;
  visit_parameters(params, [&](ad::Parameter& p) { lookup.emplace(&p, &p); });
  tape.for_each_parameter_gradient([&](const ad::Parameter& p, const Tensor& g) {
    auto it = lookup.find(&p);
    if (it == lookup.end()) return;
    it->second->grad.mat() += weight * g.mat();
  });
}

void sgd_step(ModelParams& params, double lr) {
  auto trainable = trainable_parameters(params);
  ad::sgd_step(trainable, lr);
  visit_parameters(params, [](ad::Parameter& p) { p.zero_grad(); });
}

// ---------------------------------------------------------------------------
// Scoring

ad::Var similarity(ad::Tape& tape, ad::Var visual, ad::Var language, SimilarityKind kind, const Mlp& sim) {
  if (visual.size() != language.size())
    throw DimensionError("similarity: visual width " + std::to_string(visual.size()) + " differs from language width " +
                         std::to_string(language.size()));
  switch (kind) {
    case SimilarityKind::distance:
      return -ad::squared_distance(visual, language);
    case SimilarityKind::mult:
      return ad::sum(mlp(tape, sim, ad::hadamard(visual, language)));
    case SimilarityKind::normalized_mult:
      return ad::sum(mlp(tape, sim, ad::hadamard(ad::l2_normalize(visual), ad::l2_normalize(language))));
    case SimilarityKind::tall_sim:
      return ad::sum(mlp(tape, sim, ad::concat({visual, language, ad::hadamard(visual, language), visual + language})));
  }
  throw ArgumentError("similarity: unknown kind");
}

ScoreGraph::ScoreGraph(ad::Tape& tape, const ModelConfig& cfg, const ModelParams& params)
    : tape_(tape), cfg_(cfg), params_(params) {
  if (params.modalities.empty()) throw ConfigError("model has no modalities");
}

QueryEncoding ScoreGraph::encode(std::span<const int> tokens) {
  QueryEncoding q;
  for (const auto& m : params_.modalities) q.per_modality.push_back(encode_query(tape_, tokens, m.encoder));
  return q;
}

std::vector<double> ScoreGraph::fusion_weights() const {
  if (params_.modalities.size() == 1) return {1.0};
  return {cfg_.fusion_lambda, 1.0 - cfg_.fusion_lambda};
}

namespace {

const SegmentFeatureTable& table_for(const Video& v, std::size_t m, std::size_t n_modalities) {
  if (v.tables.size() != n_modalities)
    throw DimensionError("video '" + v.id + "' has " + std::to_string(v.tables.size()) + " feature tables, model has " +
                         std::to_string(n_modalities) + " modalities");
  return v.tables[m];
}

int or_missing(const std::optional<Moment>& m, bool start) { return m ? (start ? m->start : m->end) : -1; }

ad::Var fuse(const std::vector<ad::Var>& maxima, double lambda) {
  if (maxima.size() == 1) return maxima[0];
  return late_fusion(maxima[0], maxima[1], lambda);
}

}  // namespace

ad::Var ScoreGraph::base_embedding_cached(const Video& v, std::size_t m, const Moment& base) {
  const RegionKey key{&v, m, false, base.start, base.end, -1, -1};
  if (auto it = base_cache_.find(key); it != base_cache_.end()) return it->second;
  ad::Var e = base_embedding(tape_, table_for(v, m, params_.modalities.size()), base, params_.modalities[m].encoder);
  base_cache_.emplace(key, e);
  return e;
}

ad::Var ScoreGraph::context_embedding_cached(const Video& v, std::size_t m, const ContextMoment& ctx) {
  const RegionKey key{&v,
                      m,
                      ctx.is_split(),
                      or_missing(ctx.slot(0), true),
                      or_missing(ctx.slot(0), false),
                      ctx.is_split() ? or_missing(ctx.slot(1), true) : -1,
                      ctx.is_split() ? or_missing(ctx.slot(1), false) : -1};
  if (auto it = context_cache_.find(key); it != context_cache_.end()) return it->second;
  ad::Var e = context_embedding(tape_, table_for(v, m, params_.modalities.size()), ctx, params_.modalities[m].encoder);
  context_cache_.emplace(key, e);
  return e;
}

ad::Var ScoreGraph::pair_similarity(const Video& v, std::size_t m, const QueryEncoding& q, const Moment& base,
                                    const ContextMoment& ctx) {
  const ModalityModel& mm = params_.modalities[m];
  ad::Var fv = assemble_visual_feature(tape_, base_embedding_cached(v, m, base), context_embedding_cached(v, m, ctx),
                                       base, ctx, cfg_.tef_mode, v.n_segments);
  return similarity(tape_, project_visual(tape_, fv, mm.encoder), q.per_modality.at(m), cfg_.similarity,
                    mm.similarity);
}

ContextScores ScoreGraph::context_scores(const Video& video, const QueryEncoding& query, const Moment& base,
                                         std::span<const ContextMoment> contexts) {
  if (contexts.empty()) throw ArgumentError("context_scores: empty context set");
  if (query.per_modality.size() != params_.modalities.size())
    throw DimensionError("query encoding does not match the model's modalities");
  ContextScores cs;
  cs.contexts.assign(contexts.begin(), contexts.end());
  cs.per_modality.resize(params_.modalities.size());
  for (std::size_t m = 0; m < params_.modalities.size(); ++m)
    for (const auto& ctx : contexts) cs.per_modality[m].push_back(pair_similarity(video, m, query, base, ctx));
  return cs;
}

MomentScore ScoreGraph::score(const Video& video, const QueryEncoding& query, const Moment& base,
                              const ContextMoment* fixed) {
  if (!base.valid_for(video.n_segments))
    throw ArgumentError("score: base " + to_string(base) + " invalid for video '" + video.id + "'");
  std::vector<ContextMoment> contexts;
  if (fixed) {
    if (fixed->slot_count() != context_slots(cfg_.context_mode))
      throw ArgumentError("score: context layout " + to_string(*fixed) + " does not fit context mode " +
                          std::string(to_string(cfg_.context_mode)));
    if (!fixed->valid_for(video.n_segments))
      throw ArgumentError("score: context " + to_string(*fixed) + " invalid for video '" + video.id + "'");
    contexts.push_back(*fixed);
  } else {
    contexts = context_set(cfg_.context_mode, base, video.n_segments);
  }
  if (contexts.size() > 1) ++latent_max_count_;

  ContextScores cs = context_scores(video, query, base, contexts);
  const auto weights = fusion_weights();
  std::vector<ad::Var> maxima;
  for (const auto& per_ctx : cs.per_modality) maxima.push_back(ad::max_select(per_ctx).value);

  std::size_t best = 0;
  double best_value = 0;
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    const double v = weights.size() == 1
                         ? cs.per_modality[0][c].item()
                         : late_fusion(cs.per_modality[0][c].item(), cs.per_modality[1][c].item(), cfg_.fusion_lambda);
    if (c == 0 || v > best_value) best = c, best_value = v;
  }
  return {fuse(maxima, cfg_.fusion_lambda), contexts[best], best};
}

ScoredMoment score(const Video& video, std::span<const int> query_tokens, const Moment& base, const ModelConfig& cfg,
                   const ModelParams& params, const std::optional<ContextMoment>& gt_context) {
  ad::Tape tape;
  ScoreGraph graph(tape, cfg, params);
  const QueryEncoding q = graph.encode(query_tokens);
  const MomentScore s = graph.score(video, q, base, gt_context ? &*gt_context : nullptr);
  return {base, s.score.item(), s.chosen_context};
}

ad::Var ranking_loss(ad::Var positive, std::span<const ad::Var> intra, std::span<const ad::Var> inter, double margin) {
  if (intra.empty() && inter.empty()) throw ArgumentError("ranking_loss: no negatives");
  ad::Tape& tape = positive.tape();
  const ad::Var m = tape.constant(margin);
  auto class_mean = [&](std::span<const ad::Var> negs) {
    std::vector<ad::Var> hinges;
    for (const auto& n : negs) hinges.push_back(ad::relu(n + m - positive));
    return ad::mean(hinges);
  };
  if (intra.empty()) return class_mean(inter);
  if (inter.empty()) return class_mean(intra);
  return class_mean(intra) + class_mean(inter);
}

ad::Var tall_loss(std::span<const ad::Var> positives, std::span<const ad::Var> negatives, double alpha_c,
                  double alpha_w) {
  if (positives.empty()) throw ArgumentError("tall_loss: no positives");
  std::vector<ad::Var> pos_terms;
  for (const auto& p : positives) pos_terms.push_back(ad::softplus(-p));
  ad::Var loss = alpha_c * ad::mean(pos_terms);
  if (negatives.empty()) return loss;
  std::vector<ad::Var> neg_terms;
  for (const auto& n : negatives) neg_terms.push_back(ad::softplus(n));
  return loss + alpha_w * ad::mean(neg_terms);
}

// ---------------------------------------------------------------------------
// Persistence

void Model::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "model.cfg", std::ios::trunc);
    if (!out) throw Error("cannot write " + (dir / "model.cfg").string());
    out << config.to_text();
  }
  write_checkpoint(dir / "checkpoint.bin", to_named_tensors(params));
  vocab.save(dir / "vocab.txt");
}

Model Model::load(const std::filesystem::path& path) {
  const auto dir = std::filesystem::is_directory(path) ? path : path.parent_path();
  const auto ckpt = std::filesystem::is_directory(path) ? dir / "checkpoint.bin" : path;
  Model m;
  m.config = ModelConfig::load(dir / "model.cfg");
  m.params = from_named_tensors(m.config, read_checkpoint(ckpt));
  m.vocab = Vocabulary::load(dir / "vocab.txt");
  if (shape_of(m.params).vocab_size != m.vocab.size())
    throw IntegrityError("vocabulary has " + std::to_string(m.vocab.size()) + " tokens, checkpoint embeds " +
                         std::to_string(shape_of(m.params).vocab_size));
  return m;
}

}  // namespace mllc
