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

#include "mllc/trainer.hpp"

#include "mllc/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mllc {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (!(lr0 > 0)) throw ConfigError("lr0 must be positive");
  if (lr_decay_every < 1) throw ConfigError("lr_decay_every must be positive");
  if (!(lr_decay_factor > 0 && lr_decay_factor < 1)) throw ConfigError("lr_decay_factor must lie in (0, 1)");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (intra_negatives < 0 || inter_negatives < 0) throw ConfigError("negative counts must be non-negative");
  if (intra_negatives + inter_negatives == 0) throw ConfigError("at least one negative per positive is needed");
  if (!(mix_ratio >= 0) || !std::isfinite(mix_ratio)) throw ConfigError("mix_ratio must be non-negative");
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  TrainConfig c;
  for (const auto& [key, value] : kv.entries()) {
    if (key == "epochs") c.epochs = parse_int(key, value);
    else if (key == "lr0") c.lr0 = parse_real(key, value);
    else if (key == "lr_decay_every") c.lr_decay_every = parse_int(key, value);
    else if (key == "lr_decay_factor") c.lr_decay_factor = parse_real(key, value);
    else if (key == "batch_size") c.batch_size = parse_int(key, value);
    else if (key == "intra_negatives") c.intra_negatives = parse_int(key, value);
    else if (key == "inter_negatives") c.inter_negatives = parse_int(key, value);
    else if (key == "mix_ratio") c.mix_ratio = parse_real(key, value);
    else if (key == "seed") c.seed = parse_u64(key, value);
    else throw ConfigError(kv.source() + ": unknown training key '" + key + "'");
  }
  c.validate();
  return c;
}

KeyValues TrainConfig::to_key_values() const {
  KeyValues kv;
  kv.set("epochs", std::to_string(epochs));
  kv.set("lr0", format_real(lr0));
  kv.set("lr_decay_every", std::to_string(lr_decay_every));
  kv.set("lr_decay_factor", format_real(lr_decay_factor));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("intra_negatives", std::to_string(intra_negatives));
  kv.set("inter_negatives", std::to_string(inter_negatives));
  kv.set("mix_ratio", format_real(mix_ratio));
  kv.set("seed", std::to_string(seed));
  return kv;
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw ArgumentError("lr_at: negative epoch");
  return cfg.lr0 * std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_every);
}

std::vector<TrainingExample> make_examples(const Corpus& corpus, std::span<const TemporalQuery> queries,
                                           const Vocabulary& vocab) {
  std::vector<TrainingExample> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    TrainingExample e;
    e.video = corpus.video_index(q.video_id);
    e.tokens = vocab.encode(q.tokens);
    e.base = q.base;
    e.context = q.context;
    e.word = q.word;
    if (e.tokens.empty()) throw IntegrityError("query '" + q.id + "' has no tokens");
    if (!e.base.valid_for(corpus.videos[e.video].n_segments))
      throw IntegrityError("query '" + q.id + "' moment out of range");
    out.push_back(std::move(e));
  }
  return out;
}

namespace {

std::size_t uniform_index(std::size_t n, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// First k entries of a partial Fisher-Yates shuffle.
template <class T>
std::vector<T> draw_without_replacement(std::vector<T> pool, std::size_t k, std::mt19937_64& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + uniform_index(pool.size() - i, rng)]);
  pool.resize(k);
  return pool;
}

}  // namespace

Negatives sample_negatives(const TrainingExample& example, const Corpus& corpus, int n_intra, int n_inter,
                           std::mt19937_64& rng, const ContextMoment* fixed_context) {
  if (corpus.videos.size() < 2) throw ArgumentError("sample_negatives: corpus needs at least two videos");
  Negatives out;
  const Video& video = corpus.videos.at(example.video);
  std::vector<Moment> others;
  for (const Moment& m : enumerate_moments(video.n_segments))
    if (m != example.base) others.push_back(m);
  out.intra = draw_without_replacement(std::move(others), static_cast<std::size_t>(std::max(n_intra, 0)), rng);

  // Rejection sampling over other videos; falls back to an explicit list
  // when most videos are too short.
  auto fits = [&](std::size_t v) {
    if (v == example.video) return false;
    const int n = corpus.videos[v].n_segments;
    return example.base.valid_for(n) && (!fixed_context || fixed_context->valid_for(n));
  };
  for (int k = 0; k < n_inter; ++k) {
    std::optional<std::size_t> chosen;
    for (int attempt = 0; attempt < 32 && !chosen; ++attempt) {
      const std::size_t v = uniform_index(corpus.videos.size(), rng);
      if (fits(v)) chosen = v;
    }
    if (!chosen) {
      std::vector<std::size_t> ok;
      for (std::size_t v = 0; v < corpus.videos.size(); ++v)
        if (fits(v)) ok.push_back(v);
      if (ok.empty()) break;
      chosen = ok[uniform_index(ok.size(), rng)];
    }
    out.inter.emplace_back(*chosen, example.base);
  }
  return out;
}

bool uses_fixed_context(const ModelConfig& cfg, const TrainingExample& example) {
  return cfg.context_supervision == Supervision::strong && example.context.has_value() &&
         example.word != TemporalWord::none;
}

ad::Var example_loss(ScoreGraph& graph, const Corpus& corpus, const TrainingExample& example,
                     const Negatives& negatives) {
  const ModelConfig& cfg = graph.config();
  const ContextMoment* fixed = uses_fixed_context(cfg, example) ? &*example.context : nullptr;
  const Video& video = corpus.videos.at(example.video);
  const QueryEncoding q = graph.encode(example.tokens);
  const ad::Var pos = graph.score(video, q, example.base, fixed).score;
  std::vector<ad::Var> intra, inter;
  for (const Moment& m : negatives.intra) intra.push_back(graph.score(video, q, m, fixed).score);
  if (cfg.loss == LossKind::tall) {
    const ad::Var p[1] = {pos};
    return tall_loss(p, intra, cfg.alpha_c, cfg.alpha_w);
  }
  for (const auto& [v, m] : negatives.inter) inter.push_back(graph.score(corpus.videos.at(v), q, m, fixed).score);
  return ranking_loss(pos, intra, inter, cfg.margin);
}

Model init_model(const Corpus& corpus, const ModelConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<std::string>> token_lists;
  for (const auto& q : corpus.train) token_lists.push_back(q.tokens);
  Model m;
  m.config = cfg;
  m.vocab = Vocabulary::build(token_lists);
  ModelShape shape;
  for (const auto& [modality, dim] : corpus.feature_dims()) {
    shape.modalities.push_back(modality);
    shape.feature_dims.push_back(dim);
  }
  shape.vocab_size = m.vocab.size();
  std::mt19937_64 rng(cfg.seed);
  m.params = init_params(cfg, shape, rng);
  if (!cfg.embedding_file.empty()) {
    const EmbeddingTable table = load_embedding_file(cfg.embedding_file);
    for (auto& mm : m.params.modalities) load_pretrained_embeddings(mm.encoder, m.vocab, table);
  }
  return m;
}

std::vector<std::size_t> epoch_order(std::span<const TrainingExample> examples, const TrainConfig& cfg, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x6f72u};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> simple, temporal, order;
  for (std::size_t i = 0; i < examples.size(); ++i)
    (examples[i].word == TemporalWord::none ? simple : temporal).push_back(i);
  auto shuffle = [&](std::vector<std::size_t>& v) {
    for (std::size_t i = 0; i + 1 < v.size(); ++i) std::swap(v[i], v[i + uniform_index(v.size() - i, rng)]);
  };
  if (cfg.mix_ratio <= 0 || simple.empty() || temporal.empty()) {
    order.resize(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  } else {
    const std::size_t total = examples.size();
    const auto n_simple = static_cast<std::size_t>(std::llround(total * cfg.mix_ratio / (1.0 + cfg.mix_ratio)));
    auto cyclic = [&](std::vector<std::size_t> pool, std::size_t count) {
      std::vector<std::size_t> out;
      while (out.size() < count) {
        shuffle(pool);
        out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(std::min(pool.size(), count - out.size())));
      }
      return out;
    };
    order = cyclic(simple, n_simple);
    const auto t = cyclic(temporal, total - n_simple);
    order.insert(order.end(), t.begin(), t.end());
  }
  shuffle(order);
  return order;
}

void train(const Corpus& corpus, Model& model, const TrainConfig& cfg, std::vector<EpochRecord>& history,
           const EpochCallback& on_epoch) {
  cfg.validate();
  model.config.validate();
  const auto examples = make_examples(corpus, corpus.train, model.vocab);
  if (examples.empty()) throw ArgumentError("train: corpus has no training queries");
  if (model.config.context_supervision == Supervision::strong)
    for (const auto& e : examples)
      if (e.word != TemporalWord::none && !e.context)
        throw ConfigError("strong context supervision needs a ground-truth context on every temporal query");

  for (int epoch = static_cast<int>(history.size()); epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    const auto order = epoch_order(examples, cfg, epoch);
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(epoch), 0x6e67u};
    std::mt19937_64 rng(seq);
    const int n_inter = model.config.loss == LossKind::tall ? 0 : cfg.inter_negatives;
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double weight = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const TrainingExample& ex = examples[order[i]];
        const ContextMoment* fixed = uses_fixed_context(model.config, ex) ? &*ex.context : nullptr;
        const Negatives negs = sample_negatives(ex, corpus, cfg.intra_negatives, n_inter, rng, fixed);
        ad::Tape tape;
        ScoreGraph graph(tape, model.config, model.params);
        const ad::Var loss = example_loss(graph, corpus, ex, negs);
        loss_sum += loss.item();
        tape.backward(loss);
        accumulate_gradients(tape, model.params, weight);
      }
      sgd_step(model.params, lr);
    }
    history.push_back({epoch, loss_sum / static_cast<double>(order.size()), lr});
    if (on_epoch) on_epoch(history.back());
  }
}

TrainOutcome train(const Corpus& corpus, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                   const EpochCallback& on_epoch) {
  TrainOutcome out{init_model(corpus, model_cfg), {}};
  train(corpus, out.model, train_cfg, out.history, on_epoch);
  return out;
}

void write_history(const std::filesystem::path& path, std::span<const EpochRecord> history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,mean_loss,lr\n";
  for (const auto& r : history) out << r.epoch << ',' << format_real(r.mean_loss) << ',' << format_real(r.lr) << '\n';
}

std::vector<EpochRecord> read_history(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<EpochRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != "epoch,mean_loss,lr") throw ParseError(path.string(), 1, "expected header 'epoch,mean_loss,lr'");
      continue;
    }
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c))
      throw ParseError(path.string(), lineno, "expected three comma-separated fields");
    EpochRecord r;
    try {
      r.epoch = parse_int("epoch", a);
      r.mean_loss = parse_real("mean_loss", b);
      r.lr = parse_real("lr", c);
    } catch (const ConfigError& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
    if (r.epoch != static_cast<int>(out.size())) throw ParseError(path.string(), lineno, "epochs out of sequence");
    out.push_back(r);
  }
  return out;
}

}  // namespace mllc
