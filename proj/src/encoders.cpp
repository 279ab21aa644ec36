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

#include "mllc/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace mllc {

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::rgb: return "rgb";
    case Modality::flow: return "flow";
    case Modality::symbolic: return "symbolic";
  }
  return "?";
}

Modality parse_modality(std::string_view s) {
  if (s == "rgb") return Modality::rgb;
  if (s == "flow") return Modality::flow;
  if (s == "symbolic") return Modality::symbolic;
  throw ConfigError("unknown modality '" + std::string(s) + "'");
}

std::string_view to_string(TefMode m) {
  switch (m) {
    case TefMode::none: return "none";
    case TefMode::tef: return "tef";
    case TefMode::contef: return "contef";
  }
  return "?";
}

TefMode parse_tef_mode(std::string_view s) {
  if (s == "none") return TefMode::none;
  if (s == "tef") return TefMode::tef;
  if (s == "contef") return TefMode::contef;
  throw ConfigError("unknown tef mode '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Text

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    while (!cur.empty() && cur.back() == '\'') cur.pop_back();
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '\'' && !cur.empty()) {
      cur.push_back('\'');
    } else {
      flush();
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary() { add(std::string(kUnknownToken)); }

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> token_lists) {
  std::set<std::string> all;
  for (const auto& list : token_lists) all.insert(list.begin(), list.end());
  all.erase(std::string(kUnknownToken));
  Vocabulary v;
  for (const auto& t : all) v.add(t);
  return v;
}

int Vocabulary::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  const int id = size();
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocabulary::index_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnknown : it->second;
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(index_of(t));
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write vocabulary: " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary: " + path.string());
  Vocabulary v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != kUnknownToken) throw ParseError(path.string(), 1, "first vocabulary entry must be <unk>");
      continue;
    }
    if (line.empty()) throw ParseError(path.string(), lineno, "empty token");
    if (v.index_.count(line)) throw ParseError(path.string(), lineno, "duplicate token '" + line + "'");
    v.add(line);
  }
  return v;
}

namespace {

bool parse_double(std::string_view s, double& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

EmbeddingTable load_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embedding file: " + path.string());
  EmbeddingTable table;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() < 2) throw ParseError(path.string(), lineno, "expected a token followed by reals");
    if (dim == 0) dim = fields.size() - 1;
    if (fields.size() - 1 != dim)
      throw ParseError(path.string(), lineno,
                       "expected " + std::to_string(dim) + " reals, found " + std::to_string(fields.size() - 1));
    std::vector<double> row(dim);
    for (std::size_t k = 0; k < dim; ++k)
      if (!parse_double(fields[k + 1], row[k])) throw ParseError(path.string(), lineno, "malformed real");
    table.tokens.emplace_back(fields[0]);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path.string(), 0, "embedding file is empty");
  table.vectors.resize(static_cast<Index>(rows.size()), static_cast<Index>(dim));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < dim; ++c) table.vectors(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  return table;
}

// ---------------------------------------------------------------------------
// Parameters

int endpoint_width(TefMode mode, int context_slots) {
  switch (mode) {
    case TefMode::none: return 0;
    case TefMode::tef: return 2;
    case TefMode::contef: return 2 + 2 * context_slots;
  }
  return 0;
}

int visual_feature_width(const EncoderDims& d) { return 2 * d.visual_dim + endpoint_width(d.tef_mode, d.context_slots); }

namespace {

Matrix uniform(Index rows, Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = u(rng);
  return m;
}

Dense init_dense(const std::string& name, int in, int out, std::mt19937_64& rng) {
  if (in <= 0 || out <= 0) throw DimensionError("layer '" + name + "' needs positive dimensions");
  return {ad::Parameter(name + ".weight", Tensor::matrix(uniform(out, in, 1.0 / std::sqrt(double(in)), rng))),
          ad::Parameter(name + ".bias", Tensor::vector(Vector::Zero(out)))};
}

Mlp init_mlp(const std::string& name, int in, int hidden, int out, std::mt19937_64& rng) {
  Mlp m;
  m.hidden = init_dense(name + ".hidden", in, hidden, rng);
  m.output = init_dense(name + ".output", hidden, out, rng);
  return m;
}

constexpr double kRecurrentInit = 0.08;
// Keeps early tokens alive in the final state at the start of training.
constexpr double kForgetBias = 3.0;

}  // namespace

EncoderParams init_encoder(const std::string& prefix, const EncoderDims& d, std::mt19937_64& rng) {
  if (d.feature_dim <= 0 || d.vocab_size <= 0 || d.embed_dim <= 0 || d.lstm_hidden <= 0)
    throw DimensionError("encoder dimensions must be positive");
  if (d.context_slots != 1 && d.context_slots != 2) throw DimensionError("context slots must be 1 or 2");
  EncoderParams p;
  p.base_mlp = init_mlp(prefix + ".visual.base", d.feature_dim, d.visual_hidden, d.visual_dim, rng);
  p.context_mlp =
      init_mlp(prefix + ".visual.context", d.context_slots * d.feature_dim, d.visual_hidden, d.visual_dim, rng);
  p.visual_projection = init_dense(prefix + ".visual.projection", visual_feature_width(d), d.joint_dim, rng);
  p.embedding = ad::Parameter(prefix + ".language.embedding",
                              Tensor::matrix(uniform(d.vocab_size, d.embed_dim, kRecurrentInit, rng)));
  const int h = d.lstm_hidden;
  p.lstm.weight = ad::Parameter(prefix + ".language.lstm.weight",
                                Tensor::matrix(uniform(4 * h, d.embed_dim + h, kRecurrentInit, rng)));
  Matrix bias = uniform(4 * h, 1, kRecurrentInit, rng);
  bias.middleRows(h, h).array() += kForgetBias;
  p.lstm.bias = ad::Parameter(prefix + ".language.lstm.bias", Tensor::vector(bias.col(0)));
  p.language_projection = init_dense(prefix + ".language.projection", h, d.joint_dim, rng);
  return p;
}

int load_pretrained_embeddings(EncoderParams& p, const Vocabulary& vocab, const EmbeddingTable& table) {
  Matrix& e = p.embedding.value.mat();
  if (table.vectors.cols() != e.cols())
    throw DimensionError("pretrained embedding width " + std::to_string(table.vectors.cols()) +
                         " differs from configured embed_dim " + std::to_string(e.cols()));
  int found = 0;
  for (std::size_t r = 0; r < table.tokens.size(); ++r) {
    const int idx = vocab.index_of(table.tokens[r]);
    if (idx == Vocabulary::kUnknown) continue;
    e.row(idx) = table.vectors.row(static_cast<Index>(r));
    ++found;
  }
  return found;
}

// ---------------------------------------------------------------------------
// Graph builders

ad::Var dense(ad::Tape& tape, const Dense& layer, ad::Var x) {
  return ad::matmul(tape.parameter(layer.weight), x) + tape.parameter(layer.bias);
}

ad::Var mlp(ad::Tape& tape, const Mlp& net, ad::Var x) {
  return dense(tape, net.output, ad::relu(dense(tape, net.hidden, x)));
}

namespace {

void check_input(const Mlp& net, Index width, const char* what) {
  if (net.hidden.weight.value.cols() != width)
    throw DimensionError(std::string(what) + ": feature width " + std::to_string(width) + " differs from MLP input " +
                         std::to_string(net.hidden.weight.value.cols()));
}

}  // namespace

ad::Var base_embedding(ad::Tape& tape, const SegmentFeatureTable& table, const Moment& base, const EncoderParams& p) {
  check_input(p.base_mlp, table.dim(), "base embedding");
  return mlp(tape, p.base_mlp, tape.constant(Tensor::vector(pool(table.features, base))));
}

ad::Var context_embedding(ad::Tape& tape, const SegmentFeatureTable& table, const ContextMoment& ctx,
                          const EncoderParams& p) {
  check_input(p.context_mlp, Index{ctx.slot_count()} * table.dim(), "context embedding");
  return mlp(tape, p.context_mlp, tape.constant(Tensor::vector(pool(table.features, ctx))));
}

Vector endpoint_features(const Moment& base, const ContextMoment& ctx, TefMode mode, int n) {
  Vector out(endpoint_width(mode, ctx.slot_count()));
  if (mode == TefMode::none) return out;
  const Tef b = tef(base, n);
  out(0) = b.start_frac;
  out(1) = b.end_frac;
  if (mode == TefMode::contef) {
    for (int i = 0; i < ctx.slot_count(); ++i) {
      const Tef t = ctx.slot(i) ? tef(*ctx.slot(i), n) : kPaddedTef;
      out(2 + 2 * i) = t.start_frac;
      out(3 + 2 * i) = t.end_frac;
    }
  }
  return out;
}

ad::Var visual_feature(ad::Tape& tape, const SegmentFeatureTable& table, const Moment& base, const ContextMoment& ctx,
                       TefMode mode, const EncoderParams& p) {
  if (!ctx.valid_for(table.n_segments())) throw ArgumentError("visual_feature: context " + to_string(ctx) + " out of range");
  ad::Var b = base_embedding(tape, table, base, p);
  ad::Var c = context_embedding(tape, table, ctx, p);
  return assemble_visual_feature(tape, b, c, base, ctx, mode, table.n_segments());
}

ad::Var assemble_visual_feature(ad::Tape& tape, ad::Var base_emb, ad::Var ctx_emb, const Moment& base,
                                const ContextMoment& ctx, TefMode mode, int n_segments) {
  if (mode == TefMode::none) return ad::concat({base_emb, ctx_emb});
  return ad::concat({base_emb, ctx_emb, tape.constant(Tensor::vector(endpoint_features(base, ctx, mode, n_segments)))});
}

ad::Var project_visual(ad::Tape& tape, ad::Var visual, const EncoderParams& p) {
  if (p.visual_projection.weight.value.cols() != visual.size())
    throw DimensionError("visual feature width " + std::to_string(visual.size()) + " differs from projection input " +
                         std::to_string(p.visual_projection.weight.value.cols()));
  return dense(tape, p.visual_projection, visual);
}

ad::Var encode_query(ad::Tape& tape, std::span<const int> tokens, const EncoderParams& p) {
  if (tokens.empty()) throw ArgumentError("encode_query: empty query");
  const Index h = p.lstm.weight.value.rows() / 4;
  const Index vocab = p.embedding.value.rows();
  ad::Var embedding = tape.parameter(p.embedding);
  ad::Var w = tape.parameter(p.lstm.weight);
  ad::Var bias = tape.parameter(p.lstm.bias);
  ad::Var hidden = tape.constant(Tensor::vector(Vector::Zero(h)));
  ad::Var cell = hidden;
  for (int tok : tokens) {
    if (tok < 0 || tok >= vocab) throw ArgumentError("encode_query: token index " + std::to_string(tok) + " out of range");
    ad::Var x = ad::row(embedding, tok);
    ad::Var gates = ad::matmul(w, ad::concat({x, hidden})) + bias;
    ad::Var in_gate = ad::sigmoid(ad::slice(gates, 0, h));
    ad::Var forget_gate = ad::sigmoid(ad::slice(gates, h, h));
    ad::Var out_gate = ad::sigmoid(ad::slice(gates, 2 * h, h));
    ad::Var candidate = ad::tanh(ad::slice(gates, 3 * h, h));
    cell = ad::hadamard(forget_gate, cell) + ad::hadamard(in_gate, candidate);
    hidden = ad::hadamard(out_gate, ad::tanh(cell));
  }
  return dense(tape, p.language_projection, hidden);
}

double late_fusion(double score_rgb, double score_flow, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ArgumentError("late_fusion: lambda must lie in [0, 1]");
  return lambda * score_rgb + (1.0 - lambda) * score_flow;
}

ad::Var late_fusion(ad::Var score_rgb, ad::Var score_flow, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ArgumentError("late_fusion: lambda must lie in [0, 1]");
  return ad::scale(score_rgb, lambda) + ad::scale(score_flow, 1.0 - lambda);
}

// ---------------------------------------------------------------------------
// Feature files

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void write_feature_file(const std::filesystem::path& path, std::span<const SegmentFeatureTable> tables) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write feature file: " + path.string());
  std::string line;
  for (const auto& t : tables) {
    out << t.video_id << ' ' << t.n_segments() << ' ' << t.dim() << '\n';
    for (Index r = 0; r < t.features.rows(); ++r) {
      line.clear();
      for (Index c = 0; c < t.features.cols(); ++c) {
        if (c) line.push_back(' ');
        line += format_real(t.features(r, c));
      }
      out << line << '\n';
    }
  }
  if (!out) throw Error("failed writing feature file: " + path.string());
}

std::vector<SegmentFeatureTable> read_feature_file(const std::filesystem::path& path, Modality modality) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open feature file: " + path.string());
  const std::string src = path.string();
  std::vector<SegmentFeatureTable> out;
  std::string line;
  std::size_t lineno = 0;
  int corpus_dim = -1;
  while (std::getline(in, line)) {
    ++lineno;
    auto header = split_ws(line);
    if (header.empty()) continue;
    if (header.size() != 3) throw ParseError(src, lineno, "expected header 'video_id n_segments d'");
    int n = 0, d = 0;
    if (std::from_chars(header[1].data(), header[1].data() + header[1].size(), n).ec != std::errc() || n < 1)
      throw ParseError(src, lineno, "invalid segment count");
    if (std::from_chars(header[2].data(), header[2].data() + header[2].size(), d).ec != std::errc() || d < 1)
      throw ParseError(src, lineno, "invalid feature dimension");
    if (corpus_dim >= 0 && d != corpus_dim)
      throw ParseError(src, lineno, "feature dimension " + std::to_string(d) + " differs from " + std::to_string(corpus_dim));
    corpus_dim = d;
    SegmentFeatureTable t;
    t.video_id = std::string(header[0]);
    t.modality = modality;
    t.features.resize(n, d);
    for (int r = 0; r < n; ++r) {
      if (!std::getline(in, line)) throw ParseError(src, lineno + 1, "unexpected end of file inside video " + t.video_id);
      ++lineno;
      auto fields = split_ws(line);
      if (static_cast<int>(fields.size()) != d)
        throw ParseError(src, lineno, "expected " + std::to_string(d) + " reals, found " + std::to_string(fields.size()));
      for (int c = 0; c < d; ++c)
        if (!parse_double(fields[static_cast<std::size_t>(c)], t.features(r, c)))
          throw ParseError(src, lineno, "malformed real '" + std::string(fields[static_cast<std::size_t>(c)]) + "'");
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace mllc
