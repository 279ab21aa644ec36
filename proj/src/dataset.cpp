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

#include "mllc/dataset.hpp"

#include "mllc/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace mllc {

using json = nlohmann::json;

std::string_view to_string(TemporalWord w) {
  switch (w) {
    case TemporalWord::none: return "none";
    case TemporalWord::before: return "before";
    case TemporalWord::after: return "after";
    case TemporalWord::then: return "then";
    case TemporalWord::while_: return "while";
  }
  return "?";
}

TemporalWord parse_temporal_word(std::string_view s) {
  for (TemporalWord w : kTemporalWords)
    if (to_string(w) == s) return w;
  throw ConfigError("unknown temporal word '" + std::string(s) + "'");
}

TemporalQuery make_query(std::string id, std::string video_id, std::string sentence, TemporalWord word, Moment base,
                         std::optional<ContextMoment> context) {
  TemporalQuery q;
  q.id = std::move(id);
  q.video_id = std::move(video_id);
  q.tokens = tokenize(sentence);
  q.sentence = std::move(sentence);
  q.word = word;
  q.base = base;
  q.context = std::move(context);
  return q;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Byte offset of a whole-word, case-insensitive match of `word`, or npos.
std::vector<std::size_t> word_positions(const std::string& lowered, std::string_view word) {
  std::vector<std::size_t> out;
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '\''; };
  for (std::size_t p = lowered.find(word); p != std::string::npos; p = lowered.find(word, p + 1)) {
    const bool left = p == 0 || !is_word(lowered[p - 1]);
    const bool right = p + word.size() == lowered.size() || !is_word(lowered[p + word.size()]);
    if (left && right) out.push_back(p);
  }
  return out;
}

}  // namespace

std::optional<SentenceFragments> split_fragments(std::string_view sentence, TemporalWord word) {
  if (word != TemporalWord::before && word != TemporalWord::after && word != TemporalWord::then) return std::nullopt;
  const std::string text = trim(sentence);
  const std::string low = lower(text);
  const std::string_view w = to_string(word);
  const auto positions = word_positions(low, w);
  if (positions.size() != 1) return std::nullopt;
  const std::size_t p = positions[0];
  SentenceFragments f;
  if (p == 0) {
    if (word == TemporalWord::then) return std::nullopt;
    // "Before Y, X"
    const auto comma = text.find(',', w.size());
    if (comma == std::string::npos) return std::nullopt;
    f.context = as_clause(text.substr(w.size(), comma - w.size()));
    f.base = as_clause(text.substr(comma + 1));
  } else {
    f.base = as_clause(text.substr(0, p));
    f.context = as_clause(text.substr(p + w.size()));
  }
  if (tokenize(f.base).empty() || tokenize(f.context).empty()) return std::nullopt;
  return f;
}

// ---------------------------------------------------------------------------
// Template language

std::string as_clause(std::string_view text) {
  std::string s = trim(text);
  while (!s.empty() && (std::ispunct(static_cast<unsigned char>(s.back())) || std::isspace(static_cast<unsigned char>(s.back()))))
    s.pop_back();
  s = trim(s);
  if (s.empty()) return s;
  const auto first_word_end = std::find_if(s.begin(), s.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
  const bool all_caps = std::all_of(s.begin(), first_word_end, [](char c) {
    return !std::isalpha(static_cast<unsigned char>(c)) || std::isupper(static_cast<unsigned char>(c));
  });
  const bool single_letter = std::distance(s.begin(), first_word_end) == 1;
  if (!all_caps || (single_letter && s[0] != 'I'))
    s[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
  return s;
}

std::string as_sentence(std::string_view text) {
  std::string s = trim(text);
  if (s.empty()) return s;
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  if (s.back() != '.') s.push_back('.');
  return s;
}

namespace {

std::map<std::string, std::vector<const BaseAnnotation*>> by_video(std::span<const BaseAnnotation> annotations) {
  std::map<std::string, std::vector<const BaseAnnotation*>> out;
  for (const auto& a : annotations) out[a.video_id].push_back(&a);
  for (auto& [id, list] : out)
    std::stable_sort(list.begin(), list.end(),
                     [](const BaseAnnotation* a, const BaseAnnotation* b) { return a->moment < b->moment; });
  return out;
}

template <class F>
void for_each_adjacent_pair(std::span<const BaseAnnotation> annotations, F&& f) {
  for (const auto& [id, list] : by_video(annotations))
    for (const BaseAnnotation* x : list)
      for (const BaseAnnotation* y : list)
        if (x->moment.end + 1 == y->moment.start) f(*x, *y);
}

}  // namespace

std::size_t count_adjacent_pairs(std::span<const BaseAnnotation> annotations) {
  std::size_t n = 0;
  for_each_adjacent_pair(annotations, [&](const BaseAnnotation&, const BaseAnnotation&) { ++n; });
  return n;
}

std::vector<TemporalQuery> generate_tempo_tl(std::span<const BaseAnnotation> annotations) {
  std::vector<TemporalQuery> out;
  std::map<std::string, int> counter;
  for_each_adjacent_pair(annotations, [&](const BaseAnnotation& x, const BaseAnnotation& y) {
    const std::string cx = as_clause(x.sentence), cy = as_clause(y.sentence);
    const auto ctx_x = ContextMoment::single(x.moment), ctx_y = ContextMoment::single(y.moment);
    auto emit = [&](std::string text, TemporalWord w, Moment base, const ContextMoment& ctx) {
      const std::string id = x.video_id + ":tl" + std::to_string(counter[x.video_id]++);
      out.push_back(make_query(id, x.video_id, as_sentence(text), w, base, ctx));
    };
    emit(cx + " before " + cy, TemporalWord::before, x.moment, ctx_y);
    emit("before " + cy + ", " + cx, TemporalWord::before, x.moment, ctx_y);
    emit(cy + " after " + cx, TemporalWord::after, y.moment, ctx_x);
    emit("after " + cx + ", " + cy, TemporalWord::after, y.moment, ctx_x);
    emit(cx + " then " + cy, TemporalWord::then, Moment{x.moment.start, y.moment.end}, ctx_y);
  });
  return out;
}

SymbolicGroundTruth truth_from_annotations(std::span<const BaseAnnotation> annotations) {
  SymbolicGroundTruth truth;
  for (const auto& a : annotations) {
    auto& segs = truth.events[a.video_id];
    if (static_cast<int>(segs.size()) <= a.moment.end) segs.resize(static_cast<std::size_t>(a.moment.end + 1));
    const std::string phrase = as_clause(a.sentence);
    for (int k = a.moment.start; k <= a.moment.end; ++k) {
      auto& cell = segs[static_cast<std::size_t>(k)];
      if (std::find(cell.begin(), cell.end(), phrase) == cell.end()) cell.push_back(phrase);
    }
  }
  return truth;
}

// ---------------------------------------------------------------------------
// Oracle

namespace {

using Tokens = std::vector<std::string>;

struct VideoTruth {
  int n = 0;
  std::vector<std::set<Tokens>> segments;
  std::set<Tokens> lexicon;
};

VideoTruth video_truth(const SymbolicGroundTruth& truth, const std::string& video_id) {
  auto it = truth.events.find(video_id);
  if (it == truth.events.end()) throw IntegrityError("oracle: no ground truth for video '" + video_id + "'");
  VideoTruth vt;
  vt.n = static_cast<int>(it->second.size());
  for (const auto& cell : it->second) {
    std::set<Tokens> s;
    for (const auto& phrase : cell) {
      s.insert(tokenize(phrase));
      vt.lexicon.insert(tokenize(phrase));
    }
    vt.segments.push_back(std::move(s));
  }
  return vt;
}

// m is a maximal run of segments showing p.
bool is_run(const VideoTruth& vt, const Moment& m, const Tokens& p) {
  for (int k = m.start; k <= m.end; ++k)
    if (!vt.segments[static_cast<std::size_t>(k)].count(p)) return false;
  if (m.start > 0 && vt.segments[static_cast<std::size_t>(m.start - 1)].count(p)) return false;
  if (m.end + 1 < vt.n && vt.segments[static_cast<std::size_t>(m.end + 1)].count(p)) return false;
  return true;
}

struct Parse {
  Tokens x, y;
};

Tokens join(std::span<const std::string> t) { return Tokens(t.begin(), t.end()); }

// Every split of the tokens into known phrases consistent with the templates.
std::vector<Parse> parses(const Tokens& t, TemporalWord word, const std::set<Tokens>& lexicon) {
  std::vector<Parse> out;
  std::span<const std::string> all(t);
  auto known = [&](std::span<const std::string> s) { return !s.empty() && lexicon.count(join(s)); };
  if (word == TemporalWord::none) {
    if (known(all)) out.push_back({t, {}});
    return out;
  }
  const std::string w(to_string(word));
  for (std::size_t p = 0; p < t.size(); ++p) {
    if (t[p] != w) continue;
    if (p == 0 && (word == TemporalWord::before || word == TemporalWord::after)) {
      // "<word> Y, X": the comma is gone after tokenizing, so try every cut.
      for (std::size_t cut = 2; cut < t.size(); ++cut)
        if (known(all.subspan(1, cut - 1)) && known(all.subspan(cut)))
          out.push_back({join(all.subspan(cut)), join(all.subspan(1, cut - 1))});
    } else if (p > 0) {
      if (known(all.first(p)) && known(all.subspan(p + 1))) out.push_back({join(all.first(p)), join(all.subspan(p + 1))});
    }
  }
  return out;
}

}  // namespace

OracleAnswer oracle_answer(const TemporalQuery& query, const SymbolicGroundTruth& truth) {
  const VideoTruth vt = video_truth(truth, query.video_id);
  if (vt.n < 1) throw IntegrityError("oracle: video '" + query.video_id + "' has no segments");
  const auto ps = parses(query.tokens.empty() ? tokenize(query.sentence) : query.tokens, query.word, vt.lexicon);
  if (ps.empty()) throw Error("oracle: cannot read '" + query.sentence + "' against the truth of " + query.video_id);

  const auto moments = enumerate_moments(vt.n);
  std::vector<OracleAnswer> found;
  auto add = [&](const Moment& base, const ContextMoment& ctx) {
    for (const auto& f : found)
      if (f.base == base) return;
    found.push_back({base, ctx});
  };
  for (const Parse& p : ps) {
    for (const Moment& m : moments) {
      if (query.word == TemporalWord::none) {
        if (is_run(vt, m, p.x)) add(m, ContextMoment::single(m));
        continue;
      }
      if (query.word == TemporalWord::then) {
        // m is the union of an X run and the Y run starting right after it.
        for (int cut = m.start; cut < m.end; ++cut)
          if (is_run(vt, {m.start, cut}, p.x) && is_run(vt, {cut + 1, m.end}, p.y))
            add(m, ContextMoment::single({cut + 1, m.end}));
        continue;
      }
      if (!is_run(vt, m, p.x)) continue;
      std::optional<Moment> ctx;
      for (const Moment& c : moments) {
        if (!is_run(vt, c, p.y)) continue;
        bool ok = false;
        bool better = false;
        switch (query.word) {
          case TemporalWord::before:
            ok = m.end < c.start;
            better = !ctx || c.start < ctx->start;  // nearest following
            break;
          case TemporalWord::after:
            ok = c.end < m.start;
            better = !ctx || c.end > ctx->end;  // nearest preceding
            break;
          case TemporalWord::while_:
            ok = m.overlaps(c);
            better = !ctx;
            break;
          default: break;
        }
        if (ok && better) ctx = c;
      }
      if (ctx) add(m, ContextMoment::single(*ctx));
    }
  }
  if (found.empty()) throw Error("oracle: no moment satisfies '" + query.sentence + "' in " + query.video_id);
  if (found.size() > 1) throw Error("oracle: '" + query.sentence + "' is ambiguous in " + query.video_id);
  return found.front();
}

Moment oracle_localize(const TemporalQuery& query, const SymbolicGroundTruth& truth) {
  return oracle_answer(query, truth).base;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

std::span<const std::string_view> event_phrases() {
  static constexpr std::array<std::string_view, 48> kPhrases{
      "the dog barks",          "a man opens the door",    "the girl jumps",         "a car drives past",
      "the baby laughs",        "someone claps",           "the cat sleeps",         "a woman waves",
      "the ball bounces",       "a bird flies away",       "the lights turn off",    "a boy kicks the ball",
      "the crowd cheers",       "water splashes",          "a horse gallops",        "the camera pans left",
      "people dance",           "a man sits down",         "the girl reads a book",  "a phone rings",
      "the kid falls",          "someone pours coffee",    "the train arrives",      "a woman sings",
      "the fire burns",         "a man plays guitar",      "the door closes",        "someone types on a laptop",
      "a child eats cake",      "the wind blows",          "a dog fetches a stick",  "the players run",
      "a man points at the sky", "the girl smiles",        "a truck backs up",       "someone throws a frisbee",
      "the boat sails",         "a woman picks up a cup",  "the man laughs",         "a bike rolls by",
      "the cook stirs the pot", "someone turns on the tv", "a bus stops",            "the girl spins around",
      "a man climbs a ladder",  "the baby crawls",         "someone knocks",         "the snow falls",
  };
  return kPhrases;
}

void SyntheticCorpusConfig::validate() const {
  if (n_videos < 2) throw ConfigError("n_videos must be at least 2");
  if (n_test_videos < 0 || n_test_videos >= n_videos) throw ConfigError("n_test_videos must lie in [0, n_videos)");
  if (n_segments < 1) throw ConfigError("n_segments must be positive");
  if (n_events < 1) throw ConfigError("n_events must be positive");
  if (n_events > static_cast<int>(event_phrases().size()))
    throw ConfigError("n_events exceeds the " + std::to_string(event_phrases().size()) + " built-in event phrases");
  if (n_events < n_segments + 1)
    throw ConfigError("n_events must exceed n_segments so every video can show distinct events plus an overlay");
  if (repeat_prob > 0 && n_segments < 3)
    throw ConfigError("repeated events need at least 3 segments so a context can separate the occurrences");
  for (double p : {repeat_prob, ambiguous_focus, while_prob})
    if (!(p >= 0 && p <= 1)) throw ConfigError("probabilities must lie in [0, 1]");
  if (!(noise_sigma >= 0)) throw ConfigError("noise_sigma must be non-negative");
  if (feature_dim < 1) throw ConfigError("feature_dim must be positive");
  if (queries_per_video < 1) throw ConfigError("queries_per_video must be positive");
  for (double w : {mix_simple, mix_before, mix_after, mix_then, mix_while})
    if (!(w >= 0)) throw ConfigError("query mix weights must be non-negative");
  if (mix_simple + mix_before + mix_after + mix_then + mix_while <= 0) throw ConfigError("query mix is all zero");
}

SyntheticCorpusConfig SyntheticCorpusConfig::from_key_values(const KeyValues& kv) {
  SyntheticCorpusConfig c;
  for (const auto& [key, value] : kv.entries()) {
    if (key == "n_videos") c.n_videos = parse_int(key, value);
    else if (key == "n_test_videos") c.n_test_videos = parse_int(key, value);
    else if (key == "n_segments") c.n_segments = parse_int(key, value);
    else if (key == "n_events") c.n_events = parse_int(key, value);
    else if (key == "repeat_prob") c.repeat_prob = parse_real(key, value);
    else if (key == "ambiguous_focus") c.ambiguous_focus = parse_real(key, value);
    else if (key == "while_prob") c.while_prob = parse_real(key, value);
    else if (key == "noise_sigma") c.noise_sigma = parse_real(key, value);
    else if (key == "feature_dim") c.feature_dim = parse_int(key, value);
    else if (key == "queries_per_video") c.queries_per_video = parse_int(key, value);
    else if (key == "mix_simple") c.mix_simple = parse_real(key, value);
    else if (key == "mix_before") c.mix_before = parse_real(key, value);
    else if (key == "mix_after") c.mix_after = parse_real(key, value);
    else if (key == "mix_then") c.mix_then = parse_real(key, value);
    else if (key == "mix_while") c.mix_while = parse_real(key, value);
    else if (key == "seed") c.seed = parse_u64(key, value);
    else throw ConfigError(kv.source() + ": unknown corpus key '" + key + "'");
  }
  c.validate();
  return c;
}

KeyValues SyntheticCorpusConfig::to_key_values() const {
  KeyValues kv;
  kv.set("n_videos", std::to_string(n_videos));
  kv.set("n_test_videos", std::to_string(n_test_videos));
  kv.set("n_segments", std::to_string(n_segments));
  kv.set("n_events", std::to_string(n_events));
  kv.set("repeat_prob", format_real(repeat_prob));
  kv.set("ambiguous_focus", format_real(ambiguous_focus));
  kv.set("while_prob", format_real(while_prob));
  kv.set("noise_sigma", format_real(noise_sigma));
  kv.set("feature_dim", std::to_string(feature_dim));
  kv.set("queries_per_video", std::to_string(queries_per_video));
  kv.set("mix_simple", format_real(mix_simple));
  kv.set("mix_before", format_real(mix_before));
  kv.set("mix_after", format_real(mix_after));
  kv.set("mix_then", format_real(mix_then));
  kv.set("mix_while", format_real(mix_while));
  kv.set("seed", std::to_string(seed));
  return kv;
}

namespace {

struct Candidate {
  TemporalWord word;
  int x, y;  // event ids; y unused for simple queries
  bool ambiguous;
};

std::string render(const Candidate& c, bool alternate, std::span<const std::string_view> phrases) {
  const std::string x(phrases[static_cast<std::size_t>(c.x)]);
  const std::string y = c.y >= 0 ? std::string(phrases[static_cast<std::size_t>(c.y)]) : std::string();
  switch (c.word) {
    case TemporalWord::none: return as_sentence(x);
    case TemporalWord::before: return as_sentence(alternate ? "before " + y + ", " + x : x + " before " + y);
    case TemporalWord::after: return as_sentence(alternate ? "after " + y + ", " + x : x + " after " + y);
    case TemporalWord::then: return as_sentence(x + " then " + y);
    case TemporalWord::while_: return as_sentence(x + " while " + y);
  }
  return x;
}

std::size_t pick(std::size_t n, std::mt19937_64& rng) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

}  // namespace

Corpus generate_synthetic(const SyntheticCorpusConfig& cfg) {
  cfg.validate();
  const auto phrases = event_phrases().first(static_cast<std::size_t>(cfg.n_events));
  const std::array<Modality, 2> modalities{Modality::rgb, Modality::flow};

  std::mt19937_64 proto_rng(cfg.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<std::array<Vector, 2>> prototypes(static_cast<std::size_t>(cfg.n_events));
  for (auto& per_modality : prototypes)
    for (auto& p : per_modality) {
      p.resize(cfg.feature_dim);
      for (Index k = 0; k < p.size(); ++k) p[k] = unit(proto_rng);
    }

  Corpus corpus;
  corpus.modalities.assign(modalities.begin(), modalities.end());
  SymbolicGroundTruth truth;
  const double mix[5] = {cfg.mix_simple, cfg.mix_before, cfg.mix_after, cfg.mix_then, cfg.mix_while};
  const int n = cfg.n_segments;

  for (int v = 0; v < cfg.n_videos; ++v) {
    std::seed_seq seq{static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(v)};
    std::mt19937_64 rng(seq);
    char id_buf[32];
    std::snprintf(id_buf, sizeof id_buf, "v%04d", v);
    const std::string id = id_buf;

    // Event layout: distinct events, optionally one repeated and one overlay.
    std::vector<int> pool(static_cast<std::size_t>(cfg.n_events));
    for (int e = 0; e < cfg.n_events; ++e) pool[static_cast<std::size_t>(e)] = e;
    for (std::size_t i = 0; i < pool.size(); ++i) std::swap(pool[i], pool[i + pick(pool.size() - i, rng)]);
    std::vector<std::vector<int>> segs(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) segs[static_cast<std::size_t>(k)] = {pool[static_cast<std::size_t>(k)]};
    int repeated = -1;
    if (std::bernoulli_distribution(cfg.repeat_prob)(rng)) {
      std::vector<std::pair<int, int>> spots;
      for (int i = 0; i < n; ++i)
        for (int j = i + 2; j < n; ++j) spots.emplace_back(i, j);
      const auto [i, j] = spots[pick(spots.size(), rng)];
      segs[static_cast<std::size_t>(j)] = segs[static_cast<std::size_t>(i)];
      repeated = segs[static_cast<std::size_t>(i)][0];
    }
    if (std::bernoulli_distribution(cfg.while_prob)(rng)) {
      const int k = static_cast<int>(pick(static_cast<std::size_t>(n), rng));
      segs[static_cast<std::size_t>(k)].push_back(pool[static_cast<std::size_t>(n)]);
    }

    auto& tcell = truth.events[id];
    for (const auto& s : segs) {
      std::vector<std::string> cell;
      for (int e : s) cell.emplace_back(phrases[static_cast<std::size_t>(e)]);
      tcell.push_back(std::move(cell));
    }

    Video video;
    video.id = id;
    video.n_segments = n;
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (std::size_t m = 0; m < modalities.size(); ++m) {
      SegmentFeatureTable t;
      t.video_id = id;
      t.modality = modalities[m];
      t.features.resize(n, cfg.feature_dim);
      for (int k = 0; k < n; ++k) {
        Vector row = Vector::Zero(cfg.feature_dim);
        for (int e : segs[static_cast<std::size_t>(k)]) row += prototypes[static_cast<std::size_t>(e)][m];
        row /= static_cast<double>(segs[static_cast<std::size_t>(k)].size());
        for (Index c = 0; c < row.size(); ++c) t.features(k, c) = row[c] + (cfg.noise_sigma > 0 ? noise(rng) : 0.0);
      }
      video.tables.push_back(std::move(t));
    }
    corpus.videos.push_back(std::move(video));

    // Candidate queries, kept only when the oracle finds a unique answer.
    std::set<int> present;
    for (const auto& s : segs) present.insert(s.begin(), s.end());
    std::array<std::vector<Candidate>, 5> candidates;
    for (int x : present) {
      for (std::size_t w = 0; w < kTemporalWords.size(); ++w) {
        const TemporalWord word = kTemporalWords[w];
        for (int y : present) {
          if (word == TemporalWord::none && y != x) continue;
          if (word != TemporalWord::none && y == x) continue;
          Candidate c{word, x, word == TemporalWord::none ? -1 : y, x == repeated};
          const TemporalQuery probe = make_query("", id, render(c, false, phrases), word, {0, 0});
          try {
            oracle_answer(probe, truth);
          } catch (const Error&) {
            continue;
          }
          candidates[w].push_back(c);
          if (word == TemporalWord::none) break;
        }
      }
    }

    const bool test_split = v >= cfg.n_videos - cfg.n_test_videos;
    auto& split = test_split ? corpus.test : corpus.train;
    for (int qn = 0; qn < cfg.queries_per_video; ++qn) {
      double total = 0;
      for (std::size_t w = 0; w < 5; ++w) total += candidates[w].empty() ? 0 : mix[w];
      if (total <= 0) break;
      double r = std::uniform_real_distribution<double>(0, total)(rng);
      std::size_t w = 0;
      for (; w < 5; ++w) {
        if (candidates[w].empty() || mix[w] <= 0) continue;
        if (r < mix[w]) break;
        r -= mix[w];
      }
      if (w == 5) {  // rounding at the upper edge
        for (w = 5; w-- > 0;)
          if (!candidates[w].empty() && mix[w] > 0) break;
      }
      auto& list = candidates[w];
      std::vector<std::size_t> ambiguous;
      for (std::size_t i = 0; i < list.size(); ++i)
        if (list[i].ambiguous) ambiguous.push_back(i);
      std::size_t chosen;
      if (kTemporalWords[w] != TemporalWord::none && !ambiguous.empty() &&
          std::bernoulli_distribution(cfg.ambiguous_focus)(rng))
        chosen = ambiguous[pick(ambiguous.size(), rng)];
      else
        chosen = pick(list.size(), rng);
      const Candidate c = list[chosen];
      list.erase(list.begin() + static_cast<std::ptrdiff_t>(chosen));
      const bool alternate = std::bernoulli_distribution(0.5)(rng);
      TemporalQuery q = make_query(id + "#" + std::to_string(qn), id, render(c, alternate, phrases), c.word, {0, 0});
      const OracleAnswer a = oracle_answer(q, truth);
      q.base = a.base;
      if (c.word != TemporalWord::none) q.context = a.context;
      split.push_back(std::move(q));
    }
  }
  corpus.truth = std::move(truth);
  corpus.reindex();
  corpus.validate();
  return corpus;
}

// ---------------------------------------------------------------------------
// Corpus

void Corpus::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < videos.size(); ++i)
    if (!index_.emplace(videos[i].id, i).second) throw IntegrityError("duplicate video id '" + videos[i].id + "'");
}

std::size_t Corpus::video_index(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) throw IntegrityError("unknown video id '" + std::string(id) + "'");
  return it->second;
}

const Video& Corpus::video(std::string_view id) const { return videos[video_index(id)]; }

const std::vector<TemporalQuery>& Corpus::split(std::string_view name) const {
  if (name == "train") return train;
  if (name == "test") return test;
  throw ArgumentError("unknown split '" + std::string(name) + "'");
}

std::vector<std::pair<Modality, int>> Corpus::feature_dims() const {
  std::vector<std::pair<Modality, int>> out;
  for (std::size_t m = 0; m < modalities.size(); ++m)
    out.emplace_back(modalities[m], videos.empty() ? 0 : videos.front().tables[m].dim());
  return out;
}

void Corpus::validate() const {
  if (index_.size() != videos.size()) throw IntegrityError("corpus index is stale");
  for (const auto& v : videos) {
    if (v.tables.size() != modalities.size())
      throw IntegrityError("video '" + v.id + "' lacks features for some modality");
    for (std::size_t m = 0; m < modalities.size(); ++m) {
      const auto& t = v.tables[m];
      if (t.modality != modalities[m] || t.n_segments() != v.n_segments)
        throw IntegrityError("video '" + v.id + "' has inconsistent " + std::string(to_string(modalities[m])) +
                             " features");
      if (!t.features.allFinite()) throw IntegrityError("video '" + v.id + "' has non-finite features");
      if (t.dim() != videos.front().tables[m].dim())
        throw IntegrityError("video '" + v.id + "' has a different feature width");
    }
  }
  for (const auto* split : {&train, &test}) {
    for (const auto& q : *split) {
      auto it = index_.find(q.video_id);
      if (it == index_.end())
        throw IntegrityError("query '" + q.id + "' refers to missing video '" + q.video_id + "'");
      const int n = videos[it->second].n_segments;
      if (!q.base.valid_for(n)) throw IntegrityError("query '" + q.id + "' moment " + to_string(q.base) + " out of range");
      if (q.context && !q.context->valid_for(n))
        throw IntegrityError("query '" + q.id + "' context " + to_string(*q.context) + " out of range");
      for (const auto& a : q.annotators)
        if (!a.valid_for(n)) throw IntegrityError("query '" + q.id + "' annotation " + to_string(a) + " out of range");
      if (q.tokens.empty()) throw IntegrityError("query '" + q.id + "' has no tokens");
    }
  }
}

// ---------------------------------------------------------------------------
// Files

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

json parse_json(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n'));
    throw ParseError(path.string(), line, "malformed JSON");
  }
}

Moment moment_of(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
    throw ParseError(where, 0, "expected a [start, end] pair");
  Moment m{j[0].get<int>(), j[1].get<int>()};
  if (m.start < 0 || m.end < m.start) throw ParseError(where, 0, "invalid moment " + to_string(m));
  return m;
}

json moment_json(const Moment& m) { return json::array({m.start, m.end}); }

template <class T>
T field(const json& rec, const char* key, const std::string& where) {
  if (!rec.contains(key)) throw ParseError(where, 0, std::string("missing field '") + key + "'");
  try {
    return rec.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(where, 0, std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

std::vector<TemporalQuery> load_annotations(const std::filesystem::path& path) {
  const json doc = parse_json(path);
  const json* records = &doc;
  if (doc.is_object() && doc.contains("annotations")) records = &doc.at("annotations");
  if (!records->is_array()) throw ParseError(path.string(), 0, "expected an array of annotation records");
  std::vector<TemporalQuery> out;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < records->size(); ++i) {
    const json& rec = (*records)[i];
    const std::string where = path.string() + " record " + std::to_string(i);
    if (!rec.is_object()) throw ParseError(where, 0, "expected an object");
    const auto video_id = field<std::string>(rec, "video_id", where);
    const auto sentence = field<std::string>(rec, "sentence", where);
    const Moment base{field<int>(rec, "start_seg", where), field<int>(rec, "end_seg", where)};
    if (base.start < 0 || base.end < base.start) throw ParseError(where, 0, "invalid moment " + to_string(base));
    TemporalWord word = TemporalWord::none;
    if (rec.contains("temporal_word")) {
      try {
        word = parse_temporal_word(field<std::string>(rec, "temporal_word", where));
      } catch (const ConfigError& e) {
        throw ParseError(where, 0, e.what());
      }
    }
    std::optional<ContextMoment> ctx;
    if (rec.contains("ctx_regions") && !rec.at("ctx_regions").is_null()) {
      const json& regions = rec.at("ctx_regions");
      if (!regions.is_array() || regions.empty() || regions.size() > 2)
        throw ParseError(where, 0, "ctx_regions must hold one or two [start, end] pairs");
      if (regions.size() == 1) {
        ctx = ContextMoment::single(moment_of(regions[0], where));
      } else {
        auto slot = [&](const json& r) -> std::optional<Moment> {
          if (r.is_null()) return std::nullopt;
          return moment_of(r, where);
        };
        try {
          ctx = ContextMoment::before_after(slot(regions[0]), slot(regions[1]));
        } catch (const ArgumentError& e) {
          throw ParseError(where, 0, e.what());
        }
      }
    }
    std::string id = rec.contains("id") ? field<std::string>(rec, "id", where) : video_id + "#" + std::to_string(i);
    if (!ids.insert(id).second) throw ParseError(where, 0, "duplicate query id '" + id + "'");
    TemporalQuery q = make_query(std::move(id), video_id, sentence, word, base, ctx);
    if (rec.contains("annotators")) {
      const json& anns = rec.at("annotators");
      if (!anns.is_array() || anns.empty()) throw ParseError(where, 0, "annotators must be a nonempty array");
      for (const auto& a : anns) q.annotators.push_back(moment_of(a, where));
    }
    if (q.tokens.empty()) throw ParseError(where, 0, "sentence has no tokens");
    out.push_back(std::move(q));
  }
  return out;
}

void save_annotations(const std::filesystem::path& path, std::span<const TemporalQuery> queries) {
  json arr = json::array();
  for (const auto& q : queries) {
    json rec;
    rec["id"] = q.id;
    rec["video_id"] = q.video_id;
    rec["sentence"] = q.sentence;
    rec["start_seg"] = q.base.start;
    rec["end_seg"] = q.base.end;
    rec["temporal_word"] = std::string(to_string(q.word));
    if (q.context) {
      json regions = json::array();
      for (int s = 0; s < q.context->slot_count(); ++s) {
        const auto& slot = q.context->slot(s);
        regions.push_back(slot ? moment_json(*slot) : json(nullptr));
      }
      rec["ctx_regions"] = std::move(regions);
    }
    if (!q.annotators.empty()) {
      json anns = json::array();
      for (const auto& a : q.annotators) anns.push_back(moment_json(a));
      rec["annotators"] = std::move(anns);
    }
    arr.push_back(std::move(rec));
  }
  json doc;
  doc["schema"] = 1;
  doc["annotations"] = std::move(arr);
  write_text(path, doc.dump(1) + "\n");
}

std::vector<BaseAnnotation> load_base_annotations(const std::filesystem::path& path) {
  std::vector<BaseAnnotation> out;
  for (const auto& q : load_annotations(path)) out.push_back({q.video_id, q.sentence, q.base});
  return out;
}

SymbolicGroundTruth load_truth(const std::filesystem::path& path) {
  const json doc = parse_json(path);
  const std::string where = path.string();
  if (!doc.is_object()) throw ParseError(where, 0, "expected an object");
  if (doc.contains("schema") && doc.at("schema") != 1) throw ParseError(where, 0, "unsupported schema version");
  const json& body = doc.contains("truth") ? doc.at("truth") : doc;
  SymbolicGroundTruth truth;
  try {
    for (const auto& [vid, segs] : body.items())
      truth.events[vid] = segs.get<std::vector<std::vector<std::string>>>();
  } catch (const json::exception&) {
    throw ParseError(where, 0, "truth entries must be lists of event lists");
  }
  return truth;
}

void save_truth(const std::filesystem::path& path, const SymbolicGroundTruth& truth) {
  json doc;
  doc["schema"] = 1;
  doc["truth"] = json::object();
  for (const auto& [vid, segs] : truth.events) doc["truth"][vid] = segs;
  write_text(path, doc.dump(1) + "\n");
}

std::vector<SegmentFeatureTable> modality_tables(const Corpus& corpus, std::size_t slot) {
  std::vector<SegmentFeatureTable> out;
  out.reserve(corpus.videos.size());
  for (const auto& v : corpus.videos) out.push_back(v.tables.at(slot));
  return out;
}

Corpus load_corpus(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error("cannot open corpus manifest: " + manifest.string());
  const auto dir = manifest.parent_path();
  const std::string src = manifest.string();
  Corpus corpus;
  std::vector<std::vector<SegmentFeatureTable>> tables;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string kind;
    if (!(ss >> kind) || kind[0] == '#') continue;
    std::string a, b, extra;
    if (kind == "features") {
      if (!(ss >> a >> b) || (ss >> extra)) throw ParseError(src, lineno, "expected 'features <modality> <file>'");
      Modality m;
      try {
        m = parse_modality(a);
      } catch (const ConfigError& e) {
        throw ParseError(src, lineno, e.what());
      }
      if (std::find(corpus.modalities.begin(), corpus.modalities.end(), m) != corpus.modalities.end())
        throw ParseError(src, lineno, "modality '" + a + "' listed twice");
      corpus.modalities.push_back(m);
      tables.push_back(read_feature_file(dir / b, m));
    } else if (kind == "annotations") {
      if (!(ss >> a >> b) || (ss >> extra)) throw ParseError(src, lineno, "expected 'annotations <split> <file>'");
      auto queries = load_annotations(dir / b);
      if (a == "train") corpus.train.insert(corpus.train.end(), queries.begin(), queries.end());
      else if (a == "test") corpus.test.insert(corpus.test.end(), queries.begin(), queries.end());
      else throw ParseError(src, lineno, "unknown split '" + a + "'");
    } else if (kind == "truth") {
      if (!(ss >> a) || (ss >> extra)) throw ParseError(src, lineno, "expected 'truth <file>'");
      corpus.truth = load_truth(dir / a);
    } else {
      throw ParseError(src, lineno, "unknown manifest entry '" + kind + "'");
    }
  }
  if (tables.empty()) throw ParseError(src, 0, "manifest lists no feature files");

  const auto& first = tables.front();
  for (const auto& t : first) {
    Video v;
    v.id = t.video_id;
    v.n_segments = t.n_segments();
    corpus.videos.push_back(std::move(v));
  }
  corpus.reindex();
  for (std::size_t m = 0; m < tables.size(); ++m) {
    if (tables[m].size() != first.size())
      throw IntegrityError(std::string(to_string(corpus.modalities[m])) + " features cover " +
                           std::to_string(tables[m].size()) + " videos, expected " + std::to_string(first.size()));
    for (auto& t : tables[m]) {
      if (!corpus.has_video(t.video_id))
        throw IntegrityError(std::string(to_string(corpus.modalities[m])) + " features name unknown video '" +
                             t.video_id + "'");
      auto& v = corpus.videos[corpus.video_index(t.video_id)];
      if (v.tables.size() != m)
        throw IntegrityError("video '" + t.video_id + "' appears twice in " +
                             std::string(to_string(corpus.modalities[m])) + " features");
      v.tables.push_back(std::move(t));
    }
  }
  corpus.validate();
  return corpus;
}

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  for (std::size_t m = 0; m < corpus.modalities.size(); ++m) {
    const std::string file = std::string(to_string(corpus.modalities[m])) + ".feat";
    write_feature_file(dir / file, modality_tables(corpus, m));
    manifest << "features " << to_string(corpus.modalities[m]) << ' ' << file << '\n';
  }
  save_annotations(dir / "train.json", corpus.train);
  save_annotations(dir / "test.json", corpus.test);
  manifest << "annotations train train.json\nannotations test test.json\n";
  if (corpus.truth) {
    save_truth(dir / "truth.json", *corpus.truth);
    manifest << "truth truth.json\n";
  }
  write_text(dir / "corpus.txt", manifest.str());
}

// ---------------------------------------------------------------------------
// Statistics

std::map<std::string, std::size_t> word_stats(std::span<const std::string> sentences) {
  std::map<std::string, std::size_t> counts;
  for (auto w : kStatWords) counts[std::string(w)] = 0;
  for (const auto& s : sentences)
    for (const auto& t : tokenize(s))
      if (auto it = counts.find(t); it != counts.end()) ++it->second;
  return counts;
}

}  // namespace mllc
