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

#include "mllc/encoders.hpp"
#include "mllc/model.hpp"
#include "mllc/temporal.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mllc {

enum class TemporalWord { none, before, after, then, while_ };

inline constexpr std::array<TemporalWord, 5> kTemporalWords{TemporalWord::none, TemporalWord::before,
                                                             TemporalWord::after, TemporalWord::then,
                                                             TemporalWord::while_};

/// "none", "before", "after", "then", "while".
std::string_view to_string(TemporalWord w);
TemporalWord parse_temporal_word(std::string_view s);

/// A localized description of one moment.
struct BaseAnnotation {
  std::string video_id;
  std::string sentence;
  Moment moment;

  friend bool operator==(const BaseAnnotation&, const BaseAnnotation&) = default;
};

/// A sentence with its ground-truth base moment and, for relational queries,
/// the context moment it refers to.
struct TemporalQuery {
  std::string id;
  std::string video_id;
  std::string sentence;
  std::vector<std::string> tokens;
  TemporalWord word = TemporalWord::none;
  Moment base;
  std::optional<ContextMoment> context;
  /// Per-annotator moments; empty means the base is the only annotation.
  std::vector<Moment> annotators;

  std::vector<Moment> annotations() const { return annotators.empty() ? std::vector<Moment>{base} : annotators; }

  friend bool operator==(const TemporalQuery&, const TemporalQuery&) = default;
};

TemporalQuery make_query(std::string id, std::string video_id, std::string sentence, TemporalWord word, Moment base,
                         std::optional<ContextMoment> context = std::nullopt);

/// Base clause and context clause of a before/after sentence.
struct SentenceFragments {
  std::string base;
  std::string context;
};

/// Splits "X before Y", "Before Y, X", "X after Y", "After Y, X" and
/// "X then Y" at the temporal word; for "then" the context is Y. nullopt for
/// other words or when the split is not clean.
std::optional<SentenceFragments> split_fragments(std::string_view sentence, TemporalWord word);

// ---------------------------------------------------------------------------
// Template language

/// Trims trailing punctuation and lower-cases a leading capital unless the
/// first word is all upper case.
std::string as_clause(std::string_view text);
/// Upper-cases the first letter and ends the sentence with a period.
std::string as_sentence(std::string_view text);

/// Template queries over touching moment pairs (X ends right before Y starts)
/// within each video: two before, two after and one then query per pair.
std::vector<TemporalQuery> generate_tempo_tl(std::span<const BaseAnnotation> annotations);

/// Number of touching ordered pairs generate_tempo_tl pairs up.
std::size_t count_adjacent_pairs(std::span<const BaseAnnotation> annotations);

// ---------------------------------------------------------------------------
// Symbolic ground truth and the brute-force oracle

/// Event phrases present in each segment, per video.
struct SymbolicGroundTruth {
  std::map<std::string, std::vector<std::vector<std::string>>> events;

  friend bool operator==(const SymbolicGroundTruth&, const SymbolicGroundTruth&) = default;
};

struct OracleAnswer {
  Moment base;
  ContextMoment context;  // meaningless for simple queries
};

/// Truth for real annotations: each sentence, as a clause, marks the
/// segments of its moment.
SymbolicGroundTruth truth_from_annotations(std::span<const BaseAnnotation> annotations);

/// Searches every (base, context) moment pair of the query's video for the
/// unique base that satisfies the sentence read against the truth:
///  - none: a maximal run of segments showing X;
///  - before / after: an X run strictly preceding / following a Y run;
///  - then: an X run immediately followed by a Y run, base is their union;
///  - while: an X run overlapping a Y run.
/// Throws Error when the sentence does not parse or no unique answer exists.
OracleAnswer oracle_answer(const TemporalQuery& query, const SymbolicGroundTruth& truth);
Moment oracle_localize(const TemporalQuery& query, const SymbolicGroundTruth& truth);

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SyntheticCorpusConfig {
  int n_videos = 600;
  int n_test_videos = 100;  // the last n_test_videos videos form the test split
  int n_segments = 6;
  int n_events = 30;
  double repeat_prob = 0.5;     // chance a video shows one event twice
  double ambiguous_focus = 0.5;  // chance a relational query targets the repeated event
  double while_prob = 0.5;      // chance a video carries one overlaid event
  double noise_sigma = 0.1;
  int feature_dim = 32;
  int queries_per_video = 8;
  // Relative query mix.
  double mix_simple = 4;
  double mix_before = 1;
  double mix_after = 1;
  double mix_then = 1;
  double mix_while = 1;
  std::uint64_t seed = 7;

  void validate() const;
  static SyntheticCorpusConfig from_key_values(const KeyValues& kv);
  static SyntheticCorpusConfig load(const std::filesystem::path& path) { return from_key_values(KeyValues::load(path)); }
  KeyValues to_key_values() const;
};

/// Built-in event phrases; none contains a temporal word.
std::span<const std::string_view> event_phrases();

// ---------------------------------------------------------------------------
// Corpus

struct Corpus {
  std::vector<Modality> modalities;
  std::vector<Video> videos;
  std::vector<TemporalQuery> train;
  std::vector<TemporalQuery> test;
  std::optional<SymbolicGroundTruth> truth;

  const Video& video(std::string_view id) const;
  std::size_t video_index(std::string_view id) const;
  bool has_video(std::string_view id) const { return index_.count(std::string(id)) != 0; }
  const std::vector<TemporalQuery>& split(std::string_view name) const;
  std::vector<std::pair<Modality, int>> feature_dims() const;

  void reindex();
  /// Every query's video exists, moments fit, and every video has a table per modality.
  void validate() const;

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

Corpus generate_synthetic(const SyntheticCorpusConfig& cfg);

// ---------------------------------------------------------------------------
// Files

/// Records {video_id, sentence, start_seg, end_seg, temporal_word?,
/// ctx_regions?, annotators?, id?}, either as a bare array or under
/// "annotations". Saved files use {"schema": 1, "annotations": [...]}.
std::vector<TemporalQuery> load_annotations(const std::filesystem::path& path);
void save_annotations(const std::filesystem::path& path, std::span<const TemporalQuery> queries);
std::vector<BaseAnnotation> load_base_annotations(const std::filesystem::path& path);

SymbolicGroundTruth load_truth(const std::filesystem::path& path);
void save_truth(const std::filesystem::path& path, const SymbolicGroundTruth& truth);

/// Tables of one modality across videos, in corpus order.
std::vector<SegmentFeatureTable> modality_tables(const Corpus& corpus, std::size_t modality_slot);

/// Manifest lines: `features <modality> <file>`, `annotations <split> <file>`,
/// `truth <file>`; paths relative to the manifest.
Corpus load_corpus(const std::filesystem::path& manifest);
/// Writes features, annotations, truth and `corpus.txt` into `dir`.
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);

// ---------------------------------------------------------------------------
// Statistics

inline constexpr std::array<std::string_view, 7> kStatWords{"before", "after", "then", "while",
                                                            "yet",    "during", "until"};

/// Whole-token, case-insensitive counts of the temporal words.
std::map<std::string, std::size_t> word_stats(std::span<const std::string> sentences);

}  // namespace mllc
