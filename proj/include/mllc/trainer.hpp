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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace mllc {

struct TrainConfig {
  int epochs = 90;
  double lr0 = 0.05;
  int lr_decay_every = 30;
  double lr_decay_factor = 0.1;
  int batch_size = 32;
  int intra_negatives = 1;
  int inter_negatives = 1;
  double mix_ratio = 1.0;  // simple : temporal examples per epoch; 0 keeps the natural mix
  std::uint64_t seed = 1;

  void validate() const;
  static TrainConfig from_key_values(const KeyValues& kv);
  static TrainConfig load(const std::filesystem::path& path) { return from_key_values(KeyValues::load(path)); }
  KeyValues to_key_values() const;
  std::string to_text() const { return to_key_values().to_text(); }
};

/// lr0 * factor^floor(epoch / decay_every).
double lr_at(int epoch, const TrainConfig& cfg);

struct TrainingExample {
  std::size_t video = 0;  // index into Corpus::videos
  std::vector<int> tokens;
  Moment base;
  std::optional<ContextMoment> context;
  TemporalWord word = TemporalWord::none;
};

std::vector<TrainingExample> make_examples(const Corpus& corpus, std::span<const TemporalQuery> queries,
                                           const Vocabulary& vocab);

struct Negatives {
  std::vector<Moment> intra;
  std::vector<std::pair<std::size_t, Moment>> inter;  // (video index, moment)
};

/// Intra negatives: distinct moments of the example's video other than the
/// ground truth. Inter negatives: the ground-truth coordinates in other
/// videos long enough to hold them (and the fixed context, when given).
Negatives sample_negatives(const TrainingExample& example, const Corpus& corpus, int n_intra, int n_inter,
                           std::mt19937_64& rng, const ContextMoment* fixed_context = nullptr);

/// True when the example is scored at its ground-truth context.
bool uses_fixed_context(const ModelConfig& cfg, const TrainingExample& example);

/// Loss of one example against its negatives, built on the graph's tape.
ad::Var example_loss(ScoreGraph& graph, const Corpus& corpus, const TrainingExample& example,
                     const Negatives& negatives);

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0;
  double lr = 0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

/// Fresh model for a corpus: vocabulary from the training sentences and
/// weights drawn from the config seed.
Model init_model(const Corpus& corpus, const ModelConfig& cfg);

/// Per-epoch example order, reproducible from (seed, epoch).
std::vector<std::size_t> epoch_order(std::span<const TrainingExample> examples, const TrainConfig& cfg, int epoch);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Runs epochs history.size() .. cfg.epochs - 1 of minibatch SGD on
/// `model.params`, appending to `history`.
void train(const Corpus& corpus, Model& model, const TrainConfig& cfg, std::vector<EpochRecord>& history,
           const EpochCallback& on_epoch = {});

struct TrainOutcome {
  Model model;
  std::vector<EpochRecord> history;
};

TrainOutcome train(const Corpus& corpus, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                   const EpochCallback& on_epoch = {});

/// `epoch,mean_loss,lr` CSV.
void write_history(const std::filesystem::path& path, std::span<const EpochRecord> history);
std::vector<EpochRecord> read_history(const std::filesystem::path& path);

}  // namespace mllc
