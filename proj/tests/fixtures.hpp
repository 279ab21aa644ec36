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
#include "test_support.hpp"

#include <random>
#include <string>
#include <vector>

namespace mllc::testing {

/// A model configuration with every width set to `w`.
inline ModelConfig tiny_config(int w = 3) {
  ModelConfig c;
  c.visual_hidden = c.visual_dim = c.embed_dim = c.lstm_hidden = c.joint_dim = c.sim_hidden = w;
  return c;
}

inline Video random_video(const std::string& id, int n_segments, int feature_dim, std::mt19937& rng,
                          int n_modalities = 2) {
  Video v{id, n_segments, {}};
  const Modality mods[2] = {Modality::rgb, Modality::flow};
  for (int m = 0; m < n_modalities; ++m)
    v.tables.push_back({id, mods[m], random_matrix(n_segments, feature_dim, rng)});
  return v;
}

inline ModelParams random_params(const ModelConfig& cfg, int feature_dim, int vocab, std::uint64_t seed,
                                 int n_modalities = 2) {
  ModelShape shape;
  const Modality mods[2] = {Modality::rgb, Modality::flow};
  for (int m = 0; m < n_modalities; ++m) {
    shape.modalities.push_back(mods[m]);
    shape.feature_dims.push_back(feature_dim);
  }
  shape.vocab_size = vocab;
  std::mt19937_64 rng(seed);
  return init_params(cfg, shape, rng);
}

/// Two-modality corpus of random videos with no queries.
inline Corpus random_corpus(int n_videos, int n_segments, int feature_dim, std::mt19937& rng) {
  Corpus c;
  c.modalities = {Modality::rgb, Modality::flow};
  for (int v = 0; v < n_videos; ++v) c.videos.push_back(random_video("v" + std::to_string(v), n_segments, feature_dim, rng));
  c.reindex();
  return c;
}

inline std::vector<int> random_tokens(int vocab, std::mt19937& rng) {
  std::vector<int> t(std::uniform_int_distribution<std::size_t>(1, 6)(rng));
  for (auto& x : t) x = std::uniform_int_distribution<int>(0, vocab - 1)(rng);
  return t;
}

}  // namespace mllc::testing
