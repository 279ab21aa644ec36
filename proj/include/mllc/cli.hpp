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
#include "mllc/eval.hpp"
#include "mllc/model.hpp"
#include "mllc/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mllc::cli {

/// git-describe string baked in at configure time.
std::string version();

/// What a run was asked to do. Written to `manifest.txt` before any compute;
/// timestamps go to `run_meta.json` so the manifest stays reproducible.
struct RunManifest {
  std::string command;
  std::string version;
  std::uint64_t seed = 0;
  std::filesystem::path out;
  std::vector<std::pair<std::string, std::string>> inputs;  // role, path

  std::string to_text() const;
};

/// Wall-clock bookkeeping of one run.
class RunClock {
 public:
  RunClock();
  /// {"schema": 1, "started": ..., "finished": ..., "wall_seconds": ...}.
  void write(const std::filesystem::path& dir) const;

 private:
  std::string started_;
  double t0_;
};

/// Creates `dir`; an existing non-empty directory is an error unless `force`.
void prepare_output_dir(const std::filesystem::path& dir, bool force);

/// Throws DimensionError when the corpus's modalities or feature sizes do not
/// match the model's.
void check_compatible(const Model& model, const Corpus& corpus);

// ---------------------------------------------------------------------------
// gen

struct GenOptions {
  std::filesystem::path config;  // synthetic corpus config; empty for defaults
  std::filesystem::path tl_test;   // base annotations to expand into template queries
  std::filesystem::path tl_train;  // optional training annotations for template mode
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;
  bool force = false;
};

/// Synthetic mode writes a generated corpus. Template mode reads localized
/// sentences, keeps them as simple queries, adds the before/after/then
/// template queries and attaches random segment features.
Corpus cmd_gen(const GenOptions& opt);

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::filesystem::path model_config;
  std::filesystem::path train_config;
  std::filesystem::path corpus;
  std::filesystem::path resume;  // previous train output directory
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::filesystem::path out;
  bool force = false;
};

TrainOutcome cmd_train(const TrainOptions& opt, std::ostream& log);

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path corpus;
  std::string split = "test";
  bool gt_context = false;
  bool frequency_prior = false;
  bool context_delta = false;
  bool fragments = false;
  std::filesystem::path out;
  bool force = false;
};

/// Rows: the model in latent mode, then "Context Sup. Test" and
/// "Frequency Prior" when requested.
std::vector<MetricsReport> cmd_eval(const EvalOptions& opt, std::ostream& log);

// ---------------------------------------------------------------------------
// ablate

/// One row of an ablation grid: model and training overrides, or the
/// model-free prior.
struct AblationRow {
  std::string label;
  std::map<std::string, std::string> model;
  std::map<std::string, std::string> train;
  bool frequency_prior = false;
  ContextEval eval = ContextEval::latent;
};

struct AblationGrid {
  std::filesystem::path model_config;  // shared defaults, may be empty
  std::filesystem::path train_config;
  std::vector<AblationRow> rows;
};

/// Lines `model_config = path`, `train_config = path` and
/// `row = Label ; key=value ; ...`. Row keys set model settings;
/// `train.<key>` sets training settings, `eval=gt_context` evaluates at the
/// ground-truth context and `baseline=frequency_prior` makes a prior row.
AblationGrid parse_grid(const std::string& text, const std::string& source,
                        const std::filesystem::path& base_dir = {});
AblationGrid load_grid(const std::filesystem::path& path);

struct AblateOptions {
  std::filesystem::path grid;
  std::filesystem::path corpus;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::filesystem::path out;
  bool force = false;
};

std::vector<MetricsReport> cmd_ablate(const AblateOptions& opt, std::ostream& log);

// ---------------------------------------------------------------------------
// inspect

struct InspectOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path corpus;
  std::string query;
  bool json = false;
};

/// Two strip lines of n_segments cells: ■ marks the base, ▲ the context.
std::pair<std::string, std::string> timeline_strip(int n_segments, const Moment& base, const ContextMoment& context);

/// Top-5 candidates with their chosen contexts, as text or JSON.
std::string cmd_inspect(const InspectOptions& opt);

// ---------------------------------------------------------------------------
// stats

struct StatsOptions {
  std::filesystem::path annotations;
  std::filesystem::path out;  // optional JSON file
};

std::map<std::string, std::size_t> cmd_stats(const StatsOptions& opt, std::ostream& log);

/// Parses argv and dispatches. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mllc::cli
