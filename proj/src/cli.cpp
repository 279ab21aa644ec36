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

#include "mllc/cli.hpp"

#include "mllc/error.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#ifndef MLLC_VERSION
#define MLLC_VERSION "unknown"
#endif

namespace mllc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Reads back a JSON output and checks its schema tag.
void validate_json(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error("output " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object() || doc.value("schema", 0) != 1) throw Error("output " + path.string() + " lacks schema 1");
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

double monotonic_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

json metrics_json(const Metrics& m) {
  return {{"r1", m.r1}, {"r5", m.r5}, {"miou", m.miou}, {"count", m.count}};
}

KeyValues load_or_empty(const fs::path& path) { return path.empty() ? KeyValues{} : KeyValues::load(path); }

void begin_run(const RunManifest& manifest, bool force) {
  prepare_output_dir(manifest.out, force);
  write_file(manifest.out / "manifest.txt", manifest.to_text());
}

const TemporalQuery& find_query(const Corpus& corpus, const std::string& id, std::string* split) {
  for (const char* name : {"train", "test"})
    for (const auto& q : corpus.split(name))
      if (q.id == id) {
        if (split) *split = name;
        return q;
      }
  throw ArgumentError("unknown query id '" + id + "'");
}

// Per-segment features for template corpora: every segment averages a
// prototype per sentence whose moment covers it, plus noise.
void attach_template_features(Corpus& corpus, const SyntheticCorpusConfig& cfg,
                              std::span<const BaseAnnotation> annotations) {
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::map<std::string, std::array<Vector, 2>> prototypes;
  std::map<std::string, std::vector<const BaseAnnotation*>> by_video;
  for (const auto& a : annotations) {
    by_video[a.video_id].push_back(&a);
    const std::string key = as_clause(a.sentence);
    if (prototypes.count(key)) continue;
    auto& p = prototypes[key];
    for (auto& v : p) {
      v.resize(cfg.feature_dim);
      for (Index k = 0; k < v.size(); ++k) v[k] = unit(rng);
    }
  }
  corpus.modalities = {Modality::rgb, Modality::flow};
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
  for (const auto& [vid, anns] : by_video) {
    int n = cfg.n_segments;
    for (const auto* a : anns) n = std::max(n, a->moment.end + 1);
    Video video{vid, n, {}};
    for (std::size_t m = 0; m < 2; ++m) {
      SegmentFeatureTable table{vid, corpus.modalities[m], Matrix::Zero(n, cfg.feature_dim)};
      for (int s = 0; s < n; ++s) {
        int covering = 0;
        for (const auto* a : anns)
          if (a->moment.start <= s && s <= a->moment.end) {
            table.features.row(s) += prototypes.at(as_clause(a->sentence))[m].transpose();
            ++covering;
          }
        if (covering) table.features.row(s) /= covering;
        for (Index k = 0; k < table.features.cols(); ++k) table.features(s, k) += noise(rng);
      }
      video.tables.push_back(std::move(table));
    }
    corpus.videos.push_back(std::move(video));
  }
}

std::vector<TemporalQuery> template_split(std::span<const BaseAnnotation> annotations, const std::string& tag) {
  std::vector<TemporalQuery> out;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const auto& a = annotations[i];
    out.push_back(make_query(a.video_id + ":" + tag + std::to_string(i), a.video_id, as_sentence(a.sentence),
                             TemporalWord::none, a.moment));
  }
  for (auto& q : generate_tempo_tl(annotations)) out.push_back(std::move(q));
  return out;
}

ModelConfig with_overrides(const fs::path& base, const std::map<std::string, std::string>& overrides,
                           std::optional<std::uint64_t> seed) {
  KeyValues kv = load_or_empty(base);
  for (const auto& [k, v] : overrides) kv.set(k, v);
  if (seed) kv.set("seed", std::to_string(*seed));
  return ModelConfig::from_key_values(kv);
}

TrainConfig train_with_overrides(const fs::path& base, const std::map<std::string, std::string>& overrides,
                                 std::optional<std::uint64_t> seed, std::optional<int> epochs) {
  KeyValues kv = load_or_empty(base);
  for (const auto& [k, v] : overrides) kv.set(k, v);
  if (seed) kv.set("seed", std::to_string(*seed));
  if (epochs) kv.set("epochs", std::to_string(*epochs));
  return TrainConfig::from_key_values(kv);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_on(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string cell_dir_name(std::size_t index, const std::string& label) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02zu-", index + 1);
  std::string slug;
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c))) slug += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else if (!slug.empty() && slug.back() != '-') slug += '-';
  }
  while (!slug.empty() && slug.back() == '-') slug.pop_back();
  return buf + slug;
}

void write_reports(const fs::path& dir, std::span<const MetricsReport> reports) {
  write_file(dir / "metrics.json", reports_json(reports));
  write_file(dir / "table.txt", reports_table(reports));
  validate_json(dir / "metrics.json");
}

}  // namespace

std::string version() { return MLLC_VERSION; }

std::string RunManifest::to_text() const {
  std::ostringstream ss;
  ss << "command = " << command << '\n';
  ss << "version = " << version << '\n';
  ss << "seed = " << seed << '\n';
  ss << "out = " << out.generic_string() << '\n';
  for (const auto& [role, path] : inputs) ss << "input." << role << " = " << path << '\n';
  return ss.str();
}

RunClock::RunClock() : started_(utc_now()), t0_(monotonic_seconds()) {}

void RunClock::write(const fs::path& dir) const {
  json doc;
  doc["schema"] = 1;
  doc["started"] = started_;
  doc["finished"] = utc_now();
  doc["wall_seconds"] = monotonic_seconds() - t0_;
  write_file(dir / "run_meta.json", doc.dump(2) + "\n");
}

void prepare_output_dir(const fs::path& dir, bool force) {
  if (dir.empty()) throw ArgumentError("an output directory is required");
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir)) throw ArgumentError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force)
      throw ArgumentError("output directory " + dir.string() + " already exists; pass --force to overwrite");
  }
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".write_probe";
  { std::ofstream out(probe); if (!out) throw Error("output directory " + dir.string() + " is not writable"); }
  fs::remove(probe, ec);
}

void check_compatible(const Model& model, const Corpus& corpus) {
  const ModelShape shape = shape_of(model.params);
  const auto dims = corpus.feature_dims();
  for (std::size_t m = 0; m < shape.modalities.size(); ++m) {
    const auto it = std::find_if(dims.begin(), dims.end(), [&](const auto& d) { return d.first == shape.modalities[m]; });
    if (it == dims.end())
      throw DimensionError("corpus has no " + std::string(to_string(shape.modalities[m])) + " features");
    if (it->second != shape.feature_dims[m])
      throw DimensionError("model expects " + std::to_string(shape.feature_dims[m]) + "-dim " +
                           std::string(to_string(shape.modalities[m])) + " features, corpus has " +
                           std::to_string(it->second));
  }
}

// ---------------------------------------------------------------------------
// gen

Corpus cmd_gen(const GenOptions& opt) {
  RunClock clock;
  KeyValues kv = load_or_empty(opt.config);
  if (opt.seed) kv.set("seed", std::to_string(*opt.seed));
  const SyntheticCorpusConfig cfg = SyntheticCorpusConfig::from_key_values(kv);

  RunManifest manifest{"gen", version(), cfg.seed, opt.out, {}};
  if (!opt.config.empty()) manifest.inputs.emplace_back("config", opt.config.generic_string());
  if (!opt.tl_train.empty()) manifest.inputs.emplace_back("tl_train", opt.tl_train.generic_string());
  if (!opt.tl_test.empty()) manifest.inputs.emplace_back("tl_test", opt.tl_test.generic_string());
  if (opt.tl_test.empty() && !opt.tl_train.empty()) throw ArgumentError("--tl-train needs --tl");
  begin_run(manifest, opt.force);

  Corpus corpus;
  if (opt.tl_test.empty()) {
    corpus = generate_synthetic(cfg);
  } else {
    const auto test = load_base_annotations(opt.tl_test);
    std::vector<BaseAnnotation> train;
    if (!opt.tl_train.empty()) train = load_base_annotations(opt.tl_train);
    std::vector<BaseAnnotation> all = train;
    all.insert(all.end(), test.begin(), test.end());
    attach_template_features(corpus, cfg, all);
    corpus.train = template_split(train, "a");
    corpus.test = template_split(test, "b");
    corpus.truth = truth_from_annotations(all);
    corpus.reindex();
  }
  corpus.validate();
  save_corpus(opt.out, corpus);
  for (const char* f : {"train.json", "test.json"}) validate_json(opt.out / f);
  if (corpus.truth) validate_json(opt.out / "truth.json");
  const Corpus reread = load_corpus(opt.out / "corpus.txt");
  if (reread.videos.size() != corpus.videos.size() || reread.train.size() != corpus.train.size() ||
      reread.test.size() != corpus.test.size())
    throw Error("written corpus does not read back");
  clock.write(opt.out);
  return corpus;
}

// ---------------------------------------------------------------------------
// train

TrainOutcome cmd_train(const TrainOptions& opt, std::ostream& log) {
  RunClock clock;
  fs::path train_cfg_path = opt.train_config;
  if (train_cfg_path.empty() && !opt.resume.empty() && fs::exists(opt.resume / "train.cfg"))
    train_cfg_path = opt.resume / "train.cfg";
  const TrainConfig train_cfg = train_with_overrides(train_cfg_path, {}, opt.seed, opt.epochs);

  std::optional<Model> resumed;
  std::vector<EpochRecord> history;
  ModelConfig model_cfg;
  if (!opt.resume.empty()) {
    resumed = Model::load(opt.resume);
    history = read_history(opt.resume / "history.csv");
    model_cfg = resumed->config;
    if (!opt.model_config.empty() && with_overrides(opt.model_config, {}, opt.seed) != model_cfg)
      throw ConfigError("--config differs from the configuration of the resumed model");
  } else {
    model_cfg = with_overrides(opt.model_config, {}, opt.seed);
  }

  RunManifest manifest{"train", version(), train_cfg.seed, opt.out, {}};
  if (!opt.model_config.empty()) manifest.inputs.emplace_back("model_config", opt.model_config.generic_string());
  if (!train_cfg_path.empty()) manifest.inputs.emplace_back("train_config", train_cfg_path.generic_string());
  manifest.inputs.emplace_back("corpus", opt.corpus.generic_string());
  if (!opt.resume.empty()) manifest.inputs.emplace_back("resume", opt.resume.generic_string());
  begin_run(manifest, opt.force);

  const Corpus corpus = load_corpus(opt.corpus);
  Model model = resumed ? std::move(*resumed) : init_model(corpus, model_cfg);
  check_compatible(model, corpus);
  if (static_cast<int>(history.size()) > train_cfg.epochs)
    throw ConfigError("resumed history already holds " + std::to_string(history.size()) + " epochs, more than epochs=" +
                      std::to_string(train_cfg.epochs));

  train(corpus, model, train_cfg, history, [&](const EpochRecord& r) {
    log << "epoch " << r.epoch << " loss " << format_real(r.mean_loss) << " lr " << format_real(r.lr) << '\n';
  });

  model.save(opt.out);
  write_file(opt.out / "train.cfg", train_cfg.to_text());
  write_history(opt.out / "history.csv", history);

  const Model check = Model::load(opt.out);
  const auto a = to_named_tensors(check.params), b = to_named_tensors(model.params);
  if (check.config != model.config || a.size() != b.size() || !(check.vocab == model.vocab))
    throw Error("written model does not read back");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].name != b[i].name || !(a[i].tensor == b[i].tensor))
      throw Error("written checkpoint tensor " + a[i].name + " does not read back");
  if (read_history(opt.out / "history.csv") != history) throw Error("written history does not read back");
  clock.write(opt.out);
  return {std::move(model), std::move(history)};
}

// ---------------------------------------------------------------------------
// eval

std::vector<MetricsReport> cmd_eval(const EvalOptions& opt, std::ostream& log) {
  RunClock clock;
  const Model model = Model::load(opt.checkpoint);
  RunManifest manifest{"eval", version(), model.config.seed, opt.out, {}};
  manifest.inputs.emplace_back("checkpoint", opt.checkpoint.generic_string());
  manifest.inputs.emplace_back("corpus", opt.corpus.generic_string());
  manifest.inputs.emplace_back("split", opt.split);
  begin_run(manifest, opt.force);

  const Corpus corpus = load_corpus(opt.corpus);
  check_compatible(model, corpus);
  const auto& queries = corpus.split(opt.split);

  std::vector<MetricsReport> reports;
  const auto latent = evaluate_queries(model, corpus, queries);
  reports.push_back(metrics_report(as_evaluated(latent), "Model"));
  if (opt.gt_context) {
    const auto gt = evaluate_queries(model, corpus, queries, ContextEval::gt_context);
    reports.push_back(metrics_report(as_evaluated(gt), "Context Sup. Test"));
  }
  if (opt.frequency_prior) {
    const auto prior = frequency_prior_baseline(corpus.train);
    reports.push_back(metrics_report(evaluate_prior(prior, corpus, queries), "Frequency Prior"));
  }
  write_reports(opt.out, reports);

  if (opt.context_delta) {
    json doc;
    doc["schema"] = 1;
    doc["deltas"] = json::array();
    for (const auto& d : context_conditioned_delta(model, corpus, queries)) {
      json j{{"word", std::string(to_string(d.word))}, {"full_count", d.full_count}, {"subset_count", d.subset_count}};
      j["r1_delta"] = d.r1_delta ? json(*d.r1_delta) : json(nullptr);
      j["miou_delta"] = d.miou_delta ? json(*d.miou_delta) : json(nullptr);
      doc["deltas"].push_back(std::move(j));
    }
    write_file(opt.out / "context_delta.json", doc.dump(2) + "\n");
    validate_json(opt.out / "context_delta.json");
  }
  if (opt.fragments) {
    const FragmentTable t = context_fragment_eval(model, corpus, queries);
    json doc;
    doc["schema"] = 1;
    doc["context_fragment"] = metrics_json(t.context_fragment);
    doc["full_sentence"] = metrics_json(t.full_sentence);
    doc["evaluated"] = t.evaluated;
    doc["excluded"] = t.excluded;
    write_file(opt.out / "fragments.json", doc.dump(2) + "\n");
    validate_json(opt.out / "fragments.json");
  }
  log << reports_table(reports);
  clock.write(opt.out);
  return reports;
}

// ---------------------------------------------------------------------------
// ablate

AblationGrid parse_grid(const std::string& text, const std::string& source, const fs::path& base_dir) {
  AblationGrid grid;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> labels;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(source, lineno, "expected 'key = value'");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key == "model_config") {
      grid.model_config = base_dir / value;
    } else if (key == "train_config") {
      grid.train_config = base_dir / value;
    } else if (key == "row") {
      const auto parts = split_on(value, ';');
      AblationRow row;
      row.label = parts.front();
      if (row.label.empty()) throw ParseError(source, lineno, "row needs a label");
      if (!labels.insert(row.label).second) throw ParseError(source, lineno, "duplicate row label '" + row.label + "'");
      for (std::size_t i = 1; i < parts.size(); ++i) {
        if (parts[i].empty()) continue;
        const auto peq = parts[i].find('=');
        if (peq == std::string::npos) throw ParseError(source, lineno, "expected key=value in '" + parts[i] + "'");
        const std::string k = trim(std::string_view(parts[i]).substr(0, peq));
        const std::string v = trim(std::string_view(parts[i]).substr(peq + 1));
        if (k == "baseline") {
          if (v != "frequency_prior") throw ParseError(source, lineno, "unknown baseline '" + v + "'");
          row.frequency_prior = true;
        } else if (k == "eval") {
          if (v == "gt_context") row.eval = ContextEval::gt_context;
          else if (v == "latent") row.eval = ContextEval::latent;
          else throw ParseError(source, lineno, "unknown eval mode '" + v + "'");
        } else if (k.rfind("train.", 0) == 0) {
          row.train[k.substr(6)] = v;
        } else {
          row.model[k] = v;
        }
      }
      grid.rows.push_back(std::move(row));
    } else {
      throw ParseError(source, lineno, "unknown grid key '" + key + "'");
    }
  }
  if (grid.rows.empty()) throw ParseError(source, 0, "grid has no rows");
  return grid;
}

AblationGrid load_grid(const fs::path& path) { return parse_grid(read_file(path), path.string(), path.parent_path()); }

std::vector<MetricsReport> cmd_ablate(const AblateOptions& opt, std::ostream& log) {
  RunClock clock;
  const AblationGrid grid = load_grid(opt.grid);
  // Every cell is configured up front so a bad cell fails before training.
  std::vector<std::pair<ModelConfig, TrainConfig>> cells;
  for (std::size_t i = 0; i < grid.rows.size(); ++i) {
    const auto& row = grid.rows[i];
    try {
      cells.emplace_back(with_overrides(grid.model_config, row.model, opt.seed),
                         train_with_overrides(grid.train_config, row.train, opt.seed, opt.epochs));
    } catch (const Error& e) {
      throw Error("cell " + std::to_string(i + 1) + " (" + row.label + "): " + e.what());
    }
  }
  RunManifest manifest{"ablate", version(), cells.front().second.seed, opt.out, {}};
  manifest.inputs.emplace_back("grid", opt.grid.generic_string());
  manifest.inputs.emplace_back("corpus", opt.corpus.generic_string());
  begin_run(manifest, opt.force);

  const Corpus corpus = load_corpus(opt.corpus);
  std::vector<MetricsReport> reports;
  for (std::size_t i = 0; i < grid.rows.size(); ++i) {
    const auto& row = grid.rows[i];
    try {
      const fs::path dir = opt.out / "cells" / cell_dir_name(i, row.label);
      fs::create_directories(dir);
      if (row.frequency_prior) {
        const auto prior = frequency_prior_baseline(corpus.train);
        reports.push_back(metrics_report(evaluate_prior(prior, corpus, corpus.test), row.label));
      } else {
        const auto& [model_cfg, train_cfg] = cells[i];
        log << "cell " << i + 1 << " " << row.label << '\n';
        auto outcome = train(corpus, model_cfg, train_cfg);
        outcome.model.save(dir);
        write_file(dir / "train.cfg", train_cfg.to_text());
        write_history(dir / "history.csv", outcome.history);
        const auto ev = evaluate_queries(outcome.model, corpus, corpus.test, row.eval);
        reports.push_back(metrics_report(as_evaluated(ev), row.label));
      }
      write_reports(dir, std::span(&reports.back(), 1));
    } catch (const Error& e) {
      throw Error("cell " + std::to_string(i + 1) + " (" + row.label + "): " + e.what());
    }
  }
  write_reports(opt.out, reports);
  log << reports_table(reports);
  clock.write(opt.out);
  return reports;
}

// ---------------------------------------------------------------------------
// inspect

std::pair<std::string, std::string> timeline_strip(int n_segments, const Moment& base, const ContextMoment& context) {
  std::string b, c;
  const auto regions = context.regions();
  for (int s = 0; s < n_segments; ++s) {
    b += (base.start <= s && s <= base.end) ? "■" : "·";
    const bool in_ctx = std::any_of(regions.begin(), regions.end(), [&](const Moment& r) { return r.start <= s && s <= r.end; });
    c += in_ctx ? "▲" : "·";
  }
  return {b, c};
}

std::string cmd_inspect(const InspectOptions& opt) {
  const Model model = Model::load(opt.checkpoint);
  const Corpus corpus = load_corpus(opt.corpus);
  check_compatible(model, corpus);
  std::string split;
  const TemporalQuery& q = find_query(corpus, opt.query, &split);
  const Video& video = corpus.video(q.video_id);
  const auto ranking = rank_moments(model, video, model.encode_tokens(q.tokens));
  const std::size_t k = std::min<std::size_t>(5, ranking.size());

  if (opt.json) {
    json doc;
    doc["schema"] = 1;
    doc["query"] = {{"id", q.id}, {"split", split}, {"sentence", q.sentence}, {"word", std::string(to_string(q.word))},
                    {"base", to_string(q.base)}};
    doc["query"]["context"] = q.context ? json(to_string(*q.context)) : json(nullptr);
    doc["n_segments"] = video.n_segments;
    doc["top"] = json::array();
    for (std::size_t i = 0; i < k; ++i) {
      const auto& r = ranking[i];
      const auto [bs, cs] = timeline_strip(video.n_segments, r.moment, r.chosen_context);
      doc["top"].push_back({{"rank", i + 1}, {"moment", to_string(r.moment)}, {"score", r.score},
                            {"context", to_string(r.chosen_context)}, {"base_strip", bs}, {"context_strip", cs}});
    }
    return doc.dump(2) + "\n";
  }

  std::ostringstream ss;
  ss << "query " << q.id << " (" << split << ", " << to_string(q.word) << "): " << q.sentence << '\n';
  ss << "ground truth " << to_string(q.base);
  if (q.context) ss << ", context " << to_string(*q.context);
  ss << '\n';
  for (std::size_t i = 0; i < k; ++i) {
    const auto& r = ranking[i];
    const auto [bs, cs] = timeline_strip(video.n_segments, r.moment, r.chosen_context);
    char score[32];
    std::snprintf(score, sizeof score, "%.6f", r.score);
    ss << i + 1 << ". " << to_string(r.moment) << " score " << score << " context " << to_string(r.chosen_context)
       << (r.moment == q.base ? "  <- ground truth" : "") << '\n';
    ss << "   base    " << bs << '\n';
    ss << "   context " << cs << '\n';
  }
  return ss.str();
}

// ---------------------------------------------------------------------------
// stats

std::map<std::string, std::size_t> cmd_stats(const StatsOptions& opt, std::ostream& log) {
  const auto queries = load_annotations(opt.annotations);
  std::vector<std::string> sentences;
  for (const auto& q : queries) sentences.push_back(q.sentence);
  const auto counts = word_stats(sentences);
  log << "sentences " << sentences.size() << '\n';
  for (auto w : kStatWords) log << w << ' ' << counts.at(std::string(w)) << '\n';
  if (!opt.out.empty()) {
    json doc;
    doc["schema"] = 1;
    doc["sentences"] = sentences.size();
    doc["counts"] = counts;
    write_file(opt.out, doc.dump(2) + "\n");
    validate_json(opt.out);
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Entry point

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal moment retrieval with latent context"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic corpus or template queries over annotations");
  g->add_option("--config", gen.config, "Synthetic corpus config");
  g->add_option("--tl", gen.tl_test, "Localized sentences to expand into template queries (test split)");
  g->add_option("--tl-train", gen.tl_train, "Localized sentences for the training split");
  g->add_option("--seed", seed, "Generator seed");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_flag("--force", gen.force, "Overwrite an existing output directory");

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", tr.model_config, "Model config");
  t->add_option("--train-config", tr.train_config, "Training config");
  t->add_option("--corpus", tr.corpus, "Corpus manifest")->required();
  t->add_option("--resume", tr.resume, "Continue a previous train output directory");
  t->add_option("--seed", seed, "Seed for initialization and sampling");
  t->add_option("--epochs", epochs, "Override the number of epochs");
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_flag("--force", tr.force, "Overwrite an existing output directory");

  EvalOptions ev;
  std::string baseline;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("--checkpoint", ev.checkpoint, "Model directory or checkpoint file")->required();
  e->add_option("--corpus", ev.corpus, "Corpus manifest")->required();
  e->add_option("--split", ev.split, "Split to evaluate")->check(CLI::IsMember({"train", "test"}));
  e->add_flag("--gt-context", ev.gt_context, "Add a row scored at the ground-truth context");
  e->add_option("--baseline", baseline, "Add a model-free row")->check(CLI::IsMember({"frequency-prior"}));
  e->add_flag("--context-delta", ev.context_delta, "Write the context-localized subset deltas");
  e->add_flag("--fragments", ev.fragments, "Write the context fragment comparison");
  e->add_option("--out", ev.out, "Output directory")->required();
  e->add_flag("--force", ev.force, "Overwrite an existing output directory");

  AblateOptions ab;
  auto* a = app.add_subcommand("ablate", "Train and evaluate every row of an ablation grid");
  a->add_option("--config,--grid", ab.grid, "Ablation grid")->required();
  a->add_option("--corpus", ab.corpus, "Corpus manifest")->required();
  a->add_option("--seed", seed, "Shared seed for every cell");
  a->add_option("--epochs", epochs, "Override the number of epochs of every cell");
  a->add_option("--out", ab.out, "Output directory")->required();
  a->add_flag("--force", ab.force, "Overwrite an existing output directory");

  InspectOptions in;
  std::string inspect_out;
  auto* i = app.add_subcommand("inspect", "Show the top moments and chosen contexts of one query");
  i->add_option("--checkpoint", in.checkpoint, "Model directory or checkpoint file")->required();
  i->add_option("--corpus", in.corpus, "Corpus manifest")->required();
  i->add_option("--query", in.query, "Query id")->required();
  i->add_flag("--json", in.json, "Print JSON");
  i->add_option("--out", inspect_out, "Also write the output to this file");

  StatsOptions st;
  auto* s = app.add_subcommand("stats", "Count temporal words in an annotation file");
  s->add_option("--annotations,--config", st.annotations, "Annotation JSON")->required();
  s->add_option("--out", st.out, "JSON output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    return app.exit(ex, out, err);
  }

  try {
    if (*g) {
      gen.seed = seed;
      const Corpus c = cmd_gen(gen);
      out << "wrote " << c.videos.size() << " videos, " << c.train.size() << " train and " << c.test.size()
          << " test queries to " << gen.out.string() << '\n';
    } else if (*t) {
      tr.seed = seed;
      tr.epochs = epochs;
      cmd_train(tr, out);
    } else if (*e) {
      ev.frequency_prior = !baseline.empty();
      cmd_eval(ev, out);
    } else if (*a) {
      ab.seed = seed;
      ab.epochs = epochs;
      cmd_ablate(ab, out);
    } else if (*i) {
      const std::string text = cmd_inspect(in);
      out << text;
      if (!inspect_out.empty()) write_file(inspect_out, text);
    } else if (*s) {
      cmd_stats(st, out);
    }
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace mllc::cli
