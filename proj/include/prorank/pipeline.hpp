#pragma once

// Run configuration plus the command implementations shared by the prorank
// tool and the acceptance suite. Every command is a pure function of the
// resolved config and its input files, and writes a manifest beside its
// outputs.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "prorank/bm25.hpp"
#include "prorank/checkpoint.hpp"
#include "prorank/common.hpp"
#include "prorank/corpus.hpp"
#include "prorank/evalx.hpp"
#include "prorank/finescore.hpp"
#include "prorank/grpo.hpp"
#include "prorank/model.hpp"
#include "prorank/tokenizer.hpp"
#include "prorank/training.hpp"

namespace prorank {

namespace fs = std::filesystem;

struct DataConfig {
  std::string dir;  // BEIR-style directory; empty selects the synthetic generator
  SyntheticConfig synthetic;
};

struct SplitConfig {
  double train = 0.6;
  double dev = 0.2;
  std::uint64_t seed = 13;
};

struct EvalConfig {
  std::size_t k_first = 100;
  std::size_t k_eval = 10;
  std::vector<std::size_t> sweep_ks{10, 20, 50, 100};
  std::size_t analysis_pairs = 400;
  std::string split = "test";
};

struct RunConfig {
  DataConfig data;
  SplitConfig split;
  ModelConfig model;
  std::size_t vocab_max = 4096;
  std::string prompt_template{kDefaultTemplate};
  GrpoConfig grpo;
  SftConfig sft;
  FineTrainConfig fine;
  Bm25Params bm25;
  EvalConfig eval;
  // Component seeds (model init, every trainer) all derive from this one.
  std::uint64_t seed = 1;
  std::string output_dir = "runs/default";

  void apply_seed(std::uint64_t s) {
    seed = s;
    model.init_seed = mix_seed(s, 100);
    grpo.seed = s;
    sft.seed = s;
    fine.seed = s;
  }

  void validate() const {
    if (data.dir.empty()) data.synthetic.validate();
    if (!(split.train > 0.0 && split.dev > 0.0 && split.train + split.dev < 1.0)) {
      throw usage_error("split: fractions must be positive with train + dev < 1");
    }
    if (eval.k_first < 1 || eval.k_eval < 1) throw usage_error("eval: k_first and k_eval must be >= 1");
    if (eval.analysis_pairs < 2) throw usage_error("eval: analysis_pairs must be >= 2");
    if (eval.split != "train" && eval.split != "dev" && eval.split != "test") {
      throw usage_error("eval: split must be train, dev or test");
    }
    if (vocab_max < Vocabulary::kReserved + 2) throw usage_error("vocab_max too small");
    if (!(bm25.k1 >= 0.0) || !(bm25.b >= 0.0 && bm25.b <= 1.0)) throw usage_error("bm25: need k1 >= 0, b in [0,1]");
    if (output_dir.empty()) throw usage_error("output_dir must not be empty");
    PromptTemplate check(prompt_template);
    (void)check;
    grpo.validate();
    sft.validate();
    fine.validate();
  }
};

inline nlohmann::ordered_json to_ordered_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["data"] = {{"dir", c.data.dir}, {"synthetic", nlohmann::json(c.data.synthetic)}};
  j["split"] = {{"train", c.split.train}, {"dev", c.split.dev}, {"seed", c.split.seed}};
  j["model"] = nlohmann::json(c.model);
  j["vocab_max"] = c.vocab_max;
  j["prompt_template"] = c.prompt_template;
  j["grpo"] = nlohmann::json(c.grpo);
  j["sft"] = nlohmann::json(c.sft);
  j["fine"] = nlohmann::json(c.fine);
  j["bm25"] = {{"k1", c.bm25.k1}, {"b", c.bm25.b}};
  j["eval"] = {{"k_first", c.eval.k_first},
               {"k_eval", c.eval.k_eval},
               {"sweep_ks", c.eval.sweep_ks},
               {"analysis_pairs", c.eval.analysis_pairs},
               {"split", c.eval.split}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw usage_error("config: " + where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw usage_error("config: unknown key '" + k + "' in " + where);
  }
}

// Sections with a JSON converter accept exactly the keys their defaults serialize.
template <typename T>
T strict_section(const nlohmann::json& j, const std::string& where) {
  const nlohmann::json defaults = T{};
  if (!j.is_object()) throw usage_error("config: " + where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!defaults.contains(k)) throw usage_error("config: unknown key '" + k + "' in " + where);
  }
  return j.get<T>();
}

}  // namespace detail

// Missing keys keep their defaults; unknown top-level and section keys are
// rejected so typos do not pass silently. The global seed is applied last.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    detail::check_keys(j, "top level",
                       {"data", "split", "model", "vocab_max", "prompt_template", "grpo", "sft", "fine", "bm25", "eval",
                        "seed", "output_dir"});
    if (j.contains("data")) {
      const auto& d = j["data"];
      detail::check_keys(d, "data", {"dir", "synthetic"});
      c.data.dir = d.value("dir", c.data.dir);
      if (d.contains("synthetic")) c.data.synthetic = detail::strict_section<SyntheticConfig>(d["synthetic"], "data.synthetic");
    }
    if (j.contains("split")) {
      const auto& s = j["split"];
      detail::check_keys(s, "split", {"train", "dev", "seed"});
      c.split.train = s.value("train", c.split.train);
      c.split.dev = s.value("dev", c.split.dev);
      c.split.seed = s.value("seed", c.split.seed);
    }
    if (j.contains("model")) c.model = detail::strict_section<ModelConfig>(j["model"], "model");
    c.vocab_max = j.value("vocab_max", c.vocab_max);
    c.prompt_template = j.value("prompt_template", c.prompt_template);
    if (j.contains("grpo")) c.grpo = detail::strict_section<GrpoConfig>(j["grpo"], "grpo");
    if (j.contains("sft")) c.sft = detail::strict_section<SftConfig>(j["sft"], "sft");
    if (j.contains("fine")) c.fine = detail::strict_section<FineTrainConfig>(j["fine"], "fine");
    if (j.contains("bm25")) {
      detail::check_keys(j["bm25"], "bm25", {"k1", "b"});
      c.bm25.k1 = j["bm25"].value("k1", c.bm25.k1);
      c.bm25.b = j["bm25"].value("b", c.bm25.b);
    }
    if (j.contains("eval")) {
      const auto& e = j["eval"];
      detail::check_keys(e, "eval", {"k_first", "k_eval", "sweep_ks", "analysis_pairs", "split"});
      c.eval.k_first = e.value("k_first", c.eval.k_first);
      c.eval.k_eval = e.value("k_eval", c.eval.k_eval);
      c.eval.sweep_ks = e.value("sweep_ks", c.eval.sweep_ks);
      c.eval.analysis_pairs = e.value("analysis_pairs", c.eval.analysis_pairs);
      c.eval.split = e.value("split", c.eval.split);
    }
    c.output_dir = j.value("output_dir", c.output_dir);
    c.apply_seed(j.value("seed", c.seed));
  } catch (const nlohmann::json::exception& e) {
    throw usage_error(std::string("config: ") + e.what());
  }
  return c;
}

inline RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw usage_error("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

inline RunConfig default_run_config() {
  RunConfig c;
  c.apply_seed(c.seed);
  return c;
}

// ---------------------------------------------------------------------------
// Workspace: the corpus, its splits and the vocabulary for one config

struct Workspace {
  RunConfig config;
  Corpus corpus;
  CorpusSplits splits;
  PromptTemplate tmpl;
  Vocabulary vocab;

  const Corpus& split_corpus(const std::string& name) const {
    if (name == "train") return splits.train;
    if (name == "dev") return splits.dev;
    if (name == "test") return splits.test;
    throw usage_error("unknown split " + name);
  }
  const Corpus& eval_corpus() const { return split_corpus(config.eval.split); }

  EvalParams eval_params() const {
    EvalParams p;
    p.k_first = config.eval.k_first;
    p.k_eval = config.eval.k_eval;
    p.bm25 = config.bm25;
    return p;
  }

  std::vector<LabeledPair> analysis_pairs() const {
    return balanced_pairs(eval_corpus(), config.eval.analysis_pairs, config.split.seed);
  }
};

inline Corpus load_run_corpus(const RunConfig& cfg) {
  return cfg.data.dir.empty() ? generate_synthetic(cfg.data.synthetic) : load_corpus_dir(cfg.data.dir);
}

// The vocabulary is rebuilt from the corpus and template (deterministic), and
// the model's vocab_size is filled in or checked against it.
inline Workspace make_workspace(RunConfig cfg) {
  cfg.validate();
  Corpus corpus = load_run_corpus(cfg);
  auto splits = split(corpus, cfg.split.train, cfg.split.dev, cfg.split.seed);
  PromptTemplate tmpl(cfg.prompt_template);
  auto vocab = build_vocab(corpus, tmpl, cfg.vocab_max);
  if (cfg.model.vocab_size == 0) {
    cfg.model.vocab_size = static_cast<int>(vocab.size());
  } else if (cfg.model.vocab_size != static_cast<int>(vocab.size())) {
    throw usage_error("model.vocab_size " + std::to_string(cfg.model.vocab_size) + " does not match the " +
                      std::to_string(vocab.size()) + "-token vocabulary");
  }
  cfg.model.validate();
  return {std::move(cfg), std::move(corpus), std::move(splits), std::move(tmpl), std::move(vocab)};
}

inline PolicyState<float> initial_policy(const Workspace& ws) { return init_model<float>(ws.config.model); }

// ---------------------------------------------------------------------------
// Files and manifests

inline std::string file_fingerprint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot read " + path.string());
  Fnv1a64 h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return hex64(h.digest());
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot write " + path.string());
  out << text;
}

// Config snapshot, input and output fingerprints and tool version. No
// timestamps, so manifests are reproducible too.
inline fs::path write_manifest(const fs::path& out_dir, const std::string& name, const RunConfig& cfg,
                               const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
  nlohmann::ordered_json m;
  m["tool"] = "prorank";
  m["version"] = std::string(kVersion);
  m["command"] = name;
  const auto cfg_json = to_ordered_json(cfg);
  Fnv1a64 h;
  h.update(cfg_json.dump());
  m["config_fingerprint"] = hex64(h.digest());
  m["config"] = cfg_json;
  nlohmann::ordered_json in = nlohmann::ordered_json::object();
  for (const auto& p : inputs) in[p.generic_string()] = file_fingerprint(p);
  m["inputs"] = std::move(in);
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& p : outputs) out[p.filename().generic_string()] = file_fingerprint(p);
  m["outputs"] = std::move(out);
  const auto path = out_dir / ("manifest_" + name + ".json");
  write_text(path, m.dump(2) + "\n");
  return path;
}

inline std::vector<fs::path> corpus_inputs(const RunConfig& cfg) {
  if (cfg.data.dir.empty()) return {};
  const fs::path d(cfg.data.dir);
  return {d / "docs.jsonl", d / "queries.jsonl", d / "qrels.tsv"};
}

// ---------------------------------------------------------------------------
// Commands

inline std::vector<fs::path> cmd_gen_data(const RunConfig& cfg, const fs::path& out) {
  if (!cfg.data.dir.empty()) throw usage_error("gen-data needs a synthetic data config (data.dir is set)");
  cfg.data.synthetic.validate();
  const auto corpus = generate_synthetic(cfg.data.synthetic);
  save_corpus(corpus, out);
  std::vector<fs::path> outputs{out / "docs.jsonl", out / "queries.jsonl", out / "qrels.tsv"};
  outputs.push_back(write_manifest(out, "gen-data", cfg, {}, outputs));
  return outputs;
}

struct IndexSummary {
  std::size_t num_docs = 0;
  std::size_t num_terms = 0;
  double avg_doc_len = 0.0;
};

// Index statistics plus the first-stage run of every query in the corpus.
inline IndexSummary cmd_build_index(const Workspace& ws, const fs::path& out) {
  const auto index = build_index(ws.corpus.documents());
  IndexSummary s{index.num_docs(), index.num_terms(), index.avg_doc_len()};
  nlohmann::ordered_json j{{"num_docs", s.num_docs},
                           {"num_terms", s.num_terms},
                           {"avg_doc_len", s.avg_doc_len},
                           {"k1", ws.config.bm25.k1},
                           {"b", ws.config.bm25.b},
                           {"k_first", ws.config.eval.k_first}};
  write_text(out / "index.json", j.dump(2) + "\n");
  std::ostringstream run;
  std::vector<const Query*> queries;
  for (const auto& q : ws.corpus.queries()) queries.push_back(&q);
  std::sort(queries.begin(), queries.end(), [](auto a, auto b) { return a->query_id < b->query_id; });
  for (const Query* q : queries) write_run(run, q->query_id, search(index, *q, ws.config.eval.k_first, ws.config.bm25), "bm25");
  write_text(out / "bm25.run", run.str());
  write_manifest(out, "build-index", ws.config, corpus_inputs(ws.config), {out / "index.json", out / "bm25.run"});
  return s;
}

enum class Stage { warmup_grpo, warmup_sft, fine };

inline std::string to_string(Stage s) {
  switch (s) {
    case Stage::warmup_grpo: return "warmup-grpo";
    case Stage::warmup_sft: return "warmup-sft";
    case Stage::fine: return "fine";
  }
  return "?";
}

inline Stage parse_stage(const std::string& s) {
  if (s == "warmup-grpo") return Stage::warmup_grpo;
  if (s == "warmup-sft") return Stage::warmup_sft;
  if (s == "fine") return Stage::fine;
  throw usage_error("unknown stage '" + s + "' (expected warmup-grpo, warmup-sft or fine)");
}

struct TrainOptions {
  Stage stage = Stage::warmup_grpo;
  std::optional<fs::path> init;  // parent checkpoint
  bool no_warmup = false;        // fine from the initial policy
  std::string name;              // output file stem; defaults to the stage name
};

struct TrainOutcome {
  fs::path checkpoint;
  fs::path log;
  std::string fingerprint;
  std::string lineage;
  TrainLog train_log;
  double wall_clock_seconds = 0.0;
};

inline PolicyState<float> load_policy(const Workspace& ws, const fs::path& path, CheckpointMeta* meta = nullptr) {
  auto ck = load_checkpoint(path);
  if (!(ck.policy.config == ws.config.model)) {
    throw usage_error("checkpoint " + path.string() + " does not match the model config");
  }
  if (meta) *meta = ck.meta;
  return std::move(ck.policy);
}

// Stage "fine" needs a warmup checkpoint unless no_warmup is set. The new
// checkpoint's lineage is the parent's fingerprint (the initial policy's when
// training from scratch). On divergence the last good policy is saved as
// <name>.last_good.ckpt and the error is rethrown.
inline TrainOutcome cmd_train(const Workspace& ws, const TrainOptions& opt, const fs::path& out) {
  const auto& cfg = ws.config;
  if (opt.stage == Stage::fine && !opt.init && !opt.no_warmup) {
    throw usage_error("stage fine needs --init <warmup checkpoint> (or --no-warmup to train from init)");
  }
  if (opt.no_warmup && opt.stage != Stage::fine) throw usage_error("--no-warmup only applies to stage fine");
  if (opt.no_warmup && opt.init) throw usage_error("--no-warmup and --init are mutually exclusive");

  std::vector<fs::path> inputs = corpus_inputs(cfg);
  PolicyState<float> start;
  if (opt.init) {
    CheckpointMeta parent;
    start = load_policy(ws, *opt.init, &parent);
    if (opt.stage == Stage::fine && parent.stage.rfind("warmup-", 0) != 0) {
      throw usage_error("stage fine expects a warmup checkpoint, got stage '" + parent.stage + "'");
    }
    inputs.push_back(*opt.init);
  } else {
    start = initial_policy(ws);
  }
  const std::string lineage = hex64(start.fingerprint());
  std::string name = opt.name;
  if (name.empty()) name = opt.no_warmup ? "fine-no-warmup" : to_string(opt.stage);

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult<float> result;
  try {
    switch (opt.stage) {
      case Stage::warmup_grpo:
        result = train_warmup_grpo(std::move(start), ws.splits.train, ws.tmpl, ws.vocab, cfg.grpo);
        break;
      case Stage::warmup_sft:
        result = train_warmup_sft(std::move(start), ws.splits.train, ws.tmpl, ws.vocab, cfg.sft);
        break;
      case Stage::fine:
        result = train_finegrained(std::move(start), ws.splits.train, ws.tmpl, ws.vocab, cfg.fine);
        break;
    }
  } catch (const TrainingDiverged<float>& e) {
    fs::create_directories(out);
    save_checkpoint(e.last_good, nullptr, out / (name + ".last_good.ckpt"), {to_string(opt.stage), lineage});
    e.log.write_csv(out / (name + "_log.csv"));
    throw;
  }
  TrainOutcome o;
  o.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  fs::create_directories(out);
  o.checkpoint = out / (name + ".ckpt");
  o.log = out / (name + "_log.csv");
  save_checkpoint(result.policy, nullptr, o.checkpoint, {opt.no_warmup ? "fine-no-warmup" : to_string(opt.stage), lineage});
  result.log.write_csv(o.log);
  save_vocab(ws.vocab, out / "vocab.json");
  o.fingerprint = hex64(result.policy.fingerprint());
  o.lineage = lineage;
  o.train_log = std::move(result.log);
  write_manifest(out, "train_" + name, cfg, inputs, {o.checkpoint, o.log, out / "vocab.json"});
  return o;
}

struct EvaluateOptions {
  RerankMode mode = RerankMode::fine;
  std::optional<fs::path> checkpoint;  // not needed for bm25-only
  std::string name;                    // output file stem; defaults to the mode
};

inline MetricsReport evaluate_policy(const Workspace& ws, const PolicyState<float>* policy, RerankMode mode,
                                     std::optional<std::size_t> k_first = std::nullopt) {
  const auto index = build_index(ws.corpus.documents());
  auto params = ws.eval_params();
  if (k_first) params.k_first = *k_first;
  if (mode == RerankMode::bm25_only) return evaluate_bm25(ws.eval_corpus(), index, params);
  if (!policy) throw usage_error("evaluate: mode " + to_string(mode) + " needs a checkpoint");
  PolicyScorer<float> scorer(*policy, ws.vocab, ws.tmpl, kDefaultPromptBudget);
  return evaluate_pipeline(ws.eval_corpus(), index, &scorer, mode, params);
}

// Writes <name>.run, <name>_metrics.json and <name>_summary.txt.
inline MetricsReport cmd_evaluate(const Workspace& ws, const EvaluateOptions& opt, const fs::path& out) {
  std::vector<fs::path> inputs = corpus_inputs(ws.config);
  std::optional<PolicyState<float>> policy;
  if (opt.mode != RerankMode::bm25_only) {
    if (!opt.checkpoint) throw usage_error("evaluate: mode " + to_string(opt.mode) + " needs --checkpoint");
    policy = load_policy(ws, *opt.checkpoint);
    inputs.push_back(*opt.checkpoint);
  }
  auto report = evaluate_policy(ws, policy ? &*policy : nullptr, opt.mode);
  const std::string name = opt.name.empty() ? to_string(opt.mode) : opt.name;
  fs::create_directories(out);
  std::ostringstream run;
  write_runs(run, report.runs, "prorank-" + to_string(opt.mode));
  const auto run_path = out / (name + ".run");
  const auto json_path = out / (name + "_metrics.json");
  const auto text_path = out / (name + "_summary.txt");
  write_text(run_path, run.str());
  write_text(json_path, report_json(report).dump(2) + "\n");
  write_text(text_path, report_text(report));
  write_manifest(out, "evaluate_" + name, ws.config, inputs, {run_path, json_path, text_path});
  return report;
}

struct AnalysisRow {
  std::string label;
  std::string stage;
  FormatAccuracy format_accuracy;
  double delta_auc = 0.0;
  DeltaDistribution deltas;
};

inline AnalysisRow analyze_policy(const Workspace& ws, const PolicyState<float>& policy, std::string label,
                                  std::string stage) {
  const auto pairs = ws.analysis_pairs();
  PolicyScorer<float> scorer(policy, ws.vocab, ws.tmpl, kDefaultPromptBudget);
  AnalysisRow row{std::move(label), std::move(stage), format_and_accuracy(scorer, ws.eval_corpus(), pairs), 0.0,
                  delta_distribution(scorer, ws.eval_corpus(), pairs)};
  row.delta_auc = delta_auc(row.deltas.rows);
  return row;
}

// `checkpoints` are paths, or "init" for the freshly initialized policy.
// Writes delta_<label>.csv per checkpoint plus format_accuracy.csv and
// analysis.json.
inline std::vector<AnalysisRow> cmd_analyze(const Workspace& ws, const std::vector<std::string>& checkpoints,
                                            const fs::path& out) {
  if (checkpoints.empty()) throw usage_error("analyze needs at least one checkpoint");
  std::vector<fs::path> inputs = corpus_inputs(ws.config);
  std::vector<fs::path> outputs;
  std::vector<AnalysisRow> rows;
  std::set<std::string> labels;
  const auto pairs = ws.analysis_pairs();
  fs::create_directories(out);
  for (const auto& arg : checkpoints) {
    PolicyState<float> policy;
    std::string label, stage;
    if (arg == "init") {
      policy = initial_policy(ws);
      label = stage = "init";
    } else {
      CheckpointMeta meta;
      policy = load_policy(ws, arg, &meta);
      label = fs::path(arg).stem().string();
      stage = meta.stage;
      inputs.push_back(arg);
    }
    for (int k = 2; labels.count(label); ++k) label = fs::path(arg).stem().string() + "_" + std::to_string(k);
    labels.insert(label);
    rows.push_back(analyze_policy(ws, policy, label, stage));

    std::ostringstream csv;
    csv << "pair_index,query_id,doc_id,label,delta\n";
    for (const auto& r : rows.back().deltas.rows) {
      const auto& p = pairs[r.pair_index];
      csv << r.pair_index << ',' << ws.eval_corpus().queries()[p.query].query_id << ','
          << ws.eval_corpus().documents()[p.doc].doc_id << ',' << r.label << ',' << format_real(r.delta) << '\n';
    }
    outputs.push_back(out / ("delta_" + label + ".csv"));
    write_text(outputs.back(), csv.str());
  }

  std::ostringstream table;
  table << "checkpoint,stage,format_success_rate,relevance_accuracy,delta_auc,delta_mean_relevant,delta_mean_irrelevant\n";
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    table << r.label << ',' << r.stage << ',' << format_real(r.format_accuracy.format_rate) << ','
          << format_real(r.format_accuracy.accuracy) << ',' << format_real(r.delta_auc) << ','
          << format_real(r.deltas.relevant.mean) << ',' << format_real(r.deltas.irrelevant.mean) << '\n';
    j.push_back({{"checkpoint", r.label},
                 {"stage", r.stage},
                 {"format_success_rate", r.format_accuracy.format_rate},
                 {"relevance_accuracy", r.format_accuracy.accuracy},
                 {"delta_auc", r.delta_auc},
                 {"delta_relevant", class_stats_json(r.deltas.relevant)},
                 {"delta_irrelevant", class_stats_json(r.deltas.irrelevant)},
                 {"delta_min", r.deltas.min},
                 {"delta_max", r.deltas.max}});
  }
  outputs.push_back(out / "format_accuracy.csv");
  write_text(outputs.back(), table.str());
  outputs.push_back(out / "analysis.json");
  write_text(outputs.back(), j.dump(2) + "\n");
  write_manifest(out, "analyze", ws.config, inputs, outputs);
  return rows;
}

struct SweepOutcome {
  std::vector<SweepRow> rows;
  std::vector<std::string> warnings;
};

// Writes sweep.csv with columns k, recall_at_k, ndcg_at_10 (the NDCG cutoff
// follows eval.k_eval). Requested ks beyond the corpus size are capped with a
// warning.
inline SweepOutcome cmd_sweep(const Workspace& ws, const std::optional<fs::path>& checkpoint, RerankMode mode,
                              const std::vector<std::size_t>& ks, const fs::path& out) {
  std::vector<fs::path> inputs = corpus_inputs(ws.config);
  std::optional<PolicyState<float>> policy;
  if (mode != RerankMode::bm25_only) {
    if (!checkpoint) throw usage_error("sweep: mode " + to_string(mode) + " needs --checkpoint");
    policy = load_policy(ws, *checkpoint);
    inputs.push_back(*checkpoint);
  }
  const auto index = build_index(ws.corpus.documents());
  SweepOutcome o;
  if (policy) {
    PolicyScorer<float> scorer(*policy, ws.vocab, ws.tmpl, kDefaultPromptBudget);
    o.rows = topk_sweep(ws.eval_corpus(), index, &scorer, mode, ks, ws.eval_params());
  } else {
    o.rows = topk_sweep<detail::NullScorer>(ws.eval_corpus(), index, nullptr, mode, ks, ws.eval_params());
  }
  std::ostringstream csv;
  csv << "k,recall_at_k,ndcg_at_" << ws.config.eval.k_eval << '\n';
  for (const auto& r : o.rows) {
    if (r.k != r.requested_k) {
      o.warnings.push_back("k=" + std::to_string(r.requested_k) + " exceeds the corpus size; capped at " +
                           std::to_string(r.k));
    }
    csv << r.k << ',' << format_real(r.recall) << ',' << format_real(r.ndcg) << '\n';
  }
  fs::create_directories(out);
  write_text(out / "sweep.csv", csv.str());
  write_manifest(out, "sweep", ws.config, inputs, {out / "sweep.csv"});
  return o;
}

}  // namespace prorank
