#include <chrono>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "prorank/pipeline.hpp"

namespace {

using namespace prorank;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "JSON run config");
  app->add_option("--seed", f.seed, "global seed (overrides the config)");
  app->add_option("--out", f.out, "output directory (overrides output_dir)");
  app->add_option("--data", f.data, "corpus directory with docs.jsonl, queries.jsonl, qrels.tsv");
}

// Flags win over the file.
RunConfig resolve(const CommonFlags& f) {
  RunConfig cfg = f.config.empty() ? default_run_config() : load_run_config(f.config);
  if (f.seed) cfg.apply_seed(*f.seed);
  if (!f.out.empty()) cfg.output_dir = f.out;
  if (!f.data.empty()) cfg.data.dir = f.data;
  cfg.validate();
  return cfg;
}

class Stopwatch {
 public:
  explicit Stopwatch(std::string what) : what_(std::move(what)), t0_(std::chrono::steady_clock::now()) {}
  ~Stopwatch() {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    std::cerr << what_ << ": " << format_real(s) << " s wall clock\n";
  }

 private:
  std::string what_;
  std::chrono::steady_clock::time_point t0_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prorank: two-stage LLM-style reranker trained from scratch"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  CommonFlags gen_f, idx_f, train_f, eval_f, an_f, sw_f;

  auto* gen = app.add_subcommand("gen-data", "write the synthetic corpus");
  add_common(gen, gen_f);

  auto* idx = app.add_subcommand("build-index", "index the corpus and write the first-stage run");
  add_common(idx, idx_f);

  auto* train = app.add_subcommand("train", "train one stage");
  add_common(train, train_f);
  std::string stage = "warmup-grpo", init_path, train_name;
  bool no_warmup = false;
  train->add_option("--stage", stage, "warmup-grpo | warmup-sft | fine")->capture_default_str();
  train->add_option("--init", init_path, "parent checkpoint");
  train->add_flag("--no-warmup", no_warmup, "fine stage from the initial policy");
  train->add_option("--name", train_name, "output file stem");

  auto* eval = app.add_subcommand("evaluate", "rerank the eval split and write run + metrics");
  add_common(eval, eval_f);
  std::string eval_mode = "fine", eval_ckpt, eval_name, eval_split;
  eval->add_option("--mode", eval_mode, "coarse | fine | bm25-only")->capture_default_str();
  eval->add_option("--checkpoint", eval_ckpt, "policy checkpoint");
  eval->add_option("--name", eval_name, "output file stem");
  eval->add_option("--split", eval_split, "train | dev | test");

  auto* an = app.add_subcommand("analyze", "delta distributions and format/accuracy table");
  add_common(an, an_f);
  std::vector<std::string> an_ckpts;
  an->add_option("checkpoints", an_ckpts, "checkpoint paths, or 'init'");

  auto* sw = app.add_subcommand("sweep", "recall and NDCG over first-stage depths");
  add_common(sw, sw_f);
  std::string sw_mode = "fine", sw_ckpt;
  std::vector<std::size_t> sw_ks;
  sw->add_option("--mode", sw_mode, "coarse | fine | bm25-only")->capture_default_str();
  sw->add_option("--checkpoint", sw_ckpt, "policy checkpoint");
  sw->add_option("--ks", sw_ks, "first-stage depths, comma-separated (default: eval.sweep_ks)")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorKind::usage);
  }

  try {
    if (gen->parsed()) {
      Stopwatch sw_("gen-data");
      const auto cfg = resolve(gen_f);
      const auto files = cmd_gen_data(cfg, cfg.output_dir);
      for (const auto& p : files) std::cout << p.string() << '\n';
    } else if (idx->parsed()) {
      Stopwatch sw_("build-index");
      const auto ws = make_workspace(resolve(idx_f));
      const auto s = cmd_build_index(ws, ws.config.output_dir);
      std::cout << "docs " << s.num_docs << " terms " << s.num_terms << " avg_doc_len " << format_real(s.avg_doc_len)
                << '\n';
    } else if (train->parsed()) {
      Stopwatch sw_("train " + stage);
      const auto ws = make_workspace(resolve(train_f));
      TrainOptions opt;
      opt.stage = parse_stage(stage);
      if (!init_path.empty()) opt.init = init_path;
      opt.no_warmup = no_warmup;
      opt.name = train_name;
      const auto o = cmd_train(ws, opt, ws.config.output_dir);
      std::cout << "checkpoint " << o.checkpoint.string() << "\nfingerprint " << o.fingerprint << "\nlineage "
                << o.lineage << '\n';
    } else if (eval->parsed()) {
      Stopwatch sw_("evaluate " + eval_mode);
      auto cfg = resolve(eval_f);
      if (!eval_split.empty()) cfg.eval.split = eval_split;
      const auto ws = make_workspace(cfg);
      EvaluateOptions opt;
      opt.mode = parse_mode(eval_mode);
      if (!eval_ckpt.empty()) opt.checkpoint = eval_ckpt;
      opt.name = eval_name;
      std::cout << report_text(cmd_evaluate(ws, opt, ws.config.output_dir));
    } else if (an->parsed()) {
      Stopwatch sw_("analyze");
      const auto ws = make_workspace(resolve(an_f));
      for (const auto& r : cmd_analyze(ws, an_ckpts, ws.config.output_dir)) {
        std::cout << r.label << " format " << format_real(r.format_accuracy.format_rate) << " accuracy "
                  << format_real(r.format_accuracy.accuracy) << " delta_auc " << format_real(r.delta_auc) << '\n';
      }
    } else if (sw->parsed()) {
      Stopwatch sw_("sweep");
      const auto ws = make_workspace(resolve(sw_f));
      std::optional<std::filesystem::path> ck;
      if (!sw_ckpt.empty()) ck = sw_ckpt;
      const auto o = cmd_sweep(ws, ck, parse_mode(sw_mode), sw_ks.empty() ? ws.config.eval.sweep_ks : sw_ks,
                               ws.config.output_dir);
      for (const auto& w : o.warnings) std::cerr << "warning: " << w << '\n';
      for (const auto& r : o.rows) {
        std::cout << "k " << r.k << " recall " << format_real(r.recall) << " ndcg " << format_real(r.ndcg) << '\n';
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(ErrorKind::data);
  }
  return 0;
}
