#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "oracles.hpp"
#include "prorank/bm25.hpp"
#include "prorank/corpus.hpp"
#include "prorank/evalx.hpp"
#include "prorank/finescore.hpp"
#include "prorank/grpo.hpp"
#include "prorank/model.hpp"
#include "prorank/tokenizer.hpp"
#include "prorank/training.hpp"

namespace fixtures {

using namespace prorank;

struct World {
  Corpus corpus;
  PromptTemplate tmpl;
  Vocabulary vocab;
  ModelConfig model;
};

// Small synthetic corpus with the default architecture.
inline World small_world(std::uint64_t seed = 5) {
  SyntheticConfig sc;
  sc.num_topics = 2;
  sc.docs_per_topic = 12;
  sc.queries_per_topic = 5;
  sc.vocab_words = 120;
  sc.alias_words = 4;
  sc.seed = seed;
  World w{generate_synthetic(sc), PromptTemplate(), {}, {}};
  w.vocab = build_vocab(w.corpus, w.tmpl, 2048);
  w.model.vocab_size = static_cast<int>(w.vocab.size());
  w.model.init_seed = seed;
  return w;
}

// Init weights are small, so logits are nearly flat; extra noise makes the
// gradient check exercise a less degenerate point.
inline PolicyState<double> noisy_policy(const ModelConfig& mc, std::uint64_t seed, double scale = 0.05) {
  auto p = init_model<double>(mc);
  Rng rng(seed);
  for (auto& v : p.params) v += scale * normal01(rng);
  return p;
}

inline std::vector<TokenIds> sample_prompts(const World& w, std::size_t n, std::uint64_t seed,
                                            std::vector<int>* labels = nullptr) {
  PairSampler sampler(w.corpus);
  Rng rng(seed);
  const auto pairs = sampler.batch(rng, n);
  if (labels) {
    labels->clear();
    for (const auto& p : pairs) labels->push_back(p.label);
  }
  return render_pairs(w.corpus, pairs, w.vocab, w.tmpl, kDefaultPromptBudget);
}

// Finite-difference check of the BCE objective's parameter gradient.
inline oracle::FdResult fd_bce(std::size_t n_params, std::uint64_t seed) {
  const auto w = small_world(seed);
  auto policy = noisy_policy(w.model, seed + 1);
  std::vector<int> labels;
  const auto prompts = sample_prompts(w, 4, seed + 2, &labels);
  // Forward-only evaluation of the same loss, written out from its definition.
  auto loss = [&](const PolicyState<double>& p) {
    double total = 0.0;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      const auto logits = forward_last_logits(p, std::span<const std::int32_t>(prompts[i]));
      const double prob = 1.0 / (1.0 + std::exp(-relative_score(std::span<const double>(logits), w.vocab)));
      total -= labels[i] ? std::log(prob) : std::log(1.0 - prob);
    }
    return total / static_cast<double>(prompts.size());
  };
  const auto lg = bce_loss_gradients(policy, std::span<const TokenIds>(prompts), std::span<const int>(labels), w.vocab);
  return oracle::fd_check(policy, loss, lg.grads, n_params, seed + 3);
}

// Finite-difference check of -J. Rollout tokens mix "0", "1" and arbitrary
// words; pi_old and pi_ref are distinct perturbations of the policy, so the
// ratios spread across and beyond the clip window and the KL term is active.
inline oracle::FdResult fd_grpo(std::size_t n_params, std::uint64_t seed) {
  const auto w = small_world(seed);
  auto policy = noisy_policy(w.model, seed + 1);
  const auto old_policy = noisy_policy(w.model, seed + 4, 0.08);
  const auto ref_policy = noisy_policy(w.model, seed + 5, 0.08);
  std::vector<int> labels;
  const auto prompts = sample_prompts(w, 3, seed + 2, &labels);
  GrpoConfig cfg;
  cfg.kl_beta = 0.3;
  Rng rng(seed + 6);
  std::vector<GroupRollout> groups;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    GroupRollout g;
    g.prompt_ids = prompts[i];
    g.label = labels[i];
    const auto logits = forward_last_logits(old_policy, std::span<const std::int32_t>(prompts[i]));
    const auto logp = log_softmax(std::span<const double>(logits));
    std::vector<double> rewards;
    for (int j = 0; j < 6; ++j) {
      Rollout r;
      r.token = j % 3 == 0 ? w.vocab.one_id()
                : j % 3 == 1 ? w.vocab.zero_id()
                             : static_cast<std::int32_t>(uniform_index(rng, w.vocab.size()));
      r.text = w.vocab.token(r.token);
      r.logprob_old = logp[static_cast<std::size_t>(r.token)];
      r.reward = combined_reward(r.text, g.label);
      rewards.push_back(r.reward.total + 0.3 * normal01(rng));
      g.rollouts.push_back(r);
    }
    g.advantages = compute_advantages(std::span<const double>(rewards), cfg.advantage_std_floor);
    attach_reference(ref_policy, g);
    groups.push_back(std::move(g));
  }
  auto loss = [&](const PolicyState<double>& p) {
    double j = 0.0;
    for (const auto& g : groups) j += grpo_objective(p, ref_policy, g, cfg);
    return -j / static_cast<double>(groups.size());
  };
  const auto lg = grpo_loss_gradients(policy, groups, cfg);
  return oracle::fd_check(policy, loss, lg.grads, n_params, seed + 3);
}

struct RandomCorpus {
  std::vector<Document> docs;
  std::vector<oracle::Doc> plain;
};

// Small alphabet and repeated documents make score ties common.
inline RandomCorpus random_corpus(Rng& rng, std::size_t max_docs = 20) {
  RandomCorpus c;
  const std::size_t n = 1 + uniform_index(rng, max_docs);
  for (std::size_t i = 0; i < n; ++i) {
    std::string text;
    if (i > 0 && uniform01(rng) < 0.2) {
      text = c.docs[uniform_index(rng, i)].text;
    } else {
      const std::size_t len = 1 + uniform_index(rng, 8);
      for (std::size_t j = 0; j < len; ++j) text += std::string(j ? " " : "") + static_cast<char>('a' + uniform_index(rng, 6));
    }
    const std::string id = "d" + std::to_string(uniform_index(rng, 1000)) + "_" + std::to_string(i);
    c.docs.push_back({id, text});
    c.plain.push_back({id, text});
  }
  return c;
}

inline std::string random_query(Rng& rng) {
  std::string q;
  const std::size_t len = 1 + uniform_index(rng, 4);
  for (std::size_t j = 0; j < len; ++j) q += std::string(j ? " " : "") + static_cast<char>('a' + uniform_index(rng, 8));
  return q;
}

struct OracleTally {
  std::size_t checked = 0;
  std::size_t mismatches = 0;
  double max_error = 0.0;
};

// search() against the brute-force oracle; any difference in ids, order or
// score bits counts as a mismatch.
inline OracleTally bm25_vs_oracle(std::size_t corpora, std::size_t queries_each, std::uint64_t seed) {
  OracleTally t;
  Rng rng(seed);
  for (std::size_t c = 0; c < corpora; ++c) {
    const auto rc = random_corpus(rng);
    const auto idx = build_index(rc.docs);
    for (std::size_t q = 0; q < queries_each; ++q) {
      const auto query = random_query(rng);
      const std::size_t k = 1 + uniform_index(rng, 25);
      const auto got = search(idx, query, k);
      const auto want = oracle::bm25_search(rc.plain, query, k);
      bool same = got.size() == want.size();
      for (std::size_t i = 0; same && i < got.size(); ++i) {
        same = got[i].doc_id == want[i].id && got[i].score == want[i].score;
      }
      ++t.checked;
      if (!same) ++t.mismatches;
    }
  }
  return t;
}

inline RankedList ranked(const std::string& qid, const std::vector<std::string>& ids) {
  RankedList r{qid, {}};
  double s = static_cast<double>(ids.size());
  for (const auto& id : ids) r.entries.push_back({id, s--});
  return r;
}

// ndcg_at_k against the exhaustive oracle on random instances with at most
// six judged documents. Undefined-vs-defined disagreements are mismatches.
inline OracleTally ndcg_vs_oracle(std::size_t instances, std::uint64_t seed) {
  OracleTally t;
  Rng rng(seed);
  for (std::size_t trial = 0; trial < instances; ++trial) {
    const std::size_t judged = 1 + uniform_index(rng, 6);
    const std::size_t pool = judged + uniform_index(rng, 5);
    QrelSet qrels;
    std::vector<int> judged_grades;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < pool; ++i) ids.push_back("d" + std::to_string(i));
    shuffle(ids, rng);
    for (std::size_t i = 0; i < judged; ++i) {
      const int g = static_cast<int>(uniform_index(rng, 4));
      qrels.set("q", ids[i], g);
      judged_grades.push_back(g);
    }
    shuffle(ids, rng);
    ids.resize(1 + uniform_index(rng, ids.size()));
    const std::size_t k = 1 + uniform_index(rng, 8);
    std::vector<int> grades;
    for (const auto& id : ids) grades.push_back(qrels.grade("q", id));
    const auto got = ndcg_at_k(ranked("q", ids), qrels, k);
    const double want = oracle::ndcg(grades, judged_grades, k);
    ++t.checked;
    if (std::isnan(want) != !got.has_value()) {
      ++t.mismatches;
      continue;
    }
    if (got) t.max_error = std::max(t.max_error, std::abs(*got - want));
  }
  return t;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("prorank_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fixtures
