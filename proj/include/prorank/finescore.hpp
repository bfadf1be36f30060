#pragma once

// Stage 2: fine-grained score learning on the relative logit
//   delta = logit("1") - logit("0")
// read at the last prompt position, trained with binary cross-entropy on
// sigmoid(delta). No parameters are added to the model.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "json.hpp"
#include "prorank/common.hpp"
#include "prorank/corpus.hpp"
#include "prorank/model.hpp"
#include "prorank/optim.hpp"
#include "prorank/tokenizer.hpp"
#include "prorank/training.hpp"

namespace prorank {

inline constexpr double kProbClamp = 1e-7;

struct FineScore {
  double delta = 0.0;
  double prob = 0.5;
};

template <class T>
double relative_score(std::span<const T> logits, const Vocabulary& vocab) {
  return static_cast<double>(logits[static_cast<std::size_t>(vocab.one_id())]) -
         static_cast<double>(logits[static_cast<std::size_t>(vocab.zero_id())]);
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double fine_prob(double delta) { return std::clamp(sigmoid(delta), kProbClamp, 1.0 - kProbClamp); }

inline FineScore fine_score(double delta) { return {delta, fine_prob(delta)}; }

inline double bce_loss(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size()) throw usage_error("bce_loss: length mismatch");
  if (probs.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kProbClamp, 1.0 - kProbClamp);
    s += labels[i] ? std::log(p) : std::log(1.0 - p);
  }
  return -s / static_cast<double>(probs.size());
}

// Derivative of one pair's BCE term with respect to delta (zero once the
// probability sits on the clamp boundary).
inline double bce_grad_delta(double delta, int label) {
  const double raw = sigmoid(delta);
  if (raw <= kProbClamp || raw >= 1.0 - kProbClamp) return 0.0;
  return raw - static_cast<double>(label);
}

// 1 iff delta > 0; a tie resolves to 0.
inline int coarse_from_delta(double delta) { return delta > 0.0 ? 1 : 0; }

template <class T>
int coarse_score(std::span<const T> logits, const Vocabulary& vocab) {
  return coarse_from_delta(relative_score(logits, vocab));
}

// Mann-Whitney AUC of scores against binary labels via mid-ranks; ties count
// one half. Throws if either class is empty.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw usage_error("auc: length mismatch");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + j + 1);  // 1-based average of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        rank_sum_pos += mid_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw usage_error("auc needs at least one pair of each label");
  const double np = static_cast<double>(n_pos);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

struct FineTrainConfig {
  double lr = 1e-4;
  int steps = 300;
  int batch_size = 32;
  double weight_decay = 0.0;
  std::size_t prompt_budget = kDefaultPromptBudget;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 1) throw usage_error("fine: batch_size must be >= 1");
    if (steps < 0) throw usage_error("fine: steps must be >= 0");
    if (!(lr > 0.0)) throw usage_error("fine: lr must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const FineTrainConfig& c) {
  j = nlohmann::json{{"lr", c.lr},
                     {"steps", c.steps},
                     {"batch_size", c.batch_size},
                     {"weight_decay", c.weight_decay},
                     {"prompt_budget", c.prompt_budget},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, FineTrainConfig& c) {
  c.lr = j.value("lr", c.lr);
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.prompt_budget = j.value("prompt_budget", c.prompt_budget);
  c.seed = j.value("seed", c.seed);
}

// Mean BCE over a labeled batch with its exact parameter gradient.
template <class T>
LossAndGrads<T> bce_loss_gradients(const PolicyState<T>& policy, std::span<const TokenIds> prompts,
                                   std::span<const int> labels, const Vocabulary& vocab,
                                   std::vector<double>* deltas = nullptr) {
  const auto one = static_cast<std::size_t>(vocab.one_id());
  const auto zero = static_cast<std::size_t>(vocab.zero_id());
  const double inv = 1.0 / static_cast<double>(prompts.size());
  if (deltas) deltas->assign(prompts.size(), 0.0);
  return loss_gradients(policy, prompts, [&](std::size_t i, std::span<const T> logits, std::span<T> d_logits) {
    const double delta = relative_score(logits, vocab);
    if (deltas) (*deltas)[i] = delta;
    const double p = fine_prob(delta);
    const double g = inv * bce_grad_delta(delta, labels[i]);
    d_logits[one] += static_cast<T>(g);
    d_logits[zero] -= static_cast<T>(g);
    return -inv * (labels[i] ? std::log(p) : std::log(1.0 - p));
  });
}

inline TrainLog fine_log() { return TrainLog{{"step", "loss", "train_auc", "grad_norm"}, {}}; }

// Each step draws a balanced batch, scores every prompt by delta and takes one
// AdamW step on the batch BCE. train_auc is the in-batch AUC before the step.
template <class T>
TrainResult<T> train_finegrained(PolicyState<T> policy, const Corpus& train, const PromptTemplate& tmpl,
                                 const Vocabulary& vocab, const FineTrainConfig& cfg) {
  cfg.validate();
  TrainLog log = fine_log();
  if (cfg.steps == 0) return {std::move(policy), std::move(log)};
  auto opt = OptimizerState<T>::zeros(policy.params.size());
  const AdamWConfig adam{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  const PairSampler sampler(train);
  Rng rng(mix_seed(cfg.seed, 12));
  const auto budget = prompt_budget_for(policy.config, cfg.prompt_budget);

  std::vector<double> deltas;
  for (int step = 0; step < cfg.steps; ++step) {
    const auto pairs = sampler.batch(rng, static_cast<std::size_t>(cfg.batch_size));
    const auto prompts = render_pairs(train, pairs, vocab, tmpl, budget);
    std::vector<int> labels;
    for (const auto& p : pairs) labels.push_back(p.label);
    LossAndGrads<T> lg;
    try {
      lg = bce_loss_gradients(policy, std::span<const TokenIds>(prompts), std::span<const int>(labels), vocab,
                              &deltas);
    } catch (const Error& e) {
      throw TrainingDiverged<T>(std::string("fine: ") + e.what(), policy, log);
    }
    const double gnorm = l2_norm(lg.grads);
    if (!std::isfinite(gnorm)) throw TrainingDiverged<T>("fine: non-finite gradient", policy, log);
    double batch_auc = 0.5;
    if (std::count(labels.begin(), labels.end(), 1) > 0 && std::count(labels.begin(), labels.end(), 0) > 0) {
      batch_auc = auc(std::span<const double>(deltas), std::span<const int>(labels));
    }
    adamw_step(policy, lg.grads, opt, adam);
    log.add({static_cast<double>(step), lg.loss, batch_auc, gnorm});
  }
  return {std::move(policy), std::move(log)};
}

}  // namespace prorank
