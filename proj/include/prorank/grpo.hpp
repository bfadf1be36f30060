#pragma once

// Stage 1: prompt warmup with group relative policy optimization, plus the
// supervised warmup used as its baseline.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "prorank/common.hpp"
#include "prorank/corpus.hpp"
#include "prorank/model.hpp"
#include "prorank/optim.hpp"
#include "prorank/rewards.hpp"
#include "prorank/tokenizer.hpp"
#include "prorank/training.hpp"

namespace prorank {

struct GrpoConfig {
  int group_size = 8;
  double clip_epsilon = 0.2;
  double kl_beta = 0.04;
  double rollout_temperature = 1.0;
  double lr = 1e-4;
  int steps = 300;
  int batch_prompts = 16;
  double advantage_std_floor = 1e-8;
  double weight_decay = 0.0;
  RewardWeights reward_weights{};
  std::size_t prompt_budget = kDefaultPromptBudget;
  std::uint64_t seed = 0;

  void validate() const {
    if (group_size < 2) throw usage_error("grpo: group_size must be >= 2");
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw usage_error("grpo: clip_epsilon must lie in (0,1)");
    if (!(kl_beta >= 0.0)) throw usage_error("grpo: kl_beta must be >= 0");
    if (!(rollout_temperature > 0.0)) throw usage_error("grpo: rollout_temperature must be > 0");
    if (!(lr > 0.0)) throw usage_error("grpo: lr must be > 0");
    if (steps < 0 || batch_prompts < 1) throw usage_error("grpo: steps >= 0 and batch_prompts >= 1 required");
    if (!(advantage_std_floor > 0.0)) throw usage_error("grpo: advantage_std_floor must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const GrpoConfig& c) {
  j = nlohmann::json{{"group_size", c.group_size},
                     {"clip_epsilon", c.clip_epsilon},
                     {"kl_beta", c.kl_beta},
                     {"rollout_temperature", c.rollout_temperature},
                     {"lr", c.lr},
                     {"steps", c.steps},
                     {"batch_prompts", c.batch_prompts},
                     {"advantage_std_floor", c.advantage_std_floor},
                     {"weight_decay", c.weight_decay},
                     {"format_weight", c.reward_weights.format},
                     {"accuracy_weight", c.reward_weights.accuracy},
                     {"prompt_budget", c.prompt_budget},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, GrpoConfig& c) {
  c.group_size = j.value("group_size", c.group_size);
  c.clip_epsilon = j.value("clip_epsilon", c.clip_epsilon);
  c.kl_beta = j.value("kl_beta", c.kl_beta);
  c.rollout_temperature = j.value("rollout_temperature", c.rollout_temperature);
  c.lr = j.value("lr", c.lr);
  c.steps = j.value("steps", c.steps);
  c.batch_prompts = j.value("batch_prompts", c.batch_prompts);
  c.advantage_std_floor = j.value("advantage_std_floor", c.advantage_std_floor);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.reward_weights.format = j.value("format_weight", c.reward_weights.format);
  c.reward_weights.accuracy = j.value("accuracy_weight", c.reward_weights.accuracy);
  c.prompt_budget = j.value("prompt_budget", c.prompt_budget);
  c.seed = j.value("seed", c.seed);
}

struct Rollout {
  std::int32_t token = 0;
  std::string text;
  double logprob_old = 0.0;
  double logprob_ref = std::numeric_limits<double>::quiet_NaN();
  RewardBreakdown reward;
};

struct GroupRollout {
  TokenIds prompt_ids;
  int label = 0;
  std::vector<Rollout> rollouts;
  std::vector<double> advantages;
};

// A_i = (r_i - mean) / max(std, floor) with the population standard deviation.
// A constant reward vector yields exact zeros.
inline std::vector<double> compute_advantages(std::span<const double> rewards, double std_floor) {
  const auto n = rewards.size();
  std::vector<double> adv(n, 0.0);
  if (n == 0) return adv;
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; })) return adv;
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(n);
  const double denom = std::max(std::sqrt(var), std_floor);
  for (std::size_t i = 0; i < n; ++i) adv[i] = (rewards[i] - mean) / denom;
  return adv;
}

inline constexpr double kKlLogRatioClamp = 30.0;

// rho - log(rho) - 1 with rho = pi_ref / pi_theta; non-negative, zero at rho = 1.
inline double kl_estimate(double logp_theta, double logp_ref) {
  const double log_rho = std::clamp(logp_ref - logp_theta, -kKlLogRatioClamp, kKlLogRatioClamp);
  return std::exp(log_rho) - log_rho - 1.0;
}

inline double clipped_surrogate(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

// Group term of the objective,
//   J = 1/G sum_i [ min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i) - beta * kl_i ],
// evaluated from the current policy's last-position logits. When `d_logits`
// is given, `scale * dJ/dlogits` is added into it.
template <class T>
double group_objective(std::span<const T> logits, const GroupRollout& group, const GrpoConfig& cfg,
                       std::span<T> d_logits = {}, double scale = 1.0, double* mean_kl = nullptr) {
  const auto logp = log_softmax(logits);
  const double G = static_cast<double>(group.rollouts.size());
  double J = 0.0;
  double kl_sum = 0.0;
  std::vector<double> probs;
  if (!d_logits.empty()) {
    probs.resize(logp.size());
    for (std::size_t v = 0; v < logp.size(); ++v) probs[v] = std::exp(logp[v]);
  }
  for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
    const auto& r = group.rollouts[i];
    const double A = group.advantages[i];
    const double lp = logp[static_cast<std::size_t>(r.token)];
    const double ratio = std::exp(lp - r.logprob_old);
    const double surrogate = clipped_surrogate(ratio, A, cfg.clip_epsilon);
    const double kl = kl_estimate(lp, r.logprob_ref);
    if (!std::isfinite(ratio) || !std::isfinite(kl)) throw divergence_error("grpo: non-finite ratio or KL term");
    J += (surrogate - cfg.kl_beta * kl) / G;
    kl_sum += kl;
    if (!d_logits.empty()) {
      const double clipped = std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
      double dJ_dlp = (ratio * A <= clipped * A) ? ratio * A : 0.0;
      const double log_rho = r.logprob_ref - lp;
      if (std::abs(log_rho) < kKlLogRatioClamp) dJ_dlp += cfg.kl_beta * (std::exp(log_rho) - 1.0);
      const double c = scale * dJ_dlp / G;
      // d lp / d logits = onehot(token) - softmax
      for (std::size_t v = 0; v < probs.size(); ++v) d_logits[v] -= static_cast<T>(c * probs[v]);
      d_logits[static_cast<std::size_t>(r.token)] += static_cast<T>(c);
    }
  }
  if (mean_kl) *mean_kl = G > 0 ? kl_sum / G : 0.0;
  return J;
}

template <class T>
void attach_reference(const PolicyState<T>& reference, GroupRollout& group) {
  const auto logits = forward_last_logits(reference, std::span<const std::int32_t>(group.prompt_ids));
  const auto logp = log_softmax(std::span<const T>(logits));
  for (auto& r : group.rollouts) r.logprob_ref = logp[static_cast<std::size_t>(r.token)];
}

// Objective value of one group under `policy`, with the reference
// log-probabilities taken from `reference`.
template <class T>
double grpo_objective(const PolicyState<T>& policy, const PolicyState<T>& reference, GroupRollout group,
                      const GrpoConfig& cfg) {
  attach_reference(reference, group);
  const auto logits = forward_last_logits(policy, std::span<const std::int32_t>(group.prompt_ids));
  return group_objective(std::span<const T>(logits), group, cfg);
}

// Loss -mean_g J_g over groups whose reference log-probs are attached, with
// its exact parameter gradient.
template <class T>
LossAndGrads<T> grpo_loss_gradients(const PolicyState<T>& policy, const std::vector<GroupRollout>& groups,
                                    const GrpoConfig& cfg) {
  std::vector<TokenIds> prompts;
  for (const auto& g : groups) prompts.push_back(g.prompt_ids);
  const double inv = 1.0 / static_cast<double>(groups.size());
  return loss_gradients(policy, std::span<const TokenIds>(prompts),
                        [&](std::size_t i, std::span<const T> logits, std::span<T> d_logits) {
                          return -inv * group_objective(logits, groups[i], cfg, d_logits, -inv);
                        });
}

template <class T>
GroupRollout sample_group_from_logits(std::span<const T> logits, TokenIds prompt_ids, int label,
                                      const Vocabulary& vocab, const GrpoConfig& cfg, Rng& rng) {
  GroupRollout g;
  g.prompt_ids = std::move(prompt_ids);
  g.label = label;
  std::vector<double> rewards;
  for (int i = 0; i < cfg.group_size; ++i) {
    const auto s = sample_from_logits(logits, cfg.rollout_temperature, rng);
    Rollout r;
    r.token = s.token;
    r.text = vocab.token(s.token);
    r.logprob_old = s.logprob;
    r.reward = combined_reward(r.text, label, cfg.reward_weights);
    rewards.push_back(r.reward.total);
    g.rollouts.push_back(std::move(r));
  }
  g.advantages = compute_advantages(rewards, cfg.advantage_std_floor);
  return g;
}

// G single-token samples from policy_old at the rollout temperature, scored
// with the combined reward and normalized within the group.
template <class T>
GroupRollout sample_group(const PolicyState<T>& policy_old, const TokenIds& prompt_ids, int label,
                          const Vocabulary& vocab, const GrpoConfig& cfg, Rng& rng) {
  if (prompt_ids.size() > static_cast<std::size_t>(policy_old.config.max_seq)) {
    throw usage_error("prompt longer than max_seq");
  }
  const auto logits = forward_last_logits(policy_old, std::span<const std::int32_t>(prompt_ids));
  return sample_group_from_logits(std::span<const T>(logits), prompt_ids, label, vocab, cfg, rng);
}

inline TrainLog grpo_log() {
  return TrainLog{{"step", "mean_reward", "format_rate", "accuracy", "objective", "mean_kl", "grad_norm"}, {}};
}

// Each step: draw a balanced batch of labeled pairs, snapshot pi_old as the
// current policy, sample one group per prompt, and take a single AdamW step
// ascending the batch-mean objective. The KL reference is the starting policy.
template <class T>
TrainResult<T> train_warmup_grpo(PolicyState<T> policy, const Corpus& train, const PromptTemplate& tmpl,
                                 const Vocabulary& vocab, const GrpoConfig& cfg) {
  cfg.validate();
  TrainLog log = grpo_log();
  if (cfg.steps == 0) return {std::move(policy), std::move(log)};
  const PolicyState<T> reference = policy;
  auto opt = OptimizerState<T>::zeros(policy.params.size());
  const AdamWConfig adam{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  const PairSampler sampler(train);
  Rng rng(mix_seed(cfg.seed, 11));
  const auto budget = prompt_budget_for(policy.config, cfg.prompt_budget);
  const double inv = 1.0 / cfg.batch_prompts;

  ForwardCache<T> cache;
  std::vector<T> d_logits;
  for (int step = 0; step < cfg.steps; ++step) {
    const auto pairs = sampler.batch(rng, static_cast<std::size_t>(cfg.batch_prompts));
    GradientSet<T> grads(policy.params.size(), T(0));
    double objective = 0.0, kl = 0.0, reward = 0.0, format = 0.0, accuracy = 0.0;
    for (const auto& pair : pairs) {
      auto prompt = render_pair(train, pair, vocab, tmpl, budget);
      forward(policy, std::span<const std::int32_t>(prompt), cache);
      // pi_old is the current policy, so its logits double as the sampling distribution.
      auto group = sample_group_from_logits(std::span<const T>(cache.logits), std::move(prompt), pair.label, vocab,
                                            cfg, rng);
      attach_reference(reference, group);
      d_logits.assign(cache.logits.size(), T(0));
      double group_kl = 0.0;
      const double J = group_objective(std::span<const T>(cache.logits), group, cfg, std::span<T>(d_logits), -inv,
                                       &group_kl);
      if (!std::isfinite(J)) throw TrainingDiverged<T>("grpo: non-finite objective", policy, log);
      objective += J * inv;
      kl += group_kl * inv;
      for (const auto& r : group.rollouts) {
        reward += r.reward.total * inv / cfg.group_size;
        format += r.reward.format * inv / cfg.group_size;
        accuracy += r.reward.accuracy * inv / cfg.group_size;
      }
      backward(policy, cache, std::span<const T>(d_logits), grads);
    }
    const double gnorm = l2_norm(grads);
    if (!std::isfinite(gnorm)) throw TrainingDiverged<T>("grpo: non-finite gradient", policy, log);
    adamw_step(policy, grads, opt, adam);
    log.add({static_cast<double>(step), reward, format, accuracy, objective, kl, gnorm});
  }
  return {std::move(policy), std::move(log)};
}

// ---------------------------------------------------------------------------
// Supervised warmup baseline

struct SftConfig {
  double lr = 1e-4;
  int steps = 300;
  int batch_prompts = 16;
  double weight_decay = 0.0;
  std::size_t prompt_budget = kDefaultPromptBudget;
  std::uint64_t seed = 0;

  void validate() const {
    if (steps < 0 || batch_prompts < 1) throw usage_error("sft: steps >= 0 and batch_prompts >= 1 required");
    if (!(lr > 0.0)) throw usage_error("sft: lr must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const SftConfig& c) {
  j = nlohmann::json{{"lr", c.lr},
                     {"steps", c.steps},
                     {"batch_prompts", c.batch_prompts},
                     {"weight_decay", c.weight_decay},
                     {"prompt_budget", c.prompt_budget},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SftConfig& c) {
  c.lr = j.value("lr", c.lr);
  c.steps = j.value("steps", c.steps);
  c.batch_prompts = j.value("batch_prompts", c.batch_prompts);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.prompt_budget = j.value("prompt_budget", c.prompt_budget);
  c.seed = j.value("seed", c.seed);
}

inline TrainLog sft_log() { return TrainLog{{"step", "loss", "format_rate", "accuracy", "grad_norm"}, {}}; }

// Next-token cross-entropy of the gold binary token at the relevance slot,
// with the same batching and optimizer contract as the GRPO warmup.
template <class T>
TrainResult<T> train_warmup_sft(PolicyState<T> policy, const Corpus& train, const PromptTemplate& tmpl,
                                const Vocabulary& vocab, const SftConfig& cfg) {
  cfg.validate();
  TrainLog log = sft_log();
  if (cfg.steps == 0) return {std::move(policy), std::move(log)};
  auto opt = OptimizerState<T>::zeros(policy.params.size());
  const AdamWConfig adam{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  const PairSampler sampler(train);
  Rng rng(mix_seed(cfg.seed, 11));
  const auto budget = prompt_budget_for(policy.config, cfg.prompt_budget);
  const std::int32_t ids[2] = {vocab.zero_id(), vocab.one_id()};
  const double inv = 1.0 / cfg.batch_prompts;

  for (int step = 0; step < cfg.steps; ++step) {
    const auto pairs = sampler.batch(rng, static_cast<std::size_t>(cfg.batch_prompts));
    const auto prompts = render_pairs(train, pairs, vocab, tmpl, budget);
    double format = 0.0, accuracy = 0.0;
    auto lg = loss_gradients(policy, std::span<const TokenIds>(prompts),
                             [&](std::size_t i, std::span<const T> logits, std::span<T> d_logits) {
                               const auto gold = ids[pairs[i].label];
                               const auto logp = log_softmax(logits);
                               for (std::size_t v = 0; v < logp.size(); ++v) {
                                 d_logits[v] = static_cast<T>(inv * std::exp(logp[v]));
                               }
                               d_logits[static_cast<std::size_t>(gold)] -= static_cast<T>(inv);
                               const auto greedy = std::max_element(logits.begin(), logits.end()) - logits.begin();
                               format += (greedy == ids[0] || greedy == ids[1]) ? inv : 0.0;
                               accuracy += (greedy == gold) ? inv : 0.0;
                               return -inv * logp[static_cast<std::size_t>(gold)];
                             });
    const double gnorm = l2_norm(lg.grads);
    if (!std::isfinite(gnorm)) throw TrainingDiverged<T>("sft: non-finite gradient", policy, log);
    adamw_step(policy, lg.grads, opt, adam);
    log.add({static_cast<double>(step), lg.loss, format, accuracy, gnorm});
  }
  return {std::move(policy), std::move(log)};
}

}  // namespace prorank
