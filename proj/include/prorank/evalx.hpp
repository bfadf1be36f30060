#pragma once

// Reranking, NDCG and the diagnostic statistics (format success rate,
// relevance accuracy, delta distributions and their AUC, top-k sweeps).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "prorank/bm25.hpp"
#include "prorank/common.hpp"
#include "prorank/corpus.hpp"
#include "prorank/finescore.hpp"
#include "prorank/model.hpp"
#include "prorank/rewards.hpp"
#include "prorank/tokenizer.hpp"

namespace prorank {

enum class GainMode { linear, exponential };
enum class RerankMode { coarse, fine, bm25_only };

inline std::string to_string(RerankMode m) {
  switch (m) {
    case RerankMode::coarse: return "coarse";
    case RerankMode::fine: return "fine";
    case RerankMode::bm25_only: return "bm25-only";
  }
  return "?";
}

inline RerankMode parse_mode(const std::string& s) {
  if (s == "coarse") return RerankMode::coarse;
  if (s == "fine") return RerankMode::fine;
  if (s == "bm25-only" || s == "bm25") return RerankMode::bm25_only;
  throw usage_error("unknown mode '" + s + "' (expected coarse, fine or bm25-only)");
}

struct RankedList {
  std::string query_id;
  std::vector<ScoredDocument> entries;
};

// Linear gains and log2(i + 1) discounts by default. The ideal ordering uses
// every judged document of the query. Returns nullopt when the query has no
// relevant judgment (IDCG = 0).
inline std::optional<double> ndcg_at_k(const RankedList& ranked, const QrelSet& qrels, std::size_t k,
                                       GainMode gain_mode = GainMode::linear) {
  if (k < 1) throw usage_error("ndcg_at_k: k must be >= 1");
  auto gain = [&](int grade) {
    return gain_mode == GainMode::linear ? static_cast<double>(grade) : std::exp2(static_cast<double>(grade)) - 1.0;
  };
  std::vector<int> ideal;
  for (const auto& [doc_id, grade] : qrels.for_query(ranked.query_id)) ideal.push_back(grade);
  std::sort(ideal.rbegin(), ideal.rend());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) idcg += gain(ideal[i]) / std::log2(static_cast<double>(i) + 2.0);
  if (idcg <= 0.0) return std::nullopt;
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranked.entries.size()); ++i) {
    dcg += gain(qrels.grade(ranked.query_id, ranked.entries[i].doc_id)) / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg / idcg;
}

// One cross-encoder evaluation of a (query, document) pair.
struct PairScore {
  double delta = 0.0;
  std::string greedy_text;  // greedily decoded next token
};

// Scores pairs with a policy: one prompt per pair, delta from the last-token
// logits. Results are memoized per (query_id, doc_id).
template <class T>
class PolicyScorer {
 public:
  PolicyScorer(const PolicyState<T>& policy, const Vocabulary& vocab, const PromptTemplate& tmpl,
               std::size_t budget = kDefaultPromptBudget)
      : policy_(policy), vocab_(vocab), tmpl_(tmpl), budget_(std::min(budget, static_cast<std::size_t>(policy.config.max_seq))) {}

  PairScore operator()(const Query& q, const Document& d) {
    const auto key = q.query_id + '\x1f' + d.doc_id;
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    const auto prompt = render_prompt(vocab_, tmpl_, q, d, budget_);
    forward(policy_, std::span<const std::int32_t>(prompt), cache_);
    const std::span<const T> logits(cache_.logits);
    const auto greedy = std::max_element(logits.begin(), logits.end()) - logits.begin();
    PairScore s{relative_score(logits, vocab_), vocab_.token(static_cast<std::int32_t>(greedy))};
    memo_.emplace(key, s);
    return s;
  }

 private:
  const PolicyState<T>& policy_;
  const Vocabulary& vocab_;
  const PromptTemplate& tmpl_;
  std::size_t budget_;
  ForwardCache<T> cache_;
  std::unordered_map<std::string, PairScore> memo_;
};

struct RerankItem {
  ScoredDocument first_stage;
  PairScore score;
};

// Orders candidates by delta (fine) or coarse label (coarse); ties fall back to
// the first-stage score descending, then doc_id ascending.
inline RankedList order_candidates(const std::string& query_id, std::vector<RerankItem> items, RerankMode mode) {
  auto key = [&](const RerankItem& it) {
    return mode == RerankMode::coarse ? static_cast<double>(coarse_from_delta(it.score.delta)) : it.score.delta;
  };
  std::sort(items.begin(), items.end(), [&](const RerankItem& a, const RerankItem& b) {
    const double ka = key(a), kb = key(b);
    if (ka != kb) return ka > kb;
    if (a.first_stage.score != b.first_stage.score) return a.first_stage.score > b.first_stage.score;
    return a.first_stage.doc_id < b.first_stage.doc_id;
  });
  RankedList out{query_id, {}};
  for (const auto& it : items) out.entries.push_back({it.first_stage.doc_id, key(it)});
  return out;
}

template <class Scorer>
RankedList rerank(Scorer& scorer, const Corpus& corpus, const Query& query,
                  const std::vector<ScoredDocument>& candidates, RerankMode mode,
                  std::vector<RerankItem>* scored = nullptr) {
  if (candidates.empty()) throw usage_error("rerank: no candidates");
  std::vector<RerankItem> items;
  for (const auto& c : candidates) items.push_back({c, scorer(query, corpus.document(c.doc_id))});
  if (scored) *scored = items;
  if (mode == RerankMode::bm25_only) {
    std::sort(items.begin(), items.end(),
              [](const RerankItem& a, const RerankItem& b) { return ranks_before(a.first_stage, b.first_stage); });
    RankedList out{query.query_id, {}};
    for (const auto& it : items) out.entries.push_back(it.first_stage);
    return out;
  }
  return order_candidates(query.query_id, std::move(items), mode);
}

struct ClassStats {
  std::size_t count = 0;
  double mean = 0.0;
  std::optional<double> std_dev;  // population std; absent for an empty class
};

struct DeltaRow {
  std::size_t pair_index;
  double delta;
  int label;
};

struct DeltaDistribution {
  std::vector<DeltaRow> rows;
  ClassStats relevant;
  ClassStats irrelevant;
  double min = 0.0;
  double max = 0.0;
};

inline ClassStats class_stats(const std::vector<double>& v) {
  ClassStats s;
  s.count = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - s.mean) * (x - s.mean);
  s.std_dev = std::sqrt(var / static_cast<double>(v.size()));
  return s;
}

inline DeltaDistribution summarize_deltas(std::vector<DeltaRow> rows) {
  DeltaDistribution dist;
  std::vector<double> pos, neg;
  for (const auto& r : rows) (r.label ? pos : neg).push_back(r.delta);
  dist.relevant = class_stats(pos);
  dist.irrelevant = class_stats(neg);
  if (!rows.empty()) {
    auto [lo, hi] = std::minmax_element(rows.begin(), rows.end(),
                                        [](const DeltaRow& a, const DeltaRow& b) { return a.delta < b.delta; });
    dist.min = lo->delta;
    dist.max = hi->delta;
  }
  dist.rows = std::move(rows);
  return dist;
}

template <class Scorer>
DeltaDistribution delta_distribution(Scorer& scorer, const Corpus& corpus, const std::vector<LabeledPair>& pairs) {
  if (pairs.empty()) throw usage_error("delta_distribution: no pairs");
  std::vector<DeltaRow> rows;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto s = scorer(corpus.queries()[pairs[i].query], corpus.documents()[pairs[i].doc]);
    rows.push_back({i, s.delta, pairs[i].label});
  }
  return summarize_deltas(std::move(rows));
}

inline double delta_auc(const std::vector<DeltaRow>& rows) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& r : rows) {
    scores.push_back(r.delta);
    labels.push_back(r.label);
  }
  return auc(std::span<const double>(scores), std::span<const int>(labels));
}

struct FormatAccuracy {
  double format_rate = 0.0;
  double accuracy = 0.0;
};

// Greedy single-token decode per pair; the accuracy denominator counts
// format failures as wrong.
template <class Scorer>
FormatAccuracy format_and_accuracy(Scorer& scorer, const Corpus& corpus, const std::vector<LabeledPair>& pairs) {
  if (pairs.empty()) throw usage_error("format_and_accuracy: no pairs");
  FormatAccuracy fa;
  for (const auto& p : pairs) {
    const auto s = scorer(corpus.queries()[p.query], corpus.documents()[p.doc]);
    fa.format_rate += format_reward(s.greedy_text);
    fa.accuracy += accuracy_reward(s.greedy_text, p.label);
  }
  fa.format_rate /= static_cast<double>(pairs.size());
  fa.accuracy /= static_cast<double>(pairs.size());
  return fa;
}

struct EvalParams {
  std::size_t k_first = 100;
  std::size_t k_eval = 10;
  Bm25Params bm25{};
  GainMode gain = GainMode::linear;
};

struct MetricsReport {
  std::string mode;
  std::size_t k_first = 0;
  std::size_t k_eval = 0;
  std::map<std::string, double> per_query_ndcg;
  double mean_ndcg = 0.0;
  std::size_t excluded_queries = 0;
  std::optional<double> format_success_rate;
  std::optional<double> relevance_accuracy;
  std::optional<double> delta_auc;
  std::optional<ClassStats> delta_relevant;
  std::optional<ClassStats> delta_irrelevant;
  std::vector<RankedList> runs;
  double wall_clock_seconds = 0.0;  // kept out of the JSON so reports stay reproducible
};

namespace detail {
struct NullScorer {
  PairScore operator()(const Query&, const Document&) const { return {}; }
};
}  // namespace detail

// BM25 top-k_first per query, rerank, NDCG@k_eval. In the policy modes the
// scored candidates also feed the format/accuracy and delta statistics.
template <class Scorer>
MetricsReport evaluate_pipeline(const Corpus& corpus, const InvertedIndex& index, Scorer* scorer, RerankMode mode,
                                const EvalParams& params = {}) {
  const auto start = std::chrono::steady_clock::now();
  if (mode != RerankMode::bm25_only && scorer == nullptr) throw usage_error("evaluate: reranking needs a scorer");
  MetricsReport report;
  report.mode = to_string(mode);
  report.k_first = params.k_first;
  report.k_eval = params.k_eval;
  std::vector<const Query*> queries;
  for (const auto& q : corpus.queries()) queries.push_back(&q);
  std::sort(queries.begin(), queries.end(), [](auto a, auto b) { return a->query_id < b->query_id; });

  std::vector<DeltaRow> rows;
  double format = 0.0, accuracy = 0.0;
  double ndcg_sum = 0.0;
  for (const Query* q : queries) {
    const auto candidates = search(index, *q, params.k_first, params.bm25);
    RankedList ranked{q->query_id, candidates};
    if (mode != RerankMode::bm25_only && !candidates.empty()) {
      std::vector<RerankItem> items;
      ranked = rerank(*scorer, corpus, *q, candidates, mode, &items);
      for (const auto& it : items) {
        const int label = binarize(corpus.grade(q->query_id, it.first_stage.doc_id));
        rows.push_back({rows.size(), it.score.delta, label});
        format += format_reward(it.score.greedy_text);
        accuracy += accuracy_reward(it.score.greedy_text, label);
      }
    }
    const auto ndcg = ndcg_at_k(ranked, corpus.qrels(), params.k_eval, params.gain);
    if (ndcg) {
      report.per_query_ndcg[q->query_id] = *ndcg;
      ndcg_sum += *ndcg;
    } else {
      ++report.excluded_queries;
    }
    report.runs.push_back(std::move(ranked));
  }
  if (!report.per_query_ndcg.empty()) report.mean_ndcg = ndcg_sum / static_cast<double>(report.per_query_ndcg.size());
  if (!rows.empty()) {
    report.format_success_rate = format / static_cast<double>(rows.size());
    report.relevance_accuracy = accuracy / static_cast<double>(rows.size());
    const auto dist = summarize_deltas(rows);
    report.delta_relevant = dist.relevant;
    report.delta_irrelevant = dist.irrelevant;
    if (dist.relevant.count > 0 && dist.irrelevant.count > 0) report.delta_auc = delta_auc(dist.rows);
  }
  report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

inline MetricsReport evaluate_bm25(const Corpus& corpus, const InvertedIndex& index, const EvalParams& params = {}) {
  return evaluate_pipeline<detail::NullScorer>(corpus, index, nullptr, RerankMode::bm25_only, params);
}

inline nlohmann::ordered_json class_stats_json(const std::optional<ClassStats>& s) {
  if (!s) return nullptr;
  nlohmann::ordered_json j{{"count", s->count}, {"mean", s->mean}};
  j["std"] = s->std_dev ? nlohmann::ordered_json(*s->std_dev) : nlohmann::ordered_json(nullptr);
  return j;
}

inline nlohmann::ordered_json report_json(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); };
  nlohmann::ordered_json j;
  j["mode"] = r.mode;
  j["k_first"] = r.k_first;
  j["k_eval"] = r.k_eval;
  j["mean_ndcg"] = r.mean_ndcg;
  j["evaluated_queries"] = r.per_query_ndcg.size();
  j["excluded_queries"] = r.excluded_queries;
  j["format_success_rate"] = opt(r.format_success_rate);
  j["relevance_accuracy"] = opt(r.relevance_accuracy);
  j["delta_auc"] = opt(r.delta_auc);
  j["delta_relevant"] = class_stats_json(r.delta_relevant);
  j["delta_irrelevant"] = class_stats_json(r.delta_irrelevant);
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& [qid, v] : r.per_query_ndcg) per[qid] = v;
  j["per_query_ndcg"] = std::move(per);
  return j;
}

inline std::string report_text(const MetricsReport& r) {
  std::ostringstream os;
  auto pct = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string("n/a"); };
  os << "mode:                " << r.mode << '\n'
     << "candidates (k_first): " << r.k_first << '\n'
     << "NDCG@" << r.k_eval << ":             " << format_real(r.mean_ndcg) << " over " << r.per_query_ndcg.size()
     << " queries (" << r.excluded_queries << " excluded)\n"
     << "format success rate: " << pct(r.format_success_rate) << '\n'
     << "relevance accuracy:  " << pct(r.relevance_accuracy) << '\n'
     << "delta AUC:           " << pct(r.delta_auc) << '\n';
  return os.str();
}

inline void write_runs(std::ostream& out, const std::vector<RankedList>& runs, const std::string& tag) {
  for (const auto& r : runs) write_run(out, r.query_id, r.entries, tag);
}

// ---------------------------------------------------------------------------
// Top-k sweep

struct SweepRow {
  std::size_t k = 0;
  std::size_t requested_k = 0;
  double recall = 0.0;
  double ndcg = 0.0;
};

// Mean over queries with at least one relevant document of the fraction of
// relevant documents present in the first-stage top k.
inline double recall_at_k(const Corpus& corpus, const InvertedIndex& index, std::size_t k, const Bm25Params& bm25 = {}) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& q : corpus.queries()) {
    std::size_t relevant = 0;
    for (const auto& [doc_id, grade] : corpus.qrels().for_query(q.query_id)) relevant += binarize(grade);
    if (relevant == 0) continue;
    std::size_t found = 0;
    for (const auto& hit : search(index, q, k, bm25)) found += binarize(corpus.grade(q.query_id, hit.doc_id));
    sum += static_cast<double>(found) / static_cast<double>(relevant);
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

template <class Scorer>
std::vector<SweepRow> topk_sweep(const Corpus& corpus, const InvertedIndex& index, Scorer* scorer, RerankMode mode,
                                 const std::vector<std::size_t>& ks, EvalParams params = {}) {
  if (ks.empty()) throw usage_error("topk_sweep: no k values");
  std::vector<SweepRow> rows;
  for (auto k : ks) {
    if (k < params.k_eval) throw usage_error("topk_sweep: every k must be >= k_eval");
    SweepRow row;
    row.requested_k = k;
    row.k = std::min(k, index.num_docs());
    params.k_first = row.k;
    row.recall = recall_at_k(corpus, index, row.k, params.bm25);
    row.ndcg = evaluate_pipeline(corpus, index, scorer, mode, params).mean_ndcg;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace prorank
