#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance binary. None of them call into the code they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "prorank/model.hpp"

namespace oracle {

inline std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

struct Doc {
  std::string id;
  std::string text;  // lowercase words separated by single spaces
};

struct Hit {
  std::string id;
  double score;
};

// Score every document straight from the formula, then stable-sort a list
// pre-sorted by id. Only positive scores are kept.
inline std::vector<Hit> bm25_search(std::vector<Doc> docs, const std::string& query, std::size_t k, double k1 = 1.2,
                                    double b = 0.75) {
  std::sort(docs.begin(), docs.end(), [](const Doc& a, const Doc& c) { return a.id < c.id; });
  const double n = static_cast<double>(docs.size());
  std::vector<std::vector<std::string>> toks;
  double total = 0.0;
  for (const auto& d : docs) {
    toks.push_back(split_ws(d.text));
    total += static_cast<double>(toks.back().size());
  }
  const double avgdl = total / n;
  std::vector<Hit> hits;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    double s = 0.0;
    for (const auto& t : split_ws(query)) {
      const double tf = static_cast<double>(std::count(toks[i].begin(), toks[i].end(), t));
      if (tf == 0.0) continue;
      double df = 0.0;
      for (const auto& other : toks) df += std::count(other.begin(), other.end(), t) > 0 ? 1.0 : 0.0;
      const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
      const double norm = 1.0 - b + b * static_cast<double>(toks[i].size()) / avgdl;
      s += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
    }
    if (s > 0.0) hits.push_back({docs[i].id, s});
  }
  std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& c) { return a.score > c.score; });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

// grades_in_rank_order: grade of each retrieved doc; judged: grades of every
// judged doc of the query. The ideal DCG is the best over all orderings of
// the judged docs, found by enumerating permutations.
inline double ndcg(const std::vector<int>& grades_in_rank_order, std::vector<int> judged, std::size_t k) {
  auto dcg = [&](const std::vector<int>& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size() && i < k; ++i) s += g[i] / std::log2(static_cast<double>(i) + 2.0);
    return s;
  };
  std::sort(judged.begin(), judged.end());
  double ideal = 0.0;
  do {
    ideal = std::max(ideal, dcg(judged));
  } while (std::next_permutation(judged.begin(), judged.end()));
  if (ideal == 0.0) return std::nan("");
  return dcg(grades_in_rank_order) / ideal;
}

// P(score of a random positive > score of a random negative), ties one half.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      wins += scores[i] > scores[j] ? 1.0 : (scores[i] == scores[j] ? 0.5 : 0.0);
      pairs += 1.0;
    }
  }
  return wins / pairs;
}

struct FdResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Central differences on `n` random parameters drawn from those with a
// non-negligible analytic gradient (many embedding rows get none). Relative
// error uses a floor of 1e-6 on the denominator.
inline FdResult fd_check(prorank::PolicyState<double>& policy,
                         const std::function<double(const prorank::PolicyState<double>&)>& loss,
                         const std::vector<double>& analytic, std::size_t n, std::uint64_t seed, double h = 1e-4) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> live;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (std::abs(analytic[i]) > 1e-7) live.push_back(i);
  }
  if (live.empty()) return {};
  FdResult r;
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t i = live[rng() % live.size()];
    const double orig = policy.params[i];
    policy.params[i] = orig + h;
    const double up = loss(policy);
    policy.params[i] = orig - h;
    const double down = loss(policy);
    policy.params[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    const double rel = std::abs(fd - analytic[i]) / std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
    r.max_rel_error = std::max(r.max_rel_error, rel);
    ++r.checked;
  }
  return r;
}

}  // namespace oracle
