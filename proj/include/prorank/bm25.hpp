#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "prorank/common.hpp"
#include "prorank/corpus.hpp"
#include "prorank/text.hpp"

namespace prorank {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct Posting {
  std::size_t doc;  // position in InvertedIndex::doc_ids()
  std::uint32_t tf;
};

struct ScoredDocument {
  std::string doc_id;
  double score = 0.0;
  friend bool operator==(const ScoredDocument&, const ScoredDocument&) = default;
};

// Okapi BM25 over the shared term normalization. Documents are kept in
// ascending doc_id order, so postings are sorted by doc_id as well.
class InvertedIndex {
 public:
  explicit InvertedIndex(const std::vector<Document>& documents) {
    if (documents.empty()) throw data_error("cannot index an empty corpus");
    std::vector<const Document*> sorted;
    for (const auto& d : documents) sorted.push_back(&d);
    std::sort(sorted.begin(), sorted.end(), [](auto a, auto b) { return a->doc_id < b->doc_id; });
    double total_len = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (i > 0 && sorted[i]->doc_id == sorted[i - 1]->doc_id) {
        throw data_error("duplicate doc id: " + sorted[i]->doc_id);
      }
      doc_ids_.push_back(sorted[i]->doc_id);
      doc_pos_.emplace(sorted[i]->doc_id, i);
      const auto terms = normalize_terms(sorted[i]->text);
      doc_lengths_.push_back(terms.size());
      total_len += static_cast<double>(terms.size());
      std::map<std::string, std::uint32_t> tf;
      for (const auto& t : terms) ++tf[t];
      for (const auto& [t, n] : tf) postings_[t].push_back({i, n});
    }
    avg_doc_len_ = total_len / static_cast<double>(doc_ids_.size());
  }

  std::size_t num_docs() const noexcept { return doc_ids_.size(); }
  double avg_doc_len() const noexcept { return avg_doc_len_; }
  const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
  std::size_t doc_length(const std::string& doc_id) const { return doc_lengths_[position(doc_id)]; }
  std::size_t num_terms() const noexcept { return postings_.size(); }

  std::size_t doc_freq(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
  }

  const std::vector<Posting>& postings(const std::string& term) const {
    static const std::vector<Posting> empty;
    auto it = postings_.find(term);
    return it == postings_.end() ? empty : it->second;
  }

  std::uint32_t term_freq(const std::string& term, std::size_t pos) const {
    const auto& p = postings(term);
    auto it = std::lower_bound(p.begin(), p.end(), pos, [](const Posting& a, std::size_t d) { return a.doc < d; });
    return (it != p.end() && it->doc == pos) ? it->tf : 0;
  }

  std::size_t position(const std::string& doc_id) const {
    auto it = doc_pos_.find(doc_id);
    if (it == doc_pos_.end()) throw data_error("doc id not indexed: " + doc_id);
    return it->second;
  }

  double idf(const std::string& term) const {
    const double df = static_cast<double>(doc_freq(term));
    return std::log(1.0 + (static_cast<double>(num_docs()) - df + 0.5) / (df + 0.5));
  }

  // Contribution of one query term occurring tf times in a document.
  double term_weight(const std::string& term, std::uint32_t tf, std::size_t pos, const Bm25Params& p) const {
    const double f = tf;
    const double norm = 1.0 - p.b + p.b * static_cast<double>(doc_lengths_[pos]) / avg_doc_len_;
    return idf(term) * f * (p.k1 + 1.0) / (f + p.k1 * norm);
  }

 private:
  std::vector<std::string> doc_ids_;
  std::vector<std::size_t> doc_lengths_;
  std::unordered_map<std::string, std::size_t> doc_pos_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  double avg_doc_len_ = 0.0;
};

inline InvertedIndex build_index(const std::vector<Document>& documents) { return InvertedIndex(documents); }

// Sum over query terms (repeats included) of idf * tf (k1 + 1) / (tf + k1 norm).
inline double bm25_score(const InvertedIndex& index, const std::vector<std::string>& query_terms,
                         const std::string& doc_id, const Bm25Params& params = {}) {
  const auto pos = index.position(doc_id);
  double score = 0.0;
  for (const auto& t : query_terms) {
    const auto tf = index.term_freq(t, pos);
    if (tf > 0) score += index.term_weight(t, tf, pos, params);
  }
  return score;
}

// Score descending, ascending doc_id on ties.
inline bool ranks_before(const ScoredDocument& a, const ScoredDocument& b) {
  return a.score != b.score ? a.score > b.score : a.doc_id < b.doc_id;
}

// Term-at-a-time accumulation over postings; only positive scores returned.
inline std::vector<ScoredDocument> search(const InvertedIndex& index, const std::string& query_text, std::size_t k,
                                          const Bm25Params& params = {}) {
  if (k < 1) throw usage_error("search: k must be >= 1");
  const auto terms = normalize_terms(query_text);
  std::vector<double> acc(index.num_docs(), 0.0);
  for (const auto& t : terms) {
    for (const auto& p : index.postings(t)) acc[p.doc] += index.term_weight(t, p.tf, p.doc, params);
  }
  std::vector<ScoredDocument> hits;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    if (acc[i] > 0.0) hits.push_back({index.doc_ids()[i], acc[i]});
  }
  const auto keep = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), ranks_before);
  hits.resize(keep);
  return hits;
}

inline std::vector<ScoredDocument> search(const InvertedIndex& index, const Query& query, std::size_t k,
                                          const Bm25Params& params = {}) {
  return search(index, query.text, k, params);
}

// ---------------------------------------------------------------------------
// TREC run files: query_id Q0 doc_id rank score tag

struct RunEntry {
  std::string query_id;
  std::string doc_id;
  double score;
};

inline void write_run(std::ostream& out, const std::string& query_id, const std::vector<ScoredDocument>& ranked,
                      const std::string& tag) {
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    out << query_id << " Q0 " << ranked[i].doc_id << ' ' << (i + 1) << ' ' << format_real(ranked[i].score) << ' '
        << tag << '\n';
  }
}

// Reads a run file back into per-query lists ordered by rank.
inline std::map<std::string, std::vector<ScoredDocument>> read_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open run file " + path.string());
  std::map<std::string, std::vector<std::pair<int, ScoredDocument>>> tmp;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    std::string qid, q0, did, tag;
    int rank = 0;
    std::string score;
    if (!(ss >> qid >> q0 >> did >> rank >> score >> tag)) {
      throw data_error("malformed run line at " + path.string() + ":" + std::to_string(line_no));
    }
    tmp[qid].push_back({rank, {did, std::stod(score)}});
  }
  std::map<std::string, std::vector<ScoredDocument>> out;
  for (auto& [qid, rows] : tmp) {
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& r : rows) out[qid].push_back(std::move(r.second));
  }
  return out;
}

}  // namespace prorank
