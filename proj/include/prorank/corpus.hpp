#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "prorank/common.hpp"

namespace prorank {

struct Document {
  std::string doc_id;
  std::string text;
  friend bool operator==(const Document&, const Document&) = default;
};

struct Query {
  std::string query_id;
  std::string text;
  friend bool operator==(const Query&, const Query&) = default;
};

// Graded judgments keyed by (query_id, doc_id). Absent pairs have grade 0.
class QrelSet {
 public:
  using Key = std::pair<std::string, std::string>;

  void set(const std::string& query_id, const std::string& doc_id, int grade) {
    if (grade < 0) throw data_error("negative relevance grade for " + query_id + "/" + doc_id);
    judgments_[{query_id, doc_id}] = grade;
  }

  bool contains(const std::string& query_id, const std::string& doc_id) const {
    return judgments_.count({query_id, doc_id}) > 0;
  }

  int grade(const std::string& query_id, const std::string& doc_id) const {
    auto it = judgments_.find({query_id, doc_id});
    return it == judgments_.end() ? 0 : it->second;
  }

  const std::map<Key, int>& judgments() const noexcept { return judgments_; }
  std::size_t size() const noexcept { return judgments_.size(); }
  bool empty() const noexcept { return judgments_.empty(); }

  // Judged (doc_id, grade) entries for one query, ascending doc_id.
  std::vector<std::pair<std::string, int>> for_query(const std::string& query_id) const {
    std::vector<std::pair<std::string, int>> out;
    for (auto it = judgments_.lower_bound({query_id, std::string{}});
         it != judgments_.end() && it->first.first == query_id; ++it) {
      out.emplace_back(it->first.second, it->second);
    }
    return out;
  }

  friend bool operator==(const QrelSet&, const QrelSet&) = default;

 private:
  std::map<Key, int> judgments_;
};

inline int binarize(int grade, int threshold = 1) { return grade >= threshold ? 1 : 0; }

// Immutable retrieval world. Construction validates ids and qrel references.
class Corpus {
 public:
  Corpus() = default;
  Corpus(std::vector<Document> documents, std::vector<Query> queries, QrelSet qrels)
      : documents_(std::move(documents)), queries_(std::move(queries)), qrels_(std::move(qrels)) {
    for (std::size_t i = 0; i < documents_.size(); ++i) {
      const auto& d = documents_[i];
      if (d.doc_id.empty()) throw data_error("document with empty id");
      if (d.text.empty()) throw data_error("document " + d.doc_id + " has empty text");
      if (!doc_index_.emplace(d.doc_id, i).second) throw data_error("duplicate doc id: " + d.doc_id);
    }
    for (std::size_t i = 0; i < queries_.size(); ++i) {
      const auto& q = queries_[i];
      if (q.query_id.empty()) throw data_error("query with empty id");
      if (q.text.empty()) throw data_error("query " + q.query_id + " has empty text");
      if (!query_index_.emplace(q.query_id, i).second) throw data_error("duplicate query id: " + q.query_id);
    }
    for (const auto& [key, grade] : qrels_.judgments()) {
      if (!query_index_.count(key.first)) throw data_error("qrel references unknown query: " + key.first);
      if (!doc_index_.count(key.second)) throw data_error("qrel references unknown doc: " + key.second);
    }
  }

  const std::vector<Document>& documents() const noexcept { return documents_; }
  const std::vector<Query>& queries() const noexcept { return queries_; }
  const QrelSet& qrels() const noexcept { return qrels_; }

  const Document& document(const std::string& doc_id) const {
    auto it = doc_index_.find(doc_id);
    if (it == doc_index_.end()) throw data_error("unknown doc id: " + doc_id);
    return documents_[it->second];
  }
  std::size_t document_index(const std::string& doc_id) const {
    auto it = doc_index_.find(doc_id);
    if (it == doc_index_.end()) throw data_error("unknown doc id: " + doc_id);
    return it->second;
  }
  const Query& query(const std::string& query_id) const {
    auto it = query_index_.find(query_id);
    if (it == query_index_.end()) throw data_error("unknown query id: " + query_id);
    return queries_[it->second];
  }

  int grade(const std::string& query_id, const std::string& doc_id) const {
    return qrels_.grade(query_id, doc_id);
  }

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.documents_ == b.documents_ && a.queries_ == b.queries_ && a.qrels_ == b.qrels_;
  }

 private:
  std::vector<Document> documents_;
  std::vector<Query> queries_;
  QrelSet qrels_;
  std::unordered_map<std::string, std::size_t> doc_index_;
  std::unordered_map<std::string, std::size_t> query_index_;
};

namespace detail {

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path.string());
  return in;
}

inline std::string location(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

// Reads {"_id": ..., "text": ...} records. A non-empty "title" is prepended to
// the text, as in BEIR corpus files.
inline std::vector<std::pair<std::string, std::string>> read_jsonl(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::pair<std::string, std::string>> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw data_error("malformed JSON at " + location(path, line_no) + ": " + e.what());
    }
    if (!obj.is_object() || !obj.contains("_id") || !obj["_id"].is_string() || !obj.contains("text") ||
        !obj["text"].is_string()) {
      throw data_error("record at " + location(path, line_no) + " needs string fields \"_id\" and \"text\"");
    }
    std::string text = obj["text"].get<std::string>();
    if (auto t = obj.find("title"); t != obj.end() && t->is_string() && !t->get<std::string>().empty()) {
      text = t->get<std::string>() + " " + text;
    }
    records.emplace_back(obj["_id"].get<std::string>(), std::move(text));
  }
  return records;
}

inline std::vector<std::string> split_qrel_fields(const std::string& line) {
  std::vector<std::string> fields;
  if (line.find('\t') != std::string::npos) {
    std::size_t start = 0;
    while (true) {
      auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
  } else {
    std::istringstream ss(line);
    for (std::string f; ss >> f;) fields.push_back(f);
  }
  return fields;
}

inline bool parse_int(const std::string& s, int& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

}  // namespace detail

inline QrelSet read_qrels(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  QrelSet qrels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto fields = detail::split_qrel_fields(line);
    if (line_no == 1 && !fields.empty() && fields[0] == "query-id") continue;
    int grade = 0;
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || !detail::parse_int(fields[2], grade)) {
      throw data_error("malformed qrel at " + detail::location(path, line_no));
    }
    if (grade < 0) throw data_error("negative grade at " + detail::location(path, line_no));
    if (qrels.contains(fields[0], fields[1])) {
      throw data_error("duplicate qrel at " + detail::location(path, line_no));
    }
    qrels.set(fields[0], fields[1], grade);
  }
  return qrels;
}

inline Corpus load_corpus(const std::filesystem::path& docs_path, const std::filesystem::path& queries_path,
                          const std::filesystem::path& qrels_path) {
  std::vector<Document> docs;
  for (auto& [id, text] : detail::read_jsonl(docs_path)) docs.push_back({std::move(id), std::move(text)});
  std::vector<Query> queries;
  for (auto& [id, text] : detail::read_jsonl(queries_path)) queries.push_back({std::move(id), std::move(text)});
  return Corpus(std::move(docs), std::move(queries), read_qrels(qrels_path));
}

inline Corpus load_corpus_dir(const std::filesystem::path& dir) {
  return load_corpus(dir / "docs.jsonl", dir / "queries.jsonl", dir / "qrels.tsv");
}

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write_jsonl = [](const std::filesystem::path& path, auto const& items, auto id_of) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write " + path.string());
    for (const auto& item : items) {
      nlohmann::ordered_json obj;
      obj["_id"] = id_of(item);
      obj["text"] = item.text;
      out << obj.dump() << '\n';
    }
  };
  write_jsonl(dir / "docs.jsonl", corpus.documents(), [](const Document& d) { return d.doc_id; });
  write_jsonl(dir / "queries.jsonl", corpus.queries(), [](const Query& q) { return q.query_id; });
  std::ofstream qrels(dir / "qrels.tsv", std::ios::binary);
  if (!qrels) throw data_error("cannot write " + (dir / "qrels.tsv").string());
  qrels << "query-id\tcorpus-id\tscore\n";
  for (const auto& [key, grade] : corpus.qrels().judgments()) {
    qrels << key.first << '\t' << key.second << '\t' << grade << '\n';
  }
}

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SyntheticConfig {
  int num_topics = 4;
  int docs_per_topic = 100;
  int queries_per_topic = 20;
  int vocab_words = 400;
  int doc_len_min = 12;
  int doc_len_max = 24;
  int query_len_min = 3;
  int query_len_max = 5;
  // Shared-pool words appended to every query; they pull off-topic documents
  // into the lexical candidate set.
  int query_noise_words = 2;
  // Size of the shared noise pool; 0 selects vocab_words / 5.
  int noise_words = 0;
  double noise_rate = 0.3;
  // Fraction of document words borrowed from another topic's signature, so
  // lexical matches also reach off-topic documents.
  double leak_rate = 0.0;
  // Signature words are drawn with weight 1 / (rank + 1)^zipf_exponent.
  double zipf_exponent = 1.5;
  // The alias_words highest-ranked signature words of each topic get a
  // query-only synonym that never occurs in documents. A query uses the alias
  // instead of the word with probability alias_rate.
  int alias_words = 10;
  double alias_rate = 0.7;
  std::uint64_t seed = 13;

  int noise_pool_size() const { return noise_words > 0 ? noise_words : std::max(1, vocab_words / 5); }
  int signature_size() const {
    return (vocab_words - noise_pool_size()) / std::max(1, num_topics) - alias_words;
  }

  void validate() const {
    if (num_topics < 1 || docs_per_topic < 1 || queries_per_topic < 1) {
      throw usage_error("synthetic config: topic, document and query counts must be positive");
    }
    if (vocab_words < 20) throw usage_error("synthetic config: vocab_words must be >= 20");
    if (doc_len_min < 1 || doc_len_max < doc_len_min) throw usage_error("synthetic config: bad doc_len range");
    if (query_len_min < 1 || query_len_max < query_len_min) {
      throw usage_error("synthetic config: bad query_len range");
    }
    if (query_noise_words < 0) throw usage_error("synthetic config: query_noise_words must be >= 0");
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw usage_error("synthetic config: noise_rate must lie in [0,1]");
    if (!(leak_rate >= 0.0 && noise_rate + leak_rate <= 1.0)) {
      throw usage_error("synthetic config: leak_rate must be >= 0 with noise_rate + leak_rate <= 1");
    }
    if (zipf_exponent < 0.0) throw usage_error("synthetic config: zipf_exponent must be >= 0");
    if (alias_words < 0) throw usage_error("synthetic config: alias_words must be >= 0");
    if (!(alias_rate >= 0.0 && alias_rate <= 1.0)) throw usage_error("synthetic config: alias_rate must lie in [0,1]");
    if (noise_words < 0 || noise_pool_size() >= vocab_words) throw usage_error("synthetic config: bad noise pool size");
    if (signature_size() < 3 || alias_words > signature_size()) {
      throw usage_error("synthetic config: vocab_words too small to give each topic 3 signature words");
    }
    if (query_len_max > signature_size()) throw usage_error("synthetic config: query_len_max exceeds signature size");
    if (query_noise_words > noise_pool_size()) throw usage_error("synthetic config: query_noise_words exceeds pool");
  }
};

inline void to_json(nlohmann::json& j, const SyntheticConfig& c) {
  j = nlohmann::json{{"num_topics", c.num_topics},
                     {"docs_per_topic", c.docs_per_topic},
                     {"queries_per_topic", c.queries_per_topic},
                     {"vocab_words", c.vocab_words},
                     {"doc_len_min", c.doc_len_min},
                     {"doc_len_max", c.doc_len_max},
                     {"query_len_min", c.query_len_min},
                     {"query_len_max", c.query_len_max},
                     {"query_noise_words", c.query_noise_words},
                     {"noise_words", c.noise_words},
                     {"noise_rate", c.noise_rate},
                     {"leak_rate", c.leak_rate},
                     {"zipf_exponent", c.zipf_exponent},
                     {"alias_words", c.alias_words},
                     {"alias_rate", c.alias_rate},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SyntheticConfig& c) {
  c.num_topics = j.value("num_topics", c.num_topics);
  c.docs_per_topic = j.value("docs_per_topic", c.docs_per_topic);
  c.queries_per_topic = j.value("queries_per_topic", c.queries_per_topic);
  c.vocab_words = j.value("vocab_words", c.vocab_words);
  c.doc_len_min = j.value("doc_len_min", c.doc_len_min);
  c.doc_len_max = j.value("doc_len_max", c.doc_len_max);
  c.query_len_min = j.value("query_len_min", c.query_len_min);
  c.query_len_max = j.value("query_len_max", c.query_len_max);
  c.query_noise_words = j.value("query_noise_words", c.query_noise_words);
  c.noise_words = j.value("noise_words", c.noise_words);
  c.noise_rate = j.value("noise_rate", c.noise_rate);
  c.leak_rate = j.value("leak_rate", c.leak_rate);
  c.zipf_exponent = j.value("zipf_exponent", c.zipf_exponent);
  c.alias_words = j.value("alias_words", c.alias_words);
  c.alias_rate = j.value("alias_rate", c.alias_rate);
  c.seed = j.value("seed", c.seed);
}

namespace detail {

// Deterministic pronounceable pseudo-words: consonant-vowel syllables, two per
// word, widening to three once the two-syllable space is used up.
inline std::vector<std::string> pseudo_words(std::size_t n) {
  static constexpr std::string_view consonants = "bdfgklmnprstvz";
  static constexpr std::string_view vowels = "aeiou";
  const std::size_t syl = consonants.size() * vowels.size();
  auto syllable = [&](std::size_t k) {
    return std::string{consonants[k / vowels.size()], vowels[k % vowels.size()]};
  };
  std::vector<std::string> words;
  words.reserve(n);
  for (std::size_t i = 0; words.size() < n; ++i) {
    if (i < syl * syl) {
      words.push_back(syllable(i / syl) + syllable(i % syl));
    } else {
      std::size_t j = i - syl * syl;
      words.push_back(syllable(j / (syl * syl) % syl) + syllable(j / syl % syl) + syllable(j % syl));
    }
  }
  return words;
}

inline std::string pad_id(char prefix, std::size_t i, std::size_t total) {
  std::string digits = std::to_string(i);
  std::size_t width = std::to_string(total > 0 ? total - 1 : 0).size();
  return std::string(1, prefix) + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

}  // namespace detail

// Each topic owns a disjoint signature word set; documents mix their topic's
// signature words with shared noise words; queries name distinct signature
// words of their topic, drawn with the same rank weights, plus
// query_noise_words pool words. Grade 1 iff topics match.
inline Corpus generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  Rng rng(mix_seed(config.seed, 1));

  auto words = detail::pseudo_words(static_cast<std::size_t>(config.vocab_words));
  shuffle(words, rng);
  const auto pool_size = static_cast<std::size_t>(config.noise_pool_size());
  const auto sig_size = static_cast<std::size_t>(config.signature_size());
  const std::vector<std::string> pool(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(pool_size));
  const auto alias_size = static_cast<std::size_t>(config.alias_words);
  std::vector<std::vector<std::string>> signatures(static_cast<std::size_t>(config.num_topics));
  std::vector<std::vector<std::string>> aliases(signatures.size());
  for (std::size_t t = 0; t < signatures.size(); ++t) {
    auto begin = words.begin() + static_cast<std::ptrdiff_t>(pool_size + t * (sig_size + alias_size));
    auto mid = begin + static_cast<std::ptrdiff_t>(sig_size);
    signatures[t].assign(begin, mid);
    aliases[t].assign(mid, mid + static_cast<std::ptrdiff_t>(alias_size));
  }

  std::vector<double> cumulative(sig_size);
  double total = 0.0;
  for (std::size_t r = 0; r < sig_size; ++r) {
    total += 1.0 / std::pow(static_cast<double>(r + 1), config.zipf_exponent);
    cumulative[r] = total;
  }
  auto draw_rank = [&]() {
    const double u = uniform01(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), sig_size - 1);
  };
  auto draw_range = [&](int lo, int hi) {
    return lo + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(hi - lo + 1)));
  };
  auto draw_distinct = [&](const std::vector<std::string>& from, int count) {
    std::vector<std::size_t> idx(from.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<std::string> out;
    for (int k = 0; k < count; ++k) {
      std::size_t j = static_cast<std::size_t>(k) + uniform_index(rng, idx.size() - static_cast<std::size_t>(k));
      std::swap(idx[static_cast<std::size_t>(k)], idx[j]);
      out.push_back(from[idx[static_cast<std::size_t>(k)]]);
    }
    return out;
  };

  struct Draft {
    std::size_t topic;
    std::string text;
  };
  std::vector<Draft> docs;
  for (std::size_t t = 0; t < signatures.size(); ++t) {
    for (int j = 0; j < config.docs_per_topic; ++j) {
      const int len = draw_range(config.doc_len_min, config.doc_len_max);
      std::string text;
      for (int w = 0; w < len; ++w) {
        if (w > 0) text += ' ';
        const double u = uniform01(rng);
        if (u < config.noise_rate) {
          text += pool[uniform_index(rng, pool.size())];
        } else if (u < config.noise_rate + config.leak_rate && signatures.size() > 1) {
          const auto other = (t + 1 + uniform_index(rng, signatures.size() - 1)) % signatures.size();
          text += signatures[other][draw_rank()];
        } else {
          text += signatures[t][draw_rank()];
        }
      }
      docs.push_back({t, std::move(text)});
    }
  }
  std::vector<Draft> queries;
  for (std::size_t t = 0; t < signatures.size(); ++t) {
    for (int j = 0; j < config.queries_per_topic; ++j) {
      const int n_terms = draw_range(config.query_len_min, config.query_len_max);
      std::vector<std::size_t> ranks;
      while (static_cast<int>(ranks.size()) < n_terms) {
        const auto r = draw_rank();
        if (std::find(ranks.begin(), ranks.end(), r) == ranks.end()) ranks.push_back(r);
      }
      std::vector<std::string> terms;
      for (auto r : ranks) {
        const bool alias = r < alias_size && uniform01(rng) < config.alias_rate;
        terms.push_back(alias ? aliases[t][r] : signatures[t][r]);
      }
      auto extra = draw_distinct(pool, config.query_noise_words);
      terms.insert(terms.end(), extra.begin(), extra.end());
      shuffle(terms, rng);
      std::string text;
      for (std::size_t w = 0; w < terms.size(); ++w) text += (w ? " " : "") + terms[w];
      queries.push_back({t, std::move(text)});
    }
  }
  shuffle(docs, rng);
  shuffle(queries, rng);

  std::vector<Document> documents;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    documents.push_back({detail::pad_id('d', i, docs.size()), docs[i].text});
  }
  std::vector<Query> query_list;
  QrelSet qrels;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    query_list.push_back({detail::pad_id('q', i, queries.size()), queries[i].text});
    for (std::size_t d = 0; d < docs.size(); ++d) {
      if (docs[d].topic == queries[i].topic) qrels.set(query_list.back().query_id, documents[d].doc_id, 1);
    }
  }
  return Corpus(std::move(documents), std::move(query_list), std::move(qrels));
}

// ---------------------------------------------------------------------------
// Query splits

struct CorpusSplits {
  Corpus train;
  Corpus dev;
  Corpus test;
};

inline Corpus restrict_queries(const Corpus& corpus, const std::vector<std::size_t>& query_indices) {
  std::vector<Query> queries;
  QrelSet qrels;
  for (auto i : query_indices) {
    const auto& q = corpus.queries()[i];
    queries.push_back(q);
    for (const auto& [doc_id, grade] : corpus.qrels().for_query(q.query_id)) qrels.set(q.query_id, doc_id, grade);
  }
  return Corpus(corpus.documents(), std::move(queries), std::move(qrels));
}

// Partitions queries; documents are shared by all three splits.
inline CorpusSplits split(const Corpus& corpus, double train_frac, double dev_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0) || !(dev_frac > 0.0) || !(train_frac + dev_frac < 1.0)) {
    throw usage_error("split fractions must be positive with train + dev < 1");
  }
  const std::size_t n = corpus.queries().size();
  const auto n_train = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(n) + 1e-9));
  const auto n_dev = static_cast<std::size_t>(std::floor(dev_frac * static_cast<double>(n) + 1e-9));
  if (n_train == 0 || n_dev == 0 || n_train + n_dev >= n) {
    throw data_error("split of " + std::to_string(n) + " queries leaves a split without queries");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, 2));
  shuffle(order, rng);
  auto part = [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
    std::sort(idx.begin(), idx.end());
    return restrict_queries(corpus, idx);
  };
  return {part(0, n_train), part(n_train, n_train + n_dev), part(n_train + n_dev, n)};
}

// ---------------------------------------------------------------------------
// Labeled (query, document) pairs

struct LabeledPair {
  std::size_t query;  // index into corpus.queries()
  std::size_t doc;    // index into corpus.documents()
  int label;          // binarized relevance
};

// Draws labeled pairs with a fixed positive fraction (0.5 = balanced).
// Queries lacking either a relevant or an irrelevant document are skipped.
class PairSampler {
 public:
  PairSampler(const Corpus& corpus, int threshold = 1, double positive_fraction = 0.5)
      : positive_fraction_(positive_fraction) {
    if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0)) {
      throw usage_error("positive_fraction must lie in [0,1]");
    }
    for (std::size_t q = 0; q < corpus.queries().size(); ++q) {
      Entry e{q, {}, {}};
      const auto& qid = corpus.queries()[q].query_id;
      for (std::size_t d = 0; d < corpus.documents().size(); ++d) {
        (binarize(corpus.grade(qid, corpus.documents()[d].doc_id), threshold) ? e.pos : e.neg).push_back(d);
      }
      if (!e.pos.empty() && !e.neg.empty()) entries_.push_back(std::move(e));
    }
    if (entries_.empty()) throw data_error("no query has both relevant and irrelevant documents");
  }

  LabeledPair draw(Rng& rng, int label) const {
    const auto& e = entries_[uniform_index(rng, entries_.size())];
    const auto& docs = label ? e.pos : e.neg;
    return {e.query, docs[uniform_index(rng, docs.size())], label};
  }

  // The first round(n * positive_fraction) pairs are positives, the rest negatives.
  std::vector<LabeledPair> batch(Rng& rng, std::size_t n) const {
    const auto n_pos = static_cast<std::size_t>(std::lround(positive_fraction_ * static_cast<double>(n)));
    std::vector<LabeledPair> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(draw(rng, i < n_pos ? 1 : 0));
    return out;
  }

 private:
  struct Entry {
    std::size_t query;
    std::vector<std::size_t> pos;
    std::vector<std::size_t> neg;
  };
  std::vector<Entry> entries_;
  double positive_fraction_;
};

// Deterministic balanced evaluation set.
inline std::vector<LabeledPair> balanced_pairs(const Corpus& corpus, std::size_t n, std::uint64_t seed) {
  PairSampler sampler(corpus);
  Rng rng(mix_seed(seed, 3));
  auto pairs = sampler.batch(rng, n);
  return pairs;
}

}  // namespace prorank
