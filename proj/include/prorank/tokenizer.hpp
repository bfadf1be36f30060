#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "prorank/common.hpp"
#include "prorank/corpus.hpp"
#include "prorank/text.hpp"

namespace prorank {

inline constexpr std::string_view kDefaultTemplate =
    "query: {query}\n"
    "document: {document}\n"
    "You are a search relevance expert who evaluates how well documents match search queries. "
    "For each query-document pair, carefully analyze the semantic relationship between them, "
    "then provide your binary relevance judgment (0 for not relevant, 1 for relevant). Relevance:";

inline constexpr int kDefaultPromptBudget = 256;

// Prompt text with exactly one {query} and one {document} placeholder.
class PromptTemplate {
 public:
  PromptTemplate() : PromptTemplate(std::string(kDefaultTemplate)) {}

  explicit PromptTemplate(std::string text) : text_(std::move(text)) {
    auto count = [&](std::string_view needle) {
      std::size_t n = 0;
      for (auto pos = text_.find(needle); pos != std::string::npos; pos = text_.find(needle, pos + 1)) ++n;
      return n;
    };
    if (count(kQuery) != 1 || count(kDocument) != 1) {
      throw usage_error("prompt template needs exactly one {query} and one {document} placeholder");
    }
    const auto q = text_.find(kQuery);
    const auto d = text_.find(kDocument);
    query_first_ = q < d;
    const auto first = std::min(q, d);
    const auto second = std::max(q, d);
    const auto first_len = query_first_ ? kQuery.size() : kDocument.size();
    const auto second_len = query_first_ ? kDocument.size() : kQuery.size();
    segments_[0] = text_.substr(0, first);
    segments_[1] = text_.substr(first + first_len, second - first - first_len);
    segments_[2] = text_.substr(second + second_len);
  }

  const std::string& text() const noexcept { return text_; }
  bool query_first() const noexcept { return query_first_; }
  // Literal text before, between and after the two placeholders.
  const std::string& segment(std::size_t i) const { return segments_.at(i); }

  std::vector<std::string> words() const {
    std::vector<std::string> out;
    for (const auto& s : segments_) {
      auto t = normalize_terms(s);
      out.insert(out.end(), t.begin(), t.end());
    }
    return out;
  }

 private:
  static constexpr std::string_view kQuery = "{query}";
  static constexpr std::string_view kDocument = "{document}";
  std::string text_;
  std::array<std::string, 3> segments_;
  bool query_first_ = true;
};

class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kBos = 1;
  static constexpr std::int32_t kEos = 2;
  static constexpr std::int32_t kUnk = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  // `tokens` excludes the reserved entries, which always occupy ids 0..3.
  explicit Vocabulary(const std::vector<std::string>& tokens) {
    tokens_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
    tokens_.insert(tokens_.end(), tokens.begin(), tokens.end());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i].empty()) throw data_error("vocabulary token is empty");
      if (!index_.emplace(tokens_[i], static_cast<std::int32_t>(i)).second) {
        throw data_error("duplicate vocabulary token: " + tokens_[i]);
      }
    }
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  bool contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

  std::int32_t id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
  }

  const std::string& token(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw usage_error("token id " + std::to_string(id) + " out of range");
    }
    return tokens_[static_cast<std::size_t>(id)];
  }

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::int32_t zero_id() const { return require("0"); }
  std::int32_t one_id() const { return require("1"); }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::int32_t require(std::string_view t) const {
    auto it = index_.find(std::string(t));
    if (it == index_.end()) throw data_error("vocabulary lacks binary token \"" + std::string(t) + "\"");
    return it->second;
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

// Reserved tokens, then the always-kept tokens ("0", "1", template words) in
// lexicographic order, then corpus words by descending frequency with
// lexicographic tie-break, up to max_size entries in total.
inline Vocabulary build_vocab(const Corpus& corpus, const PromptTemplate& tmpl, std::size_t max_size) {
  std::set<std::string> required{"0", "1"};
  for (auto& w : tmpl.words()) required.insert(std::move(w));
  if (max_size < Vocabulary::kReserved + required.size()) {
    throw usage_error("vocabulary max_size " + std::to_string(max_size) + " cannot hold " +
                      std::to_string(Vocabulary::kReserved + required.size()) + " required tokens");
  }
  std::map<std::string, std::size_t> freq;
  for (const auto& d : corpus.documents()) {
    for (auto& t : normalize_terms(d.text)) ++freq[std::move(t)];
  }
  for (const auto& q : corpus.queries()) {
    for (auto& t : normalize_terms(q.text)) ++freq[std::move(t)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : freq) {
    if (!required.count(tok)) ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens(required.begin(), required.end());
  for (const auto& [tok, n] : ranked) {
    if (Vocabulary::kReserved + tokens.size() >= max_size) break;
    tokens.push_back(tok);
  }
  return Vocabulary(tokens);
}

inline TokenIds encode(const Vocabulary& vocab, std::string_view text) {
  TokenIds ids;
  for (const auto& t : normalize_terms(text)) ids.push_back(vocab.id(t));
  return ids;
}

inline std::string decode(const Vocabulary& vocab, const TokenIds& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(ids[i]);
  }
  return out;
}

inline std::size_t skeleton_length(const Vocabulary& vocab, const PromptTemplate& tmpl) {
  return 1 + encode(vocab, tmpl.segment(0)).size() + encode(vocab, tmpl.segment(1)).size() +
         encode(vocab, tmpl.segment(2)).size();
}

// BOS + template with placeholders filled. Over budget, the document is cut
// from its tail first, then the query; template tokens are never dropped, so
// the prompt always ends with the template suffix.
inline TokenIds render_prompt(const Vocabulary& vocab, const PromptTemplate& tmpl, const Query& query,
                              const Document& doc, std::size_t budget = kDefaultPromptBudget) {
  const auto seg0 = encode(vocab, tmpl.segment(0));
  const auto seg1 = encode(vocab, tmpl.segment(1));
  const auto seg2 = encode(vocab, tmpl.segment(2));
  const std::size_t skeleton = 1 + seg0.size() + seg1.size() + seg2.size();
  if (budget < skeleton + 8) {
    throw usage_error("prompt budget " + std::to_string(budget) + " below template skeleton " +
                      std::to_string(skeleton) + " + 8");
  }
  auto q = encode(vocab, query.text);
  auto d = encode(vocab, doc.text);
  std::size_t total = skeleton + q.size() + d.size();
  if (total > budget) {
    const std::size_t cut_doc = std::min(total - budget, d.size());
    d.resize(d.size() - cut_doc);
    total -= cut_doc;
  }
  if (total > budget) q.resize(q.size() - (total - budget));

  TokenIds ids;
  ids.reserve(std::min(budget, skeleton + q.size() + d.size()));
  ids.push_back(Vocabulary::kBos);
  const auto& first = tmpl.query_first() ? q : d;
  const auto& second = tmpl.query_first() ? d : q;
  ids.insert(ids.end(), seg0.begin(), seg0.end());
  ids.insert(ids.end(), first.begin(), first.end());
  ids.insert(ids.end(), seg1.begin(), seg1.end());
  ids.insert(ids.end(), second.begin(), second.end());
  ids.insert(ids.end(), seg2.begin(), seg2.end());
  return ids;
}

// ---------------------------------------------------------------------------
// Serialization ("vocab-v1")

inline nlohmann::ordered_json vocab_to_json(const Vocabulary& vocab) {
  nlohmann::ordered_json j;
  j["format"] = "vocab-v1";
  j["reserved"] = {{"pad", Vocabulary::kPad}, {"bos", Vocabulary::kBos}, {"eos", Vocabulary::kEos},
                   {"unk", Vocabulary::kUnk}};
  nlohmann::ordered_json map = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < vocab.size(); ++i) map[vocab.tokens()[i]] = i;
  j["tokens"] = std::move(map);
  return j;
}

inline Vocabulary vocab_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "vocab-v1") throw data_error("unsupported vocabulary format");
  const auto& map = j.at("tokens");
  std::vector<std::string> by_id(map.size());
  for (auto it = map.begin(); it != map.end(); ++it) {
    const auto id = it.value().get<std::size_t>();
    if (id >= by_id.size() || !by_id[id].empty()) throw data_error("vocabulary ids are not a bijection");
    by_id[id] = it.key();
  }
  if (by_id.size() < Vocabulary::kReserved) throw data_error("vocabulary lacks reserved tokens");
  Vocabulary vocab(std::vector<std::string>(by_id.begin() + Vocabulary::kReserved, by_id.end()));
  if (vocab.tokens() != by_id) throw data_error("vocabulary reserved block mismatch");
  return vocab;
}

inline void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write " + path.string());
  out << vocab_to_json(vocab).dump(1) << '\n';
}

inline Vocabulary load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path.string());
  try {
    return vocab_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw data_error("malformed vocabulary " + path.string() + ": " + e.what());
  }
}

}  // namespace prorank
