#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "prorank/common.hpp"
#include "prorank/corpus.hpp"
#include "prorank/model.hpp"
#include "prorank/tokenizer.hpp"

namespace prorank {

// Column-oriented per-step training records, emitted as CSV.
struct TrainLog {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add(std::vector<double> row) {
    if (row.size() != columns.size()) throw usage_error("train log row width mismatch");
    rows.push_back(std::move(row));
  }

  std::vector<double> column(const std::string& name) const {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (columns[c] == name) {
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r[c]);
        return out;
      }
    }
    throw usage_error("train log has no column " + name);
  }

  std::string to_csv() const {
    std::ostringstream os;
    for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << columns[c];
    os << '\n';
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << format_real(r[c]);
      os << '\n';
    }
    return os.str();
  }

  void write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write " + path.string());
    out << to_csv();
  }
};

template <class T>
struct TrainResult {
  PolicyState<T> policy;
  TrainLog log;
};

// Raised when an objective or gradient turns non-finite; carries the policy
// as it was before the failing step.
template <class T>
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& message, PolicyState<T> last_good, TrainLog log)
      : Error(ErrorKind::divergence, message), last_good(std::move(last_good)), log(std::move(log)) {}

  PolicyState<T> last_good;
  TrainLog log;
};

inline std::size_t prompt_budget_for(const ModelConfig& config, std::size_t budget) {
  return std::min(budget, static_cast<std::size_t>(config.max_seq));
}

inline TokenIds render_pair(const Corpus& corpus, const LabeledPair& pair, const Vocabulary& vocab,
                            const PromptTemplate& tmpl, std::size_t budget) {
  return render_prompt(vocab, tmpl, corpus.queries()[pair.query], corpus.documents()[pair.doc], budget);
}

inline std::vector<TokenIds> render_pairs(const Corpus& corpus, const std::vector<LabeledPair>& pairs,
                                          const Vocabulary& vocab, const PromptTemplate& tmpl, std::size_t budget) {
  std::vector<TokenIds> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(render_pair(corpus, p, vocab, tmpl, budget));
  return out;
}

}  // namespace prorank
