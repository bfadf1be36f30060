#pragma once

#include <string_view>

namespace prorank {

struct RewardBreakdown {
  int format = 0;
  int accuracy = 0;
  double total = 0.0;
  friend bool operator==(const RewardBreakdown&, const RewardBreakdown&) = default;
};

// Per-term weights for the aggregate; the unweighted sum is the default.
struct RewardWeights {
  double format = 1.0;
  double accuracy = 1.0;
};

inline bool is_binary_token(std::string_view text) { return text == "0" || text == "1"; }

inline int format_reward(std::string_view output) { return is_binary_token(output) ? 1 : 0; }

inline int accuracy_reward(std::string_view output, int label) {
  if (!is_binary_token(output)) return 0;
  return (output == "1" ? 1 : 0) == label ? 1 : 0;
}

inline RewardBreakdown combined_reward(std::string_view output, int label, const RewardWeights& w = {}) {
  RewardBreakdown r;
  r.format = format_reward(output);
  r.accuracy = accuracy_reward(output, label);
  r.total = w.format * r.format + w.accuracy * r.accuracy;
  return r;
}

}  // namespace prorank
