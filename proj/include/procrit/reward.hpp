#pragma once

#include <string_view>

#include "procrit/response_grammar.hpp"

namespace procrit {

struct RewardConfig {
  /// Error at which the accuracy reward reaches zero.
  double r_max = 100.0;
  double format_bonus = 1.0;
  Strictness strictness = Strictness::outer;

  void validate() const;
};

struct RewardBreakdown {
  double r_fmt = 0.0;
  double r_acc = 0.0;
  double total = 0.0;
  /// A progress value was found and parsed.
  bool parse_ok = false;
};

double format_reward(const StructuredResponse& response, const RewardConfig& cfg);

/// max(0, 1 - |y_hat - y_gt| / r_max). Throws NumericError on non-finite
/// inputs and ConfigError when r_max <= 0.
double accuracy_reward(double y_hat, double y_gt, double r_max);

/// Format plus accuracy reward of a raw completion. The accuracy term uses
/// the first <answer> block even when the outer format is invalid, and is 0
/// when no progress value can be parsed.
RewardBreakdown composite_reward(std::string_view raw_text, double y_gt, const RewardConfig& cfg);

}  // namespace procrit
