#include "procrit/reward.hpp"

#include <algorithm>
#include <cmath>

#include "procrit/errors.hpp"

namespace procrit {

void RewardConfig::validate() const {
  if (!(r_max > 0.0) || !std::isfinite(r_max)) throw ConfigError("r_max must be positive and finite");
  if (!std::isfinite(format_bonus)) throw ConfigError("format_bonus must be finite");
}

double format_reward(const StructuredResponse& response, const RewardConfig& cfg) {
  return response.valid_at(cfg.strictness) ? cfg.format_bonus : 0.0;
}

double accuracy_reward(double y_hat, double y_gt, double r_max) {
  if (!std::isfinite(y_hat) || !std::isfinite(y_gt) || !std::isfinite(r_max))
    throw NumericError("accuracy_reward: non-finite input");
  if (!(r_max > 0.0)) throw ConfigError("accuracy_reward: r_max must be positive");
  return std::max(0.0, 1.0 - std::abs(y_hat - y_gt) / r_max);
}

RewardBreakdown composite_reward(std::string_view raw_text, double y_gt, const RewardConfig& cfg) {
  const StructuredResponse parsed = parse_response(raw_text);
  RewardBreakdown b;
  b.r_fmt = format_reward(parsed, cfg);

  std::optional<std::string> answer;
  if (parsed.outer_valid) answer = parsed.answer_text;
  else answer = find_answer_block(raw_text);
  if (answer) {
    const ParsedAnswer value = extract_answer(*answer, QuestionType::progress);
    if (value.parse_ok) {
      b.parse_ok = true;
      b.r_acc = accuracy_reward(*value.numeric_value, y_gt, cfg.r_max);
    }
  }
  b.total = b.r_fmt + b.r_acc;
  return b;
}

}  // namespace procrit
