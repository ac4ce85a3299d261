#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace procrit {

/// Tag vocabulary of the structured output format.
namespace tags {
inline constexpr std::string_view think_open = "<think>";
inline constexpr std::string_view think_close = "</think>";
inline constexpr std::string_view planning_open = "<planning>";
inline constexpr std::string_view planning_close = "</planning>";
inline constexpr std::string_view observation_open = "<observation>";
inline constexpr std::string_view observation_close = "</observation>";
inline constexpr std::string_view reasoning_open = "<reasoning>";
inline constexpr std::string_view reasoning_close = "</reasoning>";
inline constexpr std::string_view answer_open = "<answer>";
inline constexpr std::string_view answer_close = "</answer>";
}  // namespace tags

enum class Strictness { outer, full };

std::string to_string(Strictness s);
Strictness parse_strictness(std::string_view s);

/// Parsed model output.
///
/// outer_valid: the whole text is `<think>..</think><answer>..</answer>`
/// with optional whitespace around the two blocks and a non-blank answer.
/// full_valid: additionally the think block consists of exactly the
/// planning, observation and reasoning sub-sections, in that order.
struct StructuredResponse {
  std::string planning_text;
  std::string observation_text;
  std::string reasoning_text;
  std::string think_text;
  std::string answer_text;
  bool outer_valid = false;
  bool full_valid = false;
  std::size_t raw_length_chars = 0;

  bool valid_at(Strictness s) const { return s == Strictness::outer ? outer_valid : full_valid; }
};

enum class QuestionType { progress, boolean, multiple_choice, numerical, ocr, free_form };

std::string to_string(QuestionType t);
QuestionType parse_question_type(std::string_view s);

struct ParsedAnswer {
  QuestionType kind = QuestionType::progress;
  std::optional<double> numeric_value;
  /// Canonical text: "Yes"/"No", an upper-case letter, or trimmed free text.
  std::optional<std::string> text_value;
  bool parse_ok = false;
  /// Progress value outside [0, 100]; kept unclamped.
  bool out_of_range = false;
};

/// Total over all inputs: never throws, both validity levels are always
/// evaluated. Sub-section texts are filled only when the full grammar matches.
StructuredResponse parse_response(std::string_view text);
bool is_valid(std::string_view text, Strictness strictness);

/// Inverse of parse_response at full strictness. Throws RenderError when a
/// section contains a closing tag or a nested <think>/<answer>.
std::string render_response(std::string_view planning, std::string_view observation,
                            std::string_view reasoning, std::string_view answer);

/// Extracts the first `<answer>...</answer>` block anywhere in `text`, for
/// scoring outputs that fail the outer grammar.
std::optional<std::string> find_answer_block(std::string_view text);

ParsedAnswer extract_answer(std::string_view answer_text, QuestionType kind);

/// Throws UsageError when either answer's kind differs from `kind`.
bool match_answer(const ParsedAnswer& pred, const ParsedAnswer& gt, QuestionType kind,
                  double numeric_tol);

std::string_view trim(std::string_view s);

}  // namespace procrit
