#pragma once

#include <array>
#include <string>
#include <string_view>

#include "procrit/response_grammar.hpp"

namespace procrit::prompts {

inline constexpr int kNumQuestionVariations = 100;

/// System message establishing the triad input protocol and output format.
std::string_view system_prompt();

/// Progress question variation, 1-based. Throws UsageError outside [1, 100].
std::string_view question_variation(int question_id);

/// Instruction appended for each question type.
std::string_view type_instruction(QuestionType kind);

/// Category label used inside the answer template ("Progress", "Boolean", ...).
std::string_view type_category(QuestionType kind);

/// Analysis instructions and the required output template, with the
/// category label substituted into the answer placeholder.
std::string reasoning_template(QuestionType kind);

}  // namespace procrit::prompts
