#include "procrit/response_grammar.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cctype>

#include "procrit/errors.hpp"

namespace procrit {

namespace {

constexpr std::array<std::string_view, 5> kClosingTags = {
    tags::think_close, tags::planning_close, tags::observation_close, tags::reasoning_close,
    tags::answer_close};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool contains(std::string_view haystack, std::string_view needle) {
  return haystack.find(needle) != std::string_view::npos;
}

bool contains_any_closing_tag(std::string_view s) {
  return std::any_of(kClosingTags.begin(), kClosingTags.end(),
                     [&](std::string_view t) { return contains(s, t); });
}

/// Cursor over a string_view for the small recursive-descent grammar.
class Cursor {
 public:
  explicit Cursor(std::string_view text) : text_(text) {}

  void skip_space() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
  }
  bool consume(std::string_view token) {
    if (text_.substr(pos_, token.size()) != token) return false;
    pos_ += token.size();
    return true;
  }
  /// Content up to the first `close`, consuming the close tag.
  std::optional<std::string_view> until(std::string_view close) {
    const auto end = text_.find(close, pos_);
    if (end == std::string_view::npos) return std::nullopt;
    auto body = text_.substr(pos_, end - pos_);
    pos_ = end + close.size();
    return body;
  }
  bool at_end() const { return pos_ == text_.size(); }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

struct Sections {
  std::string_view planning, observation, reasoning;
};

std::optional<std::string_view> section(Cursor& c, std::string_view open, std::string_view close) {
  c.skip_space();
  if (!c.consume(open)) return std::nullopt;
  auto body = c.until(close);
  if (!body || contains_any_closing_tag(*body)) return std::nullopt;
  return body;
}

std::optional<Sections> parse_sections(std::string_view think) {
  Cursor c(think);
  Sections s;
  auto p = section(c, tags::planning_open, tags::planning_close);
  if (!p) return std::nullopt;
  auto o = section(c, tags::observation_open, tags::observation_close);
  if (!o) return std::nullopt;
  auto r = section(c, tags::reasoning_open, tags::reasoning_close);
  if (!r) return std::nullopt;
  c.skip_space();
  if (!c.at_end()) return std::nullopt;
  return Sections{*p, *o, *r};
}

std::size_t utf8_length(std::string_view s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// Plain decimal: optional sign, digits with at most one '.', no exponent.
std::optional<double> parse_decimal(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::size_t i = 0;
  bool negative = false;
  if (s[0] == '+' || s[0] == '-') {
    negative = s[0] == '-';
    i = 1;
  }
  std::string_view body = s.substr(i);
  int digits = 0, dots = 0;
  for (char c : body) {
    if (std::isdigit(static_cast<unsigned char>(c))) ++digits;
    else if (c == '.') ++dots;
    else return std::nullopt;
  }
  if (digits == 0 || dots > 1) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), value);
  if (ec != std::errc() || ptr != body.data() + body.size() || !std::isfinite(value)) return std::nullopt;
  return negative ? -value : value;
}

}  // namespace

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string to_string(Strictness s) { return s == Strictness::outer ? "outer" : "full"; }

Strictness parse_strictness(std::string_view s) {
  if (s == "outer") return Strictness::outer;
  if (s == "full") return Strictness::full;
  throw ConfigError("unknown strictness '" + std::string(s) + "'");
}

std::string to_string(QuestionType t) {
  switch (t) {
    case QuestionType::progress: return "progress";
    case QuestionType::boolean: return "boolean";
    case QuestionType::multiple_choice: return "multiple_choice";
    case QuestionType::numerical: return "numerical";
    case QuestionType::ocr: return "ocr";
    case QuestionType::free_form: return "free_form";
  }
  return "progress";
}

QuestionType parse_question_type(std::string_view s) {
  for (auto t : {QuestionType::progress, QuestionType::boolean, QuestionType::multiple_choice,
                 QuestionType::numerical, QuestionType::ocr, QuestionType::free_form})
    if (to_string(t) == s) return t;
  throw ConfigError("unknown question type '" + std::string(s) + "'");
}

StructuredResponse parse_response(std::string_view text) {
  StructuredResponse r;
  r.raw_length_chars = utf8_length(text);

  Cursor c(text);
  c.skip_space();
  if (!c.consume(tags::think_open)) return r;
  auto think = c.until(tags::think_close);
  if (!think || contains(*think, tags::think_open) || contains(*think, tags::answer_open) ||
      contains(*think, tags::answer_close))
    return r;
  c.skip_space();
  if (!c.consume(tags::answer_open)) return r;
  auto answer = c.until(tags::answer_close);
  if (!answer || contains(*answer, tags::think_open) || contains(*answer, tags::think_close) ||
      contains(*answer, tags::answer_open))
    return r;
  c.skip_space();
  if (!c.at_end()) return r;

  r.think_text = std::string(*think);
  r.answer_text = std::string(*answer);
  r.outer_valid = !trim(*answer).empty();
  if (!r.outer_valid) return r;

  if (auto sections = parse_sections(*think)) {
    r.planning_text = std::string(sections->planning);
    r.observation_text = std::string(sections->observation);
    r.reasoning_text = std::string(sections->reasoning);
    r.full_valid = true;
  }
  return r;
}

bool is_valid(std::string_view text, Strictness strictness) {
  return parse_response(text).valid_at(strictness);
}

std::string render_response(std::string_view planning, std::string_view observation,
                            std::string_view reasoning, std::string_view answer) {
  for (std::string_view part : {planning, observation, reasoning, answer}) {
    if (contains_any_closing_tag(part) || contains(part, tags::think_open) ||
        contains(part, tags::answer_open))
      throw RenderError("section text contains a reserved tag and cannot be rendered");
  }
  std::string out;
  out.reserve(planning.size() + observation.size() + reasoning.size() + answer.size() + 128);
  out.append(tags::think_open).append("\n");
  out.append(tags::planning_open).append(planning).append(tags::planning_close).append("\n");
  out.append(tags::observation_open).append(observation).append(tags::observation_close).append("\n");
  out.append(tags::reasoning_open).append(reasoning).append(tags::reasoning_close).append("\n");
  out.append(tags::think_close).append("\n");
  out.append(tags::answer_open).append(answer).append(tags::answer_close);
  return out;
}

std::optional<std::string> find_answer_block(std::string_view text) {
  const auto open = text.find(tags::answer_open);
  if (open == std::string_view::npos) return std::nullopt;
  const auto start = open + tags::answer_open.size();
  const auto close = text.find(tags::answer_close, start);
  if (close == std::string_view::npos) return std::nullopt;
  return std::string(text.substr(start, close - start));
}

ParsedAnswer extract_answer(std::string_view answer_text, QuestionType kind) {
  ParsedAnswer a;
  a.kind = kind;
  std::string_view s = trim(answer_text);
  switch (kind) {
    case QuestionType::progress:
    case QuestionType::numerical: {
      if (!s.empty() && s.back() == '%') s = trim(s.substr(0, s.size() - 1));
      if (auto v = parse_decimal(s)) {
        a.numeric_value = *v;
        a.parse_ok = true;
        a.out_of_range = kind == QuestionType::progress && (*v < 0.0 || *v > 100.0);
      }
      break;
    }
    case QuestionType::boolean: {
      const std::string lower = ascii_lower(s);
      if (lower == "yes" || lower == "no") {
        a.text_value = lower == "yes" ? "Yes" : "No";
        a.parse_ok = true;
      }
      break;
    }
    case QuestionType::multiple_choice: {
      if (s.size() == 2 && (s[1] == '.' || s[1] == ')')) s = s.substr(0, 1);
      if (s.size() == 1 && std::isalpha(static_cast<unsigned char>(s[0]))) {
        a.text_value = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(s[0]))));
        a.parse_ok = true;
      }
      break;
    }
    case QuestionType::ocr:
    case QuestionType::free_form: {
      a.text_value = std::string(s);
      a.parse_ok = !s.empty();
      break;
    }
  }
  return a;
}

bool match_answer(const ParsedAnswer& pred, const ParsedAnswer& gt, QuestionType kind, double numeric_tol) {
  if (pred.kind != kind || gt.kind != kind)
    throw UsageError("match_answer: answer kinds do not match " + to_string(kind));
  if (!pred.parse_ok || !gt.parse_ok) return false;
  switch (kind) {
    case QuestionType::progress:
    case QuestionType::numerical:
      return std::abs(*pred.numeric_value - *gt.numeric_value) <= numeric_tol;
    case QuestionType::boolean:
    case QuestionType::multiple_choice:
      return *pred.text_value == *gt.text_value;
    case QuestionType::ocr:
    case QuestionType::free_form:
      return ascii_lower(trim(*pred.text_value)) == ascii_lower(trim(*gt.text_value));
  }
  return false;
}

}  // namespace procrit
