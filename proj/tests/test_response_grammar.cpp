#include <doctest.h>

#include <random>
#include <string>
#include <vector>

#include "procrit/errors.hpp"
#include "procrit/response_grammar.hpp"
#include "reward_cases.hpp"

using namespace procrit;

namespace {

const std::vector<std::string_view> kAllTags = {
    tags::think_open,        tags::think_close,       tags::planning_open, tags::planning_close,
    tags::observation_open,  tags::observation_close, tags::reasoning_open, tags::reasoning_close,
    tags::answer_open,       tags::answer_close};

bool has_reserved(const std::string& s) {
  for (auto t : kAllTags)
    if (s.find(t) != std::string::npos) return true;
  return false;
}

std::string random_text(std::mt19937_64& gen, std::size_t max_len) {
  static const std::string alphabet = "ab <>/thinkanswer \n\t%0123456789.";
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s(len(gen), ' ');
  for (char& c : s) c = alphabet[pick(gen)];
  return s;
}

}  // namespace

TEST_CASE("outer grammar examples") {
  const auto r = parse_response("<think>x</think><answer>42</answer>");
  CHECK(r.outer_valid);
  CHECK_FALSE(r.full_valid);
  CHECK(r.answer_text == "42");
  CHECK(r.think_text == "x");

  CHECK_FALSE(is_valid("<think>x</think><answer>42</answer> and that is all", Strictness::outer));
  CHECK_FALSE(is_valid("<THINK>x</THINK><answer>42</answer>", Strictness::outer));
  CHECK_FALSE(is_valid("<think>x</think><answer>   </answer>", Strictness::outer));
  CHECK_FALSE(is_valid("<think>a<answer>1</answer></think><answer>2</answer>", Strictness::outer));
  CHECK_FALSE(is_valid("", Strictness::outer));
}

TEST_CASE("full grammar requires the three ordered sections") {
  const std::string ok =
      "<think>\n<planning>P</planning>\n<observation>O</observation>\n<reasoning>R</reasoning>\n</think>"
      "<answer>10</answer>";
  const auto r = parse_response(ok);
  CHECK(r.full_valid);
  CHECK(r.planning_text == "P");
  CHECK(r.observation_text == "O");
  CHECK(r.reasoning_text == "R");

  CHECK_FALSE(is_valid("<think><observation>O</observation><planning>P</planning><reasoning>R</reasoning></think>"
                       "<answer>1</answer>",
                       Strictness::full));
  CHECK_FALSE(is_valid("<think><planning>P</planning><observation>O</observation></think><answer>1</answer>",
                       Strictness::full));
  CHECK_FALSE(is_valid("<think><planning>P</planning>x<observation>O</observation><reasoning>R</reasoning></think>"
                       "<answer>1</answer>",
                       Strictness::full));
}

TEST_CASE("fixed response suite classifies without error") {
  int errors = 0;
  for (const auto& c : reward_cases::kCases) {
    const bool got = parse_response(c.text).outer_valid;
    if (got != c.outer_valid) {
      ++errors;
      MESSAGE("misclassified: " << c.text);
    }
  }
  CHECK(errors == 0);
}

TEST_CASE("render round trip on examples") {
  const std::string text = render_response("a", "b", "c", "50");
  const auto r = parse_response(text);
  CHECK(r.full_valid);
  CHECK(r.planning_text == "a");
  CHECK(r.observation_text == "b");
  CHECK(r.reasoning_text == "c");
  CHECK(r.answer_text == "50");
  CHECK(is_valid(render_response("", "", "", "7"), Strictness::full));
  CHECK_THROWS_AS(render_response("a", "b", "ok </think> no", "50"), RenderError);
  CHECK_THROWS_AS(render_response("a </planning>", "b", "c", "50"), RenderError);
  CHECK_THROWS_AS(render_response("a", "b", "c", "5</answer>0"), RenderError);
}

TEST_CASE("round trip holds for random section strings free of tags") {
  std::mt19937_64 gen(11);
  int checked = 0;
  for (int i = 0; i < 2000; ++i) {
    std::string p = random_text(gen, 30), o = random_text(gen, 30), r = random_text(gen, 30);
    std::string a = random_text(gen, 10) + "x";
    if (has_reserved(p) || has_reserved(o) || has_reserved(r) || has_reserved(a)) continue;
    const auto parsed = parse_response(render_response(p, o, r, a));
    REQUIRE(parsed.full_valid);
    CHECK(parsed.planning_text == p);
    CHECK(parsed.observation_text == o);
    CHECK(parsed.reasoning_text == r);
    CHECK(parsed.answer_text == a);
    ++checked;
  }
  CHECK(checked > 1000);
}

TEST_CASE("deleting any single tag breaks validity") {
  const std::string text = render_response("plan", "see", "think", "60");
  for (auto tag : kAllTags) {
    std::string mutated = text;
    mutated.erase(mutated.find(tag), tag.size());
    const auto r = parse_response(mutated);
    CHECK_MESSAGE(!(r.outer_valid && r.full_valid), "deleted " << tag);
  }
}

TEST_CASE("parse is total and full validity implies outer validity") {
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int i = 0; i < 3000; ++i) {
    std::string s;
    if (i % 2) {
      s.resize(static_cast<std::size_t>(i % 64));
      for (char& c : s) c = static_cast<char>(byte(gen));
    } else {
      // splice tags into random text so the structured paths get exercised
      for (int k = 0; k < 6; ++k) {
        s += random_text(gen, 4);
        s += kAllTags[static_cast<std::size_t>(byte(gen)) % kAllTags.size()];
      }
    }
    StructuredResponse r;
    CHECK_NOTHROW(r = parse_response(s));
    if (r.full_valid) CHECK(r.outer_valid);
    if (r.outer_valid) CHECK_FALSE(trim(r.answer_text).empty());
  }
}

TEST_CASE("raw length counts code points") {
  CHECK(parse_response("abc").raw_length_chars == 3);
  CHECK(parse_response("été").raw_length_chars == 3);
}

TEST_CASE("extract_answer per question type") {
  auto p = extract_answer("50", QuestionType::progress);
  CHECK(p.parse_ok);
  CHECK(*p.numeric_value == 50.0);
  p = extract_answer(" 72.5% ", QuestionType::progress);
  CHECK(p.parse_ok);
  CHECK(*p.numeric_value == 72.5);
  CHECK_FALSE(extract_answer("about halfway", QuestionType::progress).parse_ok);
  CHECK_FALSE(extract_answer("5e1", QuestionType::progress).parse_ok);
  CHECK_FALSE(extract_answer("50%%", QuestionType::progress).parse_ok);
  p = extract_answer("120", QuestionType::progress);
  CHECK(p.parse_ok);
  CHECK(p.out_of_range);
  CHECK(*p.numeric_value == 120.0);
  CHECK(extract_answer("-3", QuestionType::progress).out_of_range);
  CHECK_FALSE(extract_answer("120", QuestionType::numerical).out_of_range);

  CHECK(*extract_answer(" yes ", QuestionType::boolean).text_value == "Yes");
  CHECK(*extract_answer("NO", QuestionType::boolean).text_value == "No");
  CHECK_FALSE(extract_answer("maybe", QuestionType::boolean).parse_ok);

  CHECK(*extract_answer("b)", QuestionType::multiple_choice).text_value == "B");
  CHECK(*extract_answer("C.", QuestionType::multiple_choice).text_value == "C");
  CHECK_FALSE(extract_answer("AB", QuestionType::multiple_choice).parse_ok);

  CHECK(*extract_answer("  Exit 4 ", QuestionType::ocr).text_value == "Exit 4");
  CHECK_FALSE(extract_answer("   ", QuestionType::free_form).parse_ok);
}

TEST_CASE("match_answer examples") {
  CHECK(match_answer(extract_answer("Yes", QuestionType::boolean), extract_answer("yes", QuestionType::boolean),
                     QuestionType::boolean, 0.0));
  CHECK(match_answer(extract_answer("B)", QuestionType::multiple_choice),
                     extract_answer("b", QuestionType::multiple_choice), QuestionType::multiple_choice, 0.0));
  CHECK_FALSE(match_answer(extract_answer("41.0", QuestionType::numerical),
                           extract_answer("42.0", QuestionType::numerical), QuestionType::numerical, 0.5));
  CHECK(match_answer(extract_answer("41.6", QuestionType::numerical),
                     extract_answer("42.0", QuestionType::numerical), QuestionType::numerical, 0.5));
  CHECK(match_answer(extract_answer(" Red Door", QuestionType::free_form),
                     extract_answer("red door ", QuestionType::free_form), QuestionType::free_form, 0.0));
  CHECK_THROWS_AS(match_answer(extract_answer("Yes", QuestionType::boolean),
                               extract_answer("1", QuestionType::numerical), QuestionType::boolean, 0.0),
                  UsageError);
}

TEST_CASE("find_answer_block tolerates surrounding junk") {
  CHECK(*find_answer_block("blah <answer>33</answer> trailing") == "33");
  CHECK_FALSE(find_answer_block("<answer>33"));
  CHECK_FALSE(find_answer_block("no tags"));
}

TEST_CASE("enum names round trip") {
  for (auto t : {QuestionType::progress, QuestionType::boolean, QuestionType::multiple_choice,
                 QuestionType::numerical, QuestionType::ocr, QuestionType::free_form})
    CHECK(parse_question_type(to_string(t)) == t);
  CHECK_THROWS_AS(parse_question_type("essay"), ConfigError);
  CHECK(parse_strictness("full") == Strictness::full);
  CHECK_THROWS_AS(parse_strictness("lenient"), ConfigError);
}
