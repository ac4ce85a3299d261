#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "procrit/errors.hpp"
#include "procrit/eval_harness.hpp"
#include "procrit/manifest.hpp"
#include "procrit/mock_server.hpp"
#include "procrit/prompts.hpp"

#include <httplib.h>

using namespace procrit;

namespace {

std::vector<EpisodeSample> five() { return read_manifest(std::filesystem::path(PROCRIT_FIXTURE_DIR) / "five_labels.jsonl"); }

MockOptions with(const std::string& behavior) {
  MockOptions o;
  o.behavior = MockBehavior::parse(behavior);
  return o;
}

ModelEndpointConfig endpoint_for(const MockServer& s, int concurrency = 4) {
  ModelEndpointConfig e;
  e.base_url = s.base_url();
  e.max_concurrency = concurrency;
  e.retries = 1;
  e.backoff_initial_s = 0.001;
  e.timeout_s = 10;
  return e;
}

MetricReport evaluate(const std::vector<EpisodeSample>& samples, const std::string& behavior,
                      QuestionType kind = QuestionType::progress) {
  MockServer server(samples, with(behavior));
  server.start();
  EvalRunConfig cfg;
  cfg.kind = kind;
  const auto recs = run_eval(samples, endpoint_for(server), cfg);
  return generate_report(recs, samples, MetricConfig{}, kind, "mock", "test");
}

std::vector<EpisodeSample> balanced_boolean(int n) {
  std::vector<EpisodeSample> out;
  for (int i = 0; i < n; ++i) {
    EpisodeSample s;
    s.sample_id = "ep" + std::to_string(i) + "-f0";
    s.failure_gt = i % 2 == 0;
    s.progress_gt = i % 101;
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("oracle mock scores perfectly") {
  const auto samples = five();
  MockServer server(samples, with("oracle"));
  server.start();
  const auto recs = run_eval(samples, endpoint_for(server), EvalRunConfig{});
  REQUIRE(recs.size() == 5);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK_FALSE(recs[i].error.has_value());
    CHECK(recs[i].parsed.outer_valid);
    CHECK(*recs[i].answer.numeric_value == samples[i].progress_gt);
  }
  const auto r = generate_report(recs, samples, MetricConfig{}, QuestionType::progress, "mock", "test");
  CHECK(*r.mra == 1.0);
  CHECK(*r.mae == 0.0);
  CHECK(r.n_scored == 5);
  CHECK(server.request_count() == 5);
}

TEST_CASE("constant mock on the five-label manifest") {
  const auto r = evaluate(five(), "constant:50");
  CHECK(*r.mae == doctest::Approx(30.0).epsilon(1e-12));
  CHECK(*r.acc_at_tol == doctest::Approx(0.2));
}

TEST_CASE("report metrics equal direct metric calls") {
  const auto samples = five();
  MockServer server(samples, with("noisy_oracle:10"));
  server.start();
  const auto recs = run_eval(samples, endpoint_for(server), EvalRunConfig{});
  const auto r = generate_report(recs, samples, MetricConfig{}, QuestionType::progress, "mock", "test");
  std::vector<double> p, g;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    p.push_back(*recs[i].answer.numeric_value);
    g.push_back(samples[i].progress_gt);
  }
  CHECK(*r.mra == mra(p, g, MetricConfig{}));
  CHECK(*r.mae == mae(p, g));
}

TEST_CASE("format breaker yields only parse failures") {
  const auto r = evaluate(five(), "format_breaker");
  CHECK(r.n_parse_failures == 5);
  CHECK(r.n_scored == 0);
  CHECK_FALSE(r.mae.has_value());
  CHECK_FALSE(r.mra.has_value());
}

TEST_CASE("boolean oracle and random mocks") {
  const auto samples = balanced_boolean(200);
  CHECK(*evaluate(samples, "oracle", QuestionType::boolean).failure_accuracy == 1.0);

  // the reply text is a pure function, so the large sample skips HTTP
  const auto big = balanced_boolean(10000);
  MockOptions o = with("random");
  int hits = 0;
  for (const auto& s : big) {
    const auto parsed = parse_response(mock_reply_text(o, &s, s.sample_id, QuestionType::boolean));
    const auto a = extract_answer(parsed.answer_text, QuestionType::boolean);
    REQUIRE(a.parse_ok);
    hits += (*a.text_value == "Yes") == s.failure_gt ? 1 : 0;
  }
  CHECK(std::fabs(hits / 10000.0 - 0.5) <= 0.02);
}

TEST_CASE("noisy oracle stays within five sigma and the label range") {
  MockOptions o = with("noisy_oracle:5");
  int moved = 0;
  for (int i = 0; i < 1000; ++i) {
    EpisodeSample s;
    s.sample_id = "s" + std::to_string(i);
    s.progress_gt = i % 101;
    const auto parsed = parse_response(mock_reply_text(o, &s, s.sample_id, QuestionType::progress));
    const auto a = extract_answer(parsed.answer_text, QuestionType::progress);
    REQUIRE(a.parse_ok);
    const double v = *a.numeric_value;
    CHECK(v >= 0.0);
    CHECK(v <= 100.0);
    CHECK(std::fabs(v - s.progress_gt) <= 25.0);
    moved += v != s.progress_gt ? 1 : 0;
  }
  CHECK(moved > 500);
}

TEST_CASE("mock behaviour parsing") {
  CHECK(MockBehavior::parse("constant").param == 50.0);
  CHECK(MockBehavior::parse("constant:12").param == 12.0);
  CHECK(MockBehavior::parse("noisy_oracle").param == 5.0);
  CHECK(MockBehavior::parse("random").to_string() == "random");
  CHECK_THROWS_AS(MockBehavior::parse("psychic"), ConfigError);
}

TEST_CASE("mock failure rate of one marks every record") {
  const auto samples = five();
  MockOptions o = with("oracle");
  o.failure_rate = 1.0;
  MockServer server(samples, o);
  server.start();
  const auto recs = run_eval(samples, endpoint_for(server), EvalRunConfig{});
  for (const auto& r : recs) {
    CHECK(r.error.has_value());
    CHECK(r.raw_text.empty());
  }
  const auto rep = generate_report(recs, samples, MetricConfig{}, QuestionType::progress, "mock", "test");
  CHECK(rep.n_transport_errors == 5);
  CHECK(server.request_count() == 10);
}

TEST_CASE("unreachable host raises a transport error with the sample id") {
  ModelEndpointConfig e;
  e.base_url = "http://127.0.0.1:1";
  e.retries = 0;
  e.timeout_s = 1;
  const auto bundle = build_prompt(five()[0], 1, QuestionType::progress);
  try {
    query_model(e, bundle, "ep1-f0");
    FAIL("expected a transport error");
  } catch (const TransportError& err) {
    CHECK(std::string(err.what()).find("ep1-f0") != std::string::npos);
  }
}

TEST_CASE("concurrency does not change the report") {
  const auto samples = balanced_boolean(60);
  MockServer server(samples, with("noisy_oracle:8"));
  server.start();
  EvalRunConfig cfg;
  const auto a = run_eval(samples, endpoint_for(server, 1), cfg);
  const auto b = run_eval(samples, endpoint_for(server, 8), cfg);
  const auto ra = generate_report(a, samples, MetricConfig{}, QuestionType::progress, "mock", "test");
  const auto rb = generate_report(b, samples, MetricConfig{}, QuestionType::progress, "mock", "test");
  CHECK(report_to_json(ra) == report_to_json(rb));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].raw_text == b[i].raw_text);
    CHECK(a[i].question_id == b[i].question_id);
  }
}

TEST_CASE("token counts come from usage or the text length") {
  const auto samples = five();
  MockOptions o = with("oracle");
  o.reported_tokens = 100;
  MockServer server(samples, o);
  server.start();
  auto recs = run_eval(samples, endpoint_for(server), EvalRunConfig{});
  CHECK(recs[0].token_count == 100.0);
  CHECK(recs[0].token_count_source == TokenSource::reported);

  MockOptions bare = with("oracle");
  bare.omit_usage = true;
  MockServer server2(samples, bare);
  server2.start();
  recs = run_eval(samples, endpoint_for(server2), EvalRunConfig{});
  CHECK(recs[0].token_count_source == TokenSource::approximate);
  CHECK(recs[0].token_count == std::ceil(recs[0].parsed.raw_length_chars / 4.0));
  CHECK(generate_report(recs, samples, MetricConfig{}, QuestionType::progress, "m", "s").tokens_approximate);
}

TEST_CASE("bearer token is enforced") {
  const auto samples = five();
  MockOptions o = with("oracle");
  o.required_api_key = "s3cret";
  MockServer server(samples, o);
  server.start();
  auto e = endpoint_for(server);
  e.retries = 0;
  for (const auto& r : run_eval(samples, e, EvalRunConfig{})) CHECK(r.error.has_value());
  ::setenv("PROCRIT_TEST_KEY", "s3cret", 1);
  e.api_key_env_var_name = "PROCRIT_TEST_KEY";
  for (const auto& r : run_eval(samples, e, EvalRunConfig{})) CHECK_FALSE(r.error.has_value());
}

TEST_CASE("mock rejects malformed requests") {
  const auto samples = five();
  MockServer server(samples, with("oracle"));
  server.start();
  httplib::Client c("127.0.0.1", server.port());
  auto res = c.Post("/chat", "{not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  res = c.Post("/chat", R"({"messages":[]})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  res = c.Post("/chat", build_request_body(ModelEndpointConfig{}, build_prompt(samples[0], 1, QuestionType::progress), "nope"),
               "application/json");
  REQUIRE(res);
  CHECK(res->status == 404);
}

TEST_CASE("reply bodies and request bodies") {
  CHECK_THROWS_AS(parse_reply_body("[]"), ProtocolError);
  CHECK_THROWS_AS(parse_reply_body("oops"), ProtocolError);
  const auto r = parse_reply_body(R"({"text":"hi","usage":{"completion_tokens":7}})");
  CHECK(r.text == "hi");
  CHECK(*r.completion_tokens == 7.0);

  ModelEndpointConfig e;
  const auto body = build_request_body(e, build_prompt(five()[1], 4, QuestionType::progress), "ep2-f5");
  CHECK(body.find("\"sample_id\":\"ep2-f5\"") != std::string::npos);
  CHECK(body.find("Estimate the completion percentage of the task.") != std::string::npos);
}

TEST_CASE("report files are written") {
  const auto samples = five();
  MockServer server(samples, with("oracle"));
  server.start();
  const auto recs = run_eval(samples, endpoint_for(server), EvalRunConfig{});
  const auto rep = generate_report(recs, samples, MetricConfig{}, QuestionType::progress, "mock", "test");
  const auto dir = std::filesystem::temp_directory_path() / "procrit_eval_files";
  std::filesystem::remove_all(dir);
  const auto files = write_report_files(rep, recs, dir);
  CHECK(std::filesystem::exists(files.report_json));
  CHECK(std::filesystem::exists(files.summary_csv));
  CHECK(std::filesystem::exists(files.predictions_jsonl));
  std::ifstream in(files.predictions_jsonl);
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == 5);
  std::filesystem::remove_all(dir);
}

TEST_CASE("endpoint validation") {
  ModelEndpointConfig e;
  e.max_concurrency = 0;
  CHECK_THROWS_AS(e.validate(), ConfigError);
  e = {};
  e.base_url = "ftp://x";
  CHECK_THROWS(e.validate());
}
