#include "procrit/mock_server.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "procrit/errors.hpp"
#include "procrit/numfmt.hpp"
#include "procrit/seeding.hpp"

namespace procrit {

namespace {

using ojson = nlohmann::ordered_json;

constexpr std::string_view kPlanning = "Identify the goal and split it into its ordered sub-tasks.";
constexpr std::string_view kObservation = "The current frame shows the scene partway along the plan.";
constexpr std::string_view kReasoning = "Let me think: map the observed state onto the plan and count finished steps.";

std::string templated(std::string_view answer) {
  return render_response(kPlanning, kObservation, kReasoning, answer);
}

std::mt19937_64 sample_rng(const MockOptions& o, const std::string& sample_id) {
  return std::mt19937_64(mix_seed(o.seed, hash_string(sample_id)));
}

std::size_t word_count(const std::string& s) {
  std::istringstream in(s);
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

/// Validates the request schema; returns an error message or empty.
std::string check_request(const ojson& j) {
  if (!j.is_object()) return "body must be a JSON object";
  if (!j.contains("model") || !j["model"].is_string()) return "missing string 'model'";
  if (!j.contains("max_tokens") || !j["max_tokens"].is_number_integer()) return "missing integer 'max_tokens'";
  if (!j.contains("messages") || !j["messages"].is_array() || j["messages"].size() != 2)
    return "'messages' must hold a system and a user message";
  const auto& sys = j["messages"][0];
  const auto& user = j["messages"][1];
  if (sys.value("role", "") != "system" || !sys.contains("content") || !sys["content"].is_string())
    return "first message must be a system message with text content";
  if (user.value("role", "") != "user" || !user.contains("content") || !user["content"].is_array() ||
      user["content"].empty())
    return "second message must be a user message with content parts";
  const auto& parts = user["content"];
  if (parts[0].value("type", "") != "text" || !parts[0].contains("text") || !parts[0]["text"].is_string())
    return "first user content part must be text";
  for (std::size_t i = 1; i < parts.size(); ++i)
    if (parts[i].value("type", "") != "image" || !parts[i].contains("data_base64") ||
        !parts[i]["data_base64"].is_string())
      return "additional user content parts must be images with data_base64";
  if (!j.contains("metadata") || !j["metadata"].is_object() || !j["metadata"].contains("sample_id") ||
      !j["metadata"]["sample_id"].is_string())
    return "missing metadata.sample_id";
  return {};
}

}  // namespace

MockBehavior MockBehavior::parse(std::string_view spec) {
  const auto colon = spec.find(':');
  const std::string_view name = spec.substr(0, colon);
  const std::string_view arg = colon == std::string_view::npos ? std::string_view() : spec.substr(colon + 1);
  MockBehavior b;
  auto number = [&](double fallback) {
    if (arg.empty()) return fallback;
    auto v = parse_double(arg);
    if (!v) throw ConfigError("bad mock behavior argument '" + std::string(arg) + "'");
    return *v;
  };
  if (name == "oracle") b.kind = Kind::oracle;
  else if (name == "constant") b = {Kind::constant, number(50.0)};
  else if (name == "random") b.kind = Kind::random;
  else if (name == "noisy_oracle") b = {Kind::noisy_oracle, number(5.0)};
  else if (name == "format_breaker") b.kind = Kind::format_breaker;
  else throw ConfigError("unknown mock behavior '" + std::string(spec) + "'");
  return b;
}

std::string MockBehavior::to_string() const {
  switch (kind) {
    case Kind::oracle: return "oracle";
    case Kind::constant: return "constant:" + format_double(param);
    case Kind::random: return "random";
    case Kind::noisy_oracle: return "noisy_oracle:" + format_double(param);
    case Kind::format_breaker: return "format_breaker";
  }
  return "oracle";
}

std::string mock_reply_text(const MockOptions& o, const EpisodeSample* sample, const std::string& sample_id,
                            QuestionType kind) {
  using Kind = MockBehavior::Kind;
  const Kind behavior = o.behavior.kind;
  if (behavior == Kind::format_breaker) return "The robot seems to be about 50% of the way through the task.";
  const bool needs_truth = behavior == Kind::oracle || behavior == Kind::noisy_oracle;
  if (needs_truth && sample == nullptr) throw UsageError("unknown sample id '" + sample_id + "'");

  const bool numeric = kind == QuestionType::progress || kind == QuestionType::numerical;
  switch (behavior) {
    case Kind::oracle:
      if (numeric) return templated(format_double(sample->progress_gt));
      if (kind == QuestionType::boolean) return templated(sample->failure_gt ? "Yes" : "No");
      return templated(kind == QuestionType::multiple_choice ? "A" : sample->task_info);
    case Kind::constant:
      if (numeric) return templated(format_double(o.behavior.param));
      if (kind == QuestionType::boolean) return templated(o.behavior.param != 0.0 ? "Yes" : "No");
      return templated(kind == QuestionType::multiple_choice ? "A" : "constant");
    case Kind::random: {
      auto rng = sample_rng(o, sample_id);
      if (numeric) return templated(std::to_string(std::uniform_int_distribution<int>(0, 100)(rng)));
      if (kind == QuestionType::boolean) return templated(std::bernoulli_distribution(0.5)(rng) ? "Yes" : "No");
      const char letter = static_cast<char>('A' + std::uniform_int_distribution<int>(0, 3)(rng));
      return templated(std::string(1, letter));
    }
    case Kind::noisy_oracle: {
      if (!numeric) {
        MockOptions exact = o;
        exact.behavior = MockBehavior{};
        return mock_reply_text(exact, sample, sample_id, kind);
      }
      auto rng = sample_rng(o, sample_id);
      const double noisy = sample->progress_gt + std::normal_distribution<double>(0.0, o.behavior.param)(rng);
      return templated(format_double(std::clamp(noisy, 0.0, 100.0)));
    }
    case Kind::format_breaker: break;
  }
  return {};
}

MockServer::MockServer(std::vector<EpisodeSample> manifest, MockOptions options)
    : options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  if (!(options_.failure_rate >= 0.0 && options_.failure_rate <= 1.0))
    throw ConfigError("mock failure_rate must lie in [0, 1]");
  for (auto& s : manifest) {
    std::string id = s.sample_id;
    samples_.insert_or_assign(std::move(id), std::move(s));
  }
  install_routes();
}

MockServer::~MockServer() { stop(); }

void MockServer::install_routes() {
  server_->Post("/chat", [this](const httplib::Request& req, httplib::Response& res) {
    ++requests_;
    auto fail = [&](int status, const std::string& msg) {
      res.status = status;
      res.set_content(ojson{{"error", msg}}.dump(), "application/json");
    };
    if (options_.required_api_key &&
        req.get_header_value("Authorization") != "Bearer " + *options_.required_api_key)
      return fail(401, "missing or invalid bearer token");

    ojson body;
    try {
      body = ojson::parse(req.body);
    } catch (const ojson::parse_error&) {
      return fail(400, "body is not JSON");
    }
    if (const std::string problem = check_request(body); !problem.empty()) return fail(400, problem);

    const std::string sample_id = body["metadata"]["sample_id"].get<std::string>();
    QuestionType kind = QuestionType::progress;
    try {
      kind = parse_question_type(body["metadata"].value("question_type", "progress"));
    } catch (const Error& e) {
      return fail(400, e.what());
    }
    if (options_.failure_rate > 0.0) {
      auto rng = std::mt19937_64(mix_seed(options_.seed ^ 0xFA11, hash_string(sample_id)));
      if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < options_.failure_rate)
        return fail(500, "injected failure");
    }

    const auto it = samples_.find(sample_id);
    std::string text;
    try {
      text = mock_reply_text(options_, it == samples_.end() ? nullptr : &it->second, sample_id, kind);
    } catch (const UsageError& e) {
      return fail(404, e.what());
    }
    ojson reply;
    reply["text"] = text;
    if (!options_.omit_usage)
      reply["usage"] = {{"completion_tokens", options_.reported_tokens ? *options_.reported_tokens
                                                                       : static_cast<int>(word_count(text))}};
    res.set_content(reply.dump(), "application/json");
  });
}

int MockServer::start(int port, const std::string& host) {
  host_ = host;
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) throw ConfigError("mock server could not bind to " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void MockServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string MockServer::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

}  // namespace procrit
