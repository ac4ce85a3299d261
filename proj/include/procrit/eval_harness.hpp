#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "procrit/metrics.hpp"
#include "procrit/response_grammar.hpp"
#include "procrit/trajectory.hpp"

namespace procrit {

enum class MediaRole { init, frame, current };

struct MediaPart {
  MediaRole role = MediaRole::frame;
  std::string path;
};

struct PromptBundle {
  std::string system_text;
  std::string user_text;
  /// Ordered init, frames..., current; only roles enabled by the mask.
  std::vector<MediaPart> media;
  int question_id = 1;
  QuestionType kind = QuestionType::progress;
};

struct PromptOptions {
  /// Attach media_refs as images when the sample has them; otherwise the
  /// triad is described by a textual feature digest.
  bool attach_media = true;
  int max_frames = 32;
  std::optional<std::string> init_scene_text;
};

/// Assembles system and user messages for one sample. With no question_id
/// the variation is drawn uniformly from `rng`. Throws UsageError on an
/// unknown id or when neither an id nor an rng is given.
PromptBundle build_prompt(const EpisodeSample& sample, std::optional<int> question_id, QuestionType kind,
                          std::mt19937_64* rng = nullptr, const PromptOptions& options = {});

struct ModelEndpointConfig {
  std::string base_url = "http://127.0.0.1:8080";
  /// Name of the environment variable holding the bearer token (may be empty).
  std::string api_key_env_var_name;
  std::string model_name = "mock";
  int max_frames = 32;
  double timeout_s = 60.0;
  int max_concurrency = 4;
  int retries = 2;
  double backoff_initial_s = 0.25;
  int max_tokens = 4096;

  void validate() const;
};

enum class TokenSource { reported, approximate };

struct EvalRecord {
  std::string sample_id;
  int question_id = 0;
  std::string raw_text;
  StructuredResponse parsed;
  ParsedAnswer answer;
  double latency_s = 0.0;
  double token_count = 0.0;
  TokenSource token_count_source = TokenSource::approximate;
  /// Set when the request failed after all retries; such records carry no
  /// response and are excluded from the metrics.
  std::optional<std::string> error;
};

/// Request body for the chat endpoint; `sample_id` and the question type
/// travel in the "metadata" object.
std::string build_request_body(const ModelEndpointConfig& endpoint, const PromptBundle& bundle,
                               const std::string& sample_id);

struct ChatReply {
  std::string text;
  std::optional<double> completion_tokens;
};

/// Throws ProtocolError when the body is not a valid response object.
ChatReply parse_reply_body(const std::string& body);

/// One request with retries and exponential backoff. Throws TransportError
/// (carrying the sample id) or ProtocolError.
EvalRecord query_model(const ModelEndpointConfig& endpoint, const PromptBundle& bundle,
                       const std::string& sample_id);

struct EvalRunConfig {
  QuestionType kind = QuestionType::progress;
  /// Fixed variation for every sample; otherwise drawn per sample from seed.
  std::optional<int> question_id;
  std::uint64_t seed = 42;
  PromptOptions prompt;
};

/// Evaluates every sample with at most endpoint.max_concurrency requests in
/// flight. Output order follows `samples`.
std::vector<EvalRecord> run_eval(const std::vector<EpisodeSample>& samples, const ModelEndpointConfig& endpoint,
                                 const EvalRunConfig& cfg);

/// Scores records against their samples (matched by position).
MetricReport generate_report(const std::vector<EvalRecord>& records, const std::vector<EpisodeSample>& samples,
                             const MetricConfig& cfg, QuestionType kind, const std::string& model,
                             const std::string& split);

struct ReportFiles {
  std::filesystem::path report_json;
  std::filesystem::path summary_csv;
  std::filesystem::path interval_csv;
  std::filesystem::path predictions_jsonl;
  /// Latency makes this one run-dependent.
  std::filesystem::path efficiency_csv;
};

ReportFiles write_report_files(const MetricReport& report, const std::vector<EvalRecord>& records,
                               const std::filesystem::path& dir);

}  // namespace procrit
