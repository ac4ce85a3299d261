#include "procrit/eval_harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "procrit/errors.hpp"
#include "procrit/numfmt.hpp"
#include "procrit/prompts.hpp"
#include "procrit/seeding.hpp"

namespace procrit {

namespace {

using ojson = nlohmann::ordered_json;

std::string digest(const std::vector<double>& v) {
  std::string out = "[";
  char buf[32];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%s%.4f", i ? ", " : "", v[i]);
    out += buf;
  }
  return out + "]";
}

std::string feature_digest(const EpisodeSample& s) {
  std::string out = "Visual features (latent state digests):\n";
  if (s.modality_mask.init && s.phi_init) out += "Initial State: " + digest(*s.phi_init) + "\n";
  if (s.modality_mask.seq && s.phi_seq) {
    out += "Video:";
    for (std::size_t j = 0; j < s.phi_seq->size(); ++j) out += (j ? "; " : " ") + digest((*s.phi_seq)[j]);
    out += "\n";
  }
  if (s.modality_mask.curr && s.phi_curr) out += "Current State: " + digest(*s.phi_curr) + "\n";
  return out;
}

std::vector<MediaPart> select_media(const EpisodeSample& s, int max_frames) {
  std::vector<MediaPart> media;
  const auto& refs = *s.media_refs;
  if (refs.empty()) return media;
  if (refs.size() == 1) {
    if (s.modality_mask.curr) media.push_back({MediaRole::current, refs[0]});
    return media;
  }
  if (s.modality_mask.init) media.push_back({MediaRole::init, refs.front()});
  if (s.modality_mask.seq && refs.size() > 2 && max_frames > 0) {
    const std::size_t frames = refs.size() - 2;
    const std::size_t keep = std::min<std::size_t>(frames, static_cast<std::size_t>(max_frames));
    for (std::size_t k = 0; k < keep; ++k) {
      const std::size_t idx = keep == 1 ? frames - 1 : k * (frames - 1) / (keep - 1);
      media.push_back({MediaRole::frame, refs[1 + idx]});
    }
  }
  if (s.modality_mask.curr) media.push_back({MediaRole::current, refs.back()});
  return media;
}

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: " + url);
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigError("unsupported scheme in base_url: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.scheme_host_port = url.substr(0, path_start);
  out.path_prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  return out;
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read media file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

void ModelEndpointConfig::validate() const {
  if (max_concurrency < 1) throw ConfigError("max_concurrency must be >= 1");
  if (retries < 0) throw ConfigError("retries must be >= 0");
  if (!(timeout_s > 0.0)) throw ConfigError("timeout_s must be positive");
  if (max_frames < 0) throw ConfigError("max_frames must be >= 0");
  if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
  split_url(base_url);
}

PromptBundle build_prompt(const EpisodeSample& sample, std::optional<int> question_id, QuestionType kind,
                          std::mt19937_64* rng, const PromptOptions& options) {
  PromptBundle b;
  b.kind = kind;
  if (question_id) {
    b.question_id = *question_id;
  } else {
    if (rng == nullptr) throw UsageError("build_prompt: need a question id or an rng");
    b.question_id = std::uniform_int_distribution<int>(1, prompts::kNumQuestionVariations)(*rng);
  }
  const std::string_view question = prompts::question_variation(b.question_id);

  b.system_text = std::string(prompts::system_prompt());
  std::string& u = b.user_text;
  u += "Task info:" + sample.task_info + "\n";
  if (options.init_scene_text) u += "Init Scene:" + *options.init_scene_text + "\n";
  const bool use_media = options.attach_media && sample.media_refs && !sample.media_refs->empty();
  if (use_media) b.media = select_media(sample, options.max_frames);
  else u += feature_digest(sample);
  u += "\nQUESTION:\n";
  u += question;
  if (kind == QuestionType::boolean) u += "\nFailure check: has this execution attempt failed?";
  u += "\n\nQUESTION TYPE:\n";
  u += prompts::type_instruction(kind);
  u += "\n\n" + prompts::reasoning_template(kind);
  return b;
}

std::string build_request_body(const ModelEndpointConfig& endpoint, const PromptBundle& bundle,
                               const std::string& sample_id) {
  ojson user_content = ojson::array();
  user_content.push_back({{"type", "text"}, {"text", bundle.user_text}});
  for (const auto& m : bundle.media)
    user_content.push_back({{"type", "image"}, {"data_base64", httplib::detail::base64_encode(read_file_bytes(m.path))}});
  ojson body;
  body["model"] = endpoint.model_name;
  body["messages"] = ojson::array({{{"role", "system"}, {"content", bundle.system_text}},
                                   {{"role", "user"}, {"content", std::move(user_content)}}});
  body["max_tokens"] = endpoint.max_tokens;
  body["metadata"] = {{"sample_id", sample_id}, {"question_type", to_string(bundle.kind)},
                      {"question_id", bundle.question_id}};
  return body.dump();
}

ChatReply parse_reply_body(const std::string& body) {
  ojson j;
  try {
    j = ojson::parse(body);
  } catch (const ojson::parse_error& e) {
    throw ProtocolError(std::string("response is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("text") || !j["text"].is_string())
    throw ProtocolError("response lacks a string 'text' field");
  ChatReply r;
  r.text = j["text"].get<std::string>();
  if (auto it = j.find("usage"); it != j.end() && it->is_object()) {
    if (auto t = it->find("completion_tokens"); t != it->end() && t->is_number())
      r.completion_tokens = t->get<double>();
  }
  return r;
}

EvalRecord query_model(const ModelEndpointConfig& endpoint, const PromptBundle& bundle,
                       const std::string& sample_id) {
  const ParsedUrl url = split_url(endpoint.base_url);
  const std::string body = build_request_body(endpoint, bundle, sample_id);
  httplib::Headers headers;
  if (!endpoint.api_key_env_var_name.empty()) {
    if (const char* key = std::getenv(endpoint.api_key_env_var_name.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  httplib::Client client(url.scheme_host_port);
  const auto timeout = std::chrono::duration<double>(endpoint.timeout_s);
  const auto secs = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
  client.set_connection_timeout(secs);
  client.set_read_timeout(secs);
  client.set_write_timeout(secs);

  std::string last_error;
  for (int attempt = 0; attempt <= endpoint.retries; ++attempt) {
    if (attempt > 0) {
      const double wait = endpoint.backoff_initial_s * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
    const auto start = std::chrono::steady_clock::now();
    auto res = client.Post(url.path_prefix + "/chat", headers, body, "application/json");
    const double latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    const ChatReply reply = parse_reply_body(res->body);
    EvalRecord rec;
    rec.sample_id = sample_id;
    rec.question_id = bundle.question_id;
    rec.raw_text = reply.text;
    rec.parsed = parse_response(reply.text);
    rec.answer = extract_answer(
        rec.parsed.outer_valid ? rec.parsed.answer_text : find_answer_block(reply.text).value_or(std::string()),
        bundle.kind);
    rec.latency_s = latency;
    if (reply.completion_tokens) {
      rec.token_count = *reply.completion_tokens;
      rec.token_count_source = TokenSource::reported;
    } else {
      rec.token_count = std::ceil(static_cast<double>(rec.parsed.raw_length_chars) / 4.0);
      rec.token_count_source = TokenSource::approximate;
    }
    return rec;
  }
  throw TransportError(sample_id, "sample " + sample_id + ": " + last_error + " after " +
                                      std::to_string(endpoint.retries + 1) + " attempt(s)");
}

std::vector<EvalRecord> run_eval(const std::vector<EpisodeSample>& samples, const ModelEndpointConfig& endpoint,
                                 const EvalRunConfig& cfg) {
  endpoint.validate();
  std::vector<EvalRecord> records(samples.size());
  // Prompts are built up front so the drawn question ids do not depend on
  // completion order.
  std::vector<PromptBundle> bundles;
  bundles.reserve(samples.size());
  PromptOptions prompt = cfg.prompt;
  prompt.max_frames = endpoint.max_frames;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::mt19937_64 rng(mix_seed(cfg.seed, i));
    bundles.push_back(build_prompt(samples[i], cfg.question_id, cfg.kind, &rng, prompt));
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < samples.size(); i = next++) {
      try {
        records[i] = query_model(endpoint, bundles[i], samples[i].sample_id);
      } catch (const Error& e) {
        EvalRecord failed;
        failed.sample_id = samples[i].sample_id;
        failed.question_id = bundles[i].question_id;
        failed.answer.kind = cfg.kind;
        failed.error = e.what();
        records[i] = std::move(failed);
      }
    }
  };
  const std::size_t n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(endpoint.max_concurrency), std::max<std::size_t>(samples.size(), 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  return records;
}

MetricReport generate_report(const std::vector<EvalRecord>& records, const std::vector<EpisodeSample>& samples,
                             const MetricConfig& cfg, QuestionType kind, const std::string& model,
                             const std::string& split) {
  cfg.validate();
  if (records.size() != samples.size()) throw UsageError("generate_report: records and samples differ in length");
  MetricReport r;
  r.model = model;
  r.split = split;
  r.question_type = to_string(kind);
  r.acc_tolerance = cfg.acc_tolerance;
  r.n_samples = samples.size();

  std::vector<double> preds, gts, latencies, tokens;
  std::vector<bool> fail_pred, fail_gt;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const EvalRecord& rec = records[i];
    if (rec.error) {
      ++r.n_transport_errors;
      continue;
    }
    latencies.push_back(rec.latency_s);
    tokens.push_back(rec.token_count);
    r.tokens_approximate = r.tokens_approximate || rec.token_count_source == TokenSource::approximate;
    if (!rec.answer.parse_ok) {
      ++r.n_parse_failures;
      continue;
    }
    ++r.n_scored;
    if (rec.answer.numeric_value) {
      preds.push_back(*rec.answer.numeric_value);
      gts.push_back(samples[i].progress_gt);
      r.n_out_of_range += rec.answer.out_of_range ? 1 : 0;
    } else if (kind == QuestionType::boolean) {
      fail_pred.push_back(*rec.answer.text_value == "Yes");
      fail_gt.push_back(samples[i].failure_gt);
    }
  }
  if (kind == QuestionType::progress || kind == QuestionType::numerical) {
    if (!preds.empty()) {
      const double m = mra(preds, gts, cfg);
      if (!std::isnan(m)) r.mra = m;
      r.mae = mae(preds, gts);
      r.acc_at_tol = acc_at(preds, gts, cfg.acc_tolerance);
    }
    r.interval_mae = interval_mae(preds, gts, cfg.interval_edges);
  }
  if (kind == QuestionType::boolean && !fail_pred.empty()) r.failure_accuracy = failure_accuracy(fail_pred, fail_gt);
  r.efficiency = efficiency_stats(latencies, tokens);
  return r;
}

ReportFiles write_report_files(const MetricReport& report, const std::vector<EvalRecord>& records,
                               const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  ReportFiles f{dir / "report.json", dir / "summary.csv", dir / "intervals.csv", dir / "predictions.jsonl",
                dir / "efficiency.csv"};
  auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + p.string());
    return out;
  };
  const std::span<const MetricReport> one(&report, 1);
  open(f.report_json) << report_to_json(report);
  {
    auto out = open(f.summary_csv);
    write_summary_csv(one, out);
  }
  {
    auto out = open(f.interval_csv);
    write_interval_csv(one, out);
  }
  {
    auto out = open(f.efficiency_csv);
    write_efficiency_csv(one, out);
  }
  auto out = open(f.predictions_jsonl);
  for (const auto& rec : records) {
    ojson j;
    j["sample_id"] = rec.sample_id;
    j["question_id"] = rec.question_id;
    j["outer_valid"] = rec.parsed.outer_valid;
    j["full_valid"] = rec.parsed.full_valid;
    j["parse_ok"] = rec.answer.parse_ok;
    j["numeric_value"] = rec.answer.numeric_value ? ojson(*rec.answer.numeric_value) : ojson(nullptr);
    j["text_value"] = rec.answer.text_value ? ojson(*rec.answer.text_value) : ojson(nullptr);
    j["token_count"] = rec.token_count;
    j["token_count_source"] = rec.token_count_source == TokenSource::reported ? "reported" : "approximate";
    j["error"] = rec.error ? ojson(*rec.error) : ojson(nullptr);
    out << j.dump() << '\n';
  }
  return f;
}

}  // namespace procrit
