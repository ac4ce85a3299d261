#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "procrit/response_grammar.hpp"
#include "procrit/trajectory.hpp"

namespace httplib {
class Server;
}

namespace procrit {

struct MockBehavior {
  enum class Kind { oracle, constant, random, noisy_oracle, format_breaker };
  Kind kind = Kind::oracle;
  /// constant: the answered value; noisy_oracle: the noise sigma.
  double param = 0.0;

  /// "oracle", "constant:50", "random", "noisy_oracle:5", "format_breaker".
  static MockBehavior parse(std::string_view spec);
  std::string to_string() const;
};

struct MockOptions {
  MockBehavior behavior;
  /// Keys every random decision, together with the sample id.
  std::uint64_t seed = 42;
  /// Fraction of samples whose requests always fail with HTTP 500.
  double failure_rate = 0.0;
  /// Fixed usage.completion_tokens; otherwise the reply's word count.
  std::optional<int> reported_tokens;
  bool omit_usage = false;
  /// When set, requests must carry "Authorization: Bearer <key>".
  std::optional<std::string> required_api_key;
};

/// Reply text for one request; a pure function of its inputs. `sample` is
/// null for ids missing from the manifest (only the oracle behaviors need it).
std::string mock_reply_text(const MockOptions& options, const EpisodeSample* sample, const std::string& sample_id,
                            QuestionType kind);

/// Chat-protocol mock endpoint serving POST /chat on 127.0.0.1.
class MockServer {
 public:
  MockServer(std::vector<EpisodeSample> manifest, MockOptions options);
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  /// Binds (port 0 picks a free one) and serves on a background thread.
  /// Returns the bound port.
  int start(int port = 0, const std::string& host = "127.0.0.1");
  void stop();

  int port() const { return port_; }
  std::string base_url() const;
  std::size_t request_count() const { return requests_.load(); }

 private:
  void install_routes();

  std::unordered_map<std::string, EpisodeSample> samples_;
  MockOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_ = "127.0.0.1";
  int port_ = 0;
  std::atomic<std::size_t> requests_{0};
};

}  // namespace procrit
