#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "procrit/trajectory.hpp"

namespace procrit {

/// One discrete response the toy policy can emit. Well-formed templates
/// answer a value on the 0, 5, ..., 100 grid; malformed ones reproduce
/// typical format failures.
struct ResponseTemplate {
  int template_id = 0;
  bool well_formed = true;
  std::optional<double> answer_value;
  std::string text;
};

inline constexpr int kAnswerGridStep = 5;
inline constexpr int kNumWellFormed = 100 / kAnswerGridStep + 1;
inline constexpr int kDefaultNumMalformed = 4;

/// 21 well-formed templates (ids 0..20, answers 0..100) followed by
/// `num_malformed` malformed templates cycling through: missing </answer>,
/// missing <think>, trailing prose, empty answer.
std::vector<ResponseTemplate> action_space(int num_malformed = kDefaultNumMalformed);

/// Well-formed template id whose answer is closest to `progress`.
int nearest_template(double progress);

/// Width bookkeeping for flattening an EpisodeSample.
struct FeatureLayout {
  int feature_dim = 8;
  int seq_len = 4;

  /// init + seq_len sequence points + curr + instruction.
  int width() const { return feature_dim * (seq_len + 3); }
};

struct Context {
  Eigen::VectorXd features;
  std::string sample_id;
};

/// Flattens [phi_init, phi_seq..., phi_curr, instruction] into a context.
/// Absent or masked blocks contribute zeros.
Context make_context(const EpisodeSample& sample, const FeatureLayout& layout);

/// Linear-softmax policy over response templates:
/// logits = W^T [x; 1], with W of shape (context_dim + 1) x num_actions.
/// The feature map of (x, a) is [x; 1] outer e_a, so the score function is
/// [x; 1] (e_a - pi)^T.
class ToyPolicy {
 public:
  ToyPolicy(int context_dim, int num_actions);
  explicit ToyPolicy(Eigen::MatrixXd weights);

  int context_dim() const { return static_cast<int>(weights_.rows()) - 1; }
  int num_actions() const { return static_cast<int>(weights_.cols()); }

  const Eigen::MatrixXd& weights() const { return weights_; }
  Eigen::MatrixXd& weights() { return weights_; }

  Eigen::VectorXd augmented(const Context& ctx) const;
  Eigen::VectorXd logits(const Context& ctx) const;
  Eigen::VectorXd log_probs(const Context& ctx) const;
  Eigen::VectorXd probs(const Context& ctx) const;
  double log_prob(const Context& ctx, int template_id) const;

  int sample(const Context& ctx, std::mt19937_64& rng) const;
  int greedy(const Context& ctx) const;

  /// Gradient of log pi(a | x) with respect to the weights.
  Eigen::MatrixXd grad_log_prob(const Context& ctx, int template_id) const;

  bool operator==(const ToyPolicy& other) const { return weights_ == other.weights_; }

 private:
  void check_action(int template_id) const;

  Eigen::MatrixXd weights_;
};

using FrozenPolicy = std::shared_ptr<const ToyPolicy>;

/// Deep immutable copy.
FrozenPolicy snapshot(const ToyPolicy& policy);

double enumerate_expected_reward(const ToyPolicy& policy, const Context& ctx,
                                 const std::function<double(int)>& reward_fn);
double enumerate_expected_reward(const ToyPolicy& policy, const Context& ctx,
                                 std::span<const double> action_rewards);

/// KL(p || q) on one context, exact over the action space.
double exact_kl(const ToyPolicy& p, const ToyPolicy& q, const Context& ctx);

struct CheckpointMeta {
  std::uint64_t seed = 0;
  int num_malformed = kDefaultNumMalformed;
  FeatureLayout layout;
};

struct Checkpoint {
  ToyPolicy policy;
  CheckpointMeta meta;
};

/// Text dump with a header line per field; weights use shortest round-trip
/// decimal, so save/load is exact.
void save_checkpoint(const ToyPolicy& policy, const CheckpointMeta& meta,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_to_string(const ToyPolicy& policy, const CheckpointMeta& meta);
Checkpoint checkpoint_from_string(const std::string& text);

}  // namespace procrit
