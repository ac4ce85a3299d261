#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "procrit/reward.hpp"
#include "procrit/toy_policy.hpp"

namespace procrit {

enum class KlMode { exact, sampled_k3 };

std::string to_string(KlMode m);
KlMode parse_kl_mode(std::string_view s);

struct GrpoConfig {
  int group_size = 8;
  double kl_beta = 0.04;
  double clip_epsilon = 0.2;
  double adv_epsilon = 1e-6;
  /// Toy-scale step size; large policies would use ~1e-6 with AdamW.
  double learning_rate = 1e-2;
  int steps = 0;
  int sync_old_every = 1;
  int batch_contexts = 4;
  KlMode kl_mode = KlMode::exact;
  /// Frobenius-norm gradient clipping; 0 disables it.
  double max_grad_norm = 0.0;
  std::uint64_t seed = 42;

  void validate() const;
};

struct GroupRollout {
  Context context;
  double progress_gt = 0.0;
  std::vector<int> actions;
  std::vector<std::string> raw_texts;
  std::vector<double> logp_old;
  std::vector<double> logp_ref;
  std::vector<double> logp_new;
  std::vector<double> rewards;
  std::vector<double> advantages;

  int size() const { return static_cast<int>(actions.size()); }
};

struct TrainRecord {
  int step = 0;
  double mean_reward = 0.0;
  /// Mean over groups of the within-group population standard deviation.
  double std_reward = 0.0;
  double mean_kl = 0.0;
  double loss = 0.0;
  double format_valid_rate = 0.0;
};

using TrainLog = std::vector<TrainRecord>;

void write_train_log_csv(const TrainLog& log, std::ostream& out);
void write_train_log_csv(const TrainLog& log, const std::filesystem::path& path);

/// A context with its ground truth, the unit the trainers iterate over.
struct TrainingExample {
  Context context;
  double progress_gt = 0.0;
};

/// Composite reward of every template against every example, plus the
/// per-template format validity. Rewards are deterministic in
/// (template text, ground truth), so scoring happens once up front.
struct RewardTable {
  std::vector<std::vector<double>> rewards;  // [example][template]
  std::vector<bool> format_valid;            // [template]
};

RewardTable score_actions(const std::vector<ResponseTemplate>& actions,
                          std::span<const TrainingExample> examples, const RewardConfig& cfg);

/// A_i = (r_i - mean) / (population std + adv_epsilon). Throws ConfigError
/// for fewer than two rewards.
std::vector<double> compute_advantages(std::span<const double> rewards, double adv_epsilon);

/// exp(logp_new - logp_old).
double probability_ratio(double logp_new, double logp_old);

/// min(rho * A, clip(rho, 1 - eps, 1 + eps) * A).
double clipped_term(double rho, double advantage, double clip_epsilon);

/// KL(policy || ref): exact enumeration, or the mean of the k3 estimator
/// (r - ln r - 1, r = pi_ref / pi) over `actions`.
double kl_penalty(const ToyPolicy& policy, const ToyPolicy& ref, const Context& ctx,
                  std::span<const int> actions, KlMode mode);

struct LossAndGradient {
  double loss = 0.0;
  Eigen::MatrixXd gradient;
  double mean_kl = 0.0;
};

/// Clipped-surrogate GRPO loss of one group and its gradient with respect to
/// the policy weights. `group.logp_old` and `group.advantages` are taken as
/// constants. Where the clipped branch is strictly selected the surrogate
/// contributes no gradient; ties go to the unclipped branch.
LossAndGradient grpo_loss(const GroupRollout& group, const ToyPolicy& policy, const ToyPolicy& ref,
                          const GrpoConfig& cfg);

/// Mean of grpo_loss over groups.
LossAndGradient batch_grpo_loss(std::span<const GroupRollout> groups, const ToyPolicy& policy,
                                const ToyPolicy& ref, const GrpoConfig& cfg);

struct RlResult {
  ToyPolicy policy;
  TrainLog log;
};

using StepCallback = std::function<void(int step, const ToyPolicy& policy)>;

/// GRPO training. The reference policy is frozen at entry; the rollout
/// policy is resynced every `sync_old_every` steps. One log record per step.
RlResult rl_train(ToyPolicy policy, std::span<const TrainingExample> data,
                  const std::vector<ResponseTemplate>& actions, const RewardConfig& reward_cfg,
                  const GrpoConfig& cfg, std::mt19937_64& rng, const StepCallback& on_step = {});

struct SftConfig {
  double learning_rate = 0.5;
  int steps = 500;

  void validate() const;
};

struct Demo {
  Context context;
  int target_template = 0;
};

struct SftResult {
  ToyPolicy policy;
  /// Mean negative log-likelihood before each step, plus the final value.
  std::vector<double> losses;
};

double sft_loss(const ToyPolicy& policy, std::span<const Demo> demos);

/// Full-batch gradient descent on the mean negative log-likelihood of the
/// demo targets. Throws ConfigError on an empty demo set.
SftResult sft_train(ToyPolicy policy, std::span<const Demo> demos, const SftConfig& cfg);

/// A small random problem for gradient verification.
struct GradCheckInstance {
  ToyPolicy policy;
  ToyPolicy ref;
  std::vector<GroupRollout> groups;
};

/// Random instance whose probability ratios all sit at least 1e-3 away from
/// the clip boundaries, where the surrogate is not differentiable.
GradCheckInstance random_grad_check_instance(std::uint64_t seed, const GrpoConfig& cfg,
                                             int context_dim = 5, int num_actions = 6,
                                             int num_groups = 2);

/// Maximum over weight coordinates of |analytic - numeric| /
/// max(|analytic|, |numeric|, 1e-6), with central differences of step h.
/// `analytic_perturbation` is added to every analytic coordinate; it exists
/// so the verification path itself can be tested against a broken gradient.
double finite_diff_check(const GradCheckInstance& instance, const GrpoConfig& cfg, double h,
                         double analytic_perturbation = 0.0);

}  // namespace procrit
