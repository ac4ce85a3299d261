#include "procrit/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

#include "procrit/errors.hpp"
#include "procrit/numfmt.hpp"
#include "procrit/seeding.hpp"

namespace procrit {

namespace {

double population_std(std::span<const double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

/// d KL(p || q) / d logits of p, on one context.
Eigen::VectorXd kl_logit_gradient(const Eigen::VectorXd& lp, const Eigen::VectorXd& lq) {
  const Eigen::VectorXd p = lp.array().exp();
  const Eigen::VectorXd log_ratio = lp - lq;
  const double kl = p.dot(log_ratio);
  return p.array() * (log_ratio.array() - kl);
}

void check_finite(double v, const char* what, const Context& ctx) {
  if (!std::isfinite(v))
    throw NumericError(std::string("non-finite ") + what + " for context " + ctx.sample_id);
}

}  // namespace

std::string to_string(KlMode m) { return m == KlMode::exact ? "exact" : "sampled_k3"; }

KlMode parse_kl_mode(std::string_view s) {
  if (s == "exact") return KlMode::exact;
  if (s == "sampled_k3" || s == "k3") return KlMode::sampled_k3;
  throw ConfigError("unknown kl mode '" + std::string(s) + "'");
}

void GrpoConfig::validate() const {
  if (group_size < 2) throw ConfigError("group_size must be >= 2");
  if (!(kl_beta >= 0.0)) throw ConfigError("kl_beta must be >= 0");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw ConfigError("clip_epsilon must lie in (0, 1)");
  if (!(adv_epsilon >= 0.0)) throw ConfigError("adv_epsilon must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (sync_old_every < 1) throw ConfigError("sync_old_every must be >= 1");
  if (batch_contexts < 1) throw ConfigError("batch_contexts must be >= 1");
  if (!(max_grad_norm >= 0.0)) throw ConfigError("max_grad_norm must be >= 0");
}

void SftConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("sft learning_rate must be positive");
  if (steps < 0) throw ConfigError("sft steps must be >= 0");
}

void write_train_log_csv(const TrainLog& log, std::ostream& out) {
  out << "step,mean_reward,std_reward,mean_kl,loss,format_valid_rate\n";
  for (const auto& r : log)
    out << r.step << ',' << format_double(r.mean_reward) << ',' << format_double(r.std_reward) << ','
        << format_double(r.mean_kl) << ',' << format_double(r.loss) << ','
        << format_double(r.format_valid_rate) << '\n';
}

void write_train_log_csv(const TrainLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write train log: " + path.string());
  write_train_log_csv(log, out);
}

RewardTable score_actions(const std::vector<ResponseTemplate>& actions,
                          std::span<const TrainingExample> examples, const RewardConfig& cfg) {
  cfg.validate();
  RewardTable table;
  table.format_valid.reserve(actions.size());
  for (const auto& a : actions) table.format_valid.push_back(is_valid(a.text, cfg.strictness));
  table.rewards.reserve(examples.size());
  for (const auto& ex : examples) {
    std::vector<double> row;
    row.reserve(actions.size());
    for (const auto& a : actions) row.push_back(composite_reward(a.text, ex.progress_gt, cfg).total);
    table.rewards.push_back(std::move(row));
  }
  return table;
}

std::vector<double> compute_advantages(std::span<const double> rewards, double adv_epsilon) {
  if (rewards.size() < 2) throw ConfigError("compute_advantages: group size must be >= 2");
  const double mean =
      std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
  const double denom = population_std(rewards) + adv_epsilon;
  std::vector<double> adv(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    const double centered = rewards[i] - mean;
    adv[i] = centered == 0.0 ? 0.0 : centered / denom;
  }
  return adv;
}

double probability_ratio(double logp_new, double logp_old) { return std::exp(logp_new - logp_old); }

double clipped_term(double rho, double advantage, double clip_epsilon) {
  const double clipped = std::clamp(rho, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
  return std::min(rho * advantage, clipped * advantage);
}

double kl_penalty(const ToyPolicy& policy, const ToyPolicy& ref, const Context& ctx,
                  std::span<const int> actions, KlMode mode) {
  if (mode == KlMode::exact) return exact_kl(policy, ref, ctx);
  if (actions.empty()) throw UsageError("kl_penalty: sampled mode needs at least one action");
  const Eigen::VectorXd lp = policy.log_probs(ctx);
  const Eigen::VectorXd lr = ref.log_probs(ctx);
  double total = 0.0;
  for (int a : actions) {
    const double log_r = lr(a) - lp(a);
    total += std::max(0.0, std::expm1(log_r) - log_r);
  }
  return total / static_cast<double>(actions.size());
}

LossAndGradient grpo_loss(const GroupRollout& group, const ToyPolicy& policy, const ToyPolicy& ref,
                          const GrpoConfig& cfg) {
  const int g = group.size();
  if (g < 2 || static_cast<int>(group.logp_old.size()) != g ||
      static_cast<int>(group.advantages.size()) != g)
    throw UsageError("grpo_loss: incomplete group");

  const Eigen::VectorXd x = policy.augmented(group.context);
  const Eigen::VectorXd lp = policy.log_probs(group.context);
  const Eigen::VectorXd p = lp.array().exp();
  const Eigen::VectorXd lr = ref.log_probs(group.context);

  // Gradients are accumulated on the logits and mapped to weights once:
  // d/dW = x * (d/dz)^T for the linear-softmax policy.
  Eigen::VectorXd dz = Eigen::VectorXd::Zero(policy.num_actions());
  double objective = 0.0;
  double kl_sum = 0.0;

  double exact = 0.0;
  if (cfg.kl_mode == KlMode::exact) {
    exact = std::max(0.0, p.dot(lp - lr));
    dz -= cfg.kl_beta * static_cast<double>(g) * kl_logit_gradient(lp, lr);
  }

  for (int i = 0; i < g; ++i) {
    const int a = group.actions[i];
    const double adv = group.advantages[i];
    const double rho = probability_ratio(lp(a), group.logp_old[i]);
    check_finite(rho, "probability ratio", group.context);

    const double unclipped = rho * adv;
    const double clipped = std::clamp(rho, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * adv;
    Eigen::VectorXd score = -p;
    score(a) += 1.0;
    if (unclipped <= clipped) {
      objective += unclipped;
      dz += unclipped * score;
    } else {
      objective += clipped;
    }

    double kl_i = exact;
    if (cfg.kl_mode == KlMode::sampled_k3) {
      const double log_r = lr(a) - lp(a);
      const double r = std::exp(log_r);
      kl_i = std::max(0.0, std::expm1(log_r) - log_r);
      dz -= cfg.kl_beta * (1.0 - r) * score;
    }
    objective -= cfg.kl_beta * kl_i;
    kl_sum += kl_i;
  }

  LossAndGradient out;
  out.loss = -objective / g;
  out.gradient = x * (-dz / g).transpose();
  out.mean_kl = kl_sum / g;
  check_finite(out.loss, "loss", group.context);
  if (!out.gradient.allFinite()) throw NumericError("non-finite gradient for context " + group.context.sample_id);
  return out;
}

LossAndGradient batch_grpo_loss(std::span<const GroupRollout> groups, const ToyPolicy& policy,
                                const ToyPolicy& ref, const GrpoConfig& cfg) {
  if (groups.empty()) throw UsageError("batch_grpo_loss: empty batch");
  LossAndGradient total;
  total.gradient = Eigen::MatrixXd::Zero(policy.weights().rows(), policy.weights().cols());
  for (const auto& group : groups) {
    auto part = grpo_loss(group, policy, ref, cfg);
    total.loss += part.loss;
    total.gradient += part.gradient;
    total.mean_kl += part.mean_kl;
  }
  const double n = static_cast<double>(groups.size());
  total.loss /= n;
  total.gradient /= n;
  total.mean_kl /= n;
  return total;
}

RlResult rl_train(ToyPolicy policy, std::span<const TrainingExample> data,
                  const std::vector<ResponseTemplate>& actions, const RewardConfig& reward_cfg,
                  const GrpoConfig& cfg, std::mt19937_64& rng, const StepCallback& on_step) {
  cfg.validate();
  if (data.empty()) throw ConfigError("rl_train: empty training set");
  if (static_cast<int>(actions.size()) != policy.num_actions())
    throw ConfigError("rl_train: action space does not match the policy");

  const RewardTable table = score_actions(actions, data, reward_cfg);
  const FrozenPolicy ref = snapshot(policy);
  FrozenPolicy old = ref;
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);

  RlResult result{policy, {}};
  result.log.reserve(static_cast<std::size_t>(cfg.steps));
  std::vector<GroupRollout> groups(static_cast<std::size_t>(cfg.batch_contexts));

  for (int step = 0; step < cfg.steps; ++step) {
    if (step % cfg.sync_old_every == 0) old = snapshot(result.policy);

    double reward_sum = 0.0, std_sum = 0.0;
    int valid = 0;
    for (auto& group : groups) {
      const std::size_t idx = pick(rng);
      const TrainingExample& ex = data[idx];
      group.context = ex.context;
      group.progress_gt = ex.progress_gt;
      group.actions.resize(cfg.group_size);
      group.raw_texts.resize(cfg.group_size);
      group.logp_old.resize(cfg.group_size);
      group.logp_ref.resize(cfg.group_size);
      group.rewards.resize(cfg.group_size);
      const Eigen::VectorXd old_lp = old->log_probs(ex.context);
      const Eigen::VectorXd ref_lp = ref->log_probs(ex.context);
      for (int i = 0; i < cfg.group_size; ++i) {
        const int a = old->sample(ex.context, rng);
        group.actions[i] = a;
        group.raw_texts[i] = actions[a].text;
        group.logp_old[i] = old_lp(a);
        group.logp_ref[i] = ref_lp(a);
        group.rewards[i] = table.rewards[idx][a];
        valid += table.format_valid[a] ? 1 : 0;
      }
      group.advantages = compute_advantages(group.rewards, cfg.adv_epsilon);
      reward_sum += std::accumulate(group.rewards.begin(), group.rewards.end(), 0.0);
      std_sum += population_std(group.rewards);
    }

    LossAndGradient lg = batch_grpo_loss(groups, result.policy, *ref, cfg);
    for (auto& group : groups) {
      const Eigen::VectorXd lp = result.policy.log_probs(group.context);
      group.logp_new.resize(group.actions.size());
      for (std::size_t i = 0; i < group.actions.size(); ++i) group.logp_new[i] = lp(group.actions[i]);
    }
    if (cfg.max_grad_norm > 0.0) {
      const double norm = lg.gradient.norm();
      if (norm > cfg.max_grad_norm) lg.gradient *= cfg.max_grad_norm / norm;
    }
    result.policy.weights() -= cfg.learning_rate * lg.gradient;

    const double n = static_cast<double>(cfg.batch_contexts * cfg.group_size);
    result.log.push_back({step + 1, reward_sum / n, std_sum / cfg.batch_contexts, lg.mean_kl, lg.loss,
                          valid / n});
    if (on_step) on_step(step + 1, result.policy);
  }
  return result;
}

double sft_loss(const ToyPolicy& policy, std::span<const Demo> demos) {
  if (demos.empty()) throw ConfigError("sft: empty demo set");
  double total = 0.0;
  for (const auto& d : demos) total -= policy.log_prob(d.context, d.target_template);
  return total / static_cast<double>(demos.size());
}

SftResult sft_train(ToyPolicy policy, std::span<const Demo> demos, const SftConfig& cfg) {
  cfg.validate();
  if (demos.empty()) throw ConfigError("sft: empty demo set");
  SftResult result{std::move(policy), {}};
  result.losses.reserve(static_cast<std::size_t>(cfg.steps) + 1);
  const double n = static_cast<double>(demos.size());
  for (int step = 0; step <= cfg.steps; ++step) {
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(result.policy.weights().rows(), result.policy.weights().cols());
    double loss = 0.0;
    for (const auto& d : demos) {
      const Eigen::VectorXd lp = result.policy.log_probs(d.context);
      loss -= lp(d.target_template);
      Eigen::VectorXd dz = lp.array().exp();
      dz(d.target_template) -= 1.0;
      grad.noalias() += result.policy.augmented(d.context) * dz.transpose();
    }
    result.losses.push_back(loss / n);
    if (step == cfg.steps) break;
    result.policy.weights() -= cfg.learning_rate * grad / n;
  }
  return result;
}

GradCheckInstance random_grad_check_instance(std::uint64_t seed, const GrpoConfig& cfg, int context_dim,
                                             int num_actions, int num_groups) {
  cfg.validate();
  std::mt19937_64 rng(mix_seed(seed, 0x6C));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 2.0);
  auto random_matrix = [&](double scale) {
    Eigen::MatrixXd m(context_dim + 1, num_actions);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * normal(rng);
    return m;
  };

  for (;;) {
    ToyPolicy old(random_matrix(1.0));
    ToyPolicy policy(old.weights() + random_matrix(0.15));
    ToyPolicy ref(random_matrix(1.0));
    std::vector<GroupRollout> groups(static_cast<std::size_t>(num_groups));
    bool near_kink = false;
    for (int k = 0; k < num_groups; ++k) {
      GroupRollout& group = groups[k];
      group.context.sample_id = "gradcheck-" + std::to_string(k);
      group.context.features.resize(context_dim);
      for (int i = 0; i < context_dim; ++i) group.context.features(i) = normal(rng);
      const Eigen::VectorXd old_lp = old.log_probs(group.context);
      const Eigen::VectorXd ref_lp = ref.log_probs(group.context);
      const Eigen::VectorXd new_lp = policy.log_probs(group.context);
      for (int i = 0; i < cfg.group_size; ++i) {
        const int a = old.sample(group.context, rng);
        group.actions.push_back(a);
        group.raw_texts.emplace_back();
        group.logp_old.push_back(old_lp(a));
        group.logp_ref.push_back(ref_lp(a));
        group.rewards.push_back(unit(rng));
        const double rho = std::exp(new_lp(a) - old_lp(a));
        near_kink = near_kink || std::abs(rho - (1.0 - cfg.clip_epsilon)) < 1e-3 ||
                    std::abs(rho - (1.0 + cfg.clip_epsilon)) < 1e-3;
      }
      group.advantages = compute_advantages(group.rewards, cfg.adv_epsilon);
    }
    if (!near_kink) return {std::move(policy), std::move(ref), std::move(groups)};
  }
}

double finite_diff_check(const GradCheckInstance& instance, const GrpoConfig& cfg, double h,
                         double analytic_perturbation) {
  if (!(h > 0.0)) throw ConfigError("finite difference step must be positive");
  const Eigen::MatrixXd analytic =
      batch_grpo_loss(instance.groups, instance.policy, instance.ref, cfg).gradient.array() +
      analytic_perturbation;
  ToyPolicy probe = instance.policy;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < probe.weights().size(); ++i) {
    double& w = probe.weights().data()[i];
    const double saved = w;
    w = saved + h;
    const double up = batch_grpo_loss(instance.groups, probe, instance.ref, cfg).loss;
    w = saved - h;
    const double down = batch_grpo_loss(instance.groups, probe, instance.ref, cfg).loss;
    w = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic.data()[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace procrit
