#include "procrit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

#include "procrit/errors.hpp"
#include "procrit/response_grammar.hpp"
#include "procrit/seeding.hpp"

namespace procrit {

void ExperimentConfig::validate() const {
  task.validate();
  if (num_episodes < 2) throw ConfigError("num_episodes must be at least 2");
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (seq_len < 2) throw ConfigError("seq_len must be >= 2");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw ConfigError("holdout_fraction must lie in (0, 1)");
  if (num_malformed < 0) throw ConfigError("num_malformed must be >= 0");
  reward.validate();
  grpo.validate();
  sft.validate();
}

DataSplit split_by_episode(const std::vector<EpisodeSample>& samples, double holdout_fraction,
                           std::uint64_t seed) {
  std::vector<std::string> episodes;
  std::unordered_set<std::string> seen;
  for (const auto& s : samples) {
    std::string key = episode_key(s.sample_id);
    if (seen.insert(key).second) episodes.push_back(std::move(key));
  }
  if (episodes.size() < 2) throw ConfigError("need at least two episodes to split");
  std::mt19937_64 rng(mix_seed(seed, 0x5917));
  std::shuffle(episodes.begin(), episodes.end(), rng);
  auto n_held = static_cast<std::size_t>(std::ceil(holdout_fraction * static_cast<double>(episodes.size())));
  n_held = std::clamp<std::size_t>(n_held, 1, episodes.size() - 1);
  const std::unordered_set<std::string> held(episodes.begin(), episodes.begin() + static_cast<std::ptrdiff_t>(n_held));

  DataSplit split;
  for (const auto& s : samples) (held.count(episode_key(s.sample_id)) ? split.heldout : split.train).push_back(s);
  return split;
}

std::vector<TrainingExample> make_examples(const std::vector<EpisodeSample>& samples, const FeatureLayout& layout) {
  std::vector<TrainingExample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({make_context(s, layout), s.progress_gt});
  return out;
}

std::vector<Demo> make_demos(std::span<const TrainingExample> examples) {
  std::vector<Demo> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back({ex.context, nearest_template(ex.progress_gt)});
  return out;
}

double mean_enumerated_reward(const ToyPolicy& policy, std::span<const TrainingExample> examples,
                              const RewardTable& table) {
  if (examples.empty()) throw UsageError("mean_enumerated_reward: no examples");
  double total = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i)
    total += enumerate_expected_reward(policy, examples[i].context, table.rewards[i]);
  return total / static_cast<double>(examples.size());
}

double format_valid_mass(const ToyPolicy& policy, std::span<const TrainingExample> examples,
                         const RewardTable& table) {
  if (examples.empty()) throw UsageError("format_valid_mass: no examples");
  double total = 0.0;
  for (const auto& ex : examples) {
    const Eigen::VectorXd p = policy.probs(ex.context);
    for (Eigen::Index a = 0; a < p.size(); ++a)
      if (table.format_valid[static_cast<std::size_t>(a)]) total += p(a);
  }
  return total / static_cast<double>(examples.size());
}

std::optional<double> template_answer(const ResponseTemplate& t) {
  if (t.answer_value) return t.answer_value;
  const auto block = find_answer_block(t.text);
  if (!block) return std::nullopt;
  const ParsedAnswer a = extract_answer(*block, QuestionType::progress);
  if (!a.parse_ok) return std::nullopt;
  return a.numeric_value;
}

std::vector<std::optional<double>> greedy_predictions(const ToyPolicy& policy,
                                                      std::span<const TrainingExample> examples,
                                                      const std::vector<ResponseTemplate>& actions) {
  std::vector<std::optional<double>> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(template_answer(actions.at(policy.greedy(ex.context))));
  return out;
}

PredictionScore score_predictions(const std::vector<std::optional<double>>& predictions,
                                  std::span<const TrainingExample> examples) {
  if (predictions.size() != examples.size()) throw UsageError("score_predictions: size mismatch");
  PredictionScore s;
  double abs_sum = 0.0;
  int hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (!predictions[i]) {
      ++s.n_unparsed;
      continue;
    }
    const double err = std::abs(*predictions[i] - examples[i].progress_gt);
    abs_sum += err;
    hits += err <= 10.0 ? 1 : 0;
    ++s.n_scored;
  }
  if (s.n_scored > 0) {
    s.mae = abs_sum / s.n_scored;
    s.acc_at_10 = static_cast<double>(hits) / s.n_scored;
  } else {
    s.mae = s.acc_at_10 = std::nan("");
  }
  return s;
}

namespace {

struct Prepared {
  std::vector<ResponseTemplate> actions;
  std::vector<TrainingExample> train;
  std::vector<TrainingExample> heldout;
  RewardTable train_table;
  RewardTable heldout_table;
};

Prepared prepare(const ExperimentConfig& cfg, const std::vector<EpisodeSample>& train,
                 const std::vector<EpisodeSample>& heldout) {
  Prepared p;
  p.actions = action_space(cfg.num_malformed);
  p.train = make_examples(train, cfg.layout());
  p.heldout = make_examples(heldout, cfg.layout());
  if (p.train.empty() || p.heldout.empty()) throw ConfigError("both splits must be non-empty");
  p.train_table = score_actions(p.actions, p.train, cfg.reward);
  p.heldout_table = score_actions(p.actions, p.heldout, cfg.reward);
  return p;
}

StageRow evaluate(const std::string& stage, const ToyPolicy& policy, const Prepared& p) {
  StageRow row;
  row.stage = stage;
  row.heldout_reward = mean_enumerated_reward(policy, p.heldout, p.heldout_table);
  row.train_reward = mean_enumerated_reward(policy, p.train, p.train_table);
  row.heldout_format_mass = format_valid_mass(policy, p.heldout, p.heldout_table);
  row.heldout = score_predictions(greedy_predictions(policy, p.heldout, p.actions), p.heldout);
  return row;
}

}  // namespace

StageComparison compare_stages(const ExperimentConfig& cfg, const DataSplit& split) {
  cfg.validate();
  const Prepared p = prepare(cfg, split.train, split.heldout);
  const ToyPolicy base(cfg.layout().width(), static_cast<int>(p.actions.size()));

  const std::vector<Demo> demos = make_demos(p.train);
  const ToyPolicy sft = sft_train(base, demos, cfg.sft).policy;

  // both RL runs consume the same rollout stream
  std::mt19937_64 rng_rl(mix_seed(cfg.grpo.seed, 0x71));
  RlResult rl = rl_train(base, p.train, p.actions, cfg.reward, cfg.grpo, rng_rl);
  std::mt19937_64 rng_both(mix_seed(cfg.grpo.seed, 0x71));
  RlResult both = rl_train(sft, p.train, p.actions, cfg.reward, cfg.grpo, rng_both);

  StageComparison out{{}, both.policy, std::move(rl.log), std::move(both.log)};
  out.rows.push_back(evaluate("base", base, p));
  out.rows.push_back(evaluate("sft", sft, p));
  out.rows.push_back(evaluate("rl", rl.policy, p));
  out.rows.push_back(evaluate("sft+rl", both.policy, p));
  return out;
}

const std::array<ModalityMask, 6>& ablation_masks() {
  static const std::array<ModalityMask, 6> masks{{
      {false, false, true},
      {true, false, true},
      {false, true, false},
      {false, true, true},
      {true, true, false},
      {true, true, true},
  }};
  return masks;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const DataSplit& split) {
  cfg.validate();
  GrpoConfig grpo = cfg.grpo;
  if (cfg.ablation_rl_steps >= 0) grpo.steps = cfg.ablation_rl_steps;

  std::vector<AblationRow> rows;
  for (const ModalityMask& mask : ablation_masks()) {
    std::vector<EpisodeSample> train, heldout;
    train.reserve(split.train.size());
    heldout.reserve(split.heldout.size());
    for (const auto& s : split.train) train.push_back(apply_mask(s, mask));
    for (const auto& s : split.heldout) heldout.push_back(apply_mask(s, mask));
    const Prepared p = prepare(cfg, train, heldout);

    const ToyPolicy base(cfg.layout().width(), static_cast<int>(p.actions.size()));
    const std::vector<Demo> demos = make_demos(p.train);
    ToyPolicy policy = sft_train(base, demos, cfg.sft).policy;
    std::mt19937_64 rng(mix_seed(grpo.seed, 0x71));
    policy = rl_train(std::move(policy), p.train, p.actions, cfg.reward, grpo, rng).policy;

    AblationRow row;
    row.mask = mask;
    row.score = score_predictions(greedy_predictions(policy, p.heldout, p.actions), p.heldout);
    row.heldout_reward = mean_enumerated_reward(policy, p.heldout, p.heldout_table);
    rows.push_back(row);
  }
  return rows;
}

DataSplit build_dataset(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto samples = generate_dataset(cfg.task, cfg.num_episodes, cfg.stride, cfg.seq_len);
  return split_by_episode(samples, cfg.holdout_fraction, cfg.task.seed);
}

}  // namespace procrit
