#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "procrit/grpo.hpp"
#include "procrit/reward.hpp"
#include "procrit/toy_policy.hpp"
#include "procrit/trajectory.hpp"

namespace procrit {

/// Everything needed to build and train on a synthetic dataset.
struct ExperimentConfig {
  TaskSpec task;
  int num_episodes = 40;
  int stride = 4;
  int seq_len = 4;
  double holdout_fraction = 0.2;
  int num_malformed = kDefaultNumMalformed;
  RewardConfig reward;
  GrpoConfig grpo;
  SftConfig sft;
  /// RL steps per mask in the ablation; negative reuses grpo.steps.
  int ablation_rl_steps = -1;

  FeatureLayout layout() const { return {task.feature_dim, seq_len}; }
  void validate() const;
};

struct DataSplit {
  std::vector<EpisodeSample> train;
  std::vector<EpisodeSample> heldout;
};

/// Splits by episode so no episode contributes to both sides. The held-out
/// episode set is a seeded shuffle of the distinct episodes.
DataSplit split_by_episode(const std::vector<EpisodeSample>& samples, double holdout_fraction,
                           std::uint64_t seed);

std::vector<TrainingExample> make_examples(const std::vector<EpisodeSample>& samples, const FeatureLayout& layout);

/// Demonstrations pointing at the well-formed template nearest the label.
std::vector<Demo> make_demos(std::span<const TrainingExample> examples);

/// Mean over examples of the exactly enumerated expected composite reward.
double mean_enumerated_reward(const ToyPolicy& policy, std::span<const TrainingExample> examples,
                              const RewardTable& table);

/// Mean over examples of the probability mass on format-valid templates.
double format_valid_mass(const ToyPolicy& policy, std::span<const TrainingExample> examples,
                         const RewardTable& table);

/// Numeric answer carried by a template's text, if any parses out of it.
std::optional<double> template_answer(const ResponseTemplate& t);

/// Greedy answer per example; empty where the chosen template has none.
std::vector<std::optional<double>> greedy_predictions(const ToyPolicy& policy,
                                                      std::span<const TrainingExample> examples,
                                                      const std::vector<ResponseTemplate>& actions);

struct PredictionScore {
  double mae = 0.0;
  double acc_at_10 = 0.0;
  int n_scored = 0;
  int n_unparsed = 0;
};

PredictionScore score_predictions(const std::vector<std::optional<double>>& predictions,
                                  std::span<const TrainingExample> examples);

struct StageRow {
  std::string stage;
  double heldout_reward = 0.0;
  double train_reward = 0.0;
  double heldout_format_mass = 0.0;
  PredictionScore heldout;
};

struct StageComparison {
  std::vector<StageRow> rows;  // base, sft, rl, sft+rl
  ToyPolicy sft_rl_policy;
  TrainLog rl_log;
  TrainLog sft_rl_log;
};

/// Trains the four pipeline variants with shared seeds: the untrained base,
/// SFT only, RL only, and RL warm-started from SFT.
StageComparison compare_stages(const ExperimentConfig& cfg, const DataSplit& split);

/// The six input configurations in table order: curr only, init+curr,
/// seq only, seq+curr, init+seq, full triad.
const std::array<ModalityMask, 6>& ablation_masks();

struct AblationRow {
  ModalityMask mask;
  PredictionScore score;
  double heldout_reward = 0.0;
};

/// SFT then RL under each mask, scored on the held-out split with the same mask.
std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const DataSplit& split);

/// Generates the dataset described by `cfg` and splits it.
DataSplit build_dataset(const ExperimentConfig& cfg);

}  // namespace procrit
