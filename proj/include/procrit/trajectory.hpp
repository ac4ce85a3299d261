#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace procrit {

enum class LabelConvention { piecewise_constant, piecewise_linear };

std::string to_string(LabelConvention c);
LabelConvention parse_label_convention(std::string_view s);

/// Parameters of a synthetic multi-sub-task task family.
///
/// The goal direction of the family is a function of `seed` alone, so all
/// episodes generated from one spec share the same instruction. Each episode
/// draws its own start state, layout (when not fixed), noise and failure from
/// the per-episode seed.
struct TaskSpec {
  /// 0 draws N uniformly from [min_subtasks, max_subtasks] per episode.
  int num_subtasks = 0;
  /// Empty draws every duration uniformly from [min_duration, max_duration].
  std::vector<int> subtask_durations;
  int min_subtasks = 2;
  int max_subtasks = 8;
  int min_duration = 8;
  int max_duration = 24;
  int feature_dim = 8;
  double noise_sigma = 0.05;
  double failure_prob = 0.0;
  /// Relative weights over 0-based sub-task indices; empty or all-zero is uniform.
  std::vector<double> failure_onset_weights;
  LabelConvention label_convention = LabelConvention::piecewise_linear;
  /// Distance from start to goal along the goal direction.
  double path_length = 4.0;
  /// Per-coordinate standard deviation of the start state.
  double start_spread = 1.0;
  std::uint64_t seed = 42;

  /// Throws ConfigError when the spec violates its invariants.
  void validate() const;
};

struct FailureRecord {
  bool injected = false;
  int onset_frame = 0;
};

struct Episode {
  /// Row t holds the latent state at frame t, for t = 0..T.
  Eigen::MatrixXd latent_states;
  /// End frame of each sub-task, strictly increasing, back() == T.
  std::vector<int> subtask_boundaries;
  Eigen::VectorXd goal_direction;
  FailureRecord failure;
  LabelConvention label_convention = LabelConvention::piecewise_linear;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::string task_info;

  int num_frames() const { return subtask_boundaries.empty() ? 0 : subtask_boundaries.back(); }
  int num_subtasks() const { return static_cast<int>(subtask_boundaries.size()); }
  int feature_dim() const { return static_cast<int>(latent_states.cols()); }
};

struct ModalityMask {
  bool init = true;
  bool seq = true;
  bool curr = true;

  bool operator==(const ModalityMask&) const = default;
};

std::string to_string(const ModalityMask& m);

/// One progress-labeled instance in triad form.
struct EpisodeSample {
  std::string sample_id;
  std::string task_info;
  std::optional<std::vector<double>> phi_init;
  std::optional<std::vector<std::vector<double>>> phi_seq;
  std::optional<std::vector<double>> phi_curr;
  std::vector<double> instruction_embedding;
  ModalityMask modality_mask;
  double progress_gt = 0.0;
  bool failure_gt = false;
  int frame_index = 0;
  /// Ordered media paths: first is the initial image, last the current image,
  /// anything in between are sequence frames.
  std::optional<std::vector<std::string>> media_refs;

  bool operator==(const EpisodeSample&) const = default;
};

Episode generate_episode(const TaskSpec& spec, std::uint64_t seed);

/// Ground-truth progress in [0, 100] at `frame_index`. Throws BoundsError
/// outside [0, T].
double label_progress(const Episode& episode, int frame_index, LabelConvention convention);

/// Triad features at `frame_index`. Masked blocks are present but all-zero.
/// Observation noise is keyed on (episode seed, frame, block) so the result
/// does not depend on the mask.
EpisodeSample featurize(const Episode& episode, int frame_index, ModalityMask mask, int seq_len);

/// One fully-unmasked sample per frame in {stride, 2*stride, ...} <= T.
std::vector<EpisodeSample> segment_episode(const Episode& episode, int stride,
                                           LabelConvention convention, int seq_len = 4);

/// Zeroes the blocks disabled by `mask` (in addition to any already masked).
EpisodeSample apply_mask(EpisodeSample sample, ModalityMask mask);

/// Generates `num_episodes` episodes with seeds derived from spec.seed and
/// segments them all.
std::vector<EpisodeSample> generate_dataset(const TaskSpec& spec, int num_episodes, int stride,
                                            int seq_len);

/// Episode part of a sample id ("ep<seed>" in "ep<seed>-f<frame>").
std::string episode_key(const std::string& sample_id);

}  // namespace procrit
