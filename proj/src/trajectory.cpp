#include "procrit/trajectory.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "procrit/errors.hpp"
#include "procrit/seeding.hpp"

namespace procrit {

namespace {

// Fraction of achieved progress a failed episode loses by its final frame.
constexpr double kFailureRegression = 0.5;

enum NoiseBlock : std::uint64_t { kNoiseInit = 1, kNoiseSeq = 2, kNoiseCurr = 3 };

Eigen::VectorXd goal_direction_for(const TaskSpec& spec) {
  std::mt19937_64 rng(mix_seed(spec.seed, 0xA11));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd g(spec.feature_dim);
  for (int i = 0; i < spec.feature_dim; ++i) g(i) = normal(rng);
  return g.normalized();
}

double raw_label(const std::vector<int>& boundaries, int frame, LabelConvention convention) {
  const int n = static_cast<int>(boundaries.size());
  const int completed = static_cast<int>(
      std::count_if(boundaries.begin(), boundaries.end(), [frame](int b) { return b <= frame; }));
  if (completed == n) return 100.0;
  if (convention == LabelConvention::piecewise_constant) return 100.0 * completed / n;
  const int start = completed == 0 ? 0 : boundaries[completed - 1];
  const double local =
      static_cast<double>(frame - start) / static_cast<double>(boundaries[completed] - start);
  return 100.0 * (completed + local) / n;
}

std::vector<double> noisy_row(const Episode& ep, int frame, std::uint64_t block, std::uint64_t slot) {
  std::vector<double> out(ep.latent_states.cols());
  std::mt19937_64 rng(mix_seed(mix_seed(ep.seed, static_cast<std::uint64_t>(frame)), block * 4096 + slot));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index j = 0; j < ep.latent_states.cols(); ++j) {
    const double eps = ep.noise_sigma > 0.0 ? ep.noise_sigma * normal(rng) : 0.0;
    out[j] = ep.latent_states(frame, j) + eps;
  }
  return out;
}

}  // namespace

std::string to_string(LabelConvention c) {
  return c == LabelConvention::piecewise_constant ? "piecewise_constant" : "piecewise_linear";
}

LabelConvention parse_label_convention(std::string_view s) {
  if (s == "piecewise_constant") return LabelConvention::piecewise_constant;
  if (s == "piecewise_linear") return LabelConvention::piecewise_linear;
  throw ConfigError("unknown label convention '" + std::string(s) + "'");
}

std::string to_string(const ModalityMask& m) {
  std::string s;
  s += m.init ? "init" : "";
  s += m.seq ? (s.empty() ? "seq" : "+seq") : "";
  s += m.curr ? (s.empty() ? "curr" : "+curr") : "";
  return s.empty() ? "none" : s;
}

void TaskSpec::validate() const {
  if (num_subtasks < 0) throw ConfigError("num_subtasks must be >= 0");
  if (!subtask_durations.empty()) {
    if (num_subtasks != 0 && num_subtasks != static_cast<int>(subtask_durations.size()))
      throw ConfigError("num_subtasks does not match the number of subtask_durations");
    for (int d : subtask_durations)
      if (d < 1) throw ConfigError("subtask durations must be >= 1 frame");
  } else {
    if (num_subtasks == 0 && (min_subtasks < 1 || max_subtasks < min_subtasks))
      throw ConfigError("invalid sub-task count range");
    if (min_duration < 1 || max_duration < min_duration)
      throw ConfigError("invalid sub-task duration range");
  }
  if (feature_dim < 2) throw ConfigError("feature_dim must be >= 2");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
  if (!(failure_prob >= 0.0 && failure_prob <= 1.0))
    throw ConfigError("failure_prob must lie in [0, 1]");
  for (double w : failure_onset_weights)
    if (!(w >= 0.0)) throw ConfigError("failure onset weights must be non-negative");
  if (!(path_length > 0.0)) throw ConfigError("path_length must be positive");
  if (!(start_spread >= 0.0)) throw ConfigError("start_spread must be non-negative");
}

Episode generate_episode(const TaskSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(mix_seed(seed, 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<int> durations = spec.subtask_durations;
  if (durations.empty()) {
    int n = spec.num_subtasks;
    if (n == 0) n = std::uniform_int_distribution<int>(spec.min_subtasks, spec.max_subtasks)(rng);
    std::uniform_int_distribution<int> dur(spec.min_duration, spec.max_duration);
    durations.resize(n);
    for (int& d : durations) d = dur(rng);
  }
  const int n = static_cast<int>(durations.size());

  Episode ep;
  ep.seed = seed;
  ep.noise_sigma = spec.noise_sigma;
  ep.label_convention = spec.label_convention;
  ep.subtask_boundaries.resize(n);
  std::partial_sum(durations.begin(), durations.end(), ep.subtask_boundaries.begin());
  const int total = ep.subtask_boundaries.back();
  ep.goal_direction = goal_direction_for(spec);
  ep.task_info = "Complete " + std::to_string(n) + " sequential sub-task" + (n == 1 ? "" : "s") +
                 ", moving the scene from its initial state to the goal state.";

  const int d = spec.feature_dim;
  Eigen::VectorXd start(d);
  for (int i = 0; i < d; ++i) start(i) = spec.start_spread * normal(rng);

  if (spec.failure_prob > 0.0 && unit(rng) < spec.failure_prob) {
    std::vector<double> weights(n, 0.0);
    for (int i = 0; i < n && i < static_cast<int>(spec.failure_onset_weights.size()); ++i)
      weights[i] = spec.failure_onset_weights[i];
    if (std::accumulate(weights.begin(), weights.end(), 0.0) <= 0.0)
      std::fill(weights.begin(), weights.end(), 1.0);
    const int subtask = std::discrete_distribution<int>(weights.begin(), weights.end())(rng);
    const int first = subtask == 0 ? 0 : ep.subtask_boundaries[subtask - 1];
    const int offset = std::uniform_int_distribution<int>(0, durations[subtask] - 1)(rng);
    ep.failure = {true, std::min(first + offset, total - 1)};
  } else {
    ep.failure = {false, total};
  }

  // The path advances along the goal direction in proportion to the
  // interpolated progress, then regresses after a failure onset.
  const Eigen::VectorXd displacement = spec.path_length * ep.goal_direction;
  ep.latent_states.resize(total + 1, d);
  const double onset_fraction =
      raw_label(ep.subtask_boundaries, ep.failure.onset_frame, LabelConvention::piecewise_linear) /
      100.0;
  for (int t = 0; t <= total; ++t) {
    double fraction;
    if (ep.failure.injected && t > ep.failure.onset_frame) {
      const double lapse = static_cast<double>(t - ep.failure.onset_frame) /
                           static_cast<double>(total - ep.failure.onset_frame);
      fraction = onset_fraction * (1.0 - kFailureRegression * lapse);
    } else {
      fraction = raw_label(ep.subtask_boundaries, t, LabelConvention::piecewise_linear) / 100.0;
    }
    Eigen::VectorXd state = start + fraction * displacement;
    if (t > 0 && spec.noise_sigma > 0.0)
      for (int i = 0; i < d; ++i) state(i) += spec.noise_sigma * normal(rng);
    ep.latent_states.row(t) = state.transpose();
  }
  return ep;
}

double label_progress(const Episode& episode, int frame_index, LabelConvention convention) {
  const int total = episode.num_frames();
  if (frame_index < 0 || frame_index > total)
    throw BoundsError("frame index " + std::to_string(frame_index) + " outside [0, " +
                      std::to_string(total) + "]");
  const int frame = episode.failure.injected && frame_index > episode.failure.onset_frame
                        ? episode.failure.onset_frame
                        : frame_index;
  return raw_label(episode.subtask_boundaries, frame, convention);
}

EpisodeSample featurize(const Episode& episode, int frame_index, ModalityMask mask, int seq_len) {
  if (seq_len < 1) throw ConfigError("seq_len must be >= 1");
  const int total = episode.num_frames();
  if (frame_index < 0 || frame_index > total)
    throw BoundsError("frame index " + std::to_string(frame_index) + " outside [0, " +
                      std::to_string(total) + "]");
  const std::size_t d = static_cast<std::size_t>(episode.feature_dim());

  EpisodeSample s;
  s.sample_id = "ep" + std::to_string(episode.seed) + "-f" + std::to_string(frame_index);
  s.task_info = episode.task_info;
  s.frame_index = frame_index;
  s.progress_gt = label_progress(episode, frame_index, episode.label_convention);
  s.failure_gt = episode.failure.injected && frame_index >= episode.failure.onset_frame;
  s.modality_mask = mask;
  s.instruction_embedding.assign(episode.goal_direction.data(),
                                 episode.goal_direction.data() + episode.goal_direction.size());

  s.phi_init = mask.init ? noisy_row(episode, 0, kNoiseInit, 0) : std::vector<double>(d, 0.0);
  s.phi_curr = mask.curr ? noisy_row(episode, frame_index, kNoiseCurr, 0) : std::vector<double>(d, 0.0);
  std::vector<std::vector<double>> seq(seq_len);
  for (int j = 0; j < seq_len; ++j) {
    if (!mask.seq) {
      seq[j].assign(d, 0.0);
      continue;
    }
    const int frame = seq_len == 1 ? frame_index
                                   : static_cast<int>(std::lround(static_cast<double>(j) * frame_index /
                                                                  (seq_len - 1)));
    seq[j] = noisy_row(episode, frame, kNoiseSeq, static_cast<std::uint64_t>(j));
  }
  s.phi_seq = std::move(seq);
  return s;
}

std::vector<EpisodeSample> segment_episode(const Episode& episode, int stride,
                                           LabelConvention convention, int seq_len) {
  if (stride < 1) throw ConfigError("stride must be >= 1");
  Episode labeled = episode;
  labeled.label_convention = convention;
  std::vector<EpisodeSample> out;
  out.reserve(static_cast<std::size_t>(episode.num_frames() / stride));
  for (int f = stride; f <= episode.num_frames(); f += stride)
    out.push_back(featurize(labeled, f, ModalityMask{}, seq_len));
  return out;
}

EpisodeSample apply_mask(EpisodeSample sample, ModalityMask mask) {
  auto zero = [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); };
  if (!mask.init) {
    if (sample.phi_init) zero(*sample.phi_init);
    sample.modality_mask.init = false;
  }
  if (!mask.seq) {
    if (sample.phi_seq)
      for (auto& row : *sample.phi_seq) zero(row);
    sample.modality_mask.seq = false;
  }
  if (!mask.curr) {
    if (sample.phi_curr) zero(*sample.phi_curr);
    sample.modality_mask.curr = false;
  }
  return sample;
}

std::vector<EpisodeSample> generate_dataset(const TaskSpec& spec, int num_episodes, int stride,
                                            int seq_len) {
  if (num_episodes < 0) throw ConfigError("num_episodes must be >= 0");
  std::vector<EpisodeSample> out;
  for (int i = 0; i < num_episodes; ++i) {
    const Episode ep = generate_episode(spec, mix_seed(spec.seed, 1000 + static_cast<std::uint64_t>(i)));
    auto samples = segment_episode(ep, stride, spec.label_convention, seq_len);
    out.insert(out.end(), std::make_move_iterator(samples.begin()),
               std::make_move_iterator(samples.end()));
  }
  return out;
}

std::string episode_key(const std::string& sample_id) {
  const auto pos = sample_id.rfind("-f");
  return pos == std::string::npos ? sample_id : sample_id.substr(0, pos);
}

}  // namespace procrit
