#include "procrit/toy_policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "procrit/errors.hpp"
#include "procrit/numfmt.hpp"
#include "procrit/response_grammar.hpp"

namespace procrit {

namespace {

constexpr std::string_view kPlanning =
    "Goal: bring the scene from the initial state to the goal state. Plan: execute the "
    "sub-tasks in order.";
constexpr std::string_view kObservation =
    "Compare the current state against the initial state and the sequence of frames.";
constexpr std::string_view kReasoning =
    "Let me think: count the sub-tasks already achieved relative to the full plan.";
constexpr std::string_view kCheckpointMagic = "procrit-policy 1";

std::string grid_answer(int index) { return std::to_string(index * kAnswerGridStep); }

std::string malformed_text(int kind) {
  const std::string full = render_response(kPlanning, kObservation, kReasoning, "50");
  switch (kind) {
    case 0:  // missing </answer>
      return full.substr(0, full.size() - tags::answer_close.size());
    case 1:  // missing <think>
      return full.substr(tags::think_open.size() + 1);
    case 2:  // trailing prose
      return full + "\nThe task is about half done.";
    default:  // empty answer
      return render_response(kPlanning, kObservation, kReasoning, "");
  }
}

}  // namespace

std::vector<ResponseTemplate> action_space(int num_malformed) {
  if (num_malformed < 0) throw ConfigError("num_malformed must be >= 0");
  std::vector<ResponseTemplate> out;
  out.reserve(kNumWellFormed + num_malformed);
  for (int i = 0; i < kNumWellFormed; ++i)
    out.push_back({i, true, static_cast<double>(i * kAnswerGridStep),
                   render_response(kPlanning, kObservation, kReasoning, grid_answer(i))});
  for (int m = 0; m < num_malformed; ++m)
    out.push_back({kNumWellFormed + m, false, std::nullopt, malformed_text(m % 4)});
  return out;
}

int nearest_template(double progress) {
  const double idx = std::round(std::clamp(progress, 0.0, 100.0) / kAnswerGridStep);
  return static_cast<int>(idx);
}

Context make_context(const EpisodeSample& s, const FeatureLayout& layout) {
  const int d = layout.feature_dim;
  Context ctx;
  ctx.sample_id = s.sample_id;
  ctx.features = Eigen::VectorXd::Zero(layout.width());
  auto put = [&](int offset, const std::vector<double>& block) {
    if (static_cast<int>(block.size()) != d)
      throw UsageError("sample " + s.sample_id + ": feature block width " +
                       std::to_string(block.size()) + " != " + std::to_string(d));
    for (int i = 0; i < d; ++i) ctx.features(offset + i) = block[i];
  };
  if (s.phi_init && s.modality_mask.init) put(0, *s.phi_init);
  if (s.phi_seq && s.modality_mask.seq) {
    if (static_cast<int>(s.phi_seq->size()) != layout.seq_len)
      throw UsageError("sample " + s.sample_id + ": sequence length mismatch");
    for (int j = 0; j < layout.seq_len; ++j) put(d * (1 + j), (*s.phi_seq)[j]);
  }
  if (s.phi_curr && s.modality_mask.curr) put(d * (1 + layout.seq_len), *s.phi_curr);
  put(d * (2 + layout.seq_len), s.instruction_embedding);
  return ctx;
}

ToyPolicy::ToyPolicy(int context_dim, int num_actions) {
  if (context_dim < 0 || num_actions < 1) throw ConfigError("invalid toy policy shape");
  weights_ = Eigen::MatrixXd::Zero(context_dim + 1, num_actions);
}

ToyPolicy::ToyPolicy(Eigen::MatrixXd weights) : weights_(std::move(weights)) {
  if (weights_.rows() < 1 || weights_.cols() < 1) throw ConfigError("invalid toy policy shape");
}

void ToyPolicy::check_action(int template_id) const {
  if (template_id < 0 || template_id >= num_actions())
    throw BoundsError("template id " + std::to_string(template_id) + " out of range");
}

Eigen::VectorXd ToyPolicy::augmented(const Context& ctx) const {
  if (ctx.features.size() != context_dim())
    throw UsageError("context width " + std::to_string(ctx.features.size()) +
                     " does not match policy width " + std::to_string(context_dim()));
  Eigen::VectorXd x(context_dim() + 1);
  x.head(context_dim()) = ctx.features;
  x(context_dim()) = 1.0;
  return x;
}

Eigen::VectorXd ToyPolicy::logits(const Context& ctx) const {
  return weights_.transpose() * augmented(ctx);
}

Eigen::VectorXd ToyPolicy::log_probs(const Context& ctx) const {
  Eigen::VectorXd z = logits(ctx);
  if (!z.allFinite()) throw NumericError("non-finite logits for context " + ctx.sample_id);
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return z.array() - lse;
}

Eigen::VectorXd ToyPolicy::probs(const Context& ctx) const { return log_probs(ctx).array().exp(); }

double ToyPolicy::log_prob(const Context& ctx, int template_id) const {
  check_action(template_id);
  return log_probs(ctx)(template_id);
}

int ToyPolicy::sample(const Context& ctx, std::mt19937_64& rng) const {
  const Eigen::VectorXd p = probs(ctx);
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  for (int a = 0; a < num_actions(); ++a) {
    u -= p(a);
    if (u < 0.0) return a;
  }
  // Rounding left a sliver of mass: fall back to the last action with p > 0.
  for (int a = num_actions() - 1; a >= 0; --a)
    if (p(a) > 0.0) return a;
  return num_actions() - 1;
}

int ToyPolicy::greedy(const Context& ctx) const {
  Eigen::Index best = 0;
  logits(ctx).maxCoeff(&best);
  return static_cast<int>(best);
}

Eigen::MatrixXd ToyPolicy::grad_log_prob(const Context& ctx, int template_id) const {
  check_action(template_id);
  Eigen::VectorXd score = -probs(ctx);
  score(template_id) += 1.0;
  return augmented(ctx) * score.transpose();
}

FrozenPolicy snapshot(const ToyPolicy& policy) { return std::make_shared<const ToyPolicy>(policy); }

double enumerate_expected_reward(const ToyPolicy& policy, const Context& ctx,
                                 const std::function<double(int)>& reward_fn) {
  const Eigen::VectorXd p = policy.probs(ctx);
  double total = 0.0;
  for (int a = 0; a < policy.num_actions(); ++a) total += p(a) * reward_fn(a);
  return total;
}

double enumerate_expected_reward(const ToyPolicy& policy, const Context& ctx,
                                 std::span<const double> action_rewards) {
  if (static_cast<int>(action_rewards.size()) != policy.num_actions())
    throw UsageError("reward table size does not match the action space");
  return enumerate_expected_reward(policy, ctx, [&](int a) { return action_rewards[a]; });
}

double exact_kl(const ToyPolicy& p, const ToyPolicy& q, const Context& ctx) {
  if (p.num_actions() != q.num_actions()) throw UsageError("exact_kl: action spaces differ");
  const Eigen::VectorXd lp = p.log_probs(ctx);
  const Eigen::VectorXd lq = q.log_probs(ctx);
  double kl = 0.0;
  for (int a = 0; a < p.num_actions(); ++a) {
    const double pa = std::exp(lp(a));
    if (pa > 0.0) kl += pa * (lp(a) - lq(a));
  }
  return std::max(kl, 0.0);
}

std::string checkpoint_to_string(const ToyPolicy& policy, const CheckpointMeta& meta) {
  std::ostringstream out;
  const auto& w = policy.weights();
  out << kCheckpointMagic << '\n'
      << "rows " << w.rows() << '\n'
      << "cols " << w.cols() << '\n'
      << "seed " << meta.seed << '\n'
      << "num_malformed " << meta.num_malformed << '\n'
      << "feature_dim " << meta.layout.feature_dim << '\n'
      << "seq_len " << meta.layout.seq_len << '\n'
      << "weights\n";
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) out << (c ? " " : "") << format_double(w(r, c));
    out << '\n';
  }
  return out.str();
}

Checkpoint checkpoint_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic)
    throw ParseError("checkpoint: bad header line");
  auto field = [&](const char* name) -> std::string {
    std::string key, value;
    if (!std::getline(in, line)) throw ParseError(std::string("checkpoint: missing ") + name);
    std::istringstream ls(line);
    if (!(ls >> key >> value) || key != name)
      throw ParseError(std::string("checkpoint: expected field ") + name);
    return value;
  };
  Eigen::Index rows = 0, cols = 0;
  CheckpointMeta meta;
  try {
    rows = std::stol(field("rows"));
    cols = std::stol(field("cols"));
    meta.seed = std::stoull(field("seed"));
    meta.num_malformed = std::stoi(field("num_malformed"));
    meta.layout.feature_dim = std::stoi(field("feature_dim"));
    meta.layout.seq_len = std::stoi(field("seq_len"));
  } catch (const std::logic_error&) {
    throw ParseError("checkpoint: invalid header value");
  }
  if (rows < 1 || cols < 1) throw ParseError("checkpoint: invalid shape");
  if (!std::getline(in, line) || line != "weights") throw ParseError("checkpoint: missing weights");
  Eigen::MatrixXd w(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) throw ParseError("checkpoint: truncated weights");
    std::istringstream ls(line);
    for (Eigen::Index c = 0; c < cols; ++c) {
      std::string tok;
      if (!(ls >> tok)) throw ParseError("checkpoint: short weight row " + std::to_string(r));
      auto v = parse_double(tok);
      if (!v) throw ParseError("checkpoint: bad weight '" + tok + "'");
      w(r, c) = *v;
    }
  }
  return {ToyPolicy(std::move(w)), meta};
}

void save_checkpoint(const ToyPolicy& policy, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write checkpoint: " + path.string());
  out << checkpoint_to_string(policy, meta);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_string(buf.str());
}

}  // namespace procrit
