#include "procrit/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "procrit/errors.hpp"
#include "procrit/eval_harness.hpp"
#include "procrit/grpo.hpp"
#include "procrit/manifest.hpp"
#include "procrit/metrics.hpp"
#include "procrit/mock_server.hpp"
#include "procrit/numfmt.hpp"
#include "procrit/pipeline.hpp"
#include "procrit/seeding.hpp"

namespace procrit {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct Options {
  std::uint64_t seed = 42;
  std::string out_dir = "run";
  std::string manifest;
  std::string init_checkpoint;

  ExperimentConfig exp;
  std::string label_convention = "piecewise_linear";
  std::string strictness = "outer";
  std::string kl_mode = "exact";
  int checkpoint_every = 0;

  int grad_instances = 20;
  double fd_step = 1e-5;
  double grad_tolerance = 1e-4;
  bool inject_gradient_bug = false;

  ModelEndpointConfig endpoint;
  std::string question_type = "progress";
  int question_id = 0;
  bool text_only = false;
  std::string split_name = "test";
  MetricConfig metrics;

  std::string behavior = "oracle";
  std::string host = "127.0.0.1";
  int port = 8080;
  double failure_rate = 0.0;
  int reported_tokens = -1;
  bool omit_usage = false;
  std::string require_key_env;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

/// Collects the files a subcommand writes so they can be listed at the end.
class RunDir {
 public:
  explicit RunDir(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  fs::path path(const std::string& name) {
    if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
    return dir_ / name;
  }

  void write(const std::string& name, const std::string& content) {
    std::ofstream f(path(name), std::ios::binary);
    if (!f) throw ConfigError("cannot write " + (dir_ / name).string());
    f << content;
  }

  void finish(const std::string& command, const std::vector<std::string>& args, const std::string& started) {
    ojson meta;
    meta["command"] = command;
    meta["args"] = args;
    meta["started_utc"] = started;
    meta["finished_utc"] = utc_now();
    meta["out_dir"] = fs::absolute(dir_).string();
    write("run_meta.json", meta.dump(2) + "\n");
    std::vector<std::string> sorted = files_;
    std::sort(sorted.begin(), sorted.end());
    ojson listing;
    listing["command"] = command;
    listing["files"] = sorted;
    std::ofstream f(dir_ / "files.json", std::ios::binary);
    f << listing.dump(2) << "\n";
  }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

void add_data_options(CLI::App& app, Options& o) {
  auto& t = o.exp.task;
  app.add_option("--episodes", o.exp.num_episodes, "Episodes to generate");
  app.add_option("--stride", o.exp.stride, "Frame stride for segmentation");
  app.add_option("--seq-len", o.exp.seq_len, "Points in the sequence summary");
  app.add_option("--num-subtasks", t.num_subtasks, "Sub-tasks per episode (0 draws per episode)");
  app.add_option("--min-subtasks", t.min_subtasks);
  app.add_option("--max-subtasks", t.max_subtasks);
  app.add_option("--min-duration", t.min_duration);
  app.add_option("--max-duration", t.max_duration);
  app.add_option("--feature-dim", t.feature_dim);
  app.add_option("--noise-sigma", t.noise_sigma);
  app.add_option("--failure-prob", t.failure_prob);
  app.add_option("--label-convention", o.label_convention, "piecewise_linear or piecewise_constant");
  app.add_option("--path-length", t.path_length);
  app.add_option("--start-spread", t.start_spread);
  app.add_option("--holdout-fraction", o.exp.holdout_fraction);
  app.add_option("--num-malformed", o.exp.num_malformed);
}

void add_train_options(CLI::App& app, Options& o) {
  auto& g = o.exp.grpo;
  app.add_option("--manifest", o.manifest, "Input manifest (generated from the data options when absent)");
  app.add_option("--init-checkpoint", o.init_checkpoint, "Warm-start checkpoint");
  app.add_option("--r-max", o.exp.reward.r_max);
  app.add_option("--format-bonus", o.exp.reward.format_bonus);
  app.add_option("--strictness", o.strictness, "outer or full");
  app.add_option("--group-size", g.group_size);
  app.add_option("--kl-beta", g.kl_beta);
  app.add_option("--clip-epsilon", g.clip_epsilon);
  app.add_option("--adv-epsilon", g.adv_epsilon);
  app.add_option("--learning-rate", g.learning_rate);
  app.add_option("--steps", g.steps);
  app.add_option("--sync-old-every", g.sync_old_every);
  app.add_option("--batch-contexts", g.batch_contexts);
  app.add_option("--kl-mode", o.kl_mode, "exact or k3");
  app.add_option("--max-grad-norm", g.max_grad_norm);
  app.add_option("--checkpoint-every", o.checkpoint_every, "Extra checkpoint every N RL steps (0 disables)");
  app.add_option("--sft-learning-rate", o.exp.sft.learning_rate);
  app.add_option("--sft-steps", o.exp.sft.steps);
  app.add_option("--ablation-rl-steps", o.exp.ablation_rl_steps, "RL steps per mask (negative reuses --steps)");
  app.add_option("--grad-instances", o.grad_instances);
  app.add_option("--fd-step", o.fd_step);
  app.add_option("--grad-tolerance", o.grad_tolerance);
}

void add_eval_options(CLI::App& app, Options& o) {
  auto& e = o.endpoint;
  app.add_option("--endpoint", e.base_url, "Base URL; requests go to {endpoint}/chat");
  app.add_option("--api-key-env", e.api_key_env_var_name, "Environment variable holding the bearer token");
  app.add_option("--model", e.model_name);
  app.add_option("--max-frames", e.max_frames);
  app.add_option("--timeout", e.timeout_s);
  app.add_option("--concurrency", e.max_concurrency);
  app.add_option("--retries", e.retries);
  app.add_option("--backoff", e.backoff_initial_s);
  app.add_option("--max-tokens", e.max_tokens);
  app.add_option("--question-type", o.question_type);
  app.add_option("--question-id", o.question_id, "Fixed question variation 1..100 (0 draws per sample)");
  app.add_flag("--text-only", o.text_only, "Describe the triad as text even when media exist");
  app.add_option("--split-name", o.split_name);
  app.add_option("--acc-tolerance", o.metrics.acc_tolerance);
  app.add_flag("--mra-exclude-zero-gt", o.metrics.mra_exclude_zero_gt);
  app.add_option("--behavior", o.behavior, "oracle, constant:K, random, noisy_oracle:SIGMA, format_breaker");
  app.add_option("--host", o.host);
  app.add_option("--port", o.port, "0 picks a free port");
  app.add_option("--failure-rate", o.failure_rate);
  app.add_option("--reported-tokens", o.reported_tokens, "Fixed completion token count (negative counts words)");
  app.add_flag("--omit-usage", o.omit_usage);
  app.add_option("--require-key-env", o.require_key_env, "Environment variable holding the accepted bearer token");
}

/// Applies string-valued options and the global seed.
void finalize(Options& o) {
  o.exp.task.label_convention = parse_label_convention(o.label_convention);
  o.exp.reward.strictness = parse_strictness(o.strictness);
  o.exp.grpo.kl_mode = parse_kl_mode(o.kl_mode);
  o.exp.task.seed = o.seed;
  o.exp.grpo.seed = o.seed;
  if (o.checkpoint_every < 0) throw ConfigError("checkpoint-every must be >= 0");
}

DataSplit load_split(const Options& o) {
  if (o.manifest.empty()) return build_dataset(o.exp);
  o.exp.validate();
  return split_by_episode(read_manifest(fs::path(o.manifest)), o.exp.holdout_fraction, o.seed);
}

CheckpointMeta checkpoint_meta(const Options& o) { return {o.seed, o.exp.num_malformed, o.exp.layout()}; }

ToyPolicy initial_policy(const Options& o) {
  const int actions = static_cast<int>(action_space(o.exp.num_malformed).size());
  if (o.init_checkpoint.empty()) return ToyPolicy(o.exp.layout().width(), actions);
  Checkpoint c = load_checkpoint(o.init_checkpoint);
  if (c.meta.num_malformed != o.exp.num_malformed || c.meta.layout.feature_dim != o.exp.layout().feature_dim ||
      c.meta.layout.seq_len != o.exp.seq_len)
    throw ConfigError("checkpoint " + o.init_checkpoint + " does not match the configured layout");
  return std::move(c.policy);
}

std::string fmt(double v) { return format_double(v); }

ojson policy_summary(const ToyPolicy& policy, const Options& o, const DataSplit& split) {
  const auto actions = action_space(o.exp.num_malformed);
  const auto train = make_examples(split.train, o.exp.layout());
  const auto held = make_examples(split.heldout, o.exp.layout());
  const RewardTable train_table = score_actions(actions, train, o.exp.reward);
  const RewardTable held_table = score_actions(actions, held, o.exp.reward);
  const PredictionScore score = score_predictions(greedy_predictions(policy, held, actions), held);
  ojson j;
  j["train_contexts"] = train.size();
  j["heldout_contexts"] = held.size();
  j["train_enumerated_reward"] = mean_enumerated_reward(policy, train, train_table);
  j["heldout_enumerated_reward"] = mean_enumerated_reward(policy, held, held_table);
  j["train_format_valid_mass"] = format_valid_mass(policy, train, train_table);
  j["heldout_format_valid_mass"] = format_valid_mass(policy, held, held_table);
  j["heldout_greedy_mae"] = score.n_scored > 0 ? ojson(score.mae) : ojson(nullptr);
  j["heldout_greedy_acc_at_10"] = score.n_scored > 0 ? ojson(score.acc_at_10) : ojson(nullptr);
  return j;
}

int cmd_gen_data(const Options& o, RunDir& run, std::ostream& out) {
  o.exp.validate();
  const auto samples = generate_dataset(o.exp.task, o.exp.num_episodes, o.exp.stride, o.exp.seq_len);
  write_manifest(samples, run.path("manifest.jsonl"));

  const MetricConfig mc;
  std::vector<int> counts(mc.interval_edges.size() - 1, 0);
  int failures = 0;
  for (const auto& s : samples) {
    std::size_t b = 0;
    while (b + 1 < counts.size() && s.progress_gt >= mc.interval_edges[b + 1]) ++b;
    ++counts[b];
    failures += s.failure_gt ? 1 : 0;
  }
  std::ostringstream csv;
  csv << "bin_lo,bin_hi,count\n";
  out << "samples: " << samples.size() << " (failure-labelled: " << failures << ")\n";
  for (std::size_t b = 0; b < counts.size(); ++b) {
    csv << fmt(mc.interval_edges[b]) << ',' << fmt(mc.interval_edges[b + 1]) << ',' << counts[b] << '\n';
    out << "  [" << mc.interval_edges[b] << ", " << mc.interval_edges[b + 1] << (b + 2 == mc.interval_edges.size() ? "]" : ")")
        << ": " << counts[b] << '\n';
  }
  run.write("label_histogram.csv", csv.str());
  return kExitOk;
}

int cmd_sft(const Options& o, RunDir& run, std::ostream& out) {
  const DataSplit split = load_split(o);
  const auto examples = make_examples(split.train, o.exp.layout());
  const SftResult res = sft_train(initial_policy(o), make_demos(examples), o.exp.sft);

  std::ostringstream csv;
  csv << "step,loss\n";
  for (std::size_t i = 0; i < res.losses.size(); ++i) csv << i << ',' << fmt(res.losses[i]) << '\n';
  run.write("sft_log.csv", csv.str());
  save_checkpoint(res.policy, checkpoint_meta(o), run.path("policy.ckpt"));
  ojson summary = policy_summary(res.policy, o, split);
  run.write("summary.json", summary.dump(2) + "\n");
  out << "sft: loss " << res.losses.front() << " -> " << res.losses.back() << ", held-out reward "
      << summary["heldout_enumerated_reward"].get<double>() << '\n';
  return kExitOk;
}

int cmd_rl_train(const Options& o, RunDir& run, std::ostream& out) {
  const DataSplit split = load_split(o);
  const auto examples = make_examples(split.train, o.exp.layout());
  const auto actions = action_space(o.exp.num_malformed);
  const CheckpointMeta meta = checkpoint_meta(o);
  ToyPolicy start = initial_policy(o);
  const ojson before = policy_summary(start, o, split);

  std::mt19937_64 rng(mix_seed(o.seed, 0x71));
  StepCallback cb;
  if (o.checkpoint_every > 0)
    cb = [&](int step, const ToyPolicy& p) {
      if (step % o.checkpoint_every == 0) save_checkpoint(p, meta, run.path("policy_step" + std::to_string(step) + ".ckpt"));
    };
  const RlResult res = rl_train(std::move(start), examples, actions, o.exp.reward, o.exp.grpo, rng, cb);

  write_train_log_csv(res.log, run.path("train_log.csv"));
  save_checkpoint(res.policy, meta, run.path("policy.ckpt"));
  ojson summary;
  summary["before"] = before;
  summary["after"] = policy_summary(res.policy, o, split);
  run.write("summary.json", summary.dump(2) + "\n");
  out << "rl-train: " << res.log.size() << " steps, train reward "
      << before["train_enumerated_reward"].get<double>() << " -> "
      << summary["after"]["train_enumerated_reward"].get<double>() << ", format-valid mass "
      << summary["after"]["heldout_format_valid_mass"].get<double>() << '\n';
  return kExitOk;
}

int cmd_stages(const Options& o, RunDir& run, std::ostream& out) {
  const DataSplit split = load_split(o);
  const StageComparison cmp = compare_stages(o.exp, split);
  std::ostringstream csv;
  csv << "stage,heldout_reward,train_reward,heldout_format_valid_mass,heldout_mae,heldout_acc_at_10\n";
  for (const auto& r : cmp.rows) {
    csv << r.stage << ',' << fmt(r.heldout_reward) << ',' << fmt(r.train_reward) << ','
        << fmt(r.heldout_format_mass) << ',' << fmt(r.heldout.mae) << ',' << fmt(r.heldout.acc_at_10) << '\n';
    out << std::left << std::setw(8) << r.stage << " held-out reward " << r.heldout_reward << ", MAE "
        << r.heldout.mae << '\n';
  }
  run.write("stages.csv", csv.str());
  write_train_log_csv(cmp.rl_log, run.path("rl_only_log.csv"));
  write_train_log_csv(cmp.sft_rl_log, run.path("sft_rl_log.csv"));
  return kExitOk;
}

int cmd_ablate(const Options& o, RunDir& run, std::ostream& out) {
  const DataSplit split = load_split(o);
  const auto rows = run_ablation(o.exp, split);
  std::ostringstream csv;
  csv << "init,seq,curr,mae,acc_at_10,n_scored,heldout_reward\n";
  for (const auto& r : rows) {
    csv << (r.mask.init ? 1 : 0) << ',' << (r.mask.seq ? 1 : 0) << ',' << (r.mask.curr ? 1 : 0) << ','
        << fmt(r.score.mae) << ',' << fmt(r.score.acc_at_10) << ',' << r.score.n_scored << ','
        << fmt(r.heldout_reward) << '\n';
    out << std::left << std::setw(16) << to_string(r.mask) << " MAE " << r.score.mae << ", Acc@10 "
        << r.score.acc_at_10 << '\n';
  }
  run.write("ablation.csv", csv.str());
  return kExitOk;
}

int cmd_grad_check(const Options& o, RunDir& run, std::ostream& out) {
  if (o.grad_instances < 1) throw ConfigError("grad-instances must be >= 1");
  if (!(o.fd_step > 0.0)) throw ConfigError("fd-step must be positive");
  const double perturbation = o.inject_gradient_bug ? 1e-3 : 0.0;
  double worst = 0.0;
  ojson per_instance = ojson::array();
  for (int i = 0; i < o.grad_instances; ++i) {
    const auto inst = random_grad_check_instance(mix_seed(o.seed, static_cast<std::uint64_t>(i)), o.exp.grpo);
    const double err = finite_diff_check(inst, o.exp.grpo, o.fd_step, perturbation);
    per_instance.push_back(err);
    worst = std::max(worst, err);
  }
  const bool pass = worst < o.grad_tolerance;
  ojson j;
  j["instances"] = o.grad_instances;
  j["fd_step"] = o.fd_step;
  j["tolerance"] = o.grad_tolerance;
  j["injected_bug"] = o.inject_gradient_bug;
  j["max_rel_error"] = worst;
  j["per_instance"] = per_instance;
  j["pass"] = pass;
  run.write("grad_check.json", j.dump(2) + "\n");
  out << "grad-check: max relative error " << worst << " over " << o.grad_instances << " instances: "
      << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kExitOk : kExitVerificationFailed;
}

int cmd_eval(const Options& o, RunDir& run, std::ostream& out) {
  if (o.manifest.empty()) throw UsageError("eval requires --manifest");
  o.endpoint.validate();
  o.metrics.validate();
  const auto samples = read_manifest(fs::path(o.manifest));
  EvalRunConfig cfg;
  cfg.kind = parse_question_type(o.question_type);
  if (o.question_id != 0) cfg.question_id = o.question_id;
  cfg.seed = o.seed;
  cfg.prompt.attach_media = !o.text_only;
  cfg.prompt.max_frames = o.endpoint.max_frames;

  const auto records = run_eval(samples, o.endpoint, cfg);
  const MetricReport report =
      generate_report(records, samples, o.metrics, cfg.kind, o.endpoint.model_name, o.split_name);
  const ReportFiles files = write_report_files(report, records, fs::path(o.out_dir));
  for (const auto& p : {files.report_json, files.summary_csv, files.interval_csv, files.predictions_jsonl,
                        files.efficiency_csv})
    run.path(p.filename().string());

  out << "eval: " << report.n_samples << " samples, " << report.n_transport_errors << " transport errors, "
      << report.n_parse_failures << " parse failures";
  if (report.mra) out << ", MRA " << *report.mra;
  if (report.mae) out << ", MAE " << *report.mae;
  if (report.failure_accuracy) out << ", failure accuracy " << *report.failure_accuracy;
  out << '\n';
  if (report.n_samples > 0 && report.n_transport_errors == report.n_samples) return kExitTransportError;
  return kExitOk;
}

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

int cmd_mock_serve(const Options& o, std::ostream& out) {
  MockOptions mo;
  mo.behavior = MockBehavior::parse(o.behavior);
  mo.seed = o.seed;
  mo.failure_rate = o.failure_rate;
  if (o.reported_tokens >= 0) mo.reported_tokens = o.reported_tokens;
  mo.omit_usage = o.omit_usage;
  if (!o.require_key_env.empty()) {
    const char* key = std::getenv(o.require_key_env.c_str());
    if (key == nullptr) throw ConfigError("environment variable " + o.require_key_env + " is not set");
    mo.required_api_key = key;
  }
  std::vector<EpisodeSample> samples;
  if (!o.manifest.empty()) samples = read_manifest(fs::path(o.manifest));

  MockServer server(std::move(samples), mo);
  const int port = server.start(o.port, o.host);
  out << "mock-serve: " << mo.behavior.to_string() << " listening on " << server.base_url() << "/chat" << std::endl;
  (void)port;
  g_stop = false;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  out << "mock-serve: served " << server.request_count() << " requests\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Progress-estimation reward, GRPO and evaluation toolkit", "procrit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML config file; command-line flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.add_option("--seed", o.seed, "Global seed");
  app.add_option("--out-dir", o.out_dir, "Run directory for outputs");
  add_data_options(app, o);
  add_train_options(app, o);
  add_eval_options(app, o);

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic manifest");
  auto* sft = app.add_subcommand("sft", "Supervised warm-up on nearest-answer demonstrations");
  auto* rl = app.add_subcommand("rl-train", "GRPO training of the template policy");
  auto* stages = app.add_subcommand("stages", "Compare base, SFT, RL and SFT+RL on held-out contexts");
  auto* ablate = app.add_subcommand("ablate", "Train and score under the six input-modality masks");
  auto* grad = app.add_subcommand("grad-check", "Finite-difference check of the GRPO loss gradient");
  grad->add_flag("--inject-gradient-bug", o.inject_gradient_bug, "Perturb the analytic gradient (test hook)");
  auto* eval = app.add_subcommand("eval", "Evaluate a chat endpoint on a manifest");
  auto* mock = app.add_subcommand("mock-serve", "Serve a mock chat endpoint");
  for (auto* sub : {gen, sft, rl, stages, ablate, grad, eval, mock}) sub->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  const std::string started = utc_now();
  try {
    finalize(o);
    if (mock->parsed()) return cmd_mock_serve(o, out);

    RunDir run(o.out_dir);
    int code = kExitOk;
    std::string name;
    if (gen->parsed()) name = "gen-data", code = cmd_gen_data(o, run, out);
    else if (sft->parsed()) name = "sft", code = cmd_sft(o, run, out);
    else if (rl->parsed()) name = "rl-train", code = cmd_rl_train(o, run, out);
    else if (stages->parsed()) name = "stages", code = cmd_stages(o, run, out);
    else if (ablate->parsed()) name = "ablate", code = cmd_ablate(o, run, out);
    else if (grad->parsed()) name = "grad-check", code = cmd_grad_check(o, run, out);
    else if (eval->parsed()) name = "eval", code = cmd_eval(o, run, out);
    run.finish(name, args, started);
    return code;
  } catch (const TransportError& e) {
    err << "transport error: " << e.what() << '\n';
    return kExitTransportError;
  } catch (const ProtocolError& e) {
    err << "protocol error: " << e.what() << '\n';
    return kExitTransportError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitVerificationFailed;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
}

}  // namespace procrit
