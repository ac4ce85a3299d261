#include <doctest.h>

#include <cmath>
#include <set>

#include "procrit/errors.hpp"
#include "procrit/pipeline.hpp"

using namespace procrit;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.num_episodes = 10;
  cfg.grpo.steps = 20;
  cfg.grpo.batch_contexts = 8;
  cfg.sft.steps = 20;
  return cfg;
}

std::set<std::string> episodes_of(const std::vector<EpisodeSample>& v) {
  std::set<std::string> out;
  for (const auto& s : v) out.insert(episode_key(s.sample_id));
  return out;
}

}  // namespace

TEST_CASE("episode split keeps episodes whole") {
  ExperimentConfig cfg = small_config();
  cfg.num_episodes = 25;
  const auto all = generate_dataset(cfg.task, cfg.num_episodes, cfg.stride, cfg.seq_len);
  for (double frac : {0.01, 0.2, 0.5, 0.99}) {
    const auto split = split_by_episode(all, frac, 3);
    const auto tr = episodes_of(split.train), ho = episodes_of(split.heldout);
    for (const auto& e : ho) CHECK(tr.count(e) == 0);
    CHECK(tr.size() + ho.size() == 25);
    CHECK(split.train.size() + split.heldout.size() == all.size());
    CHECK(ho.size() == std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(frac * 25)), 1, 24));
  }
  const auto a = split_by_episode(all, 0.2, 3), b = split_by_episode(all, 0.2, 3);
  CHECK(a.heldout == b.heldout);
}

TEST_CASE("demos target the nearest well-formed template") {
  ExperimentConfig cfg = small_config();
  const auto data = build_dataset(cfg);
  const auto ex = make_examples(data.train, cfg.layout());
  const auto demos = make_demos(ex);
  const auto actions = action_space(cfg.num_malformed);
  REQUIRE(demos.size() == ex.size());
  for (std::size_t i = 0; i < ex.size(); ++i) {
    const auto v = template_answer(actions[static_cast<std::size_t>(demos[i].target_template)]);
    REQUIRE(v.has_value());
    CHECK(std::fabs(*v - ex[i].progress_gt) <= 2.5);
  }
}

TEST_CASE("template answers") {
  const auto actions = action_space(4);
  for (int a = 0; a < 21; ++a) CHECK(*template_answer(actions[static_cast<std::size_t>(a)]) == 5.0 * a);
  CHECK_FALSE(template_answer(actions[21]).has_value());
  CHECK(*template_answer(actions[22]) == 50.0);
  CHECK(*template_answer(actions[23]) == 50.0);
  CHECK_FALSE(template_answer(actions[24]).has_value());
}

TEST_CASE("prediction scoring by hand") {
  std::vector<TrainingExample> ex(3);
  ex[0].progress_gt = 10;
  ex[1].progress_gt = 50;
  ex[2].progress_gt = 90;
  const auto s = score_predictions({15.0, std::nullopt, 70.0}, ex);
  CHECK(s.n_scored == 2);
  CHECK(s.n_unparsed == 1);
  CHECK(s.mae == 12.5);
  CHECK(s.acc_at_10 == 0.5);
}

TEST_CASE("enumerated reward and format mass bounds") {
  ExperimentConfig cfg = small_config();
  const auto data = build_dataset(cfg);
  const auto ex = make_examples(data.train, cfg.layout());
  const auto actions = action_space(cfg.num_malformed);
  const auto table = score_actions(actions, ex, cfg.reward);
  const ToyPolicy uniform(cfg.layout().width(), static_cast<int>(actions.size()));
  CHECK(format_valid_mass(uniform, ex, table) == doctest::Approx(21.0 / 25.0));
  const double r = mean_enumerated_reward(uniform, ex, table);
  CHECK(r > 0.0);
  CHECK(r < 2.0);
}

TEST_CASE("ablation masks in table order") {
  const auto& m = ablation_masks();
  CHECK(m[0] == ModalityMask{false, false, true});
  CHECK(m[1] == ModalityMask{true, false, true});
  CHECK(m[2] == ModalityMask{false, true, false});
  CHECK(m[5] == ModalityMask{true, true, true});
}

TEST_CASE("stage comparison is seeded and complete") {
  const ExperimentConfig cfg = small_config();
  const auto data = build_dataset(cfg);
  const auto a = compare_stages(cfg, data);
  const auto b = compare_stages(cfg, data);
  REQUIRE(a.rows.size() == 4);
  CHECK(a.rows[0].stage == "base");
  CHECK(a.rows[3].stage == "sft+rl");
  CHECK(a.rl_log.size() == 20);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a.rows[i].heldout_reward == b.rows[i].heldout_reward);
  CHECK(a.sft_rl_policy == b.sft_rl_policy);
}

TEST_CASE("experiment config validation") {
  ExperimentConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.holdout_fraction = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.num_episodes = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
