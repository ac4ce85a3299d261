#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "procrit/cli.hpp"
#include "procrit/manifest.hpp"
#include "procrit/mock_server.hpp"

using namespace procrit;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("procrit_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

/// Every file except the run sidecars, keyed by name.
std::map<std::string, std::string> outputs(const fs::path& dir) {
  std::map<std::string, std::string> m;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name == "run_meta.json" || name == "efficiency.csv") continue;
    m[name] = slurp(e.path());
  }
  return m;
}

const std::vector<std::string> kSmall = {"--episodes", "6", "--steps", "5", "--batch-contexts", "4",
                                         "--sft-steps", "5"};

std::vector<std::string> with_small(std::vector<std::string> args) {
  args.insert(args.end(), kSmall.begin(), kSmall.end());
  return args;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(cli({}).code == kExitConfigError);
  CHECK(cli({"frobnicate"}).code == kExitConfigError);
  CHECK(cli({"gen-data", "--no-such-flag"}).code == kExitConfigError);
  CHECK(cli({"gen-data", "--episodes", "many"}).code == kExitConfigError);
  CHECK(cli({"rl-train", "--kl-mode", "reverse", "--out-dir", scratch("badkl").string()}).code == kExitConfigError);
  CHECK(cli({"eval", "--out-dir", scratch("nomanifest").string()}).code == kExitConfigError);
  CHECK(cli({"rl-train", "--init-checkpoint", "/nonexistent/policy.ckpt", "--out-dir", scratch("nockpt").string()})
            .code == kExitConfigError);
}

TEST_CASE("help exits cleanly") {
  const auto r = cli({"--help"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("rl-train") != std::string::npos);
}

TEST_CASE("gen-data is deterministic") {
  const auto a = scratch("gen_a"), b = scratch("gen_b");
  REQUIRE(cli({"gen-data", "--episodes", "5", "--out-dir", a.string()}).code == kExitOk);
  REQUIRE(cli({"gen-data", "--episodes", "5", "--out-dir", b.string()}).code == kExitOk);
  CHECK(outputs(a) == outputs(b));
  CHECK(read_manifest(a / "manifest.jsonl").size() > 5);
  CHECK(fs::exists(a / "run_meta.json"));
  CHECK(slurp(a / "files.json").find("label_histogram.csv") != std::string::npos);
  const auto c = scratch("gen_c");
  REQUIRE(cli({"gen-data", "--episodes", "5", "--seed", "7", "--out-dir", c.string()}).code == kExitOk);
  CHECK(slurp(a / "manifest.jsonl") != slurp(c / "manifest.jsonl"));
}

TEST_CASE("grad-check passes and flags an injected bug") {
  const auto d = scratch("grad");
  const auto ok = cli({"grad-check", "--grad-instances", "3", "--out-dir", d.string()});
  CHECK(ok.code == kExitOk);
  CHECK(slurp(d / "grad_check.json").find("\"pass\": true") != std::string::npos);
  CHECK(cli({"grad-check", "--grad-instances", "3", "--inject-gradient-bug", "--out-dir", d.string()}).code ==
        kExitVerificationFailed);
}

TEST_CASE("rl-train with zero steps reproduces the input checkpoint") {
  const auto s = scratch("sft0");
  REQUIRE(cli(with_small({"sft", "--out-dir", s.string()})).code == kExitOk);
  const auto r = scratch("rl0");
  REQUIRE(cli({"rl-train", "--episodes", "6", "--steps", "0", "--init-checkpoint", (s / "policy.ckpt").string(),
               "--out-dir", r.string()})
              .code == kExitOk);
  CHECK(slurp(s / "policy.ckpt") == slurp(r / "policy.ckpt"));
}

TEST_CASE("checkpoint layout mismatch is a config error") {
  const auto s = scratch("sft_layout");
  REQUIRE(cli(with_small({"sft", "--out-dir", s.string()})).code == kExitOk);
  const auto r = scratch("rl_layout");
  CHECK(cli({"rl-train", "--episodes", "6", "--feature-dim", "5", "--init-checkpoint",
             (s / "policy.ckpt").string(), "--out-dir", r.string()})
            .code == kExitConfigError);
}

TEST_CASE("training subcommands are byte-reproducible") {
  for (const std::string cmd : {"sft", "rl-train", "stages"}) {
    const auto a = scratch(cmd + "_a"), b = scratch(cmd + "_b");
    REQUIRE(cli(with_small({cmd, "--out-dir", a.string()})).code == kExitOk);
    REQUIRE(cli(with_small({cmd, "--out-dir", b.string()})).code == kExitOk);
    const auto oa = outputs(a);
    CHECK(oa.size() >= 3);
    CHECK_MESSAGE(oa == outputs(b), cmd);
  }
}

TEST_CASE("config file supplies options and rejects unknown keys") {
  const auto d = scratch("cfg");
  fs::create_directories(d);
  {
    std::ofstream f(d / "run.toml");
    f << "episodes = 4\nstride = 6\n";
  }
  const auto out = d / "out";
  REQUIRE(cli({"gen-data", "--config", (d / "run.toml").string(), "--out-dir", out.string()}).code == kExitOk);
  for (const auto& s : read_manifest(out / "manifest.jsonl")) CHECK(s.frame_index % 6 == 0);
  {
    std::ofstream f(d / "bad.toml");
    f << "episodez = 4\n";
  }
  CHECK(cli({"gen-data", "--config", (d / "bad.toml").string(), "--out-dir", out.string()}).code ==
        kExitConfigError);
}

TEST_CASE("eval against a mock and against nothing") {
  const auto g = scratch("eval_data");
  REQUIRE(cli({"gen-data", "--episodes", "3", "--out-dir", g.string()}).code == kExitOk);
  const auto manifest = read_manifest(g / "manifest.jsonl");
  MockServer server(manifest, MockOptions{});
  server.start();
  const auto e = scratch("eval_ok");
  const auto ok = cli({"eval", "--manifest", (g / "manifest.jsonl").string(), "--endpoint", server.base_url(),
                       "--out-dir", e.string()});
  CHECK(ok.code == kExitOk);
  CHECK(slurp(e / "report.json").find("\"mae\": 0.0") != std::string::npos);

  const auto bad = cli({"eval", "--manifest", (g / "manifest.jsonl").string(), "--endpoint",
                        "http://127.0.0.1:1", "--retries", "0", "--timeout", "1", "--out-dir",
                        scratch("eval_bad").string()});
  CHECK(bad.code == kExitTransportError);
}

TEST_CASE("rl-train logs one row per step") {
  const auto d = scratch("rl_rows");
  REQUIRE(cli({"rl-train", "--episodes", "6", "--steps", "7", "--batch-contexts", "4", "--out-dir", d.string()})
              .code == kExitOk);
  std::ifstream f(d / "train_log.csv");
  int lines = 0;
  for (std::string l; std::getline(f, l);) ++lines;
  CHECK(lines == 8);
}
