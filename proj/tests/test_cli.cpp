#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "support.hpp"
#include "tikzmcts/embed.hpp"
#include "tikzmcts/errors.hpp"
#include "tikzmcts/mock_server.hpp"
#include "tikzmcts/policy.hpp"
#include "tikzmcts/trace_io.hpp"

namespace fs = std::filesystem;
using namespace tikzmcts;
using Json = nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run cli_run(std::vector<std::string> args) {
  args.insert(args.begin(), "tikzmcts");
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string policy(const std::string& name) { return "mock:" + testsupport::fixture("policies/" + name).string(); }

std::string image() { return testsupport::fixture("images/target.png").string(); }

Json manifest(const fs::path& dir) { return Json::parse(testsupport::slurp(dir / "manifest.json")); }

/// Sets an environment variable for the lifetime of the object.
struct ScopedEnv {
  std::string name;
  ScopedEnv(std::string n, const std::string& value) : name(std::move(n)) { ::setenv(name.c_str(), value.c_str(), 1); }
  ~ScopedEnv() { ::unsetenv(name.c_str()); }
};

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

}  // namespace

TEST_CASE("durations") {
  CHECK(cli::parse_duration("10m") == 600.0);
  CHECK(cli::parse_duration("5s") == 5.0);
  CHECK(cli::parse_duration("1.5h") == 5400.0);
  CHECK(cli::parse_duration("600") == 600.0);
  CHECK(cli::parse_duration("0.25") == 0.25);
  CHECK_THROWS_AS(cli::parse_duration(""), InvalidConfig);
  CHECK_THROWS_AS(cli::parse_duration("0s"), InvalidConfig);
  CHECK_THROWS_AS(cli::parse_duration("-3m"), InvalidConfig);
  CHECK_THROWS_AS(cli::parse_duration("ten minutes"), InvalidConfig);
  CHECK_THROWS_AS(cli::parse_duration("5d"), InvalidConfig);
}

TEST_CASE("usage errors") {
  CHECK(cli_run({}).code == cli::kUsage);
  CHECK(cli_run({"frobnicate"}).code == cli::kUsage);
  CHECK(cli_run({"--help"}).code == cli::kOk);
  CHECK(cli_run({"synthesize", "--engine", "mock"}).code == cli::kUsage);
  CHECK(cli_run({"synthesize", "--image", image(), "--policy", policy("stochastic.yaml"), "--out", "/tmp/x",
                 "--engine", "mock", "--c", "-1"})
            .code == cli::kUsage);
  CHECK(cli_run({"synthesize", "--image", image(), "--policy", policy("stochastic.yaml"), "--out", "/tmp/x",
                 "--engine", "mock", "--mode", "oi", "--reward", "emd"})
            .code == cli::kUsage);
  CHECK(cli_run({"synthesize", "--image", "/nonexistent.png", "--policy", policy("stochastic.yaml"), "--out",
                 "/tmp/x", "--engine", "mock"})
            .code == cli::kUsage);
}

TEST_CASE("synthesize in output mode stops at the first artifact") {
  const auto dir = testsupport::scratch_dir("cli-oi");
  const auto out = dir / "run";
  auto r = cli_run({"synthesize", "--mode", "oi", "--image", image(), "--policy", policy("scripted_oi.yaml"),
                    "--engine", "mock", "--out", out.string(), "--budget", "1m"});
  CHECK_MESSAGE(r.code == cli::kOk, r.err);
  CHECK(r.out.find("exit early_exit") != std::string::npos);
  const auto m = manifest(out);
  CHECK(m["exit_reason"] == "early_exit");
  CHECK(m["best_status"] == "clean");
  CHECK(m["best_reward"] == 1.0);
  CHECK(m["best_raster"] == "best.png");
  CHECK(m["endpoints"]["engine"] == "mock-engine");
  CHECK(fs::exists(out / "best.png"));
  CHECK(testsupport::slurp(out / "best.tex").find("\\draw (1,1) -- (6,6);") != std::string::npos);
  const auto trace = read_trace_jsonl(out / "trace.jsonl");
  CHECK(trace.events.size() == m["simulations"].get<std::size_t>());

  SUBCASE("existing output needs --force") {
    auto again = cli_run({"synthesize", "--mode", "oi", "--image", image(), "--policy",
                          policy("scripted_oi.yaml"), "--engine", "mock", "--out", out.string()});
    CHECK(again.code == cli::kUsage);
    CHECK(again.err.find("--force") != std::string::npos);
    again = cli_run({"synthesize", "--mode", "oi", "--image", image(), "--policy", policy("scripted_oi.yaml"),
                     "--engine", "mock", "--out", out.string(), "--force"});
    CHECK(again.code == cli::kOk);
  }
  fs::remove_all(dir);
}

TEST_CASE("synthesize in target mode runs until the budget") {
  const auto dir = testsupport::scratch_dir("cli-ti");
  const auto out = dir / "run";
  auto r = cli_run({"synthesize", "--image", image(), "--policy", policy("stochastic.yaml"), "--engine", "mock",
                    "--out", out.string(), "--budget", "3s", "--clock-step", "0.05", "--seed", "4"});
  REQUIRE_MESSAGE(r.code == cli::kOk, r.err);
  const auto m = manifest(out);
  CHECK(m["exit_reason"] == "budget_exhausted");
  CHECK(m["endpoints"]["embed"] == "mock:grid=16,patches=4");
  CHECK(m["best_reward"].get<double>() >= -1.0);
  CHECK(m["best_reward"].get<double>() <= 1.0);
  CHECK(m["simulations"].get<int>() > 1);
  const auto trace = read_trace_jsonl(out / "trace.jsonl");
  for (std::size_t i = 1; i < trace.events.size(); ++i) CHECK(trace.events[i].t_offset_s >= trace.events[i - 1].t_offset_s);

  r = cli_run({"synthesize", "--image", image(), "--policy", policy("stochastic.yaml"), "--engine", "mock",
               "--out", (dir / "capped").string(), "--max-simulations", "3", "--reward", "emd"});
  REQUIRE_MESSAGE(r.code == cli::kOk, r.err);
  CHECK(manifest(dir / "capped")["exit_reason"] == "simulation_limit");
  CHECK(manifest(dir / "capped")["simulations"] == 3);
  fs::remove_all(dir);
}

TEST_CASE("a missing engine is an environment error and writes nothing") {
  const auto dir = testsupport::scratch_dir("cli-env");
  const auto out = dir / "run";
  auto r = cli_run({"synthesize", "--image", image(), "--policy", policy("stochastic.yaml"), "--engine",
                    "definitely-not-a-latex-engine", "--out", out.string()});
  CHECK(r.code == cli::kEnvironment);
  CHECK_FALSE(fs::exists(out));
  fs::remove_all(dir);
}

TEST_CASE("an unreachable policy is a gateway error") {
  const auto dir = testsupport::scratch_dir("cli-gw");
  auto r = cli_run({"synthesize", "--image", image(), "--policy", "http://127.0.0.1:1", "--engine", "mock",
                    "--out", (dir / "run").string(), "--max-simulations", "2"});
  CHECK(r.code == cli::kGateway);
  CHECK_FALSE(fs::exists(dir / "run"));
  fs::remove_all(dir);
}

TEST_CASE("settings layer file, environment, then flags") {
  const auto dir = testsupport::scratch_dir("cli-config");
  write(dir / "run.yaml", "mode: oi\nseed: 3\nc: 0.9\nengine: mock\nbudget: 30s\n");
  const std::vector<std::string> base = {"synthesize", "--config", (dir / "run.yaml").string(), "--image", image(),
                                         "--policy", policy("scripted_oi.yaml")};
  auto run_with = [&](const std::string& tag, std::vector<std::string> extra) {
    auto args = base;
    args.push_back("--out");
    args.push_back((dir / tag).string());
    args.insert(args.end(), extra.begin(), extra.end());
    auto r = cli_run(args);
    REQUIRE_MESSAGE(r.code == cli::kOk, r.err);
    return manifest(dir / tag)["config"];
  };

  auto cfg = run_with("file", {});
  CHECK(cfg["seed"] == "3");
  CHECK(cfg["c"] == "0.9");
  CHECK(cfg["mode"] == "oi");
  CHECK(cfg["temperature"] == "0.8");
  {
    ScopedEnv seed("TIKZMCTS_SEED", "5");
    ScopedEnv c("TIKZMCTS_C", "1.1");
    cfg = run_with("env", {});
    CHECK(cfg["seed"] == "5");
    CHECK(cfg["c"] == "1.1");
    cfg = run_with("flag", {"--seed", "7"});
    CHECK(cfg["seed"] == "7");
    CHECK(cfg["c"] == "1.1");
  }
  CHECK(testsupport::slurp(dir / "flag" / "config.yaml").find("seed: 7") != std::string::npos);

  write(dir / "typo.yaml", "sed: 1\n");
  CHECK_THROWS_AS(cli::load_settings_file((dir / "typo.yaml").string()), InvalidConfig);
  CHECK(cli_run({"doctor", "--config", (dir / "typo.yaml").string()}).code == cli::kUsage);
  {
    ScopedEnv e("TIKZMCTS_EMBED_DIM", "64");
    CHECK(cli::settings_from_environment().at("embed_dim") == "64");
  }
  fs::remove_all(dir);
}

TEST_CASE("doctor") {
  auto r = cli_run({"doctor", "--engine", "mock", "--policy", policy("stochastic.yaml")});
  CHECK_MESSAGE(r.code == cli::kOk, r.out);
  CHECK(r.out.find("PASS policy") != std::string::npos);
  CHECK(r.out.find("PASS embed") != std::string::npos);
  CHECK(r.out.find("256") != std::string::npos);

  r = cli_run({"doctor", "--engine", "mock", "--policy", "http://127.0.0.1:1"});
  CHECK(r.code == cli::kGateway);
  CHECK(r.out.find("FAIL policy") != std::string::npos);

  r = cli_run({"doctor", "--engine", "mock"});
  CHECK(r.code == cli::kGateway);

  r = cli_run({"doctor", "--engine", "no-such-engine-binary", "--policy", policy("stochastic.yaml")});
  CHECK(r.code == cli::kEnvironment);
  CHECK(r.out.find("FAIL engine") != std::string::npos);

  MockWireServer server(load_mock_policy(testsupport::fixture("policies/stochastic.yaml")),
                        std::make_shared<MockEmbedder>(16, 4));
  server.start();
  r = cli_run({"doctor", "--engine", "mock", "--policy", server.url(), "--embed", server.url()});
  CHECK_MESSAGE(r.code == cli::kOk, r.out);
  r = cli_run({"doctor", "--engine", "mock", "--policy", server.url(), "--embed", server.url(), "--embed-dim",
               "512"});
  CHECK(r.code == cli::kGateway);
  CHECK(r.out.find("FAIL embed") != std::string::npos);
  server.stop();
}

TEST_CASE("eval subcommands") {
  const auto dir = testsupport::scratch_dir("cli-eval");

  auto r = cli_run({"eval", "spearman", "--x", "1,2,3,4", "--y", "1,3,2,4"});
  CHECK(r.code == cli::kOk);
  CHECK(r.out == "spearman\t0.8\n");
  r = cli_run({"eval", "--json", "avgcorr", "--rhos", "0.5,0.5"});
  CHECK(r.code == cli::kOk);
  CHECK(Json::parse(r.out)["average_correlation"].get<double>() == doctest::Approx(0.5));
  CHECK(cli_run({"eval", "spearman", "--x", "1,1,1", "--y", "1,2,3"}).code != cli::kOk);
  CHECK(cli_run({"eval", "spearman", "--x", "1,x", "--y", "1,2"}).code == cli::kUsage);

  write(dir / "rhos.txt", "0.8\n0.2\n");
  r = cli_run({"eval", "avgcorr", "--rhos", "@" + (dir / "rhos.txt").string()});
  CHECK(r.out.find("0.572122461732") != std::string::npos);

  SearchTrace t;
  for (int i = 0; i < 5; ++i) {
    TraceEvent ev;
    ev.sim = static_cast<std::size_t>(i + 1);
    ev.t_offset_s = 50.0 * (i + 1);
    ev.reward = 0.1 * i;
    ev.artifact = true;
    ev.program_sha256 = "h" + std::to_string(i);
    ev.tokens = 20;
    ev.program_tokens = 10;
    t.events.push_back(ev);
  }
  write_trace_jsonl(dir / "trace.jsonl", t);
  r = cli_run({"eval", "mst", "--trace", (dir / "trace.jsonl").string(), "--budget", "300s"});
  CHECK(r.out == "mst\t10\n");
  r = cli_run({"eval", "mte", "--trace", (dir / "trace.jsonl").string()});
  CHECK(r.out.find("mte\t0.1\n") != std::string::npos);
  r = cli_run({"eval", "--json", "trend", "--trace", (dir / "trace.jsonl").string()});
  CHECK(r.code == cli::kOk);
  CHECK(Json::parse(r.out).contains("slope"));
  write(dir / "broken.jsonl", "{not json\n");
  CHECK(cli_run({"eval", "mst", "--trace", (dir / "broken.jsonl").string()}).code == cli::kUsage);

  write(dir / "ann.csv",
        "item_id,annotator_id,tuple_id,choice\n"
        "a,u,t,best\nb,u,t,none\nc,u,t,none\nd,u,t,worst\n"
        "a,v,t,none\nb,v,t,best\nc,v,t,none\nd,v,t,worst\n");
  r = cli_run({"eval", "bws", "--annotations", (dir / "ann.csv").string()});
  CHECK(r.code == cli::kOk);
  CHECK(r.out.find("a\t0.5\n") != std::string::npos);
  CHECK(r.out.find("d\t-1\n") != std::string::npos);
  r = cli_run({"eval", "shr", "--annotations", (dir / "ann.csv").string(), "--seed", "3", "--splits", "5"});
  CHECK(r.out == "shr\t0.5\n");
  CHECK(cli_run({"eval", "bws", "--annotations", (dir / "none.csv").string()}).code == cli::kEnvironment);

  fs::create_directories(dir / "corpus");
  write(dir / "corpus" / "one.tex", "\\draw (0,0) -- (1,1);\n");
  write(dir / "gen.tex", "\\draw (0,0) -- (1,1);\n");
  r = cli_run({"eval", "novelty", "--corpus", (dir / "corpus").string(), "--generated", (dir / "gen.tex").string(),
               "--n", "1..3"});
  CHECK(r.out == "n=1\t0\nn=2\t0\nn=3\t0\n");

  write(dir / "a.tex", "\\draw (0,0);");
  write(dir / "b.tex", "\\draw (0,1);");
  r = cli_run({"eval", "ted", "--a", (dir / "a.tex").string(), "--b", (dir / "b.tex").string()});
  CHECK(r.out == "ted\t0.125\n");

  write(dir / "s1.json", R"({"figures":[[2.3,0.8],[0.3,-0.2],[4.3,2.8]],"sketches":[[0.3,-0.2],[0.3,-0.2],[0.3,-0.2]]})");
  r = cli_run({"eval", "congruence", "--set1", (dir / "s1.json").string(), "--set2", (dir / "s1.json").string()});
  CHECK(r.code == cli::kOk);
  CHECK(r.out == "congruence\t1\n");
  write(dir / "bad.json", R"({"figures":[1]})");
  CHECK(cli_run({"eval", "congruence", "--set1", (dir / "bad.json").string(), "--set2", (dir / "s1.json").string()})
            .code == cli::kUsage);
  fs::remove_all(dir);
}
