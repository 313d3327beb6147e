// Acceptance run: one PASS/FAIL line per criterion. Tolerances and time limits
// are fixed below; exit status is nonzero when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "oracles.hpp"
#include "support.hpp"
#include "tikzmcts/embed.hpp"
#include "tikzmcts/evalkit.hpp"
#include "tikzmcts/mock_engine.hpp"
#include "tikzmcts/policy.hpp"
#include "tikzmcts/reward.hpp"
#include "tikzmcts/search.hpp"

using namespace tikzmcts;
namespace fs = std::filesystem;

namespace {

constexpr double kUctTol = 1e-12;
constexpr double kEmdTol = 1e-6;
constexpr double kEvalTol = 1e-9;
constexpr std::size_t kMctsSeeds = 20;
constexpr std::size_t kMctsWinsNeeded = 16;
constexpr std::size_t kMctsSimulations = 200;
constexpr std::size_t kMctsReplicates = 5;

class Criterion {
 public:
  explicit Criterion(std::string name) : name_(std::move(name)) {}

  void check(bool ok, const std::string& what) {
    ++checks_;
    if (ok) return;
    if (failures_++ == 0) first_ = what;
  }
  void note(std::string text) { note_ = std::move(text); }
  bool passed() const { return failures_ == 0 && checks_ > 0; }

  std::string line(double seconds, double limit) const {
    std::ostringstream os;
    const bool in_time = seconds <= limit;
    os << (passed() && in_time ? "PASS " : "FAIL ") << name_ << " (" << checks_ << " checks, " << std::fixed
       << std::setprecision(2) << seconds << " s of " << limit << " s)";
    if (failures_ > 0) os << ": " << failures_ << " failed, first: " << first_;
    if (!in_time) os << ": over time";
    if (!note_.empty()) os << " [" << note_ << "]";
    return os.str();
  }
  bool ok_within(double seconds, double limit) const { return passed() && seconds <= limit; }

 private:
  std::string name_;
  std::size_t checks_ = 0;
  std::size_t failures_ = 0;
  std::string first_;
  std::string note_;
};

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

double score_of(std::vector<double> values, int visits, int parent_visits, double c, bool rescale = false) {
  SearchNode parent;
  parent.visits = parent_visits;
  auto& child = testsupport::add_child(parent, "x", std::move(values), visits);
  return uct_score(child, c, rescale);
}

std::vector<std::string> numbered(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("l" + std::to_string(i + 1));
  return out;
}

PatchEmbeddings random_patches(std::mt19937_64& rng, std::size_t count, std::size_t dim) {
  std::normal_distribution<double> g;
  PatchEmbeddings p;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> row(dim);
    for (auto& v : row) v = g(rng);
    p.patches.push_back(row);
  }
  return p;
}

void diagnostics_mapping(Criterion& c) {
  const std::vector<std::pair<CompileStatus, double>> table = {
      {CompileStatus::CleanSuccess, 1.0}, {CompileStatus::RecoverableErrors, 0.0}, {CompileStatus::FatalFailure, -1.0}};
  for (const auto& [status, expected] : table) {
    c.check(diagnostics_reward(status).value == expected, std::string(to_string(status)));
    c.check(diagnostics_reward(status).kind == RewardKind::Diagnostics, "kind");
    CompileOutcome o;
    o.status = status;
    o.artifact_produced = status != CompileStatus::FatalFailure;
    c.check(diagnostics_reward(o).value == expected, "outcome overload");
  }
}

void uct(Criterion& c) {
  struct Case {
    std::vector<double> values;
    int visits, parent_visits;
    double c, expected;
  };
  // Reference values evaluated at 40 significant digits.
  const std::vector<Case> cases = {
      {{0.5}, 1, 2, 0.6, 0.99953276669461863533},
      {{}, 3, 10, 0.6, 0.52565217697569317841},
      {{0.2, 0.8, -1}, 3, 7, 0.6, 0.48322791505317405164},
      {{1, 1}, 2, 5, 1.0, 1.8970612889970507401},
      {{-1}, 1, 100, 0.6, 0.28757961577360829613},
      {{0.1, 0.2, 0.3, 0.4}, 4, 9, 0.25, 0.43528797592093889142},
      {{0.0}, 1, 1, 0.6, 0.0},
      {{0.9, -0.3}, 2, 3, 1.41421356237, 1.3481470739659111105},
      {{-0.5, -0.5, 0.25}, 3, 1000, 0.6, 0.66045627763108777682},
      {{0.75}, 1, 50, 2.0, 4.7057669321779543177},
  };
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& k = cases[i];
    c.check(close(score_of(k.values, k.visits, k.parent_visits, k.c), k.expected, kUctTol),
            "reference case " + std::to_string(i));
  }
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> val(-1.0, 1.0), cdist(0.01, 3.0);
  std::uniform_int_distribution<int> visits(1, 50);
  for (int i = 0; i < 10000; ++i) {
    const int parent_visits = 2 + visits(rng) * 4;
    const double cc = cdist(rng);
    const int n = visits(rng);
    std::vector<double> a(static_cast<std::size_t>(n)), b(a.size());
    for (auto& x : a) x = val(rng);
    for (std::size_t k = 0; k < a.size(); ++k) b[k] = std::max(-1.0, a[k] - 0.01 - 0.5 * (val(rng) + 1.0));
    c.check(score_of(a, n, parent_visits, cc) > score_of(b, n, parent_visits, cc), "higher values score higher");
    const int m = n + visits(rng);
    std::vector<double> same{val(rng)};
    c.check(score_of(same, n, parent_visits, cc) > score_of(same, m, parent_visits, cc),
            "more visits score lower");
  }
}

void rescaling(Criterion& c) {
  const auto r = rescale_values(std::vector<double>{0.2, 0.5, -1, 0.8});
  c.check(r.size() == 4 && close(r[0], 0, 1e-12) && close(r[1], 0.5, 1e-12) && r[2] == -1.0 && close(r[3], 1, 1e-12),
          "reference vector");
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len(0, 12);
  std::uniform_real_distribution<double> v(-1.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> in(static_cast<std::size_t>(len(rng)));
    for (auto& x : in) x = rng() % 4 == 0 ? -1.0 : v(rng);
    const auto out = rescale_values(in);
    c.check(out.size() == in.size(), "size");
    for (std::size_t k = 0; k < in.size(); ++k) {
      c.check(out[k] == -1.0 || (out[k] >= 0.0 && out[k] <= 1.0), "range");
      c.check((in[k] == -1.0) == (out[k] == -1.0), "-1 kept");
      for (std::size_t j = 0; j < in.size(); ++j) {
        if (in[j] != -1.0 && in[k] != -1.0 && in[j] < in[k]) c.check(out[j] < out[k], "order");
      }
    }
    const auto again = rescale_values(out);
    for (std::size_t k = 0; k < out.size(); ++k) c.check(close(again[k], out[k], 1e-12), "idempotent");
  }
}

struct InvariantObserver final : SearchObserver {
  Criterion* c;
  std::size_t sims = 0;
  void on_simulation(const SearchNode& root, const Rollout&, const TraceEvent&) override {
    ++sims;
    try {
      check_tree_invariants(root);
      c->check(true, "");
    } catch (const ContractViolation& e) {
      c->check(false, std::string("simulation ") + std::to_string(sims) + ": " + e.what());
    }
    c->check(root.visits == static_cast<int>(sims), "root visits");
  }
};

void expansion(Criterion& c) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t d = rng() % 40;
    const std::size_t r = d + 1 + rng() % 200;
    SearchNode leaf{ProgramState(numbered(d))};
    Rollout rollout;
    rollout.lines = numbered(r);
    rollout.line_tokens.assign(r, 1);
    const auto chain = expand(leaf, rollout);
    const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(double(r - d)))));
    c.check(chain.size() == k && expansion_count(r, d) == k, "count for |r|=" + std::to_string(r));
  }

  const auto target = read_png(testsupport::fixture("images/target.png"));
  auto inner = load_mock_policy(testsupport::fixture("policies/stochastic.yaml"));
  AdversarialPolicy policy(inner, 0.15, "\\end{axis}", 31);
  MockEngineHarness harness;
  SelfSimReward reward(std::make_shared<MockEmbedder>(), target);
  SearchConfig cfg;
  cfg.max_simulations = 500;
  cfg.rng_seed = 2;
  StepClock clock(0.001);
  InvariantObserver obs;
  obs.c = &c;
  const auto result = run_search(target, cfg, {policy, reward, harness, &clock, &obs});
  c.check(result.simulations == 500 && obs.sims == 500, "500 simulations");
}

void preemptive_stopping(Criterion& c) {
  const std::vector<std::vector<WeightedLine>> positions = {
      {{"\\begin{tikzpicture}", 1}}, {{"\\draw (0,0) -- (1,1);", 1}}, {{"\\draw (1,1) -- (2,2);", 1}},
      {{"\\draw (2,2) -- (3,3);", 1}}, {{"\\end{tikzpicture}", 1}}};
  const std::string fatal = "\\end{axis}";
  auto inner = std::make_shared<SeededStochasticPolicy>(positions, 1);
  auto adversarial = std::make_shared<AdversarialPolicy>(inner, 1.0, fatal, 2, std::set<std::size_t>{2});
  CountingPolicy policy(adversarial);
  testsupport::StubHarness harness(fatal);
  DiagnosticsReward reward;
  SearchConfig cfg;
  cfg.max_simulations = 20;
  StepClock clock(0.001);

  struct Watch final : SearchObserver {
    CountingPolicy* policy;
    std::vector<std::size_t> calls_after;
    void on_simulation(const SearchNode&, const Rollout&, const TraceEvent&) override {
      calls_after.push_back(policy->calls());
    }
  } watch;
  watch.policy = &policy;

  const auto result = run_search(RasterImage::filled(4, 4, 255), cfg, {policy, reward, harness, &clock, &watch});
  c.check(result.simulations == 20, "20 simulations");
  c.check(!result.trace.events.empty() && !result.trace.events[0].reused, "first traversal samples");
  for (std::size_t i = 1; i < result.trace.events.size(); ++i) {
    c.check(result.trace.events[i].reused, "simulation " + std::to_string(i + 1) + " reused the memo");
  }
  const auto reqs = policy.requests();
  std::size_t past = 0;
  for (std::size_t i = watch.calls_after.empty() ? 0 : watch.calls_after[0]; i < reqs.size(); ++i) {
    const auto& p = reqs[i].prefix_lines;
    past += std::find(p.begin(), p.end(), fatal) != p.end();
  }
  c.check(past == 0, std::to_string(past) + " calls extended the faulty prefix");
  c.check(harness.calls == 1, "one compile");
}

void oi_early_exit(Criterion& c) {
  auto policy = load_mock_policy(testsupport::fixture("policies/two_phase.yaml"));
  MockEngineHarness harness;
  DiagnosticsReward reward;
  SearchConfig cfg;
  cfg.mode = SearchMode::OI;
  const auto result = run_search(RasterImage::filled(8, 8, 255), cfg, {*policy, reward, harness});
  c.check(result.simulations == 2, "exactly 2 simulations, got " + std::to_string(result.simulations));
  c.check(result.exit_reason == ExitReason::EarlyExit, "early exit");
  c.check(result.best.raw_reward && *result.best.raw_reward == 1.0, "best reward +1");
  c.check(result.trace.events.size() == 2 && result.trace.events[0].status == CompileStatus::FatalFailure &&
              result.trace.events[1].status == CompileStatus::CleanSuccess,
          "fatal then clean");
}

void emd_oracle(Criterion& c) {
  std::mt19937_64 rng(2024);
  for (std::size_t m = 1; m <= 4; ++m) {
    for (std::size_t n = 1; n <= 4; ++n) {
      for (int trial = 0; trial < 10; ++trial) {
        const auto x = random_patches(rng, m, 5), y = random_patches(rng, n, 5);
        const auto d = patch_distance_matrix(x, y);
        const double oracle = testsupport::vertex_enumeration_cost(d);
        const std::string shape = std::to_string(m) + "x" + std::to_string(n);
        c.check(close(earth_movers_distance(x, y), oracle, kEmdTol), "vertex enumeration " + shape);
        if (m == n) c.check(close(testsupport::assignment_cost(d), oracle, kEmdTol), "assignment " + shape);
      }
      const auto x = random_patches(rng, m, 5);
      c.check(close(emd_reward(x, x).value, 1.0, kEmdTol), "identical inputs");
    }
  }
}

double sampling_best(RolloutPolicy& policy, const testsupport::LandscapeReward& reward, const SearchConfig& cfg,
                     std::uint64_t seed) {
  std::mt19937_64 seeds(seed);
  FaultMemo memo;
  double best = -1.0;
  for (std::size_t i = 0; i < kMctsSimulations; ++i) {
    const auto r = run_rollout(policy, "target", ProgramState{}, cfg, memo, seeds);
    best = std::max(best, reward.score(r.lines));
  }
  return best;
}

void mcts_beats_sampling(Criterion& c) {
  // Six positions; the preferred line has weight 1 against three decoys of
  // weight 2, so at T = 0.8 it is drawn with probability about 0.12.
  std::vector<std::vector<WeightedLine>> positions;
  std::vector<std::string> preferred;
  for (int p = 0; p < 6; ++p) {
    const std::string good = "\\draw (" + std::to_string(p) + ",0) -- (" + std::to_string(p) + ",1);";
    preferred.push_back(good);
    positions.push_back({{good, 1}});
    for (int k = 1; k <= 3; ++k) {
      positions.back().push_back({"\\draw (" + std::to_string(p) + "," + std::to_string(k) + ") circle (1);", 2});
    }
  }
  SeededStochasticPolicy policy(positions, 0);
  testsupport::StubHarness harness("");
  testsupport::LandscapeReward reward(preferred, true);

  std::size_t wins = 0;
  double mcts_total = 0, sample_total = 0;
  for (std::uint64_t seed = 0; seed < kMctsSeeds; ++seed) {
    double mcts_mean = 0, sample_mean = 0;
    for (std::uint64_t rep = 0; rep < kMctsReplicates; ++rep) {
      SearchConfig cfg;
      cfg.rng_seed = seed * 1000 + rep;
      cfg.max_simulations = kMctsSimulations;
      StepClock clock(0.001);
      const auto result = run_search(RasterImage::filled(4, 4, 0), cfg, {policy, reward, harness, &clock});
      mcts_mean += *result.best.raw_reward / kMctsReplicates;
      sample_mean += sampling_best(policy, reward, cfg, 0x5eed0000ULL + seed * 1000 + rep) / kMctsReplicates;
    }
    wins += mcts_mean > sample_mean;
    mcts_total += mcts_mean / kMctsSeeds;
    sample_total += sample_mean / kMctsSeeds;
  }
  c.check(wins >= kMctsWinsNeeded, std::to_string(wins) + " of " + std::to_string(kMctsSeeds) + " seeds");
  std::ostringstream note;
  note << std::setprecision(3) << "wins " << wins << "/" << kMctsSeeds << ", mean best mcts " << mcts_total
       << " vs sampling " << sample_total;
  c.note(note.str());
}

void compile_classification(Criterion& c) {
  const auto logs = testsupport::golden_logs();
  c.check(logs.size() >= 12, "at least 12 golden logs");
  std::set<CompileStatus> seen;
  bool timeout_seen = false;
  for (const auto& g : logs) {
    const std::string text = testsupport::slurp(testsupport::fixture("logs/" + g.file));
    const auto cls = classify_log(text, g.artifact, g.mapping);
    c.check(cls.status == g.status && cls.fatal_line == g.fatal_line, g.file);
    seen.insert(cls.status);
    timeout_seen = timeout_seen || text.find(kTimeoutMarker) != std::string::npos;
  }
  c.check(seen.size() == 3, "all three classes");
  c.check(timeout_seen, "a timeout log");

  HarnessConfig cfg;
  cfg.apply_environment();
  if (!find_executable(cfg.engine) || !find_executable(cfg.rasterizer)) {
    c.note("live fixtures skipped: " + cfg.engine + " or " + cfg.rasterizer + " not installed");
    return;
  }
  LatexHarness harness(cfg);
  std::istringstream expected(testsupport::slurp(testsupport::fixture("live/expected.tsv")));
  std::string file, status;
  int live = 0;
  while (expected >> file >> status) {
    const auto outcome = harness.compile(testsupport::slurp(testsupport::fixture("live/" + file)));
    c.check(std::string(to_string(outcome.status)) == status, "live " + file);
    ++live;
  }
  c.note(std::to_string(live) + " live fixtures compiled with " + cfg.engine);
}

void evalkit(Criterion& c) {
  using namespace eval;
  c.check(close(mte({{50, 100}}), 0.5, kEvalTol), "mte single");
  std::vector<EfficiencySample> ten;
  for (long f : {0L, 50L, 50L, 50L, 50L, 50L, 50L, 50L, 50L, 100L}) ten.push_back({f, 100});
  c.check(close(mte(ten), 0.5, kEvalTol), "mte winsorized");

  c.check(close(bws_scores({{"x", 6, 3, 1}}).at("x"), 1.0 / 3.0, kEvalTol), "bws");
  c.check(close(spearman({1, 2, 3, 4}, {1, 3, 2, 4}), 0.8, kEvalTol), "spearman");
  c.check(close(average_correlation({0.8, 0.2}), 0.57212246173203725643, kEvalTol), "average_correlation");

  NgramIndex idx(1, 2);
  idx.add({"a", "b"});
  const auto nov = ngram_novelty({"a", "b", "c"}, idx);
  c.check(close(nov.at(1), 1.0 / 3.0, kEvalTol) && close(nov.at(2), 0.5, kEvalTol), "ngram_novelty");

  // Local vectors (2,1), (0,0), (4,3): centered scatter [[8, 6], [6, 14/3]],
  // dominant eigenvector (6, λ − 8) with λ = (8 + 14/3)/2 + sqrt((8 − 14/3)²/4 + 36).
  PairedEmbeddingSet set;
  for (const auto& l : std::vector<std::vector<double>>{{2, 1}, {0, 0}, {4, 3}}) {
    set.sketch_embs.push_back({{0.3, -0.2}});
    set.figure_embs.push_back({{0.3 + l[0], -0.2 + l[1]}});
  }
  const double a = 8, b = 6, d = 14.0 / 3.0;
  const double lambda = (a + d) / 2 + std::sqrt((a - d) * (a - d) / 4 + b * b);
  const double norm = std::hypot(b, lambda - a);
  const auto g = global_sketch_vector(set);
  c.check(g.size() == 2 && close(g[0], b / norm, kEvalTol) && close(g[1], (lambda - a) / norm, kEvalTol),
          "global sketch vector");
  c.check(close(congruence(set, set), 1.0, kEvalTol), "congruence");

  SearchTrace exact;
  for (int k = 1; k <= 6; ++k) {
    TraceEvent ev;
    ev.sim = static_cast<std::size_t>(k);
    ev.t_offset_s = std::exp(0.1 * k);
    ev.reward = 0.1 * k;
    ev.artifact = true;
    exact.events.push_back(ev);
  }
  c.check(close(reward_trend(exact).slope, 1.0, kEvalTol), "reward_trend");
  c.check(close(tex_edit_distance("\\draw (0,0);", "\\draw (0,1);"), 0.125, kEvalTol), "tex_edit_distance");

  std::mt19937_64 rng(99);
  std::normal_distribution<double> gauss;
  auto tokens = [&] {
    std::vector<std::string> t(rng() % 9);
    for (auto& s : t) s = std::string(1, static_cast<char>('a' + rng() % 3));
    return t;
  };
  for (int i = 0; i < 2000; ++i) {
    const auto x = tokens(), y = tokens(), z = tokens();
    const double xy = token_edit_distance(x, y);
    c.check(xy >= 0 && xy <= 1, "ted bounds");
    c.check(xy == token_edit_distance(y, x), "ted symmetry");
    c.check(token_edit_distance(x, x) == 0, "ted identity");
    c.check(token_edit_distance(x, z) <= xy + token_edit_distance(y, z) + 1e-12, "ted triangle inequality");

    std::vector<double> u(3 + rng() % 10), v(u.size());
    for (auto& e : u) e = gauss(rng);
    for (auto& e : v) e = gauss(rng);
    const double rho = spearman(u, v);
    c.check(rho >= -1 - 1e-12 && rho <= 1 + 1e-12, "spearman bounds");
    std::vector<double> w(u.size());
    std::transform(u.begin(), u.end(), w.begin(), [](double e) { return std::exp(e); });
    c.check(close(spearman(w, v), rho, 1e-12), "spearman monotone invariance");

    std::vector<EfficiencySample> s(1 + rng() % 20);
    for (auto& e : s) {
      e.total_tokens = 1 + static_cast<long>(rng() % 500);
      e.final_tokens = static_cast<long>(rng() % static_cast<unsigned long>(e.total_tokens + 1));
    }
    const double m = mte(s);
    c.check(m >= 0 && m <= 1, "mte bounds");
  }
}

std::string run_mock_ti(const fs::path& out) {
  std::ostringstream o, e;
  const int code = cli::run({"tikzmcts", "synthesize", "--image", testsupport::fixture("images/target.png").string(),
                             "--policy", "mock:" + testsupport::fixture("policies/stochastic.yaml").string(),
                             "--engine", "mock", "--embed", "mock", "--mode", "ti", "--seed", "17", "--budget", "5s",
                             "--clock-step", "0.01", "--out", out.string()},
                            o, e);
  if (code != cli::kOk) return "exit " + std::to_string(code) + ": " + e.str();
  return testsupport::slurp(out / "trace.jsonl");
}

void determinism(Criterion& c) {
  const auto dir = testsupport::scratch_dir("acceptance-determinism");
  const auto a = run_mock_ti(dir / "a");
  const auto b = run_mock_ti(dir / "b");
  c.check(a.rfind("exit ", 0) != 0, a);
  c.check(std::count(a.begin(), a.end(), '\n') > 1, "more than one simulation");
  c.check(a == b, "traces differ");
  c.note(std::to_string(std::count(a.begin(), a.end(), '\n')) + " trace lines");
  fs::remove_all(dir);
}

}  // namespace

int main() {
  struct Entry {
    std::string name;
    double limit_s;
    std::function<void(Criterion&)> body;
  };
  const std::vector<Entry> entries = {
      {"diagnostics reward mapping", 1, diagnostics_mapping},
      {"UCT reference values and monotonicity", 1, uct},
      {"value rescaling", 1, rescaling},
      {"expansion arithmetic and tree invariants", 10, expansion},
      {"preemptive stopping on faulty prefixes", 5, preemptive_stopping},
      {"OI early exit after two simulations", 5, oi_early_exit},
      {"EMD against exact transport solutions", 5, emd_oracle},
      {"MCTS beats independent sampling", 60, mcts_beats_sampling},
      {"compile classification", 30, compile_classification},
      {"evaluation formulas and properties", 30, evalkit},
      {"deterministic mock-stack traces", 10, determinism},
  };
  int failed = 0;
  for (const auto& e : entries) {
    Criterion c(e.name);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      e.body(c);
    } catch (const std::exception& ex) {
      c.check(false, std::string("exception: ") + ex.what());
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << c.line(s, e.limit_s) << std::endl;
    if (!c.ok_within(s, e.limit_s)) ++failed;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
