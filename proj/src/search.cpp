#include "tikzmcts/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

#include "tikzmcts/hashing.hpp"

namespace tikzmcts {

std::string_view to_string(SearchMode mode) { return mode == SearchMode::OI ? "oi" : "ti"; }

SearchMode search_mode_from_string(std::string_view name) {
  if (name == "oi" || name == "OI") return SearchMode::OI;
  if (name == "ti" || name == "TI") return SearchMode::TI;
  throw InvalidConfig("unknown search mode '" + std::string(name) + "'");
}

std::string_view to_string(ExitReason reason) {
  switch (reason) {
    case ExitReason::EarlyExit: return "early_exit";
    case ExitReason::BudgetExhausted: return "budget_exhausted";
    case ExitReason::SimulationLimit: return "simulation_limit";
  }
  return "budget_exhausted";
}

void SearchConfig::validate() const {
  if (!(exploration_c > 0) || !std::isfinite(exploration_c)) {
    throw InvalidConfig("exploration coefficient must be > 0");
  }
  if (!(temperature > 0) || !std::isfinite(temperature)) throw InvalidConfig("temperature must be > 0");
  if (!(budget_seconds > 0)) throw InvalidConfig("budget must be > 0");
  if (max_rollout_lines < 1) throw InvalidConfig("max_rollout_lines must be >= 1");
  if (!(compile_timeout_seconds > 0)) throw InvalidConfig("compile timeout must be > 0");
  if (raster_dpi < 1) throw InvalidConfig("raster dpi must be >= 1");
  if (lines_per_request < 1) throw InvalidConfig("lines_per_request must be >= 1");
}

const SearchNode& SearchNode::expansion_anchor() const {
  return is_backtracking && parent ? *parent : *this;
}

SearchNode& SearchNode::expansion_anchor() { return is_backtracking && parent ? *parent : *this; }

double uct_score(const SearchNode& node, double c, bool rescale) {
  if (!(c > 0) || !std::isfinite(c)) throw InvalidConfig("exploration coefficient must be > 0");
  if (!node.parent) throw ContractViolation("uct_score: node has no parent");
  if (node.parent->visits < 1) throw ContractViolation("uct_score: parent was never visited");
  if (node.visits == 0) return kUnvisitedScore;

  double exploit = 0.0;
  if (!node.values.empty()) {
    const auto vals = rescale ? rescale_values(node.values) : node.values;
    exploit = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
  }
  const double explore =
      c * std::sqrt(std::log(static_cast<double>(node.parent->visits)) / node.visits);
  return exploit + explore;
}

std::vector<SearchNode*> select(SearchNode& root, double c, bool rescale) {
  std::vector<SearchNode*> path{&root};
  SearchNode* cur = &root;
  while (!cur->is_leaf()) {
    SearchNode* best = nullptr;
    double best_score = 0.0;
    for (auto& child : cur->children) {
      const double s = uct_score(*child, c, rescale);
      if (!best || s > best_score) {
        best = child.get();
        best_score = s;
      }
    }
    cur = best;
    path.push_back(cur);
  }
  return path;
}

int Rollout::program_tokens() const {
  return std::accumulate(line_tokens.begin(), line_tokens.end(), 0);
}

bool FaultMemo::record(const Rollout& rollout) {
  if (!rollout.outcome || rollout.outcome->status != CompileStatus::FatalFailure) return false;
  const auto& fl = rollout.outcome->fatal_line;
  if (!fl || *fl < 1 || static_cast<std::size_t>(*fl) > rollout.lines.size()) return false;
  Rollout stored = rollout;
  stored.outcome->raster.reset();
  return entries_.try_emplace(key_of_lines(rollout.lines, *fl), std::move(stored)).second;
}

const Rollout* FaultMemo::find(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

namespace {

Rollout reuse_memo(const Rollout& memo_hit, const ProgramState& state, int spent) {
  Rollout r = memo_hit;
  r.origin_state = state;
  r.tokens_generated = spent;
  r.reused = true;
  r.truncated = false;
  return r;
}

}  // namespace

Rollout run_rollout(RolloutPolicy& policy, const std::string& image_ref, const ProgramState& state,
                    const SearchConfig& cfg, const FaultMemo& memo, std::mt19937_64& seeds,
                    std::vector<int> origin_tokens) {
  Rollout r;
  r.origin_state = state;
  r.lines = state.lines();
  r.line_tokens = std::move(origin_tokens);
  r.line_tokens.resize(r.lines.size(), 0);

  if (const Rollout* hit = memo.find(key_of_lines(r.lines, r.lines.size()))) {
    return reuse_memo(*hit, state, 0);
  }

  const auto cap = static_cast<std::size_t>(cfg.max_rollout_lines);
  bool eos = false;
  while (!eos && r.lines.size() < cap) {
    PolicyRequest req;
    req.image_ref = image_ref;
    req.prefix_lines = r.lines;
    req.temperature = cfg.temperature;
    req.max_new_lines = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(cfg.lines_per_request), cap - r.lines.size()));
    req.seed = seeds();
    validate_request(req);

    PolicyResponse resp = policy.sample_continuation(req);
    validate_response(resp, req);
    r.tokens_generated += resp.tokens_used;
    eos = resp.eos;

    const auto n = resp.new_lines.size();
    for (std::size_t i = 0; i < n; ++i) {
      const int share = resp.tokens_used / static_cast<int>(n);
      const int tokens = i + 1 == n ? resp.tokens_used - share * static_cast<int>(n - 1) : share;
      r.lines.push_back(std::move(resp.new_lines[i]));
      r.line_tokens.push_back(tokens);
      if (const Rollout* hit = memo.find(key_of_lines(r.lines, r.lines.size()))) {
        return reuse_memo(*hit, state, r.tokens_generated);
      }
    }
  }
  r.truncated = !eos;
  return r;
}

std::size_t expansion_count(std::size_t rollout_lines, std::size_t leaf_depth) {
  if (rollout_lines < leaf_depth) throw ContractViolation("rollout shorter than leaf depth");
  const auto k = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(rollout_lines - leaf_depth))));
  return std::max<std::size_t>(1, k);
}

std::vector<SearchNode*> expand(SearchNode& leaf, const Rollout& rollout) {
  SearchNode& anchor = leaf.expansion_anchor();
  const std::size_t d = anchor.state.depth();
  if (rollout.lines.size() < d) throw ContractViolation("expand: rollout shorter than leaf depth");
  if (!anchor.state.is_prefix_of(rollout.lines)) {
    throw ContractViolation("expand: rollout does not start with the leaf state");
  }

  std::size_t limit = std::min(rollout.lines.size(), d + expansion_count(rollout.lines.size(), d));
  if (rollout.outcome && rollout.outcome->status == CompileStatus::FatalFailure &&
      rollout.outcome->fatal_line) {
    limit = std::min(limit, static_cast<std::size_t>(std::max(*rollout.outcome->fatal_line - 1, 0)));
  }

  std::vector<SearchNode*> chain;
  SearchNode* cur = &anchor;
  for (std::size_t depth = d + 1; depth <= limit; ++depth) {
    const std::string& line = rollout.lines[depth - 1];
    SearchNode* next = nullptr;
    bool has_backtrack = false;
    for (auto& child : cur->children) {
      if (child->is_backtracking) {
        has_backtrack = true;
      } else if (!next && child->state.lines().back() == line) {
        next = child.get();
      }
    }
    if (!next) {
      ProgramState s = cur->state;
      s.push_back(line);
      auto node = std::make_unique<SearchNode>(std::move(s));
      node->parent = cur;
      if (depth - 1 < rollout.line_tokens.size()) node->line_tokens = rollout.line_tokens[depth - 1];
      next = node.get();
      cur->children.push_back(std::move(node));
      if (!has_backtrack) {
        auto mirror = std::make_unique<SearchNode>(cur->state);
        mirror->is_backtracking = true;
        mirror->parent = cur;
        cur->children.push_back(std::move(mirror));
      }
    }
    chain.push_back(next);
    cur = next;
  }
  return chain;
}

void backpropagate(const std::vector<SearchNode*>& path, const std::vector<SearchNode*>& added,
                   double value) {
  if (!std::isfinite(value) || value < -1.0 || value > 1.0) {
    throw ContractViolation("backpropagate: value outside [-1, 1]");
  }
  for (const auto* seq : {&path, &added}) {
    for (SearchNode* node : *seq) {
      ++node->visits;
      if (!node->is_backtracking) node->values.push_back(value);
    }
  }
}

double SteadyClock::now() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

double StepClock::now() {
  t_ += step_;
  return t_;
}

namespace {

std::vector<int> path_tokens(const SearchNode& anchor) {
  std::vector<int> out;
  for (const SearchNode* n = &anchor; n && n->parent; n = n->parent) out.push_back(n->line_tokens);
  std::reverse(out.begin(), out.end());
  return out;
}

}  // namespace

SearchResult run_search(const RasterImage& input_image, const SearchConfig& cfg, SearchContext ctx) {
  cfg.validate();
  SteadyClock steady;
  Clock& clock = ctx.clock ? *ctx.clock : steady;

  const std::string image_ref = ctx.policy.upload_image(encode_png(input_image));
  const bool rescale = ctx.reward.rescaled();

  SearchNode root;
  FaultMemo memo;
  std::mt19937_64 seeds(cfg.rng_seed);
  std::set<std::string> seen;
  SearchResult result;
  std::optional<Rollout> best;

  const double t0 = clock.now();
  std::size_t sims = 0;
  for (;;) {
    if (cfg.max_simulations && sims >= *cfg.max_simulations) {
      result.exit_reason = ExitReason::SimulationLimit;
      break;
    }
    if (clock.now() - t0 >= cfg.budget_seconds) {
      result.exit_reason = ExitReason::BudgetExhausted;
      break;
    }

    auto path = select(root, cfg.exploration_c, rescale);
    SearchNode& leaf = *path.back();
    const SearchNode& anchor = leaf.expansion_anchor();
    Rollout r = run_rollout(ctx.policy, image_ref, anchor.state, cfg, memo, seeds, path_tokens(anchor));
    r.simulation_index = sims + 1;

    if (!r.reused) {
      CompileOutcome outcome;
      if (r.lines.empty()) {
        outcome.log_text = "[tikzmcts] empty program";
      } else {
        outcome = ctx.harness.compile(r.program_text());
      }
      r.raw_reward = ctx.reward.evaluate(r.lines, outcome).value;
      r.outcome = std::move(outcome);
      if (r.outcome->status == CompileStatus::FatalFailure) memo.record(r);
    }
    const double value = *r.raw_reward;

    auto added = expand(leaf, r);
    backpropagate(path, added, value);
    ++sims;

    TraceEvent ev;
    ev.sim = r.simulation_index;
    ev.t_offset_s = clock.now() - t0;
    ev.reward = value;
    ev.status = r.outcome->status;
    ev.tokens = r.tokens_generated;
    ev.program_sha256 = sha256_hex(r.program_text());
    ev.unique = seen.insert(ev.program_sha256).second;
    ev.artifact = r.outcome->artifact_produced;
    ev.reused = r.reused;
    ev.program_tokens = r.program_tokens();
    result.trace.events.push_back(ev);

    if (ctx.observer) ctx.observer->on_simulation(root, r, ev);

    const bool early = cfg.mode == SearchMode::OI && ev.artifact;
    if (!best || value > *best->raw_reward) best = std::move(r);

    if (early) {
      result.exit_reason = ExitReason::EarlyExit;
      break;
    }
  }

  if (!best) throw EmptySearchError(std::move(result.trace));
  result.best = std::move(*best);
  result.simulations = sims;
  result.tree_size = count_nodes(root);
  return result;
}

void check_tree_invariants(const SearchNode& root) {
  if (root.is_backtracking) throw ContractViolation("root is a backtracking node");
  std::vector<const SearchNode*> stack{&root};
  while (!stack.empty()) {
    const SearchNode* n = stack.back();
    stack.pop_back();
    if (n->visits < 0) throw ContractViolation("negative visit count");
    if (n->is_backtracking) {
      if (!n->children.empty()) throw ContractViolation("backtracking node has children");
      if (!n->values.empty()) throw ContractViolation("backtracking node carries values");
      if (!n->parent || !(n->state == n->parent->state)) {
        throw ContractViolation("backtracking node does not mirror its parent");
      }
    } else {
      if (n->values.size() > static_cast<std::size_t>(n->visits)) {
        throw ContractViolation("more values than visits");
      }
      if (n->parent && (n->state.depth() != n->parent->state.depth() + 1 ||
                        !n->parent->state.is_prefix_of(n->state))) {
        throw ContractViolation("node does not extend its parent by one line");
      }
    }
    int backtracking_children = 0;
    std::set<std::pair<std::string, bool>> keys;
    for (const auto& child : n->children) {
      if (child->parent != n) throw ContractViolation("broken parent link");
      if (child->is_backtracking) ++backtracking_children;
      if (!keys.emplace(child->state.key(), child->is_backtracking).second) {
        throw ContractViolation("duplicate sibling state");
      }
      stack.push_back(child.get());
    }
    if (backtracking_children > 1) throw ContractViolation("more than one backtracking child");
  }
}

std::size_t count_nodes(const SearchNode& root) {
  std::size_t n = 1;
  for (const auto& child : root.children) n += count_nodes(*child);
  return n;
}

}  // namespace tikzmcts
