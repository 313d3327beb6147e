#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>

#include "tikzmcts/compile.hpp"
#include "tikzmcts/embed.hpp"
#include "tikzmcts/errors.hpp"
#include "tikzmcts/evalkit.hpp"
#include "tikzmcts/hashing.hpp"
#include "tikzmcts/http_transport.hpp"
#include "tikzmcts/image.hpp"
#include "tikzmcts/mock_engine.hpp"
#include "tikzmcts/mock_server.hpp"
#include "tikzmcts/policy.hpp"
#include "tikzmcts/reward.hpp"
#include "tikzmcts/search.hpp"
#include "tikzmcts/tex_tokens.hpp"
#include "tikzmcts/trace_io.hpp"
#include "tikzmcts/wire.hpp"

namespace tikzmcts::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

const Settings kDefaults = {
    {"mode", "ti"},
    {"budget", "10m"},
    {"c", "0.6"},
    {"temperature", "0.8"},
    {"embed", "mock"},
    {"engine", "pdflatex"},
    {"rasterizer", "pdftoppm"},
    {"seed", "0"},
    {"reward", "auto"},
    {"max_rollout_lines", "150"},
    {"compile_timeout", "60"},
    {"dpi", "300"},
    {"lines_per_request", "1"},
    {"trace_format", "jsonl"},
    {"keep_workspace", "false"},
};

const std::map<std::string, std::string> kHelp = {
    {"mode", "oi (first compiling program) or ti (best reward within the budget)"},
    {"image", "input PNG"},
    {"budget", "wall-clock budget: 600, 30s, 10m, 1.5h"},
    {"c", "UCT exploration constant"},
    {"temperature", "policy sampling temperature"},
    {"policy", "policy endpoint URL or mock:<file.yaml>"},
    {"embed", "embedding endpoint URL or mock[:grid=G,patches=P]"},
    {"embed_dim", "expected pooled embedding dimension"},
    {"engine", "LaTeX engine executable, or mock"},
    {"rasterizer", "PDF rasterizer executable"},
    {"out", "output directory"},
    {"seed", "search seed"},
    {"reward", "auto, diagnostics, selfsim or emd"},
    {"layer_index", "embedding layer for patch embeddings"},
    {"max_rollout_lines", "line cap per rollout"},
    {"compile_timeout", "per-compile timeout"},
    {"dpi", "rasterization resolution"},
    {"lines_per_request", "lines requested per policy call"},
    {"max_simulations", "stop after this many simulations"},
    {"clock_step", "use a virtual clock advancing this many seconds per reading"},
    {"trace_format", "jsonl"},
    {"keep_workspace", "keep compile workspaces"},
};

std::string env_name(const std::string& key) {
  std::string name = "TIKZMCTS_";
  for (char ch : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return name;
}

std::string flag_name(const std::string& key) {
  std::string name = "--" + key;
  std::replace(name.begin() + 2, name.end(), '_', '-');
  return name;
}

double to_double(const Settings& s, const std::string& key) {
  const std::string& v = s.at(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw InvalidConfig(key + ": expected a number, got '" + v + "'");
  }
}

long long to_int(const Settings& s, const std::string& key) {
  const std::string& v = s.at(key);
  try {
    std::size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw InvalidConfig(key + ": expected an integer, got '" + v + "'");
  }
}

bool to_bool(const Settings& s, const std::string& key) {
  const std::string& v = s.at(key);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off" || v.empty()) return false;
  throw InvalidConfig(key + ": expected a boolean, got '" + v + "'");
}

bool has(const Settings& s, const std::string& key) {
  auto it = s.find(key);
  return it != s.end() && !it->second.empty();
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

bool is_url(const std::string& s) { return s.rfind("http://", 0) == 0 || s.rfind("https://", 0) == 0; }

std::shared_ptr<RolloutPolicy> make_policy(const std::string& arg) {
  if (arg.rfind("mock:", 0) == 0) return load_mock_policy(arg.substr(5));
  if (is_url(arg)) return std::make_shared<HttpPolicyClient>(std::make_shared<HttpTransport>(arg));
  throw InvalidConfig("policy: expected a URL or mock:<file.yaml>, got '" + arg + "'");
}

std::shared_ptr<Embedder> make_embedder(const std::string& arg, std::optional<std::size_t> dim) {
  if (arg == "mock" || arg.rfind("mock:", 0) == 0) {
    int grid = 16, patches = 4;
    if (arg.size() > 5) {
      std::stringstream ss(arg.substr(5));
      std::string kv;
      while (std::getline(ss, kv, ',')) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw InvalidConfig("embed: bad mock option '" + kv + "'");
        Settings one{{kv.substr(0, eq), kv.substr(eq + 1)}};
        const auto value = static_cast<int>(to_int(one, kv.substr(0, eq)));
        if (kv.substr(0, eq) == "grid") {
          grid = value;
        } else if (kv.substr(0, eq) == "patches") {
          patches = value;
        } else {
          throw InvalidConfig("embed: unknown mock option '" + kv + "'");
        }
      }
    }
    auto emb = std::make_shared<MockEmbedder>(grid, patches);
    if (dim && *dim != static_cast<std::size_t>(grid * grid)) {
      throw InvalidConfig("embed: mock dimension " + std::to_string(grid * grid) + " differs from embed_dim");
    }
    return emb;
  }
  if (is_url(arg)) return std::make_shared<HttpEmbedder>(std::make_shared<HttpTransport>(arg), dim);
  throw InvalidConfig("embed: expected a URL or mock[:grid=G,patches=P], got '" + arg + "'");
}

struct RunOptions {
  SearchConfig search;
  std::string image;
  std::string policy;
  std::string embed;
  std::optional<std::size_t> embed_dim;
  std::optional<int> layer_index;
  HarnessConfig harness;
  bool mock_engine = false;
  std::string reward = "auto";
  std::string out;
  std::optional<double> clock_step;
};

RunOptions resolve(const Settings& s, bool need_run_inputs) {
  RunOptions o;
  o.search.mode = search_mode_from_string(s.at("mode"));
  o.search.budget_seconds = parse_duration(s.at("budget"));
  o.search.exploration_c = to_double(s, "c");
  o.search.temperature = to_double(s, "temperature");
  o.search.rng_seed = static_cast<std::uint64_t>(to_int(s, "seed"));
  o.search.max_rollout_lines = static_cast<int>(to_int(s, "max_rollout_lines"));
  o.search.compile_timeout_seconds = parse_duration(s.at("compile_timeout"));
  o.search.raster_dpi = static_cast<int>(to_int(s, "dpi"));
  o.search.lines_per_request = static_cast<int>(to_int(s, "lines_per_request"));
  if (has(s, "max_simulations")) {
    const auto n = to_int(s, "max_simulations");
    if (n < 1) throw InvalidConfig("max_simulations must be >= 1");
    o.search.max_simulations = static_cast<std::size_t>(n);
  }
  o.search.validate();

  if (has(s, "clock_step")) {
    o.clock_step = to_double(s, "clock_step");
    if (!(*o.clock_step > 0)) throw InvalidConfig("clock_step must be > 0");
  }
  if (s.at("trace_format") != "jsonl") throw InvalidConfig("trace_format: only 'jsonl' is supported");

  o.policy = has(s, "policy") ? s.at("policy") : "";
  o.embed = s.at("embed");
  if (has(s, "embed_dim")) {
    const auto d = to_int(s, "embed_dim");
    if (d < 1) throw InvalidConfig("embed_dim must be >= 1");
    o.embed_dim = static_cast<std::size_t>(d);
  }
  if (has(s, "layer_index")) o.layer_index = static_cast<int>(to_int(s, "layer_index"));

  o.mock_engine = s.at("engine") == "mock";
  o.harness.engine = s.at("engine");
  o.harness.rasterizer = s.at("rasterizer");
  o.harness.timeout_s = o.search.compile_timeout_seconds;
  o.harness.dpi = o.search.raster_dpi;
  o.harness.keep_workspace = to_bool(s, "keep_workspace");

  o.reward = s.at("reward");
  if (o.reward != "auto" && o.reward != "diagnostics" && o.reward != "selfsim" && o.reward != "emd") {
    throw InvalidConfig("reward: expected auto|diagnostics|selfsim|emd");
  }
  if (o.search.mode == SearchMode::OI && o.reward != "auto" && o.reward != "diagnostics") {
    throw InvalidConfig("reward: OI mode scores compiler diagnostics only");
  }

  if (need_run_inputs) {
    if (!has(s, "image")) throw InvalidConfig("--image is required");
    if (!has(s, "out")) throw InvalidConfig("--out is required");
    if (o.policy.empty()) throw InvalidConfig("--policy is required");
    o.image = s.at("image");
    o.out = s.at("out");
  }
  return o;
}

std::unique_ptr<CompileHarness> make_harness(const RunOptions& o) {
  if (o.mock_engine) return std::make_unique<MockEngineHarness>();
  auto h = std::make_unique<LatexHarness>(o.harness);
  h->probe();
  return h;
}

std::unique_ptr<RewardFunction> make_reward(const RunOptions& o, const std::shared_ptr<Embedder>& emb,
                                            const RasterImage& input) {
  std::string kind = o.reward;
  if (kind == "auto") kind = o.search.mode == SearchMode::OI ? "diagnostics" : "selfsim";
  if (kind == "diagnostics") return std::make_unique<DiagnosticsReward>();
  if (kind == "selfsim") return std::make_unique<SelfSimReward>(emb, input);
  return std::make_unique<EmdReward>(emb, input, o.layer_index);
}

bool directory_in_use(const fs::path& p) {
  std::error_code ec;
  if (!fs::exists(p, ec)) return false;
  if (!fs::is_directory(p, ec)) return true;
  return fs::directory_iterator(p, ec) != fs::directory_iterator();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw EnvironmentError("cannot write " + p.string());
  f << text;
}

std::string settings_yaml(const Settings& s) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  for (const auto& [k, v] : s) e << YAML::Key << k << YAML::Value << v;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

int cmd_synthesize(const Settings& s, bool force, std::ostream& out, std::ostream& err) {
  const RunOptions o = resolve(s, true);
  const fs::path out_dir = o.out;
  if (directory_in_use(out_dir) && !force) {
    err << "error: " << out_dir.string() << " already exists; pass --force to replace it\n";
    return kUsage;
  }

  auto harness = make_harness(o);

  RasterImage input;
  std::vector<std::uint8_t> image_bytes;
  try {
    image_bytes = read_file_bytes(o.image);
    input = decode_png(image_bytes);
  } catch (const std::exception& e) {
    throw InvalidConfig("cannot read input image '" + o.image + "': " + e.what());
  }

  auto policy = make_policy(o.policy);
  const bool needs_embedder = o.search.mode == SearchMode::TI && o.reward != "diagnostics";
  std::shared_ptr<Embedder> embedder = needs_embedder ? make_embedder(o.embed, o.embed_dim) : nullptr;
  auto reward = make_reward(o, embedder, input);

  std::unique_ptr<Clock> clock;
  if (o.clock_step) {
    clock = std::make_unique<StepClock>(*o.clock_step);
  } else {
    clock = std::make_unique<SteadyClock>();
  }

  const std::string started = utc_now();
  SearchResult result = run_search(input, o.search, {*policy, *reward, *harness, clock.get(), nullptr});
  const std::string finished = utc_now();

  const fs::path staging = out_dir.string() + ".partial-" + std::to_string(::getpid());
  fs::remove_all(staging);
  fs::create_directories(staging);

  const Rollout& best = result.best;
  write_text(staging / "best.tex", best.program_text() + "\n");
  const bool has_raster = best.outcome && best.outcome->raster;
  if (has_raster) write_png(staging / "best.png", *best.outcome->raster);
  write_trace_jsonl(staging / "trace.jsonl", result.trace);
  write_text(staging / "config.yaml", settings_yaml(s));

  Json manifest;
  manifest["input"] = {{"path", o.image}, {"sha256", sha256_hex(image_bytes)}};
  manifest["config"] = Json(s);
  manifest["endpoints"] = {{"policy", o.policy},
                           {"embed", embedder ? embedder->describe() : std::string()},
                           {"engine", harness->describe()}};
  manifest["started_at"] = started;
  manifest["finished_at"] = finished;
  manifest["best_program"] = "best.tex";
  manifest["best_raster"] = has_raster ? Json("best.png") : Json(nullptr);
  manifest["best_reward"] = *best.raw_reward;
  manifest["best_status"] = to_string(best.outcome->status);
  manifest["best_simulation"] = best.simulation_index;
  manifest["simulations"] = result.simulations;
  manifest["exit_reason"] = to_string(result.exit_reason);
  write_text(staging / "manifest.json", manifest.dump(2) + "\n");

  if (fs::exists(out_dir)) fs::remove_all(out_dir);
  if (out_dir.has_parent_path()) fs::create_directories(out_dir.parent_path());
  fs::rename(staging, out_dir);

  out << "best reward " << fmt(*best.raw_reward) << " (" << to_string(best.outcome->status)
      << ", simulation " << best.simulation_index << " of " << result.simulations << ")\n";
  out << "exit " << to_string(result.exit_reason) << "\n";
  out << "wrote " << out_dir.string() << "\n";
  return kOk;
}

RasterImage probe_image() {
  RasterImage img = RasterImage::filled(32, 32, 255);
  for (int y = 8; y < 24; ++y) {
    for (int x = 8; x < 24; ++x) {
      auto* p = img.pixel(x, y);
      p[0] = p[1] = p[2] = 0;
    }
  }
  return img;
}

int cmd_doctor(const Settings& s, std::ostream& out) {
  const RunOptions o = resolve(s, false);
  bool env_ok = true, gateway_ok = true;
  auto report = [&](bool ok, const std::string& name, const std::string& detail) {
    out << (ok ? "PASS " : "FAIL ") << name << (detail.empty() ? "" : ": " + detail) << "\n";
  };

  if (o.mock_engine) {
    report(true, "engine", "mock");
    report(true, "rasterizer", "mock");
  } else {
    auto engine = find_executable(o.harness.engine);
    report(engine.has_value(), "engine", engine ? engine->string() : "'" + o.harness.engine + "' not found");
    auto raster = find_executable(o.harness.rasterizer);
    report(raster.has_value(), "rasterizer",
           raster ? raster->string() : "'" + o.harness.rasterizer + "' not found");
    env_ok = engine && raster;
  }

  const RasterImage img = probe_image();
  if (o.policy.empty()) {
    report(false, "policy", "no policy configured");
    gateway_ok = false;
  } else {
    try {
      auto policy = make_policy(o.policy);
      PolicyRequest req;
      req.image_ref = policy->upload_image(encode_png(img));
      req.temperature = o.search.temperature;
      req.max_new_lines = 1;
      req.seed = o.search.rng_seed;
      const auto resp = policy->sample_continuation(req);
      validate_response(resp, req);
      report(true, "policy", policy->describe() + " (" + std::to_string(resp.new_lines.size()) + " line(s))");
    } catch (const std::exception& e) {
      report(false, "policy", e.what());
      gateway_ok = false;
    }
  }

  try {
    auto emb = make_embedder(o.embed, o.embed_dim);
    const auto pooled = emb->embed_image(img);
    const auto patches = emb->embed_patches(img, o.layer_index);
    report(true, "embed",
           emb->describe() + " (dim " + std::to_string(pooled.dim()) + ", " +
               std::to_string(patches.num_patches()) + "x" + std::to_string(patches.dim()) + " patches)");
  } catch (const std::exception& e) {
    report(false, "embed", e.what());
    gateway_ok = false;
  }

  if (!env_ok) return kEnvironment;
  return gateway_ok ? kOk : kGateway;
}

std::vector<double> parse_numbers(const std::string& arg) {
  std::string text = arg;
  if (!arg.empty() && arg[0] == '@') {
    std::ifstream f(arg.substr(1));
    if (!f) throw EnvironmentError("cannot read " + arg.substr(1));
    std::stringstream buf;
    buf << f.rdbuf();
    text = buf.str();
  }
  std::replace(text.begin(), text.end(), ',', ' ');
  std::stringstream ss(text);
  std::vector<double> out;
  std::string tok;
  while (ss >> tok) {
    Settings one{{"value", tok}};
    out.push_back(to_double(one, "value"));
  }
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw EnvironmentError("cannot read " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

eval::PairedEmbeddingSet read_pairs(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_text(path));
    eval::PairedEmbeddingSet set;
    for (const auto& v : j.at("figures")) set.figure_embs.push_back({v.get<std::vector<double>>()});
    for (const auto& v : j.at("sketches")) set.sketch_embs.push_back({v.get<std::vector<double>>()});
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(path + ": expected {\"figures\": [[...]], \"sketches\": [[...]]}: " + e.what());
  }
}

std::pair<int, int> parse_range(const std::string& arg) {
  Settings s;
  const auto dots = arg.find("..");
  if (dots == std::string::npos) {
    s["n"] = arg;
    const int n = static_cast<int>(to_int(s, "n"));
    return {n, n};
  }
  s["n_min"] = arg.substr(0, dots);
  s["n_max"] = arg.substr(dots + 2);
  return {static_cast<int>(to_int(s, "n_min")), static_cast<int>(to_int(s, "n_max"))};
}

/// Key/value report printed as tab-separated text or one JSON object.
struct Report {
  std::vector<std::pair<std::string, double>> rows;

  void add(std::string key, double value) { rows.emplace_back(std::move(key), value); }

  void print(std::ostream& out, bool json) const {
    if (json) {
      Json j = Json::object();
      for (const auto& [k, v] : rows) j[k] = v;
      out << j.dump() << "\n";
      return;
    }
    for (const auto& [k, v] : rows) out << k << "\t" << fmt(v) << "\n";
  }
};

}  // namespace

double parse_duration(const std::string& text) {
  if (text.empty()) throw InvalidConfig("empty duration");
  double scale = 1.0;
  std::string number = text;
  switch (text.back()) {
    case 's': number.pop_back(); break;
    case 'm': scale = 60.0; number.pop_back(); break;
    case 'h': scale = 3600.0; number.pop_back(); break;
    default: break;
  }
  Settings s{{"duration", number}};
  const double v = to_double(s, "duration") * scale;
  if (!(v > 0)) throw InvalidConfig("duration must be positive: '" + text + "'");
  return v;
}

const std::vector<std::string>& setting_keys() {
  static const std::vector<std::string> keys = {
      "mode",    "image",       "budget",          "c",        "temperature", "policy",
      "embed",   "embed_dim",   "engine",          "rasterizer", "out",       "seed",
      "reward",  "layer_index", "max_rollout_lines", "compile_timeout", "dpi", "lines_per_request",
      "max_simulations", "clock_step", "trace_format", "keep_workspace"};
  return keys;
}

Settings load_settings_file(const std::string& path) {
  Settings s;
  try {
    const YAML::Node root = YAML::LoadFile(path);
    if (!root.IsMap()) throw InvalidConfig(path + ": expected a mapping");
    const auto& keys = setting_keys();
    for (const auto& kv : root) {
      const auto key = kv.first.as<std::string>();
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
        throw InvalidConfig(path + ": unknown setting '" + key + "'");
      }
      s[key] = kv.second.as<std::string>();
    }
  } catch (const YAML::Exception& e) {
    throw InvalidConfig(path + ": " + e.what());
  }
  return s;
}

Settings settings_from_environment() {
  Settings s;
  for (const auto& key : setting_keys()) {
    if (const char* v = std::getenv(env_name(key).c_str()); v && *v) s[key] = v;
  }
  return s;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Line-level MCTS synthesis of TikZ programs with compiler and perceptual rewards",
               "tikzmcts"};
  app.require_subcommand(1);

  Settings flags;
  std::map<std::string, std::vector<CLI::Option*>> flag_opts;
  std::string config_path;
  bool force = false;
  auto add_settings = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "YAML settings file (overridden by TIKZMCTS_* and flags)");
    for (const auto& key : setting_keys()) {
      flag_opts[key].push_back(sub->add_option(flag_name(key), flags[key], kHelp.at(key)));
    }
  };

  auto* syn = app.add_subcommand("synthesize", "Search for a program reproducing an image");
  add_settings(syn);
  syn->add_flag("--force", force, "Replace an existing output directory");

  auto* doctor = app.add_subcommand("doctor", "Probe engine, rasterizer and gateways");
  add_settings(doctor);

  auto* server = app.add_subcommand("mock-server", "Serve the wire protocol from mock policy/embedder");
  std::string srv_policy, srv_embed = "mock", srv_host = "127.0.0.1";
  int srv_port = 8765;
  server->add_option("--policy", srv_policy, "mock:<file.yaml>")->required();
  server->add_option("--embed", srv_embed, "mock[:grid=G,patches=P]");
  server->add_option("--host", srv_host);
  server->add_option("--port", srv_port);

  auto* ev = app.add_subcommand("eval", "Evaluation metrics over traces, annotations and programs");
  ev->require_subcommand(1);
  bool as_json = false;
  ev->add_flag("--json", as_json, "Print one JSON object instead of tab-separated rows");
  std::vector<std::string> traces;
  std::string trace, annotations, budget = "10m", xs, ys, rhos, corpus, generated, nrange = "1..10",
                                  set1, set2, file_a, file_b;
  std::uint64_t eval_seed = 0;
  int splits = 100;

  auto* e_mte = ev->add_subcommand("mte", "Mean token efficiency over run traces");
  e_mte->add_option("--trace", traces, "trace.jsonl (repeatable)")->required();
  auto* e_mst = ev->add_subcommand("mst", "Unique compiled programs per 600 s");
  e_mst->add_option("--trace", trace)->required();
  e_mst->add_option("--budget", budget);
  auto* e_bws = ev->add_subcommand("bws", "Best-worst scaling scores");
  e_bws->add_option("--annotations", annotations)->required();
  auto* e_shr = ev->add_subcommand("shr", "Split-half reliability of BWS scores");
  e_shr->add_option("--annotations", annotations)->required();
  e_shr->add_option("--seed", eval_seed);
  e_shr->add_option("--splits", splits);
  auto* e_sp = ev->add_subcommand("spearman", "Spearman rank correlation");
  e_sp->add_option("--x", xs, "comma list or @file")->required();
  e_sp->add_option("--y", ys, "comma list or @file")->required();
  auto* e_avg = ev->add_subcommand("avgcorr", "Fisher-z average of correlations");
  e_avg->add_option("--rhos", rhos, "comma list or @file")->required();
  auto* e_nov = ev->add_subcommand("novelty", "N-gram novelty against a corpus");
  e_nov->add_option("--corpus", corpus, "file or directory of .tex files")->required();
  e_nov->add_option("--generated", generated)->required();
  e_nov->add_option("--n", nrange, "N or A..B");
  auto* e_con = ev->add_subcommand("congruence", "Congruence of two sketch sets");
  e_con->add_option("--set1", set1)->required();
  e_con->add_option("--set2", set2)->required();
  auto* e_trend = ev->add_subcommand("trend", "Best-so-far reward against ln t");
  e_trend->add_option("--trace", trace)->required();
  auto* e_ted = ev->add_subcommand("ted", "Token edit distance of two programs");
  e_ted->add_option("--a", file_a)->required();
  e_ted->add_option("--b", file_b)->required();

  std::vector<std::string> argv_store(args.begin(), args.end());
  if (argv_store.empty()) argv_store.emplace_back("tikzmcts");
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  auto layered = [&] {
    Settings s = kDefaults;
    if (!config_path.empty()) {
      for (auto& [k, v] : load_settings_file(config_path)) s[k] = v;
    }
    for (auto& [k, v] : settings_from_environment()) s[k] = v;
    for (const auto& [key, opts] : flag_opts) {
      for (auto* opt : opts) {
        if (opt->count() > 0) s[key] = flags[key];
      }
    }
    return s;
  };

  try {
    if (*syn) return cmd_synthesize(layered(), force, out, err);
    if (*doctor) return cmd_doctor(layered(), out);
    if (*server) {
      MockWireServer srv(make_policy(srv_policy), make_embedder(srv_embed, std::nullopt));
      out << "serving on http://" << srv_host << ":" << srv_port << std::endl;
      srv.serve_forever(srv_host, srv_port);
      return kOk;
    }

    Report report;
    try {
    if (*e_mte) {
      std::vector<eval::EfficiencySample> samples;
      for (const auto& t : traces) {
        samples.push_back(eval::efficiency_from_trace(read_trace_jsonl(fs::path(t))));
        report.add("ratio:" + t, static_cast<double>(samples.back().final_tokens) /
                                     static_cast<double>(samples.back().total_tokens));
      }
      report.add("mte", eval::mte(samples));
    } else if (*e_mst) {
      report.add("mst", eval::mst(read_trace_jsonl(fs::path(trace)), parse_duration(budget)));
    } else if (*e_bws) {
      const auto scores = eval::bws_scores(eval::aggregate_bws(eval::read_annotations_csv(annotations)));
      double sum = 0;
      for (const auto& [item, score] : scores) {
        report.add(item, score);
        sum += score;
      }
      report.add("sum", sum);
    } else if (*e_shr) {
      report.add("shr", eval::shr(eval::read_annotations_csv(annotations), eval_seed, splits));
    } else if (*e_sp) {
      report.add("spearman", eval::spearman(parse_numbers(xs), parse_numbers(ys)));
    } else if (*e_avg) {
      report.add("average_correlation", eval::average_correlation(parse_numbers(rhos)));
    } else if (*e_nov) {
      const auto [lo, hi] = parse_range(nrange);
      eval::NgramIndex index(lo, hi);
      if (fs::is_directory(corpus)) {
        for (const auto& entry : fs::recursive_directory_iterator(corpus)) {
          if (entry.is_regular_file() && entry.path().extension() == ".tex") {
            index.add(tokenize_tex(read_text(entry.path().string())));
          }
        }
      } else {
        index.add(tokenize_tex(read_text(corpus)));
      }
      for (const auto& [n, v] : eval::ngram_novelty(tokenize_tex(read_text(generated)), index)) {
        report.add("n=" + std::to_string(n), v);
      }
    } else if (*e_con) {
      report.add("congruence", eval::congruence(read_pairs(set1), read_pairs(set2)));
    } else if (*e_trend) {
      const auto t = eval::reward_trend(read_trace_jsonl(fs::path(trace)));
      report.add("slope", t.slope);
      report.add("intercept", t.intercept);
    } else if (*e_ted) {
      report.add("ted", eval::tex_edit_distance(read_text(file_a), read_text(file_b)));
    }
    } catch (const ProtocolError& e) {
      throw InvalidConfig(e.what());
    }
    report.print(out, as_json);
    return kOk;
  } catch (const EmptySearchError& e) {
    err << "error: " << e.what() << " (" << e.trace().events.size() << " trace events)\n";
    return kEmptySearch;
  } catch (const EnvironmentError& e) {
    err << "environment error: " << e.what() << "\n";
    return kEnvironment;
  } catch (const GatewayError& e) {
    err << "gateway error: " << e.what() << "\n";
    return kGateway;
  } catch (const ProtocolError& e) {
    err << "gateway protocol error: " << e.what() << "\n";
    return kGateway;
  } catch (const InvalidConfig& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ContractViolation& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace tikzmcts::cli
