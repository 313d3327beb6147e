#include "tikzmcts/evalkit.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "tikzmcts/errors.hpp"
#include "tikzmcts/tex_tokens.hpp"

namespace tikzmcts::eval {

double winsorized_mean(std::vector<double> values, double fraction) {
  if (values.empty()) throw ContractViolation("winsorized mean of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  for (std::size_t i = 0; i < k; ++i) {
    values[i] = values[k];
    values[n - 1 - i] = values[n - 1 - k];
  }
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
}

double mte(const std::vector<EfficiencySample>& samples) {
  if (samples.empty()) throw ContractViolation("mte: no samples");
  std::vector<double> ratios;
  ratios.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.total_tokens <= 0 || s.final_tokens < 0 || s.final_tokens > s.total_tokens) {
      throw ContractViolation("mte: need 0 <= final_tokens <= total_tokens and total_tokens > 0");
    }
    ratios.push_back(static_cast<double>(s.final_tokens) / static_cast<double>(s.total_tokens));
  }
  return winsorized_mean(std::move(ratios), 0.1);
}

EfficiencySample efficiency_from_trace(const SearchTrace& trace) {
  if (trace.events.empty()) throw ContractViolation("efficiency: empty trace");
  const TraceEvent* best = nullptr;
  long total = 0;
  for (const auto& ev : trace.events) {
    total += ev.tokens;
    if (!best || ev.reward > best->reward) best = &ev;
  }
  return {best->program_tokens, total};
}

double mst(const SearchTrace& trace, double budget_s) {
  if (!(budget_s > 0)) throw ContractViolation("mst: budget must be > 0");
  std::unordered_set<std::string> unique;
  for (const auto& ev : trace.events) {
    if (ev.artifact && ev.t_offset_s <= budget_s) unique.insert(ev.program_sha256);
  }
  return static_cast<double>(unique.size()) * 600.0 / budget_s;
}

std::map<std::string, double> bws_scores(const std::vector<BwsAnnotation>& annotations) {
  std::map<std::string, double> out;
  for (const auto& a : annotations) {
    if (a.times_shown <= 0) throw ContractViolation("bws: item '" + a.item_id + "' was never shown");
    if (a.times_best < 0 || a.times_worst < 0 || a.times_best > a.times_shown ||
        a.times_worst > a.times_shown) {
      throw ContractViolation("bws: inconsistent counts for item '" + a.item_id + "'");
    }
    const double shown = static_cast<double>(a.times_shown);
    out[a.item_id] = static_cast<double>(a.times_best) / shown - static_cast<double>(a.times_worst) / shown;
  }
  return out;
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::vector<AnnotationRow> parse_annotations_csv(const std::string& text) {
  std::stringstream in(text);
  std::string line;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    if (!trim(line).empty()) header = split_csv(line);
  }
  auto column = [&](const char* name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ContractViolation(std::string("annotations: missing column '") + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto ci = column("item_id"), ca = column("annotator_id"), ct = column("tuple_id"),
             cc = column("choice");

  std::vector<AnnotationRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw ContractViolation("annotations line " + std::to_string(lineno) + ": wrong column count");
    }
    AnnotationRow row{cells[ci], cells[ca], cells[ct], Choice::None};
    std::string choice = cells[cc];
    std::transform(choice.begin(), choice.end(), choice.begin(), [](unsigned char c) { return std::tolower(c); });
    if (choice == "best") {
      row.choice = Choice::Best;
    } else if (choice == "worst") {
      row.choice = Choice::Worst;
    } else if (choice != "none" && !choice.empty()) {
      throw ContractViolation("annotations line " + std::to_string(lineno) + ": bad choice '" + cells[cc] + "'");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<AnnotationRow> read_annotations_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EnvironmentError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_annotations_csv(buf.str());
}

std::vector<BwsAnnotation> aggregate_bws(const std::vector<AnnotationRow>& rows) {
  std::vector<BwsAnnotation> out;
  std::map<std::string, std::size_t> index;
  for (const auto& r : rows) {
    auto [it, fresh] = index.try_emplace(r.item_id, out.size());
    if (fresh) out.push_back({r.item_id, 0, 0, 0});
    auto& a = out[it->second];
    ++a.times_shown;
    if (r.choice == Choice::Best) ++a.times_best;
    if (r.choice == Choice::Worst) ++a.times_worst;
  }
  return out;
}

std::vector<double> fractional_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = (static_cast<double>(i + j) / 2.0) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ContractViolation("correlation needs two equal-length lists of at least 2 values");
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw UndefinedCorrelation("correlation with a constant list");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ContractViolation("spearman needs two equal-length lists of at least 2 values");
  }
  return pearson(fractional_ranks(x), fractional_ranks(y));
}

double average_correlation(const std::vector<double>& rhos) {
  if (rhos.empty()) throw ContractViolation("average_correlation of an empty list");
  double z = 0;
  for (double r : rhos) {
    if (!(r >= -1.0 && r <= 1.0)) throw ContractViolation("correlation outside [-1, 1]");
    if (r == 1.0) r = std::nextafter(1.0, 0.0);
    if (r == -1.0) r = std::nextafter(-1.0, 0.0);
    z += std::atanh(r);
  }
  return std::tanh(z / static_cast<double>(rhos.size()));
}

double shr(const std::vector<AnnotationRow>& rows, std::uint64_t rng_seed, int n_splits) {
  if (n_splits < 1) throw ContractViolation("shr: n_splits must be >= 1");

  std::map<std::string, std::set<std::pair<std::string, std::string>>> judgments;
  for (const auto& r : rows) judgments[r.item_id].emplace(r.annotator_id, r.tuple_id);
  std::string thin;
  for (const auto& [item, js] : judgments) {
    if (js.size() < 2) thin += (thin.empty() ? "" : ", ") + item;
  }
  if (!thin.empty()) throw ContractViolation("shr: items with fewer than 2 annotations: " + thin);

  // tuple -> annotators in first-seen order
  std::map<std::string, std::vector<std::string>> tuples;
  for (const auto& r : rows) {
    auto& ann = tuples[r.tuple_id];
    if (std::find(ann.begin(), ann.end(), r.annotator_id) == ann.end()) ann.push_back(r.annotator_id);
  }

  std::mt19937_64 rng(rng_seed);
  std::vector<double> rhos;
  for (int s = 0; s < n_splits; ++s) {
    std::set<std::pair<std::string, std::string>> side_a;  // (tuple, annotator)
    for (auto [tuple, ann] : tuples) {
      for (std::size_t i = ann.size(); i > 1; --i) std::swap(ann[i - 1], ann[rng() % i]);
      std::size_t half = ann.size() / 2;
      if (ann.size() % 2 == 1 && (rng() & 1U)) ++half;
      for (std::size_t i = 0; i < half; ++i) side_a.emplace(tuple, ann[i]);
    }
    std::vector<AnnotationRow> a, b;
    for (const auto& r : rows) (side_a.count({r.tuple_id, r.annotator_id}) ? a : b).push_back(r);

    const auto sa = bws_scores(aggregate_bws(a));
    const auto sb = bws_scores(aggregate_bws(b));
    std::vector<double> xa, xb;
    for (const auto& [item, score] : sa) {
      if (auto it = sb.find(item); it != sb.end()) {
        xa.push_back(score);
        xb.push_back(it->second);
      }
    }
    if (xa.size() < 2) continue;
    try {
      rhos.push_back(spearman(xa, xb));
    } catch (const UndefinedCorrelation&) {
    }
  }
  if (rhos.empty()) throw UndefinedCorrelation("shr: no split produced a defined correlation");
  return average_correlation(rhos);
}

namespace {

std::string ngram_key(const std::vector<std::string>& tokens, std::size_t start, int n) {
  std::string key;
  for (int i = 0; i < n; ++i) {
    const auto& t = tokens[start + static_cast<std::size_t>(i)];
    key += std::to_string(t.size());
    key += ':';
    key += t;
  }
  return key;
}

}  // namespace

NgramIndex::NgramIndex(int n_min, int n_max) : n_min_(n_min), n_max_(n_max) {
  if (n_min < 1 || n_max < n_min) throw ContractViolation("ngram index: need 1 <= n_min <= n_max");
  sets_.resize(static_cast<std::size_t>(n_max - n_min + 1));
}

void NgramIndex::add(const std::vector<std::string>& tokens) {
  for (int n = n_min_; n <= n_max_; ++n) {
    auto& set = sets_[static_cast<std::size_t>(n - n_min_)];
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
      set.insert(ngram_key(tokens, i, n));
    }
  }
}

bool NgramIndex::contains(const std::vector<std::string>& tokens, std::size_t start, int n) const {
  if (n < n_min_ || n > n_max_) throw ContractViolation("ngram index: n outside the indexed range");
  return sets_[static_cast<std::size_t>(n - n_min_)].count(ngram_key(tokens, start, n)) > 0;
}

std::size_t NgramIndex::size(int n) const {
  if (n < n_min_ || n > n_max_) return 0;
  return sets_[static_cast<std::size_t>(n - n_min_)].size();
}

std::map<int, double> ngram_novelty(const std::vector<std::string>& generated, const NgramIndex& index) {
  std::map<int, double> out;
  for (int n = index.n_min(); n <= index.n_max(); ++n) {
    if (generated.size() < static_cast<std::size_t>(n)) continue;
    const std::size_t total = generated.size() - static_cast<std::size_t>(n) + 1;
    std::size_t novel = 0;
    for (std::size_t i = 0; i < total; ++i) novel += index.contains(generated, i, n) ? 0 : 1;
    out[n] = static_cast<double>(novel) / static_cast<double>(total);
  }
  return out;
}

std::vector<double> global_sketch_vector(const PairedEmbeddingSet& set) {
  const auto n = set.figure_embs.size();
  if (n < 2 || set.sketch_embs.size() != n) {
    throw ContractViolation("congruence: need at least 2 figure/sketch pairs of equal count");
  }
  const auto d = set.figure_embs.front().dim();
  if (d == 0) throw ContractViolation("congruence: empty embeddings");
  Eigen::MatrixXd local(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    if (set.figure_embs[i].dim() != d || set.sketch_embs[i].dim() != d) {
      throw ContractViolation("congruence: embedding dimensions differ");
    }
    for (std::size_t k = 0; k < d; ++k) {
      local(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          set.figure_embs[i].values[k] - set.sketch_embs[i].values[k];
    }
  }
  const Eigen::RowVectorXd mean = local.colwise().mean();
  const Eigen::MatrixXd centered = local.rowwise() - mean;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const double scale = std::max(1.0, local.cwiseAbs().maxCoeff());
  if (svd.singularValues().size() == 0 || svd.singularValues()(0) <= 1e-12 * scale) {
    throw DegeneratePca("congruence: local sketch vectors do not vary");
  }
  Eigen::VectorXd v = svd.matrixV().col(0);
  const double align = v.dot(mean.transpose());
  if (align < 0) {
    v = -v;
  } else if (align == 0) {
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
  }
  return {v.data(), v.data() + v.size()};
}

double congruence(const PairedEmbeddingSet& set1, const PairedEmbeddingSet& set2) {
  const auto g1 = global_sketch_vector(set1);
  const auto g2 = global_sketch_vector(set2);
  if (g1.size() != g2.size()) throw ContractViolation("congruence: sets have different dimensions");
  double dot = 0, n1 = 0, n2 = 0;
  for (std::size_t i = 0; i < g1.size(); ++i) {
    dot += g1[i] * g2[i];
    n1 += g1[i] * g1[i];
    n2 += g2[i] * g2[i];
  }
  return std::clamp(dot / std::sqrt(n1 * n2), -1.0, 1.0);
}

Trend fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractViolation("fit_line: need at least 2 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0) throw ContractViolation("fit_line: all x values coincide");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

Trend reward_trend(const SearchTrace& trace) {
  std::vector<double> x, y;
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& ev : trace.events) {
    best = std::max(best, ev.reward);
    if (ev.t_offset_s > 0) {
      x.push_back(std::log(ev.t_offset_s));
      y.push_back(best);
    }
  }
  if (x.size() < 2) throw ContractViolation("reward_trend: need at least 2 events with positive offsets");
  return fit_line(x, y);
}

double token_edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 0.0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return 1.0 - static_cast<double>(prev[b.size()]) / static_cast<double>(longest);
}

double tex_edit_distance(const std::string& a, const std::string& b) {
  return token_edit_distance(tokenize_tex(a), tokenize_tex(b));
}

}  // namespace tikzmcts::eval
