#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "tikzmcts/embed.hpp"
#include "tikzmcts/search.hpp"

namespace tikzmcts::eval {

struct EfficiencySample {
  long final_tokens = 0;
  long total_tokens = 0;
};

/// Mean after replacing floor(0.1·n) values at each end with the nearest kept value.
double winsorized_mean(std::vector<double> values, double fraction = 0.1);

/// 10% winsorized mean of final_tokens / total_tokens.
double mte(const std::vector<EfficiencySample>& samples);

/// Final-program tokens of the best simulation over all tokens spent in the run.
EfficiencySample efficiency_from_trace(const SearchTrace& trace);

/// Distinct artifact-producing programs with t_offset_s ≤ budget_s, scaled to
/// a 600 s budget.
double mst(const SearchTrace& trace, double budget_s);

struct BwsAnnotation {
  std::string item_id;
  long times_shown = 0;
  long times_best = 0;
  long times_worst = 0;
};

/// best/shown − worst/shown per item.
std::map<std::string, double> bws_scores(const std::vector<BwsAnnotation>& annotations);

enum class Choice { Best, Worst, None };

/// One row of an annotation file: item shown to an annotator within a tuple.
struct AnnotationRow {
  std::string item_id;
  std::string annotator_id;
  std::string tuple_id;
  Choice choice = Choice::None;
};

/// Reads a comma-separated file with header item_id,annotator_id,tuple_id,choice
/// (column order free, choice ∈ best|worst|none).
std::vector<AnnotationRow> read_annotations_csv(const std::filesystem::path& path);
std::vector<AnnotationRow> parse_annotations_csv(const std::string& text);

/// Per-item counts; items keep first-seen order.
std::vector<BwsAnnotation> aggregate_bws(const std::vector<AnnotationRow>& rows);

/// Average ranks, 1-based.
std::vector<double> fractional_ranks(const std::vector<double>& x);
/// Throws UndefinedCorrelation when either input is constant.
double pearson(const std::vector<double>& x, const std::vector<double>& y);
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// tanh(mean(atanh(rho))). Inputs of exactly ±1 are moved to the nearest
/// double inside (−1, 1).
double average_correlation(const std::vector<double>& rhos);

/// Split-half reliability. Each split assigns, per tuple, a random half of the
/// tuple's annotators to side A and the rest to side B; BWS scores from each
/// side are compared with Spearman's ρ over items present on both sides.
/// Splits whose correlation is undefined are skipped; the rest are averaged
/// with average_correlation.
double shr(const std::vector<AnnotationRow>& rows, std::uint64_t rng_seed, int n_splits = 100);

/// N-gram sets of a reference corpus, one per n.
class NgramIndex {
 public:
  NgramIndex(int n_min, int n_max);

  void add(const std::vector<std::string>& tokens);
  bool contains(const std::vector<std::string>& tokens, std::size_t start, int n) const;
  int n_min() const { return n_min_; }
  int n_max() const { return n_max_; }
  std::size_t size(int n) const;

 private:
  int n_min_;
  int n_max_;
  std::vector<std::unordered_set<std::string>> sets_;
};

/// Share of the generated n-grams that are absent from the index, for each n
/// the index covers; n larger than the generated length is omitted.
std::map<int, double> ngram_novelty(const std::vector<std::string>& generated, const NgramIndex& index);

struct PairedEmbeddingSet {
  std::vector<Embedding> figure_embs;
  std::vector<Embedding> sketch_embs;
};

/// First principal component of figure − sketch offsets, sign-aligned with
/// their mean. Throws DegeneratePca when the centered offsets vanish.
std::vector<double> global_sketch_vector(const PairedEmbeddingSet& set);

/// Cosine of the two sets' global sketch vectors.
double congruence(const PairedEmbeddingSet& set1, const PairedEmbeddingSet& set2);

struct Trend {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Least squares fit of best-so-far reward on ln(t_offset_s), over events with
/// positive offsets.
Trend reward_trend(const SearchTrace& trace);
Trend fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// 1 − LCS/max(|a|, |b|) over TeX tokens; 0 for two empty programs.
double tex_edit_distance(const std::string& a, const std::string& b);
double token_edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b);

}  // namespace tikzmcts::eval
