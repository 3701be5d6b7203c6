#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "closp/encoders/encoders.hpp"
#include "closp/retrieval/retrieval.hpp"

namespace closp {

inline constexpr std::array<std::size_t, 4> kCutoffs{10, 50, 100, 1000};

// DCG over the first min(K, len) retrieved relevances with discount
// 1/log2(i+1), normalised by the DCG of the K largest corpus relevances.
double ndcg_at_k(std::span<const int> retrieved_rels, std::span<const int> all_corpus_rels,
                 std::size_t k);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

// relevant_ids must be sorted ascending.
PrecisionRecall precision_recall_at_k(std::span<const std::uint64_t> retrieved,
                                      std::span<const std::uint64_t> relevant_ids,
                                      std::size_t k);

struct CutoffMetrics {
  double ndcg = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

// Expected metrics of a uniformly random ranking: R = K/|D|, P = R_q/|D|,
// nDCG = R_m · Σ 1/log2(i+1) / IDCG. query_rels holds the relevance of
// every corpus item to the query.
CutoffMetrics random_baseline(std::size_t corpus_size, std::span<const int> query_rels,
                              std::size_t k);

enum class Scope : std::uint8_t { all, sar, msi };
std::string_view scope_name(Scope s);
Scope parse_scope(std::string_view text);  // throws ContractError

struct QueryMetrics {
  LabelSet query;
  std::size_t relevant = 0;  // items with rel >= 5 in scope
  std::array<CutoffMetrics, kCutoffs.size()> at{};
  std::array<CutoffMetrics, kCutoffs.size()> random{};
};

struct MetricsReport {
  Scope scope = Scope::all;
  bool fused = false;
  std::size_t index_size = 0;
  std::vector<QueryMetrics> queries;
  std::array<CutoffMetrics, kCutoffs.size()> mean{};
  std::array<CutoffMetrics, kCutoffs.size()> random_mean{};
  // nDCG of the single-label query of each class, per cutoff, when that
  // query was evaluated.
  std::array<std::optional<std::array<double, kCutoffs.size()>>, kNumLabels> class_ndcg{};

  std::size_t cutoff_slot(std::size_t k) const;  // throws ContractError
};

struct EvalOptions {
  Scope scope = Scope::all;
  // With scope all: search the SAR and MSI records separately and merge
  // with min-max fusion instead of one joint search.
  bool fuse = false;
};

// Judgments come from graded_relevance against the labels kept in the
// index records.
MetricsReport evaluate_retrieval(const Model& model, const EmbeddingIndex& index,
                                 std::span<const LabelSet> queries, const EvalOptions& options = {});

// Same metric pipeline for precomputed rankings (one per query, over the
// records of `index`).
MetricsReport evaluate_rankings(const EmbeddingIndex& index, std::span<const LabelSet> queries,
                                std::span<const RankedList> rankings, Scope scope, bool fused);

std::string report_to_json(const MetricsReport& r);
std::string report_to_text(const MetricsReport& r);

// ---------------------------------------------------------------------------

struct ZeroShotResult {
  std::vector<std::uint64_t> ids;
  std::vector<double> similarity;  // |D| x 12, row-major
  double threshold = 0.0;          // mean of all entries
  std::vector<LabelSet> predictions;
};

// Predicts class j for item i iff S[i][j] > threshold.
ZeroShotResult zero_shot_from_similarity(std::vector<std::uint64_t> ids,
                                         std::vector<double> similarity);
ZeroShotResult zero_shot_classify(const Model& model, const EmbeddingIndex& index);
ZeroShotResult zero_shot_classify(const Model& model, std::span<const CorpusItem> corpus);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct MacroPRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::array<ClassMetrics, kNumLabels> per_class{};
};

// 0/0 counts as 0; unweighted mean over all 12 classes.
MacroPRF macro_prf(std::span<const LabelSet> predictions, std::span<const LabelSet> truth);

// The `count` classes most often present in truth, ties to the lower index.
LabelSet most_frequent_classes(std::span<const LabelSet> truth, std::size_t count);

std::string classification_to_json(const MacroPRF& model, const MacroPRF& dummy, double threshold);
std::string classification_to_text(const MacroPRF& model, const MacroPRF& dummy);

// ---------------------------------------------------------------------------

inline constexpr double kEarthRadiusKm = 6371.0;

double haversine_km(double lon1, double lat1, double lon2, double lat2);

struct Correlation {
  double pearson = 0.0;
  double spearman = 0.0;
};

// Throws DegenerateInputError for a constant series, ContractError for
// mismatched or too-short inputs.
Correlation correlation(std::span<const double> x, std::span<const double> y);

// Average ranks (1-based) with ties sharing their mean rank.
std::vector<double> average_ranks(std::span<const double> x);

struct ProbePair {
  std::size_t pair = 0;
  std::uint64_t id_a = 0;
  std::uint64_t id_b = 0;
  double km = 0.0;
  double cosine_distance = 0.0;
};

struct ProbeResult {
  Correlation corr;
  std::vector<ProbePair> pairs;
};

// Two disjoint uniform samples of n records, paired by position.
ProbeResult spatial_probe(const EmbeddingIndex& index, std::size_t n, std::uint64_t seed);
ProbeResult spatial_probe(const Model& model, std::span<const CorpusItem> corpus, std::size_t n,
                          std::uint64_t seed);

std::string probe_to_csv(const ProbeResult& p);
std::string probe_to_json(const ProbeResult& p);

}  // namespace closp
