#include "closp/corpus/split.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <unordered_set>

#include "closp/error.hpp"
#include "closp/evalsuite/stats.hpp"
#include "closp/util/rng.hpp"

namespace closp {

SplitResult stratified_split(std::span<const CorpusItem> corpus, double train_fraction,
                             std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw DomainError("train_fraction must lie in (0, 1)");
  }
  if (corpus.empty()) throw ContractError("stratified_split: empty corpus");

  const std::array<double, 2> ratio{train_fraction, 1.0 - train_fraction};
  const auto n = corpus.size();
  std::mt19937_64 rng(SeedSequence(seed).derive("split"));

  std::array<std::size_t, kNumLabels> remaining{};
  for (const auto& item : corpus) {
    if (item.labels.empty()) throw DataError("stratified_split: item without labels");
    for (auto l : item.labels.labels()) remaining[LabelVocabulary::index(l)]++;
  }
  std::array<double, 2> demand{};
  std::array<std::array<double, kNumLabels>, 2> label_demand{};
  for (std::size_t k = 0; k < 2; ++k) {
    demand[k] = ratio[k] * double(n);
    for (std::size_t l = 0; l < kNumLabels; ++l) label_demand[k][l] = ratio[k] * double(remaining[l]);
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<int> subset(n, -1);
  std::size_t unassigned = n;
  std::bernoulli_distribution coin(0.5);
  while (unassigned > 0) {
    std::size_t rare = kNumLabels;
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      if (remaining[l] > 0 && (rare == kNumLabels || remaining[l] < remaining[rare])) rare = l;
    }
    const auto rare_label = LabelVocabulary::at(rare);
    for (auto i : order) {
      if (subset[i] != -1 || !corpus[i].labels.contains(rare_label)) continue;
      int k;
      if (label_demand[0][rare] != label_demand[1][rare]) {
        k = label_demand[0][rare] > label_demand[1][rare] ? 0 : 1;
      } else if (demand[0] != demand[1]) {
        k = demand[0] > demand[1] ? 0 : 1;
      } else {
        k = coin(rng) ? 0 : 1;
      }
      subset[i] = k;
      --unassigned;
      demand[k] -= 1.0;
      for (auto l : corpus[i].labels.labels()) {
        const auto li = LabelVocabulary::index(l);
        label_demand[k][li] -= 1.0;
        remaining[li]--;
      }
    }
  }

  SplitResult out;
  std::array<std::array<std::size_t, kNumLabels>, 2> counts{};
  for (std::size_t i = 0; i < n; ++i) {
    (subset[i] == 0 ? out.train_ids : out.retrieval_ids).push_back(corpus[i].id);
    for (auto l : corpus[i].labels.labels()) counts[std::size_t(subset[i])][LabelVocabulary::index(l)]++;
  }
  std::sort(out.train_ids.begin(), out.train_ids.end());
  std::sort(out.retrieval_ids.begin(), out.retrieval_ids.end());
  if (!out.train_ids.empty() && !out.retrieval_ids.empty()) {
    auto chi = chi_square_labels(counts[0], counts[1]);
    out.chi2_stat = chi.statistic;
    out.p_value = chi.p_value;
  }
  return out;
}

Corpus select(std::span<const CorpusItem> corpus, std::span<const std::uint64_t> ids) {
  std::unordered_set<std::uint64_t> keep(ids.begin(), ids.end());
  Corpus out;
  for (const auto& item : corpus) {
    if (keep.count(item.id)) out.push_back(item);
  }
  return out;
}

}  // namespace closp
