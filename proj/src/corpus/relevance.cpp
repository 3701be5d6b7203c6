#include "closp/corpus/relevance.hpp"

#include <algorithm>

#include "closp/error.hpp"

namespace closp {

int graded_relevance(LabelSet query, LabelSet item) {
  if (query.empty() || item.empty()) {
    throw ContractError("graded_relevance needs two non-empty label sets");
  }
  const int inter = int((query & item).size());
  const int uni = int((query | item).size());
  // floor(10·i/u + 1/2) in integers.
  return (20 * inter + uni) / (2 * uni);
}

bool canonical_less(LabelSet a, LabelSet b) {
  if (a.size() != b.size()) return a.size() < b.size();
  const auto la = a.labels(), lb = b.labels();
  return std::lexicographical_compare(la.begin(), la.end(), lb.begin(), lb.end());
}

std::vector<LabelSet> enumerate_queries(std::span<const CorpusItem> corpus) {
  std::vector<LabelSet> sets;
  sets.reserve(corpus.size());
  for (const auto& item : corpus) sets.push_back(item.labels);
  return enumerate_queries(std::span<const LabelSet>(sets));
}

std::vector<LabelSet> enumerate_queries(std::span<const LabelSet> label_sets) {
  if (label_sets.empty()) throw ContractError("enumerate_queries: empty corpus");
  std::vector<bool> seen(LabelSet::kAll + 1, false);
  for (const auto& labels : label_sets) {
    const std::uint16_t full = labels.bits();
    // Walk all non-empty submasks.
    for (std::uint16_t s = full; s != 0; s = std::uint16_t((s - 1) & full)) seen[s] = true;
  }
  std::vector<LabelSet> out;
  for (std::size_t m = 1; m < seen.size(); ++m) {
    if (seen[m]) out.emplace_back(std::uint16_t(m));
  }
  std::sort(out.begin(), out.end(), canonical_less);
  return out;
}

}  // namespace closp
