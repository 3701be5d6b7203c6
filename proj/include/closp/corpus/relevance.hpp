#pragma once

#include <span>
#include <vector>

#include "closp/corpus/corpus.hpp"

namespace closp {

inline constexpr int kRelevanceThreshold = 5;

// round(10 * |q ∩ i| / |q ∪ i|), halves rounded away from zero.
int graded_relevance(LabelSet query, LabelSet item);

inline bool is_relevant(int rel) { return rel >= kRelevanceThreshold; }

// Every non-empty subset of every item's label set, deduplicated, ordered
// by size and then lexicographically by vocabulary index.
std::vector<LabelSet> enumerate_queries(std::span<const CorpusItem> corpus);
std::vector<LabelSet> enumerate_queries(std::span<const LabelSet> label_sets);

// Strict weak order used by enumerate_queries.
bool canonical_less(LabelSet a, LabelSet b);

}  // namespace closp
