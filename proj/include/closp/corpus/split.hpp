#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "closp/corpus/corpus.hpp"

namespace closp {

struct SplitResult {
  std::vector<std::uint64_t> train_ids;      // ascending
  std::vector<std::uint64_t> retrieval_ids;  // ascending
  double chi2_stat = 0.0;
  double p_value = 1.0;
};

// Iterative multi-label stratification into a train subset holding
// train_fraction of the items and a retrieval subset holding the rest.
SplitResult stratified_split(std::span<const CorpusItem> corpus, double train_fraction,
                             std::uint64_t seed);

// Items whose ids appear in `ids`, in corpus order.
Corpus select(std::span<const CorpusItem> corpus, std::span<const std::uint64_t> ids);

}  // namespace closp
