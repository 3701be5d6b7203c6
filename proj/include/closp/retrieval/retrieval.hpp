#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "closp/corpus/corpus.hpp"
#include "closp/encoders/encoders.hpp"
#include "closp/ndmath/kernels.hpp"

namespace closp {

struct EmbeddingRecord {
  std::uint64_t id = 0;
  Modality modality = Modality::sar;
  std::vector<double> vector;  // unit norm
  double lon = 0.0;
  double lat = 0.0;
  LabelSet labels;  // kept for evaluation only
};

// Flat, immutable-after-build store of unit vectors.
class EmbeddingIndex {
 public:
  explicit EmbeddingIndex(std::size_t dim = 0) : dim_(dim) {}

  // Throws ContractError on a duplicate id, a wrong dimension or a vector
  // that is not unit norm within 1e-6.
  void add(EmbeddingRecord record);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<EmbeddingRecord>& records() const { return records_; }
  const EmbeddingRecord& at(std::size_t row) const { return records_[row]; }
  std::span<const double> matrix() const { return matrix_; }

  // Records of one modality, as a new index.
  EmbeddingIndex filter(Modality m) const;

  void save(const std::filesystem::path& file, const EncoderConfig& enc) const;
  static EmbeddingIndex load(const std::filesystem::path& file);

 private:
  std::size_t dim_;
  std::vector<EmbeddingRecord> records_;
  std::vector<double> matrix_;
  std::vector<std::uint64_t> sorted_ids_;
};

struct Hit {
  std::uint64_t id;
  double score;
  friend bool operator==(const Hit&, const Hit&) = default;
};

using RankedList = std::vector<Hit>;

// Encodes each item with the vision encoder of its modality.
EmbeddingIndex index_corpus(const Model& model, std::span<const CorpusItem> items);

// Exact top-K by inner product, descending, ties by ascending id.
RankedList search(const EmbeddingIndex& index, std::span<const double> query, std::size_t k,
                  nd::kernels::Exec exec = nd::kernels::default_exec());

// Min-max normalises each list to [0, 1] (a list of equal scores maps to
// 1.0), merges, and keeps the top K. Throws ContractError when the lists
// share an id.
RankedList fuse_rankings(const RankedList& a, const RankedList& b, std::size_t k);

}  // namespace closp
