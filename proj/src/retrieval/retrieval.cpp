#include "closp/retrieval/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "closp/error.hpp"
#include "closp/ndmath/ops.hpp"
#include "closp/util/container.hpp"

namespace closp {

namespace {

constexpr std::size_t kEncodeChunk = 64;

bool hit_before(const Hit& a, const Hit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

void check_unit(std::span<const double> v, const char* what) {
  double s = 0.0;
  for (double x : v) s += x * x;
  if (!(std::abs(std::sqrt(s) - 1.0) <= 1e-6)) {
    throw ContractError(std::string(what) + " is not unit norm");
  }
}

}  // namespace

void EmbeddingIndex::add(EmbeddingRecord record) {
  if (dim_ == 0) dim_ = record.vector.size();
  if (record.vector.size() != dim_) {
    throw ContractError("record " + std::to_string(record.id) + " has dimension " +
                        std::to_string(record.vector.size()) + ", index has " +
                        std::to_string(dim_));
  }
  check_unit(record.vector, "record vector");
  auto pos = std::lower_bound(sorted_ids_.begin(), sorted_ids_.end(), record.id);
  if (pos != sorted_ids_.end() && *pos == record.id) {
    throw ContractError("duplicate id " + std::to_string(record.id) + " in index");
  }
  sorted_ids_.insert(pos, record.id);
  matrix_.insert(matrix_.end(), record.vector.begin(), record.vector.end());
  records_.push_back(std::move(record));
}

EmbeddingIndex EmbeddingIndex::filter(Modality m) const {
  EmbeddingIndex out(dim_);
  for (const auto& r : records_) {
    if (r.modality == m) out.add(r);
  }
  return out;
}

void EmbeddingIndex::save(const std::filesystem::path& file, const EncoderConfig& enc) const {
  Container c;
  c.header.kind = ContainerKind::index;
  c.header.embed_dim = std::uint32_t(enc.embed_dim);
  c.header.image_side = std::uint32_t(enc.image_side);
  c.header.sh_degree = std::uint32_t(enc.sh_degree);
  c.header.vocab_hash = LabelVocabulary::hash();
  if (dim_ != 0 && dim_ != enc.embed_dim) throw ContractError("index dimension differs from encoder");
  std::vector<std::uint64_t> ids, mods, labels;
  std::vector<double> where;
  for (const auto& r : records_) {
    ids.push_back(r.id);
    mods.push_back(std::uint64_t(r.modality));
    labels.push_back(r.labels.bits());
    where.push_back(r.lon);
    where.push_back(r.lat);
  }
  c.add_ints("ids", std::move(ids));
  c.add_ints("modalities", std::move(mods));
  c.add_ints("labels", std::move(labels));
  Block vec{"vectors", Block::Type::real, {records_.size(), enc.embed_dim}, matrix_, {}, {}};
  Block loc{"lonlat", Block::Type::real, {records_.size(), 2}, std::move(where), {}, {}};
  c.blocks.push_back(std::move(vec));
  c.blocks.push_back(std::move(loc));
  c.save(file);
}

EmbeddingIndex EmbeddingIndex::load(const std::filesystem::path& file) {
  auto c = Container::load(file);
  const auto where = file.string() + ": ";
  if (c.header.kind != ContainerKind::index) throw FormatError(where + "not an index");
  if (c.header.vocab_hash != LabelVocabulary::hash()) {
    throw FormatError(where + "label vocabulary hash mismatch");
  }
  const auto& ids = c.get("ids", Block::Type::integer).ints;
  const auto& mods = c.get("modalities", Block::Type::integer).ints;
  const auto& labels = c.get("labels", Block::Type::integer).ints;
  const auto& vec = c.get("vectors", Block::Type::real);
  const auto& loc = c.get("lonlat", Block::Type::real);
  const std::size_t n = ids.size(), d = c.header.embed_dim;
  if (mods.size() != n || labels.size() != n || vec.reals.size() != n * d ||
      loc.reals.size() != 2 * n) {
    throw FormatError(where + "inconsistent block sizes");
  }
  EmbeddingIndex out(d);
  try {
    for (std::size_t i = 0; i < n; ++i) {
      EmbeddingRecord r;
      r.id = ids[i];
      if (mods[i] > 1) throw FormatError(where + "bad modality");
      r.modality = Modality(mods[i]);
      r.vector.assign(vec.reals.begin() + std::ptrdiff_t(i * d),
                      vec.reals.begin() + std::ptrdiff_t((i + 1) * d));
      r.lon = loc.reals[2 * i];
      r.lat = loc.reals[2 * i + 1];
      r.labels = LabelSet(std::uint16_t(labels[i]));
      out.add(std::move(r));
    }
  } catch (const ContractError& e) {
    throw FormatError(where + e.what());
  }
  return out;
}

EmbeddingIndex index_corpus(const Model& model, std::span<const CorpusItem> items) {
  nd::NoGradGuard guard;
  const auto d = model.config().embed_dim;
  EmbeddingIndex index(d);
  std::vector<std::vector<double>> vectors(items.size());
  for (auto m : {Modality::sar, Modality::msi}) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].modality == m) rows.push_back(i);
    }
    for (std::size_t start = 0; start < rows.size(); start += kEncodeChunk) {
      const auto end = std::min(rows.size(), start + kEncodeChunk);
      const auto& first = items[rows[start]].image;
      std::vector<double> px;
      for (auto k = start; k < end; ++k) {
        items[rows[k]].validate();
        const auto v = items[rows[k]].image.values();
        px.insert(px.end(), v.begin(), v.end());
      }
      auto batch = nd::Tensor::from({end - start, first.dim(0), first.dim(1), first.dim(2)},
                                    std::move(px));
      auto emb = model.vision(m).forward(batch);
      for (auto k = start; k < end; ++k) {
        const auto off = (k - start) * d;
        vectors[rows[k]].assign(emb.values().begin() + std::ptrdiff_t(off),
                                emb.values().begin() + std::ptrdiff_t(off + d));
      }
    }
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    index.add({it.id, it.modality, std::move(vectors[i]), it.lon, it.lat, it.labels});
  }
  return index;
}

RankedList search(const EmbeddingIndex& index, std::span<const double> query, std::size_t k,
                  nd::kernels::Exec exec) {
  if (k == 0) throw ContractError("search: K must be >= 1");
  if (index.empty()) return {};
  if (query.size() != index.dim()) {
    throw DimensionError("search: query has dimension " + std::to_string(query.size()) +
                         ", index has " + std::to_string(index.dim()));
  }
  check_unit(query, "query vector");
  std::vector<double> scores(index.size());
  nd::kernels::inner_products(exec, index.size(), index.dim(), index.matrix(), query, scores);
  RankedList hits(index.size());
  for (std::size_t r = 0; r < index.size(); ++r) hits[r] = {index.at(r).id, scores[r]};
  const auto keep = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + std::ptrdiff_t(keep), hits.end(), hit_before);
  hits.resize(keep);
  return hits;
}

RankedList fuse_rankings(const RankedList& a, const RankedList& b, std::size_t k) {
  if (k == 0) throw ContractError("fuse_rankings: K must be >= 1");
  std::vector<std::uint64_t> ids;
  for (const auto& h : a) ids.push_back(h.id);
  std::sort(ids.begin(), ids.end());
  for (const auto& h : b) {
    if (std::binary_search(ids.begin(), ids.end(), h.id)) {
      throw ContractError("fuse_rankings: id " + std::to_string(h.id) + " appears in both lists");
    }
  }
  RankedList out;
  for (const auto* list : {&a, &b}) {
    if (list->empty()) continue;
    auto [lo, hi] = std::minmax_element(list->begin(), list->end(), [](const Hit& x, const Hit& y) {
      return x.score < y.score;
    });
    const double min = lo->score, span = hi->score - lo->score;
    for (const auto& h : *list) out.push_back({h.id, span > 0.0 ? (h.score - min) / span : 1.0});
  }
  std::sort(out.begin(), out.end(), hit_before);
  if (out.size() > k) out.resize(k);
  return out;
}

}  // namespace closp
