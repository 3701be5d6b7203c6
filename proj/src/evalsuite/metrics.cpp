#include "closp/evalsuite/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>
#include <unordered_map>

#include "closp/corpus/relevance.hpp"
#include "closp/error.hpp"
#include "closp/ndmath/ops.hpp"
#include "closp/util/parallel.hpp"
#include "closp/util/rng.hpp"
#include "json.hpp"

namespace closp {

using nlohmann::ordered_json;

namespace {

double discount(std::size_t rank) { return 1.0 / std::log2(double(rank) + 1.0); }

double gain(int rel, std::size_t rank) { return double(rel) / std::log2(double(rank) + 1.0); }

double ideal_dcg(std::span<const int> rels, std::size_t k) {
  std::vector<int> sorted(rels.begin(), rels.end());
  const auto keep = std::min(k, sorted.size());
  std::partial_sort(sorted.begin(), sorted.begin() + std::ptrdiff_t(keep), sorted.end(),
                    std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < keep; ++i) idcg += gain(sorted[i], i + 1);
  return idcg;
}

void check_rels(std::span<const int> rels) {
  for (int r : rels) {
    if (r < 0) throw DomainError("relevance must be non-negative");
  }
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%7.2f", 100.0 * v);
  return buf;
}

}  // namespace

double ndcg_at_k(std::span<const int> retrieved_rels, std::span<const int> all_corpus_rels,
                 std::size_t k) {
  if (k == 0) throw ContractError("ndcg_at_k: K must be >= 1");
  check_rels(retrieved_rels);
  check_rels(all_corpus_rels);
  const double idcg = ideal_dcg(all_corpus_rels, k);
  if (idcg == 0.0) return 0.0;
  double dcg = 0.0;
  const auto n = std::min(k, retrieved_rels.size());
  for (std::size_t i = 0; i < n; ++i) dcg += gain(retrieved_rels[i], i + 1);
  return dcg / idcg;
}

PrecisionRecall precision_recall_at_k(std::span<const std::uint64_t> retrieved,
                                      std::span<const std::uint64_t> relevant_ids, std::size_t k) {
  if (k == 0) throw ContractError("precision_recall_at_k: K must be >= 1");
  std::size_t hits = 0;
  const auto n = std::min(k, retrieved.size());
  for (std::size_t i = 0; i < n; ++i) {
    hits += std::binary_search(relevant_ids.begin(), relevant_ids.end(), retrieved[i]);
  }
  PrecisionRecall pr;
  pr.precision = double(hits) / double(k);
  pr.recall = relevant_ids.empty() ? 0.0 : double(hits) / double(relevant_ids.size());
  return pr;
}

CutoffMetrics random_baseline(std::size_t corpus_size, std::span<const int> query_rels,
                              std::size_t k) {
  if (corpus_size == 0) throw ContractError("random_baseline: empty corpus");
  if (k == 0 || k > corpus_size) throw ContractError("random_baseline: need 1 <= K <= |D|");
  check_rels(query_rels);
  const double d = double(corpus_size);
  double r_m = 0.0;
  std::size_t r_q = 0;
  for (int r : query_rels) {
    r_m += double(r);
    r_q += is_relevant(r);
  }
  r_m /= d;
  CutoffMetrics out;
  out.recall = double(k) / d;
  out.precision = double(r_q) / d;
  const double idcg = ideal_dcg(query_rels, k);
  if (idcg > 0.0) {
    double disc = 0.0;
    for (std::size_t i = 1; i <= k; ++i) disc += discount(i);
    out.ndcg = r_m * disc / idcg;
  }
  return out;
}

std::string_view scope_name(Scope s) {
  switch (s) {
    case Scope::all: return "all";
    case Scope::sar: return "sar";
    case Scope::msi: return "msi";
  }
  return "?";
}

Scope parse_scope(std::string_view text) {
  if (text == "all") return Scope::all;
  if (text == "sar") return Scope::sar;
  if (text == "msi") return Scope::msi;
  throw ContractError("unknown scope '" + std::string(text) + "' (expected all, sar or msi)");
}

std::size_t MetricsReport::cutoff_slot(std::size_t k) const {
  for (std::size_t i = 0; i < kCutoffs.size(); ++i) {
    if (kCutoffs[i] == k) return i;
  }
  throw ContractError("K=" + std::to_string(k) + " is not a reported cutoff");
}

MetricsReport evaluate_rankings(const EmbeddingIndex& index, std::span<const LabelSet> queries,
                                std::span<const RankedList> rankings, Scope scope, bool fused) {
  if (rankings.size() != queries.size()) throw ContractError("one ranking per query required");
  MetricsReport rep;
  rep.scope = scope;
  rep.fused = fused;
  rep.index_size = index.size();
  if (index.empty()) throw ContractError("evaluate: empty index");

  std::unordered_map<std::uint64_t, std::size_t> row_of;
  for (std::size_t r = 0; r < index.size(); ++r) row_of.emplace(index.at(r).id, r);
  rep.queries.resize(queries.size());
  parallel_for(queries.size(), [&](std::size_t q) {
    auto& qm = rep.queries[q];
    qm.query = queries[q];
    std::vector<int> rels(index.size());
    std::vector<std::uint64_t> relevant;
    for (std::size_t r = 0; r < index.size(); ++r) {
      rels[r] = graded_relevance(queries[q], index.at(r).labels);
      if (is_relevant(rels[r])) relevant.push_back(index.at(r).id);
    }
    std::sort(relevant.begin(), relevant.end());
    qm.relevant = relevant.size();

    std::vector<int> got;
    std::vector<std::uint64_t> ids;
    for (const auto& h : rankings[q]) {
      auto it = row_of.find(h.id);
      if (it == row_of.end()) throw ContractError("ranking holds an id outside the index");
      got.push_back(rels[it->second]);
      ids.push_back(h.id);
    }
    for (std::size_t c = 0; c < kCutoffs.size(); ++c) {
      const auto k = kCutoffs[c];
      qm.at[c].ndcg = ndcg_at_k(got, rels, k);
      auto pr = precision_recall_at_k(ids, relevant, k);
      qm.at[c].precision = pr.precision;
      qm.at[c].recall = pr.recall;
      // Exact expectation under a uniform ranking, which retrieves
      // min(K, |D|) items.
      const auto k_eff = std::min<std::size_t>(k, index.size());
      auto rb = random_baseline(index.size(), rels, k_eff);
      if (k_eff < k) {
        rb.precision *= double(k_eff) / double(k);
        rb.ndcg *= ideal_dcg(rels, k_eff) > 0 ? ideal_dcg(rels, k_eff) / ideal_dcg(rels, k) : 0.0;
      }
      qm.random[c] = rb;
    }
  });

  for (const auto& qm : rep.queries) {
    for (std::size_t c = 0; c < kCutoffs.size(); ++c) {
      rep.mean[c].ndcg += qm.at[c].ndcg;
      rep.mean[c].precision += qm.at[c].precision;
      rep.mean[c].recall += qm.at[c].recall;
      rep.random_mean[c].ndcg += qm.random[c].ndcg;
      rep.random_mean[c].precision += qm.random[c].precision;
      rep.random_mean[c].recall += qm.random[c].recall;
    }
    if (qm.query.size() == 1) {
      std::array<double, kCutoffs.size()> v{};
      for (std::size_t c = 0; c < kCutoffs.size(); ++c) v[c] = qm.at[c].ndcg;
      rep.class_ndcg[LabelVocabulary::index(qm.query.labels()[0])] = v;
    }
  }
  if (!rep.queries.empty()) {
    const double n = double(rep.queries.size());
    for (std::size_t c = 0; c < kCutoffs.size(); ++c) {
      for (auto* m : {&rep.mean[c], &rep.random_mean[c]}) {
        m->ndcg /= n;
        m->precision /= n;
        m->recall /= n;
      }
    }
  }
  return rep;
}

MetricsReport evaluate_retrieval(const Model& model, const EmbeddingIndex& index,
                                 std::span<const LabelSet> queries, const EvalOptions& options) {
  const std::size_t k_max = kCutoffs.back();
  const bool fuse = options.fuse && options.scope == Scope::all;
  EmbeddingIndex scoped = options.scope == Scope::all   ? index
                          : options.scope == Scope::sar ? index.filter(Modality::sar)
                                                        : index.filter(Modality::msi);
  EmbeddingIndex sar, msi;
  if (fuse) {
    sar = index.filter(Modality::sar);
    msi = index.filter(Modality::msi);
  }
  std::vector<RankedList> rankings(queries.size());
  parallel_for(queries.size(), [&](std::size_t q) {
    const auto v = model.encode_text(queries[q]);
    if (fuse) {
      rankings[q] = fuse_rankings(search(sar, v.values(), k_max), search(msi, v.values(), k_max), k_max);
    } else {
      rankings[q] = search(scoped, v.values(), k_max);
    }
  });
  return evaluate_rankings(scoped, queries, rankings, options.scope, fuse);
}

std::string report_to_json(const MetricsReport& r) {
  ordered_json j;
  j["scope"] = scope_name(r.scope);
  j["fused"] = r.fused;
  j["index_size"] = r.index_size;
  j["queries"] = r.queries.size();
  for (std::size_t c = 0; c < kCutoffs.size(); ++c) {
    const auto k = std::to_string(kCutoffs[c]);
    j["ndcg@" + k] = r.mean[c].ndcg;
    j["precision@" + k] = r.mean[c].precision;
    j["recall@" + k] = r.mean[c].recall;
    j["random_ndcg@" + k] = r.random_mean[c].ndcg;
    j["random_precision@" + k] = r.random_mean[c].precision;
    j["random_recall@" + k] = r.random_mean[c].recall;
  }
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    for (std::size_t c = 0; c < kCutoffs.size(); ++c) {
      const auto key = "class_ndcg@" + std::to_string(kCutoffs[c]) + "." +
                       std::string(LabelVocabulary::names[l]);
      j[key] = r.class_ndcg[l] ? ordered_json((*r.class_ndcg[l])[c]) : ordered_json(nullptr);
    }
  }
  return j.dump(1) + "\n";
}

std::string report_to_text(const MetricsReport& r) {
  std::string out = "scope " + std::string(scope_name(r.scope)) + (r.fused ? " (fused)" : "") +
                    ", " + std::to_string(r.queries.size()) + " queries, " +
                    std::to_string(r.index_size) + " records\n\n";
  out += "      K    nDCG       P       R  | rnd nDCG   rnd P   rnd R\n";
  for (std::size_t c = 0; c < kCutoffs.size(); ++c) {
    char head[16];
    std::snprintf(head, sizeof head, "%7zu", kCutoffs[c]);
    out += std::string(head) + " " + pct(r.mean[c].ndcg) + " " + pct(r.mean[c].precision) + " " +
           pct(r.mean[c].recall) + "  |  " + pct(r.random_mean[c].ndcg) + " " +
           pct(r.random_mean[c].precision) + " " + pct(r.random_mean[c].recall) + "\n";
  }
  out += "\nper-class nDCG (single-label query)\n";
  out += "  class                  @10     @50    @100   @1000\n";
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    char name[32];
    std::snprintf(name, sizeof name, "  %-19s", std::string(LabelVocabulary::names[l]).c_str());
    out += name;
    for (std::size_t c = 0; c < kCutoffs.size(); ++c) {
      out += " " + (r.class_ndcg[l] ? pct((*r.class_ndcg[l])[c]) : std::string("      -"));
    }
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

ZeroShotResult zero_shot_from_similarity(std::vector<std::uint64_t> ids,
                                         std::vector<double> similarity) {
  if (ids.empty()) throw ContractError("zero-shot classification needs a non-empty corpus");
  if (similarity.size() != ids.size() * kNumLabels) {
    throw DimensionError("similarity matrix must be |D| x 12");
  }
  ZeroShotResult z;
  z.ids = std::move(ids);
  z.similarity = std::move(similarity);
  std::vector<double> sorted = z.similarity;
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (double s : sorted) total += s;
  z.threshold = std::clamp(total / double(sorted.size()), sorted.front(), sorted.back());
  z.predictions.resize(z.ids.size());
  for (std::size_t i = 0; i < z.ids.size(); ++i) {
    for (std::size_t j = 0; j < kNumLabels; ++j) {
      if (z.similarity[i * kNumLabels + j] > z.threshold) z.predictions[i].insert(LabelVocabulary::at(j));
    }
  }
  return z;
}

ZeroShotResult zero_shot_classify(const Model& model, const EmbeddingIndex& index) {
  std::vector<std::vector<double>> classes;
  for (std::size_t j = 0; j < kNumLabels; ++j) {
    auto v = model.encode_text(LabelSet{LabelVocabulary::at(j)});
    classes.emplace_back(v.values().begin(), v.values().end());
  }
  std::vector<std::uint64_t> ids;
  std::vector<double> sim;
  sim.reserve(index.size() * kNumLabels);
  for (const auto& rec : index.records()) {
    ids.push_back(rec.id);
    for (const auto& c : classes) {
      double s = 0.0;
      for (std::size_t k = 0; k < c.size(); ++k) s += rec.vector[k] * c[k];
      sim.push_back(s);
    }
  }
  return zero_shot_from_similarity(std::move(ids), std::move(sim));
}

ZeroShotResult zero_shot_classify(const Model& model, std::span<const CorpusItem> corpus) {
  return zero_shot_classify(model, index_corpus(model, corpus));
}

MacroPRF macro_prf(std::span<const LabelSet> predictions, std::span<const LabelSet> truth) {
  if (predictions.size() != truth.size()) {
    throw ContractError("macro_prf: predictions and truth differ in length");
  }
  MacroPRF out;
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    const auto label = LabelVocabulary::at(l);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool p = predictions[i].contains(label), t = truth[i].contains(label);
      tp += p && t;
      fp += p && !t;
      fn += !p && t;
    }
    auto& c = out.per_class[l];
    c.support = tp + fn;
    c.precision = tp + fp ? double(tp) / double(tp + fp) : 0.0;
    c.recall = tp + fn ? double(tp) / double(tp + fn) : 0.0;
    c.f1 = c.precision + c.recall > 0 ? 2 * c.precision * c.recall / (c.precision + c.recall) : 0.0;
    out.precision += c.precision / double(kNumLabels);
    out.recall += c.recall / double(kNumLabels);
    out.f1 += c.f1 / double(kNumLabels);
  }
  return out;
}

LabelSet most_frequent_classes(std::span<const LabelSet> truth, std::size_t count) {
  std::array<std::size_t, kNumLabels> freq{};
  for (auto t : truth)
    for (auto l : t.labels()) freq[LabelVocabulary::index(l)]++;
  std::array<std::size_t, kNumLabels> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return freq[a] > freq[b]; });
  LabelSet out;
  for (std::size_t i = 0; i < std::min(count, kNumLabels); ++i) out.insert(LabelVocabulary::at(order[i]));
  return out;
}

std::string classification_to_json(const MacroPRF& model, const MacroPRF& dummy, double threshold) {
  ordered_json j;
  j["threshold"] = threshold;
  j["macro_precision"] = model.precision;
  j["macro_recall"] = model.recall;
  j["macro_f1"] = model.f1;
  j["dummy_macro_precision"] = dummy.precision;
  j["dummy_macro_recall"] = dummy.recall;
  j["dummy_macro_f1"] = dummy.f1;
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    const std::string name(LabelVocabulary::names[l]);
    j["f1." + name] = model.per_class[l].f1;
    j["support." + name] = model.per_class[l].support;
  }
  return j.dump(1) + "\n";
}

std::string classification_to_text(const MacroPRF& model, const MacroPRF& dummy) {
  std::string out = "                          P       R      F1  support\n";
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    const auto& c = model.per_class[l];
    char line[96];
    std::snprintf(line, sizeof line, "  %-19s %s %s %s %8zu\n",
                  std::string(LabelVocabulary::names[l]).c_str(), pct(c.precision).c_str(),
                  pct(c.recall).c_str(), pct(c.f1).c_str(), c.support);
    out += line;
  }
  out += "  macro               " + pct(model.precision) + " " + pct(model.recall) + " " +
         pct(model.f1) + "\n";
  out += "  dummy (top-2)       " + pct(dummy.precision) + " " + pct(dummy.recall) + " " +
         pct(dummy.f1) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

double haversine_km(double lon1, double lat1, double lon2, double lat2) {
  for (double lon : {lon1, lon2})
    if (!(lon >= -180.0 && lon <= 180.0)) throw DomainError("longitude outside [-180, 180]");
  for (double lat : {lat1, lat2})
    if (!(lat >= -90.0 && lat <= 90.0)) throw DomainError("latitude outside [-90, 90]");
  constexpr double deg = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * deg, dlon = (lon2 - lon1) * deg;
  const double s1 = std::sin(dlat / 2), s2 = std::sin(dlon / 2);
  double a = s1 * s1 + std::cos(lat1 * deg) * std::cos(lat2 * deg) * s2 * s2;
  a = std::clamp(a, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::atan2(std::sqrt(a), std::sqrt(1.0 - a));
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> rank(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
    i = j + 1;
  }
  return rank;
}

namespace {

double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = double(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInputError("correlation: constant series");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

Correlation correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ContractError("correlation: series differ in length");
  if (x.size() < 3) throw ContractError("correlation: need at least 3 points");
  Correlation c;
  c.pearson = pearson(x, y);
  const auto rx = average_ranks(x), ry = average_ranks(y);
  c.spearman = pearson(rx, ry);
  return c;
}

ProbeResult spatial_probe(const EmbeddingIndex& index, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ContractError("spatial_probe: n must be >= 1");
  if (index.size() < 2 * n) {
    throw DataError("spatial_probe: need " + std::to_string(2 * n) + " records, have " +
                    std::to_string(index.size()));
  }
  std::vector<std::size_t> rows(index.size());
  std::iota(rows.begin(), rows.end(), 0);
  std::mt19937_64 rng(SeedSequence(seed).derive("probe"));
  std::shuffle(rows.begin(), rows.end(), rng);

  ProbeResult out;
  std::vector<double> km, cosd;
  for (std::size_t p = 0; p < n; ++p) {
    const auto& a = index.at(rows[p]);
    const auto& b = index.at(rows[n + p]);
    double dot = 0.0;
    for (std::size_t k = 0; k < a.vector.size(); ++k) dot += a.vector[k] * b.vector[k];
    ProbePair pp{p, a.id, b.id, haversine_km(a.lon, a.lat, b.lon, b.lat), 1.0 - dot};
    km.push_back(pp.km);
    cosd.push_back(pp.cosine_distance);
    out.pairs.push_back(pp);
  }
  out.corr = correlation(km, cosd);
  return out;
}

ProbeResult spatial_probe(const Model& model, std::span<const CorpusItem> corpus, std::size_t n,
                          std::uint64_t seed) {
  return spatial_probe(index_corpus(model, corpus), n, seed);
}

std::string probe_to_csv(const ProbeResult& p) {
  std::string out = "pair_id,km,cosine_distance\n";
  for (const auto& pp : p.pairs) {
    out += std::to_string(pp.pair) + "," + ordered_json(pp.km).dump() + "," +
           ordered_json(pp.cosine_distance).dump() + "\n";
  }
  return out;
}

std::string probe_to_json(const ProbeResult& p) {
  ordered_json j;
  j["pairs"] = p.pairs.size();
  j["pearson"] = p.corr.pearson;
  j["spearman"] = p.corr.spearman;
  return j.dump(1) + "\n";
}

}  // namespace closp
