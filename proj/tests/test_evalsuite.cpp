#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "closp/corpus/relevance.hpp"
#include "closp/error.hpp"
#include "closp/evalsuite/metrics.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace closp;

namespace {

double dcg_oracle(std::vector<int> rels, std::size_t k) {
  double s = 0.0;
  for (std::size_t i = 0; i < std::min(k, rels.size()); ++i) s += rels[i] / std::log2(double(i) + 2.0);
  return s;
}

double ndcg_oracle(const std::vector<int>& got, std::vector<int> all, std::size_t k) {
  std::sort(all.begin(), all.end(), std::greater<>());
  const double ideal = dcg_oracle(all, k);
  return ideal == 0.0 ? 0.0 : dcg_oracle(got, k) / ideal;
}

LabelSet random_set(std::mt19937_64& rng, std::size_t max_size = 4) {
  std::uniform_int_distribution<std::size_t> n(1, max_size), l(0, kNumLabels - 1);
  LabelSet s;
  const auto want = n(rng);
  while (s.size() < want) s = s | LabelSet{LabelVocabulary::at(l(rng))};
  return s;
}

EmbeddingRecord rec(std::uint64_t id, Modality m, LabelSet labels, std::vector<double> v) {
  EmbeddingRecord r;
  r.id = id;
  r.modality = m;
  r.labels = labels;
  r.vector = std::move(v);
  return r;
}

struct Moments {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  void add(double x) {
    sum += x;
    sq += x * x;
    ++n;
  }
  double mean() const { return sum / double(n); }
  double se() const {
    const double m = mean();
    return std::sqrt(std::max(0.0, sq / double(n) - m * m) / double(n - 1));
  }
};

}  // namespace

TEST_CASE("ndcg examples") {
  const std::vector<int> ideal{10, 7, 5, 0};
  CHECK(ndcg_at_k(ideal, ideal, 4) == doctest::Approx(1.0));
  CHECK(ndcg_at_k(std::vector<int>{0, 10}, std::vector<int>{10, 0}, 2) ==
        doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-12));
  CHECK(ndcg_at_k(std::vector<int>{0, 10}, std::vector<int>{10, 0}, 2) ==
        doctest::Approx(0.6309).epsilon(1e-4));
  CHECK(ndcg_at_k(std::vector<int>{0, 0}, std::vector<int>{0, 0, 0}, 2) == 0.0);
  CHECK(ndcg_at_k(std::vector<int>{}, std::vector<int>{3, 3}, 5) == 0.0);
  CHECK_THROWS_AS(ndcg_at_k(std::vector<int>{-1}, std::vector<int>{1}, 1), DomainError);
  CHECK_THROWS_AS(ndcg_at_k(std::vector<int>{1}, std::vector<int>{-1}, 1), DomainError);
  CHECK_THROWS_AS(ndcg_at_k(std::vector<int>{1}, std::vector<int>{1}, 0), ContractError);
}

TEST_CASE("ndcg agrees with a direct oracle") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> rel(0, 10);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng() % 60;
    std::vector<int> all(n);
    for (auto& r : all) r = rng() % 3 == 0 ? 0 : rel(rng);
    std::vector<int> perm = all;
    std::shuffle(perm.begin(), perm.end(), rng);
    perm.resize(rng() % (n + 1));
    const std::size_t k = 1 + rng() % (n + 5);
    const double got = ndcg_at_k(perm, all, k);
    CHECK(got == doctest::Approx(ndcg_oracle(perm, all, k)).epsilon(1e-12));
    CHECK(got >= 0.0);
    CHECK(got <= 1.0 + 1e-12);
  }
}

TEST_CASE("precision and recall") {
  std::vector<std::uint64_t> relevant(25);
  std::iota(relevant.begin(), relevant.end(), 100);
  std::vector<std::uint64_t> got{100, 1, 2, 101, 3, 4, 5, 102, 6, 7, 103};
  auto pr = precision_recall_at_k(got, relevant, 10);
  CHECK(pr.precision == doctest::Approx(0.3));
  CHECK(pr.recall == doctest::Approx(0.12));

  std::vector<std::uint64_t> top(relevant.begin(), relevant.begin() + 10);
  CHECK(precision_recall_at_k(top, relevant, 10).precision == 1.0);
  CHECK(precision_recall_at_k(relevant, relevant, 25).recall == 1.0);
  CHECK(precision_recall_at_k(top, {}, 10).recall == 0.0);
  const std::vector<std::uint64_t> short_list{100, 101};
  CHECK(precision_recall_at_k(short_list, relevant, 10).precision == doctest::Approx(0.2));
}

TEST_CASE("random baseline closed forms") {
  std::vector<int> rels(1000, 0);
  for (int i = 0; i < 25; ++i) rels[i] = 6;
  const auto r = random_baseline(1000, rels, 10);
  CHECK(r.recall == doctest::Approx(0.01));
  CHECK(r.precision == doctest::Approx(0.025));
  const std::vector<int> tens(50, 10);
  CHECK(random_baseline(50, tens, 10).ndcg == doctest::Approx(1.0));
  CHECK_THROWS_AS(random_baseline(0, {}, 1), ContractError);
  CHECK_THROWS_AS(random_baseline(50, tens, 51), ContractError);
}

TEST_CASE("random baseline matches a Monte-Carlo dummy retriever") {
  std::mt19937_64 rng(2024);
  const std::size_t n = 500;
  std::vector<LabelSet> labels(n);
  for (auto& l : labels) l = random_set(rng);
  for (LabelSet q : {LabelSet{Label::trees}, LabelSet{Label::water, Label::built}}) {
    std::vector<int> rels(n);
    std::vector<std::uint64_t> relevant;
    for (std::size_t i = 0; i < n; ++i) {
      rels[i] = graded_relevance(q, labels[i]);
      if (is_relevant(rels[i])) relevant.push_back(i);
    }
    for (std::size_t k : {10u, 50u, 100u}) {
      const auto closed = random_baseline(n, rels, k);
      Moments nd, p, r;
      std::vector<std::uint64_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      for (int trial = 0; trial < 10000; ++trial) {
        for (std::size_t i = 0; i < k; ++i) {
          std::uniform_int_distribution<std::size_t> pick(i, n - 1);
          std::swap(order[i], order[pick(rng)]);
        }
        std::vector<std::uint64_t> top(order.begin(), order.begin() + std::ptrdiff_t(k));
        std::vector<int> got;
        for (auto id : top) got.push_back(rels[id]);
        nd.add(ndcg_at_k(got, rels, k));
        const auto pr = precision_recall_at_k(top, relevant, k);
        p.add(pr.precision);
        r.add(pr.recall);
      }
      CHECK(std::abs(nd.mean() - closed.ndcg) <= 3.0 * nd.se());
      CHECK(std::abs(p.mean() - closed.precision) <= 3.0 * p.se());
      CHECK(std::abs(r.mean() - closed.recall) <= 3.0 * r.se());
    }
  }
}

TEST_CASE("evaluate_rankings") {
  EmbeddingIndex idx(2);
  const LabelSet q{Label::crops};
  for (std::uint64_t i = 0; i < 30; ++i)
    idx.add(rec(i, i % 2 ? Modality::msi : Modality::sar, q, {1.0, 0.0}));

  SUBCASE("a corpus of exact matches scores one") {
    RankedList ranking;
    for (std::uint64_t i = 0; i < 30; ++i) ranking.push_back({i, 1.0});
    const std::vector<LabelSet> qs{q};
    const std::vector<RankedList> rs{ranking};
    const auto rep = evaluate_rankings(idx, qs, rs, Scope::all, false);
    CHECK(rep.mean[rep.cutoff_slot(10)].ndcg == doctest::Approx(1.0));
    CHECK(rep.queries[0].relevant == 30);
    REQUIRE(rep.class_ndcg[LabelVocabulary::index(Label::crops)]);
    CHECK(!rep.class_ndcg[LabelVocabulary::index(Label::trees)]);
    CHECK_THROWS_AS(rep.cutoff_slot(20), ContractError);
  }

  SUBCASE("dummy retriever tracks the analytic baseline, also past |D|") {
    std::mt19937_64 rng(6);
    EmbeddingIndex mixed(2);
    for (std::uint64_t i = 0; i < 80; ++i) mixed.add(rec(i, Modality::msi, random_set(rng), {0.0, 1.0}));
    const LabelSet query{Label::grass, Label::water};
    const std::size_t trials = 4000;
    std::vector<LabelSet> qs(trials, query);
    std::vector<RankedList> rs(trials);
    std::vector<std::uint64_t> ids(80);
    std::iota(ids.begin(), ids.end(), 0);
    for (auto& r : rs) {
      std::shuffle(ids.begin(), ids.end(), rng);
      for (auto id : ids) r.push_back({id, 0.0});
    }
    const auto rep = evaluate_rankings(mixed, qs, rs, Scope::all, false);
    for (std::size_t c = 0; c < kCutoffs.size(); ++c) {
      Moments nd, p;
      for (const auto& qm : rep.queries) {
        nd.add(qm.at[c].ndcg);
        p.add(qm.at[c].precision);
      }
      CHECK(std::abs(nd.mean() - rep.random_mean[c].ndcg) <= 3.0 * nd.se() + 1e-12);
      CHECK(std::abs(p.mean() - rep.random_mean[c].precision) <= 3.0 * p.se() + 1e-12);
    }
    for (std::size_t c : {2u, 3u}) {
      CHECK(rep.random_mean[c].precision == doctest::Approx(rep.mean[c].precision).epsilon(1e-12));
    }
  }

  SUBCASE("contract") {
    const std::vector<LabelSet> qs{q};
    const std::vector<RankedList> stray{{{999, 1.0}}};
    CHECK_THROWS_AS(evaluate_rankings(idx, qs, stray, Scope::all, false), ContractError);
    CHECK_THROWS_AS(evaluate_rankings(idx, qs, {}, Scope::all, false), ContractError);
    CHECK_THROWS_AS(evaluate_rankings(EmbeddingIndex(2), qs, stray, Scope::all, false),
                    ContractError);
  }
}

TEST_CASE("evaluate_retrieval scopes and serialisation") {
  GeneratorConfig g;
  g.sar_count = 60;
  g.msi_count = 40;
  g.image_side = 8;
  const auto corpus = generate_synthetic_corpus(g, 2);
  EncoderConfig enc;
  enc.image_side = 8;
  const auto model = Model::init(enc, 5);
  const auto idx = index_corpus(model, corpus);
  const auto queries = enumerate_queries(corpus);

  const auto all = evaluate_retrieval(model, idx, queries, {Scope::all, false});
  const auto sar = evaluate_retrieval(model, idx, queries, {Scope::sar, false});
  const auto msi = evaluate_retrieval(model, idx, queries, {Scope::msi, false});
  const auto fused = evaluate_retrieval(model, idx, queries, {Scope::all, true});
  CHECK(all.index_size == 100);
  CHECK(sar.index_size == 60);
  CHECK(msi.index_size == 40);
  CHECK(fused.fused);
  CHECK(!sar.fused);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::size_t n_sar = 0, n_msi = 0;
    for (const auto& it : corpus) {
      if (!is_relevant(graded_relevance(queries[q], it.labels))) continue;
      (it.modality == Modality::sar ? n_sar : n_msi) += 1;
    }
    CHECK(sar.queries[q].relevant == n_sar);
    CHECK(msi.queries[q].relevant == n_msi);
    CHECK(all.queries[q].relevant == n_sar + n_msi);
  }
  for (const auto* rep : {&all, &sar, &msi, &fused})
    for (const auto& qm : rep->queries)
      for (const auto& m : qm.at) {
        CHECK(m.ndcg >= 0.0);
        CHECK(m.ndcg <= 1.0 + 1e-12);
        CHECK(m.precision <= 1.0);
        CHECK(m.recall <= 1.0);
      }

  const auto j = nlohmann::json::parse(report_to_json(sar));
  CHECK(j["scope"] == "sar");
  CHECK(j["index_size"] == 60);
  CHECK(j["ndcg@100"].get<double>() == doctest::Approx(sar.mean[2].ndcg));
  CHECK(j.contains("random_recall@1000"));
  CHECK(report_to_text(all).find("nDCG") != std::string::npos);
  CHECK(report_to_json(all) == report_to_json(evaluate_retrieval(model, idx, queries)));
}

TEST_CASE("zero-shot thresholding") {
  SUBCASE("flat matrix predicts nothing") {
    const auto r = zero_shot_from_similarity({1, 2}, std::vector<double>(24, 0.3));
    CHECK(r.threshold == doctest::Approx(0.3));
    for (const auto& p : r.predictions) CHECK(p.empty());
  }
  SUBCASE("one outlier is the only prediction") {
    std::vector<double> s(36, 0.1);
    s[12 + 5] = 0.9;
    const auto r = zero_shot_from_similarity({4, 5, 6}, s);
    CHECK(r.predictions[0].empty());
    CHECK(r.predictions[1] == LabelSet{LabelVocabulary::at(5)});
    CHECK(r.predictions[2].empty());
  }
  SUBCASE("threshold is the mean and order does not matter") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const std::size_t n = 40;
    std::vector<double> s(n * 12);
    for (auto& x : s) x = u(rng);
    std::vector<std::uint64_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    const auto r = zero_shot_from_similarity(ids, s);
    CHECK(std::abs(r.threshold - std::accumulate(s.begin(), s.end(), 0.0) / double(s.size())) < 1e-12);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> s2;
    std::vector<std::uint64_t> ids2;
    for (auto p : perm) {
      ids2.push_back(ids[p]);
      s2.insert(s2.end(), s.begin() + std::ptrdiff_t(p * 12), s.begin() + std::ptrdiff_t(p * 12 + 12));
    }
    const auto r2 = zero_shot_from_similarity(ids2, s2);
    for (std::size_t i = 0; i < n; ++i) CHECK(r2.predictions[i] == r.predictions[perm[i]]);
  }
  SUBCASE("model path is order invariant") {
    GeneratorConfig g;
    g.sar_count = 20;
    g.msi_count = 20;
    g.image_side = 8;
    auto corpus = generate_synthetic_corpus(g, 9);
    EncoderConfig enc;
    enc.image_side = 8;
    const auto model = Model::init(enc, 1);
    const auto a = zero_shot_classify(model, corpus);
    std::reverse(corpus.begin(), corpus.end());
    const auto b = zero_shot_classify(model, corpus);
    CHECK(a.threshold == doctest::Approx(b.threshold).epsilon(1e-12));
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      CHECK(b.ids[i] == a.ids[corpus.size() - 1 - i]);
      CHECK(b.predictions[i] == a.predictions[corpus.size() - 1 - i]);
    }
    CHECK_THROWS_AS(zero_shot_classify(model, Corpus{}), ContractError);
  }
}

TEST_CASE("macro precision, recall and F1") {
  std::vector<LabelSet> every;
  for (std::size_t l = 0; l < kNumLabels; ++l) every.push_back(LabelSet{LabelVocabulary::at(l)});
  const auto perfect = macro_prf(every, every);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  const std::vector<LabelSet> only{LabelSet{Label::water}};
  const auto one = macro_prf(only, only);
  CHECK(one.f1 == doctest::Approx(1.0 / 12.0));
  CHECK(one.per_class[LabelVocabulary::index(Label::trees)].f1 == 0.0);

  // Truth over four items; trees appears 3 times, water twice, crops once.
  const std::vector<LabelSet> truth{
      {Label::trees, Label::water}, {Label::trees}, {Label::trees, Label::crops}, {Label::water}};
  const auto top2 = most_frequent_classes(truth, 2);
  CHECK(top2 == LabelSet{Label::trees, Label::water});
  const std::vector<LabelSet> dummy(4, top2);
  const auto d = macro_prf(dummy, truth);
  // trees: tp 3 fp 1 -> P .75 R 1 F1 6/7; water: tp 2 fp 2 -> P .5 R 1 F1 2/3.
  const auto& t = d.per_class[LabelVocabulary::index(Label::trees)];
  const auto& w = d.per_class[LabelVocabulary::index(Label::water)];
  CHECK(t.precision == doctest::Approx(0.75));
  CHECK(t.recall == 1.0);
  CHECK(t.f1 == doctest::Approx(6.0 / 7.0));
  CHECK(w.f1 == doctest::Approx(2.0 / 3.0));
  CHECK(d.per_class[LabelVocabulary::index(Label::crops)].f1 == 0.0);
  CHECK(d.per_class[LabelVocabulary::index(Label::crops)].support == 1);
  CHECK(d.precision == doctest::Approx(1.25 / 12.0));
  CHECK(d.recall == doctest::Approx(2.0 / 12.0));
  CHECK(d.f1 == doctest::Approx((6.0 / 7.0 + 2.0 / 3.0) / 12.0));

  CHECK(most_frequent_classes(std::vector<LabelSet>{{Label::snow_and_ice}, {Label::water}}, 1) ==
        LabelSet{Label::water});
  CHECK_THROWS_AS(macro_prf(dummy, only), ContractError);
  const auto json = nlohmann::json::parse(classification_to_json(d, d, 0.1));
  CHECK(json.is_object());
}

TEST_CASE("haversine") {
  CHECK(std::abs(haversine_km(0, 0, 180, 0) - 20015.09) < 0.1);
  CHECK(std::abs(haversine_km(0, 0, 90, 0) - 10007.54) < 0.1);
  CHECK(haversine_km(12.5, 41.9, 12.5, 41.9) == 0.0);
  CHECK(std::abs(haversine_km(0, 90, 0, -90) - 20015.09) < 0.1);
  CHECK_THROWS_AS(haversine_km(181, 0, 0, 0), DomainError);
  CHECK_THROWS_AS(haversine_km(0, 0, 0, -91), DomainError);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> lon(-180, 180), lat(-90, 90);
  for (int i = 0; i < 1000; ++i) {
    const double a[2]{lon(rng), lat(rng)}, b[2]{lon(rng), lat(rng)}, c[2]{lon(rng), lat(rng)};
    const double ab = haversine_km(a[0], a[1], b[0], b[1]);
    CHECK(ab == doctest::Approx(haversine_km(b[0], b[1], a[0], a[1])).epsilon(1e-14));
    CHECK(ab <= haversine_km(a[0], a[1], c[0], c[1]) + haversine_km(c[0], c[1], b[0], b[1]) + 1e-9);
  }
}

TEST_CASE("correlation") {
  const std::vector<double> x{-2, -1, 0, 1, 2};
  std::vector<double> neg, cube;
  for (double v : x) {
    neg.push_back(-v);
    cube.push_back(v * v * v);
  }
  auto c = correlation(x, x);
  CHECK(c.pearson == doctest::Approx(1.0));
  CHECK(c.spearman == doctest::Approx(1.0));
  c = correlation(x, neg);
  CHECK(c.pearson == doctest::Approx(-1.0));
  CHECK(c.spearman == doctest::Approx(-1.0));
  c = correlation(x, cube);
  CHECK(c.spearman == doctest::Approx(1.0));
  // sum x*x^3 = 34, sum x^2 = 10, sum x^6 = 130.
  CHECK(c.pearson == doctest::Approx(34.0 / std::sqrt(10.0 * 130.0)));
  CHECK(c.pearson < 1.0);

  CHECK(average_ranks(std::vector<double>{3, 1, 2, 2}) == std::vector<double>{4, 1, 2.5, 2.5});

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-5, 5);
  std::vector<double> a(200), b(200);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = u(rng);
    b[i] = std::exp(a[i]) + 3.0 * a[i];
  }
  CHECK(correlation(a, b).spearman == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(correlation(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DegenerateInputError);
  CHECK_THROWS_AS(correlation(std::vector<double>{1, 2}, std::vector<double>{2, 1}), ContractError);
  CHECK_THROWS_AS(correlation(x, std::vector<double>{1, 2, 3}), ContractError);
}

TEST_CASE("spatial probe") {
  SUBCASE("embedding angle follows geography") {
    EmbeddingIndex idx(2);
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> lon(0.0, 60.0);
    for (std::uint64_t i = 0; i < 400; ++i) {
      const double l = lon(rng);
      const double t = l * std::numbers::pi / 180.0;
      auto r = rec(i, Modality::msi, LabelSet{Label::crops}, {std::cos(t), std::sin(t)});
      r.lon = l;
      idx.add(r);
    }
    const auto p = spatial_probe(idx, 200, 0);
    CHECK(p.pairs.size() == 200);
    CHECK(p.corr.spearman == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.corr.pearson > 0.95);
    std::vector<std::uint64_t> seen;
    for (const auto& pr : p.pairs) {
      seen.push_back(pr.id_a);
      seen.push_back(pr.id_b);
    }
    std::sort(seen.begin(), seen.end());
    CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
    CHECK(probe_to_csv(p) == probe_to_csv(spatial_probe(idx, 200, 0)));
    CHECK(probe_to_csv(p).rfind("pair_id,km,cosine_distance\n", 0) == 0);
    CHECK_THROWS_AS(spatial_probe(idx, 201, 0), DataError);
  }
  SUBCASE("one location is degenerate") {
    EmbeddingIndex idx(2);
    std::mt19937_64 rng(2);
    for (std::uint64_t i = 0; i < 10; ++i) {
      std::normal_distribution<double> g;
      double a = g(rng), b = g(rng), n = std::hypot(a, b);
      idx.add(rec(i, Modality::sar, LabelSet{Label::trees}, {a / n, b / n}));
    }
    CHECK_THROWS_AS(spatial_probe(idx, 5, 1), DegenerateInputError);
  }
}
