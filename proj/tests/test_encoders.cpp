#include <cmath>
#include <numbers>
#include <random>

#include "closp/encoders/encoders.hpp"
#include "closp/encoders/spherical_harmonics.hpp"
#include "closp/error.hpp"
#include "closp/ndmath/ops.hpp"
#include "doctest.h"

using namespace closp;
using nd::Tensor;

namespace {

constexpr double kPi = std::numbers::pi;

double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on P_n.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double dp = n * (z * p1 - p0) / (z * z - 1);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    double p0 = 1, p1 = z;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1) * z * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    const double dp = n * (z * p1 - p0) / (z * z - 1);
    x[i] = z;
    w[i] = 2.0 / ((1 - z * z) * dp * dp);
  }
}

EncoderConfig small_config() {
  EncoderConfig c;
  c.embed_dim = 6;
  c.image_side = 8;
  c.sh_degree = 2;
  c.text_hidden = 5;
  c.siren_hidden = 7;
  return c;
}

Tensor random_images(std::size_t b, std::size_t c, std::size_t h,
                     std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(b * c * h * h);
  for (auto& x : v) x = n(rng);
  return Tensor::from({b, c, h, h}, std::move(v));
}

}  // namespace

TEST_CASE("vocabulary lookup is case-insensitive and canonical") {
  CHECK(LabelVocabulary::names.size() == 12);
  CHECK(LabelVocabulary::lookup("  WATER ") == Label::water);
  CHECK(LabelVocabulary::lookup("Snow and Ice") == Label::snow_and_ice);
  CHECK(LabelVocabulary::name(Label::trees) == "trees");
  CHECK(LabelVocabulary::name(Label::burned_area) == "burned area");
  CHECK_THROWS_AS(LabelVocabulary::lookup("forest"), VocabularyError);
}

TEST_CASE("label-set rendering and parsing") {
  LabelSet s{Label::shrub_and_scrub, Label::flooded_vegetation};
  CHECK(s.render() == "Flooded vegetation. Shrub and scrub");
  CHECK(LabelSet::parse("Flooded vegetation. Shrub and scrub") == s);
  CHECK(LabelSet::parse("shrub and scrub, flooded vegetation") == s);
  CHECK(LabelSet{Label::bare, Label::built, Label::crops, Label::trees}.render() ==
        "Bare. Built. Crops. Trees");
  CHECK_THROWS_AS(LabelSet::parse("water, lava"), VocabularyError);
  CHECK_THROWS_AS(LabelSet::parse(" . "), ContractError);
}

TEST_CASE("sh_encode closed forms") {
  auto y0 = sh_encode(12.0, -33.0, 0);
  REQUIRE(y0.size() == 1);
  CHECK(y0[0] == doctest::Approx(1.0 / (2.0 * std::sqrt(kPi))).epsilon(1e-15));
  CHECK(y0[0] == doctest::Approx(0.2820948).epsilon(1e-7));
  CHECK(sh_encode(0, 0, 3).size() == 16);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> lon(-180, 180), lat(-90, 90);
  for (int t = 0; t < 100; ++t) {
    const double lo = lon(rng), la = lat(rng);
    const double th = (90 - la) * kPi / 180, ph = lo * kPi / 180;
    const auto y = sh_encode(lo, la, 2);
    const double c1 = std::sqrt(3 / (4 * kPi));
    CHECK(y[1] == doctest::Approx(c1 * std::sin(th) * std::sin(ph)).epsilon(1e-12));
    CHECK(y[2] == doctest::Approx(c1 * std::cos(th)).epsilon(1e-12));
    CHECK(y[3] == doctest::Approx(c1 * std::sin(th) * std::cos(ph)).epsilon(1e-12));
    const double c2 = 0.25 * std::sqrt(15 / kPi);
    CHECK(y[4] == doctest::Approx(c2 * std::pow(std::sin(th), 2) * std::sin(2 * ph)).epsilon(1e-12));
    CHECK(y[5] == doctest::Approx(2 * c2 * std::sin(th) * std::cos(th) * std::sin(ph)).epsilon(1e-12));
    CHECK(y[6] == doctest::Approx(0.25 * std::sqrt(5 / kPi) * (3 * std::pow(std::cos(th), 2) - 1)).epsilon(1e-12));
    CHECK(y[7] == doctest::Approx(2 * c2 * std::sin(th) * std::cos(th) * std::cos(ph)).epsilon(1e-12));
    CHECK(y[8] == doctest::Approx(c2 * std::pow(std::sin(th), 2) * std::cos(2 * ph)).epsilon(1e-12));
  }
}

TEST_CASE("sh_encode basis is orthonormal under quadrature") {
  const int degree = 4, nf = sh_feature_count(degree);
  std::vector<double> xs, ws;
  gauss_legendre(24, xs, ws);
  const int nphi = 32;
  std::vector<double> gram(std::size_t(nf * nf), 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double lat = 90.0 - std::acos(xs[i]) * 180.0 / kPi;
    for (int j = 0; j < nphi; ++j) {
      const double lon = -180.0 + 360.0 * j / nphi;
      const auto y = sh_encode(lon, lat, degree);
      const double w = ws[i] * 2 * kPi / nphi;
      for (int a = 0; a < nf; ++a)
        for (int b = 0; b < nf; ++b) gram[std::size_t(a * nf + b)] += w * y[a] * y[b];
    }
  }
  for (int a = 0; a < nf; ++a)
    for (int b = 0; b < nf; ++b)
      CHECK(std::abs(gram[std::size_t(a * nf + b)] - (a == b ? 1.0 : 0.0)) < 1e-10);
}

TEST_CASE("sh_encode pole and domain") {
  CHECK(sh_encode(0, 90, 3) == sh_encode(77, 90, 3));
  CHECK_THROWS_AS(sh_encode(181, 0, 3), DomainError);
  CHECK_THROWS_AS(sh_encode(0, -90.5, 3), DomainError);
  CHECK_THROWS_AS(sh_encode(std::nan(""), 0, 3), DomainError);
}

TEST_CASE("encode_text contract") {
  const auto model = Model::init(EncoderConfig{}, 3);
  auto a = model.encode_text(LabelSet::parse("water"));
  auto b = model.encode_text(LabelSet::parse("WATER "));
  CHECK(std::vector<double>(a.values().begin(), a.values().end()) ==
        std::vector<double>(b.values().begin(), b.values().end()));
  CHECK(a.size() == 32);
  CHECK(norm(a) == doctest::Approx(1.0).epsilon(1e-6));

  auto wt = model.encode_text(LabelSet{Label::water, Label::trees});
  auto tw = model.encode_text(LabelSet::parse("trees, water"));
  CHECK(std::vector<double>(wt.values().begin(), wt.values().end()) ==
        std::vector<double>(tw.values().begin(), tw.values().end()));

  for (std::uint16_t bits = 1; bits < 4096; bits += 37) {
    CHECK(norm(model.encode_text(LabelSet(bits))) == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK_THROWS_AS(model.encode_text(LabelSet{}), ContractError);
}

TEST_CASE("encode_image contract") {
  const EncoderConfig cfg;
  const auto model = Model::init(cfg, 5);
  std::mt19937_64 rng(8);
  auto sar = random_images(1, 2, cfg.image_side, rng);
  auto sar_img = Tensor::from({2, cfg.image_side, cfg.image_side},
                              {sar.values().begin(), sar.values().end()});
  auto e1 = model.encode_image(sar_img, Modality::sar);
  auto e2 = model.encode_image(sar_img, Modality::sar);
  CHECK(e1.size() == cfg.embed_dim);
  CHECK(norm(e1) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::vector<double>(e1.values().begin(), e1.values().end()) ==
        std::vector<double>(e2.values().begin(), e2.values().end()));

  auto msi_img = Tensor::zeros({12, cfg.image_side, cfg.image_side});
  CHECK_THROWS_AS(model.encode_image(msi_img, Modality::sar), ShapeError);
  CHECK_THROWS_AS(model.encode_image(sar_img, Modality::msi), ShapeError);
  auto wrong_side = Tensor::zeros({2, 10, 10});
  CHECK_THROWS_AS(model.encode_image(wrong_side, Modality::sar), ShapeError);
}

TEST_CASE("SAR and MSI encoders share no parameters") {
  const auto model = Model::init(EncoderConfig{}, 1);
  std::vector<const nd::Node*> sar, msi;
  for (const auto& p : model.named_parameters()) {
    if (p.name.rfind("sar.", 0) == 0) sar.push_back(p.tensor.node().get());
    if (p.name.rfind("msi.", 0) == 0) msi.push_back(p.tensor.node().get());
  }
  CHECK(sar.size() == 8);
  CHECK(msi.size() == 8);
  for (auto* s : sar)
    for (auto* m : msi) CHECK(s != m);
}

TEST_CASE("encode_location contract") {
  const auto model = Model::init(EncoderConfig{}, 2);
  auto a = model.encode_location(0, 90);
  auto b = model.encode_location(77, 90);
  CHECK(norm(a) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::vector<double>(a.values().begin(), a.values().end()) ==
        std::vector<double>(b.values().begin(), b.values().end()));

  auto p = model.encode_location(0, 0);
  auto q = model.encode_location(0.001, 0);
  CHECK(1.0 - dot(p, q) <= 1e-3);
  CHECK_THROWS_AS(model.encode_location(200, 0), DomainError);
}

TEST_CASE("all encoders emit unit vectors of one dimension") {
  EncoderConfig cfg;
  cfg.embed_dim = 16;
  cfg.image_side = 12;
  const auto model = Model::init(cfg, 4);
  std::mt19937_64 rng(4);
  auto sar = model.vision(Modality::sar).forward(random_images(3, 2, 12, rng));
  auto msi = model.vision(Modality::msi).forward(random_images(3, 12, 12, rng));
  const LabelSet sets[] = {LabelSet{Label::water}, LabelSet{Label::bare, Label::built}};
  auto txt = model.text().forward(sets);
  const GeoPoint pts[] = {{10, 10}, {-120, -45}};
  auto loc = model.location().forward(pts);
  for (const auto* t : {&sar, &msi, &txt, &loc}) {
    CHECK(t->dim(1) == 16);
    for (std::size_t r = 0; r < t->dim(0); ++r) {
      double s = 0;
      for (std::size_t j = 0; j < 16; ++j) s += t->at(r, j) * t->at(r, j);
      CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("SIREN first-layer pre-activations stay near [-pi, pi]") {
  const auto model = Model::init(EncoderConfig{}, 6);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> lon(-180, 180), z(-1, 1);
  std::vector<GeoPoint> pts(1000);
  for (auto& p : pts) {
    // uniform on the sphere
    p.lon = lon(rng);
    p.lat = std::asin(z(rng)) * 180 / kPi;
  }
  auto pre = model.location().first_layer_preactivations(pts);
  double m = 0, ss = 0;
  for (double v : pre.values()) m += v;
  m /= double(pre.size());
  for (double v : pre.values()) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / double(pre.size()));
  CHECK(sd >= 0.5);
  CHECK(sd <= 3.0);
}

TEST_CASE("encoder gradients pass grad_check") {
  const auto cfg = small_config();
  const auto model = Model::init(cfg, 9);
  std::mt19937_64 rng(21);
  auto sar_imgs = random_images(2, 2, cfg.image_side, rng);
  auto msi_imgs = random_images(2, 12, cfg.image_side, rng);
  const LabelSet sets[] = {LabelSet{Label::water, Label::trees}, LabelSet{Label::built}};
  const GeoPoint pts[] = {{12.5, 41.9}, {-70, -33}};
  auto target = Tensor::from({2, cfg.embed_dim},
                             {0.3, -0.1, 0.2, 0.5, -0.4, 0.1, 0.2, 0.2, -0.3, 0.1, 0.6, -0.2});
  auto f = [&] {
    auto s = model.vision(Modality::sar).forward(sar_imgs);
    auto m = model.vision(Modality::msi).forward(msi_imgs);
    auto t = model.text().forward(sets);
    auto l = model.location().forward(pts);
    auto all = nd::add(nd::add(s, m), nd::add(t, l));
    return nd::sum(nd::square(nd::add(all, target)));
  };
  auto params = model.parameters();
  auto r = nd::grad_check(f, params, 1e-6);
  CHECK(r.coords_checked > 1000);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("clone shares no storage and reproduces outputs") {
  const auto model = Model::init(EncoderConfig{}, 10);
  const auto copy = model.clone();
  const LabelSet s{Label::grass};
  auto a = model.encode_text(s);
  auto b = copy.encode_text(s);
  CHECK(std::vector<double>(a.values().begin(), a.values().end()) ==
        std::vector<double>(b.values().begin(), b.values().end()));
  auto pm = model.parameters();
  auto pc = copy.parameters();
  for (std::size_t i = 0; i < pm.size(); ++i) CHECK(pm[i].node() != pc[i].node());
}
