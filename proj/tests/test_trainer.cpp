#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "closp/corpus/split.hpp"
#include "closp/error.hpp"
#include "closp/trainer/trainer.hpp"
#include "doctest.h"

using namespace closp;
using nd::Tensor;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("closp_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Corpus tiny_corpus(std::size_t per_modality, std::uint64_t seed = 3) {
  GeneratorConfig g;
  g.sar_count = per_modality;
  g.msi_count = per_modality;
  g.image_side = 8;
  return generate_synthetic_corpus(g, seed);
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 4;
  c.encoder.image_side = 8;
  c.encoder.embed_dim = 8;
  c.encoder.text_hidden = 16;
  c.encoder.siren_hidden = 16;
  return c;
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
  return true;
}

}  // namespace

TEST_CASE("compose_batch draws M per modality without replacement") {
  const auto items = tiny_corpus(6);
  std::mt19937_64 rng(11);
  const auto b = compose_batch(items, 2, rng);
  REQUIRE(b.size() == 4);
  std::size_t sar = 0;
  for (auto i : b) sar += items[i].modality == Modality::sar;
  CHECK(sar == 2);
  CHECK(std::set<std::size_t>(b.begin(), b.end()).size() == 4);

  for (int rep = 0; rep < 50; ++rep) {
    const auto full = compose_batch(items, 6, rng);
    CHECK(std::set<std::size_t>(full.begin(), full.end()).size() == 12);
  }

  std::mt19937_64 r1(5), r2(5);
  CHECK(compose_batch(items, 3, r1) == compose_batch(items, 3, r2));

  Corpus msi_only;
  for (const auto& it : items)
    if (it.modality == Modality::msi) msi_only.push_back(it);
  CHECK_THROWS_AS(compose_batch(msi_only, 1, rng), DataError);
  CHECK_THROWS_AS(compose_batch(items, 7, rng), DataError);
}

TEST_CASE("compose_single_modality") {
  const auto items = tiny_corpus(6);
  std::mt19937_64 rng(2);
  const auto b = compose_single_modality(items, Modality::sar, 5, rng);
  REQUIRE(b.size() == 5);
  for (auto i : b) CHECK(items[i].modality == Modality::sar);
  CHECK(std::set<std::size_t>(b.begin(), b.end()).size() == 5);
  CHECK_THROWS_AS(compose_single_modality(items, Modality::msi, 7, rng), DataError);
}

TEST_CASE("adam examples") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    std::vector<Tensor> p{Tensor::from({3}, {1.0, -2.0, 0.5}, true)};
    const std::vector<double> g(3, 0.0);
    std::vector<std::span<const double>> gs{g};
    AdamState s;
    adam_step(p, gs, s, 0.1);
    CHECK(p[0].values()[0] == 1.0);
    CHECK(p[0].values()[1] == -2.0);
    CHECK(p[0].values()[2] == 0.5);
    CHECK(s.t == 1);
  }
  SUBCASE("one step from a fresh state") {
    std::vector<Tensor> p{Tensor::from({1}, {0.0}, true)};
    const std::vector<double> g{1.0};
    std::vector<std::span<const double>> gs{g};
    AdamState s;
    adam_step(p, gs, s, 0.1);
    CHECK(p[0].values()[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-14));
    CHECK(p[0].values()[0] == doctest::Approx(-0.09999999).epsilon(1e-7));
  }
  SUBCASE("identical states give identical results") {
    auto run = [] {
      std::vector<Tensor> p{Tensor::from({2}, {0.3, -0.7}, true)};
      const std::vector<double> g{0.25, -4.0};
      std::vector<std::span<const double>> gs{g};
      AdamState s;
      for (int i = 0; i < 3; ++i) adam_step(p, gs, s, 0.01);
      return std::vector<double>(p[0].values().begin(), p[0].values().end());
    };
    CHECK(run() == run());
  }
  SUBCASE("matches a scalar reference over many steps") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<Tensor> p{Tensor::from({4}, {0.1, 0.2, -0.3, 0.4}, true)};
    std::vector<double> ref{0.1, 0.2, -0.3, 0.4}, m(4, 0.0), v(4, 0.0);
    AdamState s;
    for (int t = 1; t <= 25; ++t) {
      std::vector<double> g(4);
      for (auto& x : g) x = n(rng);
      std::vector<std::span<const double>> gs{g};
      const double lr = 0.01 * t;
      adam_step(p, gs, s, lr);
      for (int i = 0; i < 4; ++i) {
        m[i] = 0.9 * m[i] + 0.1 * g[i];
        v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
        const double mh = m[i] / (1.0 - std::pow(0.9, t));
        const double vh = v[i] / (1.0 - std::pow(0.999, t));
        ref[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
      }
    }
    for (int i = 0; i < 4; ++i) CHECK(p[0].values()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
  SUBCASE("contract errors") {
    std::vector<Tensor> p{Tensor::from({2}, {0.0, 0.0}, true)};
    const std::vector<double> g{1.0};
    std::vector<std::span<const double>> gs{g};
    AdamState s;
    CHECK_THROWS_AS(adam_step(p, gs, s, 0.1), DimensionError);
    std::vector<std::span<const double>> none;
    CHECK_THROWS_AS(adam_step(p, none, s, 0.1), DimensionError);
    const std::vector<double> g2{1.0, 1.0};
    std::vector<std::span<const double>> gs2{g2};
    CHECK_THROWS_AS(adam_step(p, gs2, s, -1.0), DomainError);
  }
}

TEST_CASE("lr_schedule") {
  const double mx = 1e-3;
  CHECK(lr_schedule(10, 110, 10, mx) == doctest::Approx(mx).epsilon(1e-15));
  CHECK(lr_schedule(110, 110, 10, mx) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(std::abs(lr_schedule(110, 110, 10, mx)) < 1e-18);
  CHECK(lr_schedule(60, 110, 10, mx) == doctest::Approx(0.5 * mx).epsilon(1e-12));
  CHECK(lr_schedule(0, 110, 10, mx) == doctest::Approx(0.1 * mx));
  CHECK(lr_schedule(0, 5, 0, mx) == doctest::Approx(mx));

  for (std::size_t w : {1u, 3u, 10u, 37u}) {
    const double jump = std::abs(lr_schedule(w, 200, w, mx) - lr_schedule(w - 1, 200, w, mx));
    CHECK(jump <= mx / double(w) + 1e-18);
  }
  double prev = lr_schedule(10, 110, 10, mx);
  for (std::size_t s = 11; s <= 110; ++s) {
    const double lr = lr_schedule(s, 110, 10, mx);
    CHECK(lr <= prev);
    prev = lr;
  }
  CHECK_THROWS_AS(lr_schedule(111, 110, 10, mx), DomainError);
  CHECK_THROWS_AS(lr_schedule(0, 10, 10, mx), DomainError);
}

TEST_CASE("train config contract and text form") {
  TrainConfig c;
  CHECK(c.epochs == 30);
  CHECK(c.batch_size == 64);
  CHECK_NOTHROW(c.validate());

  auto bad = c;
  bad.batch_size = 63;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = c;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = c;
  bad.alpha = 0.5;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad.use_location = true;
  CHECK_NOTHROW(bad.validate());
  bad.alpha = 0.0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad.alpha = 1.5;
  CHECK_THROWS_AS(bad.validate(), DomainError);

  auto geo = c;
  geo.use_location = true;
  geo.alpha = 0.25;
  geo.warmup_steps = 7;
  geo.max_lr = 3.5e-4;
  geo.modalities = ModalityMix::sar;
  geo.total_steps = 99;
  geo.encoder.sh_degree = 5;
  const auto text = geo.to_text();
  const auto back = parse_train_config(parse_key_values(text, "mem"), "mem");
  CHECK(back.to_text() == text);
  CHECK(back.alpha == 0.25);
  CHECK(back.warmup_steps == std::optional<std::size_t>(7));
  CHECK(back.max_lr == 3.5e-4);

  CHECK_THROWS_AS(parse_train_config(parse_key_values("bogus=1\n", "mem"), "mem"), ConfigError);
  CHECK_THROWS_AS(parse_train_config(parse_key_values("epochs=ten\n", "mem"), "mem"), ConfigError);
  CHECK_THROWS_AS(parse_key_values("epochs=3\nepochs=4\n", "mem"), ConfigError);
  try {
    parse_train_config(parse_key_values("# c\nepochs=3\nmodalities=radar\n", "run.cfg"), "run.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("run.cfg:3") != std::string::npos);
  }
  const auto partial = parse_train_config(parse_key_values("alpha=1\nepochs=3\n", "m"), "m");
  CHECK(partial.epochs == 3);
  CHECK(partial.batch_size == 64);
  CHECK(!partial.warmup_steps);
}

TEST_CASE("steps per epoch") {
  const auto items = tiny_corpus(200);
  TrainConfig c = tiny_config();
  c.batch_size = 64;
  CHECK(steps_per_epoch(c, items) == 7);
  c.modalities = ModalityMix::sar;
  CHECK(steps_per_epoch(c, items) == 4);
  c.batch_size = 256;
  CHECK_THROWS_AS(steps_per_epoch(c, items), DataError);
}

TEST_CASE("train on a four-item corpus takes one step") {
  const auto items = tiny_corpus(2);
  auto c = tiny_config();
  c.epochs = 1;
  std::size_t calls = 0;
  const auto r = train(c, items, [&](const TrainProgress& p) {
    ++calls;
    CHECK(p.total_steps == 1);
    CHECK(std::isfinite(p.loss));
  });
  CHECK(calls == 1);
  CHECK(r.checkpoint.step == 1);
  REQUIRE(r.epoch_loss.size() == 1);
  CHECK(std::isfinite(r.epoch_loss[0]));
  CHECK(r.steps_per_epoch == 1);
}

TEST_CASE("training is deterministic and checkpoints round-trip") {
  const auto items = tiny_corpus(8);
  auto c = tiny_config();
  c.use_location = true;
  c.alpha = 0.5;
  const auto a = train(c, items);
  const auto b = train(c, items);
  CHECK(a.epoch_loss == b.epoch_loss);
  const auto pa = a.checkpoint.model.named_parameters();
  const auto pb = b.checkpoint.model.named_parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK(same_bits(pa[i].tensor.values(), pb[i].tensor.values()));
  }

  const auto dir = scratch("ckpt");
  a.checkpoint.save(dir / "a.ckpt");
  b.checkpoint.save(dir / "b.ckpt");
  std::ifstream fa(dir / "a.ckpt", std::ios::binary), fb(dir / "b.ckpt", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {});
  const std::string sb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(sa == sb);

  const auto back = ModelCheckpoint::load(dir / "a.ckpt");
  CHECK(back.step == a.checkpoint.step);
  CHECK(back.config.to_text() == c.to_text());
  CHECK(back.temperature.tau() == a.checkpoint.temperature.tau());
  const auto& m0 = a.checkpoint.model;
  const auto& m1 = back.model;
  for (const auto& it : items) {
    CHECK(same_bits(m0.encode_text(it.labels).values(), m1.encode_text(it.labels).values()));
    CHECK(same_bits(m0.encode_image(it.image, it.modality).values(),
                    m1.encode_image(it.image, it.modality).values()));
    CHECK(same_bits(m0.encode_location(it.lon, it.lat).values(),
                    m1.encode_location(it.lon, it.lat).values()));
  }

  std::ofstream(dir / "cut.ckpt", std::ios::binary).write(sa.data(), std::streamsize(sa.size() / 2));
  CHECK_THROWS_AS(ModelCheckpoint::load(dir / "cut.ckpt"), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("location encoder is untouched without use_location") {
  const auto items = tiny_corpus(8);
  auto c = tiny_config();
  const auto plain = train(c, items);
  CHECK(plain.checkpoint.model.location().forward_calls() == 0);
  c.use_location = true;
  c.alpha = 0.75;
  const auto geo = train(c, items);
  CHECK(geo.checkpoint.model.location().forward_calls() == geo.checkpoint.step);
}

TEST_CASE("train errors") {
  auto items = tiny_corpus(4);
  auto c = tiny_config();
  c.encoder.image_side = 16;
  CHECK_THROWS_AS(train(c, items), DataError);
  CHECK_THROWS_AS(train(tiny_config(), Corpus{}), DataError);

  c = tiny_config();
  for (auto& it : items) it.image.mutable_values()[0] = std::numeric_limits<double>::infinity();
  try {
    train(c, items);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.step() == 0);
  }
}

TEST_CASE("default training reduces the loss on the synthetic corpus") {
  const auto corpus = generate_synthetic_corpus(GeneratorConfig{}, 0);
  const auto split = stratified_split(corpus, 0.2, 0);
  const auto items = select(corpus, split.train_ids);
  const auto r = train(TrainConfig{}, items);
  REQUIRE(r.epoch_loss.size() == 30);
  MESSAGE("first epoch " << r.epoch_loss.front() << ", last " << r.epoch_loss.back());
  CHECK(r.epoch_loss.back() <= 0.7 * r.epoch_loss.front());
}
