#include "closp/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "closp/error.hpp"
#include "closp/ndmath/ops.hpp"
#include "closp/util/container.hpp"
#include "closp/util/rng.hpp"

namespace closp {

using nd::Tensor;

std::string_view mix_name(ModalityMix m) {
  switch (m) {
    case ModalityMix::both: return "both";
    case ModalityMix::sar: return "sar";
    case ModalityMix::msi: return "msi";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ContractError("epochs must be >= 1");
  if (batch_size < 2 || batch_size % 2 != 0) {
    throw ContractError("batch_size must be even and >= 2");
  }
  if (!(max_lr >= 0.0) || !std::isfinite(max_lr)) throw DomainError("max_lr must be >= 0");
  if (use_location) {
    if (alpha == 0.0) {
      throw DomainError("alpha = 0 discards the text alignment; use alpha in (0, 1]");
    }
    if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in (0, 1]");
  } else if (alpha != 1.0) {
    throw DomainError("alpha must be 1 when use_location is false");
  }
  encoder.validate();
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "epochs=" << epochs << '\n'
     << "batch_size=" << batch_size << '\n'
     << "max_lr=" << format_real(max_lr) << '\n'
     << "warmup_steps=" << (warmup_steps ? std::to_string(*warmup_steps) : "auto") << '\n'
     << "alpha=" << format_real(alpha) << '\n'
     << "seed=" << seed << '\n'
     << "use_location=" << (use_location ? "true" : "false") << '\n'
     << "modalities=" << mix_name(modalities) << '\n'
     << "total_steps=" << total_steps << '\n'
     << "embed_dim=" << encoder.embed_dim << '\n'
     << "image_side=" << encoder.image_side << '\n'
     << "sh_degree=" << encoder.sh_degree << '\n'
     << "siren_layers=" << encoder.siren_layers << '\n'
     << "siren_omega0=" << format_real(encoder.siren_omega0) << '\n'
     << "text_hidden=" << encoder.text_hidden << '\n'
     << "siren_hidden=" << encoder.siren_hidden << '\n';
  return os.str();
}

TrainConfig parse_train_config(std::span<const ConfigEntry> entries, std::string_view source) {
  TrainConfig c;
  for (const auto& e : entries) {
    const auto& k = e.key;
    if (k == "epochs") c.epochs = config_uint(e, source);
    else if (k == "batch_size") c.batch_size = config_uint(e, source);
    else if (k == "max_lr") c.max_lr = config_real(e, source);
    else if (k == "warmup_steps") {
      if (e.value == "auto") c.warmup_steps.reset();
      else c.warmup_steps = config_uint(e, source);
    } else if (k == "alpha") c.alpha = config_real(e, source);
    else if (k == "seed") c.seed = config_uint(e, source);
    else if (k == "use_location") c.use_location = config_bool(e, source);
    else if (k == "modalities") {
      if (e.value == "both") c.modalities = ModalityMix::both;
      else if (e.value == "sar") c.modalities = ModalityMix::sar;
      else if (e.value == "msi") c.modalities = ModalityMix::msi;
      else config_fail(e, source, "expected both, sar or msi");
    } else if (k == "total_steps") c.total_steps = config_uint(e, source);
    else if (k == "embed_dim") c.encoder.embed_dim = config_uint(e, source);
    else if (k == "image_side") c.encoder.image_side = config_uint(e, source);
    else if (k == "sh_degree") c.encoder.sh_degree = int(config_int(e, source));
    else if (k == "siren_layers") c.encoder.siren_layers = config_uint(e, source);
    else if (k == "siren_omega0") c.encoder.siren_omega0 = config_real(e, source);
    else if (k == "text_hidden") c.encoder.text_hidden = config_uint(e, source);
    else if (k == "siren_hidden") c.encoder.siren_hidden = config_uint(e, source);
    else config_fail(e, source, "unknown key");
  }
  return c;
}

TrainConfig read_train_config(const std::filesystem::path& file) {
  auto entries = read_key_values(file);
  return parse_train_config(entries, file.string());
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> indices_of(std::span<const CorpusItem> items, Modality m) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].modality == m) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> draw(std::vector<std::size_t> pool, std::size_t n, Modality m,
                              std::mt19937_64& rng) {
  if (pool.size() < n) {
    throw DataError("need " + std::to_string(n) + " " + std::string(modality_name(m)) +
                    " items per batch, have " + std::to_string(pool.size()));
  }
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(n);
  return pool;
}

}  // namespace

Batch compose_batch(std::span<const CorpusItem> items, std::size_t m, std::mt19937_64& rng) {
  if (m == 0) throw ContractError("compose_batch: M must be >= 1");
  auto sar = draw(indices_of(items, Modality::sar), m, Modality::sar, rng);
  auto msi = draw(indices_of(items, Modality::msi), m, Modality::msi, rng);
  Batch b;
  b.reserve(2 * m);
  for (std::size_t i = 0; i < m; ++i) {
    b.push_back(sar[i]);
    b.push_back(msi[i]);
  }
  std::shuffle(b.begin(), b.end(), rng);
  return b;
}

Batch compose_single_modality(std::span<const CorpusItem> items, Modality modality,
                              std::size_t n, std::mt19937_64& rng) {
  if (n == 0) throw ContractError("compose_single_modality: n must be >= 1");
  return draw(indices_of(items, modality), n, modality, rng);
}

// ---------------------------------------------------------------------------

void adam_step(std::span<Tensor> params, std::span<const std::span<const double>> grads,
               AdamState& state, double lr, const AdamHyper& hyper) {
  if (!(lr >= 0.0)) throw DomainError("learning rate must be >= 0");
  if (grads.size() != params.size()) {
    throw DimensionError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_step: state/parameter mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].size() || state.m[i].size() != params[i].size()) {
      throw DimensionError("adam_step: gradient " + std::to_string(i) + " has " +
                           std::to_string(grads[i].size()) + " entries, parameter has " +
                           std::to_string(params[i].size()));
    }
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(hyper.beta2, double(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].mutable_values();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto g = grads[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g[j];
      v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      theta[j] -= lr * mhat / (std::sqrt(vhat) + hyper.eps);
    }
  }
}

double lr_schedule(std::size_t step, std::size_t total_steps, std::size_t warmup_steps,
                   double max_lr) {
  if (step > total_steps) throw DomainError("lr_schedule: step beyond total_steps");
  if (warmup_steps >= total_steps) throw DomainError("lr_schedule: warmup_steps >= total_steps");
  if (!(max_lr >= 0.0)) throw DomainError("lr_schedule: max_lr must be >= 0");
  if (step < warmup_steps) return max_lr * double(step + 1) / double(warmup_steps);
  const double phase = double(step - warmup_steps) / double(total_steps - warmup_steps);
  return max_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
}

// ---------------------------------------------------------------------------

void ModelCheckpoint::save(const std::filesystem::path& file) const {
  Container c;
  const auto& enc = model.config();
  c.header.kind = ContainerKind::checkpoint;
  c.header.embed_dim = std::uint32_t(enc.embed_dim);
  c.header.image_side = std::uint32_t(enc.image_side);
  c.header.sh_degree = std::uint32_t(enc.sh_degree);
  c.header.vocab_hash = LabelVocabulary::hash();
  c.add_text("config", config.to_text());
  c.add_ints("step", {step});
  c.add_real("temperature.log_tau", temperature.log_tau());
  for (const auto& p : model.named_parameters()) c.add_real(p.name, p.tensor);
  c.save(file);
}

ModelCheckpoint ModelCheckpoint::load(const std::filesystem::path& file) {
  auto c = Container::load(file);
  const auto where = file.string() + ": ";
  if (c.header.kind != ContainerKind::checkpoint) throw FormatError(where + "not a checkpoint");
  if (c.header.vocab_hash != LabelVocabulary::hash()) {
    throw FormatError(where + "label vocabulary hash mismatch");
  }
  ModelCheckpoint ck;
  try {
    auto entries = parse_key_values(c.get("config", Block::Type::text).text, file.string());
    ck.config = parse_train_config(entries, file.string());
  } catch (const ConfigError& e) {
    throw FormatError(where + e.what());
  }
  const auto& enc = ck.config.encoder;
  if (enc.embed_dim != c.header.embed_dim || enc.image_side != c.header.image_side ||
      std::uint32_t(enc.sh_degree) != c.header.sh_degree) {
    throw FormatError(where + "header disagrees with stored configuration");
  }
  const auto& step = c.get("step", Block::Type::integer);
  if (step.ints.size() != 1) throw FormatError(where + "bad step block");
  ck.step = step.ints[0];

  ck.model = Model::init(enc, 0);
  auto fill = [&](Tensor t, const std::string& name) {
    const auto& b = c.get(name, Block::Type::real);
    if (b.shape != t.shape()) {
      throw FormatError(where + "block '" + name + "' has shape " + nd::to_string(b.shape) +
                        ", expected " + nd::to_string(t.shape()));
    }
    std::copy(b.reals.begin(), b.reals.end(), t.mutable_values().begin());
  };
  for (const auto& p : ck.model.named_parameters()) fill(p.tensor, p.name);
  fill(ck.temperature.log_tau(), "temperature.log_tau");
  return ck;
}

// ---------------------------------------------------------------------------

std::size_t steps_per_epoch(const TrainConfig& config, std::span<const CorpusItem> items) {
  std::size_t usable = 0;
  switch (config.modalities) {
    case ModalityMix::both: usable = items.size(); break;
    case ModalityMix::sar: usable = indices_of(items, Modality::sar).size(); break;
    case ModalityMix::msi: usable = indices_of(items, Modality::msi).size(); break;
  }
  if (usable < config.batch_size) {
    throw DataError("training split holds " + std::to_string(usable) +
                    " usable items, fewer than one batch of " + std::to_string(config.batch_size));
  }
  return (usable + config.batch_size - 1) / config.batch_size;
}

namespace {

Tensor stack_images(std::span<const CorpusItem> items, std::span<const std::size_t> idx) {
  const auto& first = items[idx[0]].image;
  const auto c = first.dim(0), h = first.dim(1);
  std::vector<double> v;
  v.reserve(idx.size() * first.size());
  for (auto i : idx) {
    const auto px = items[i].image.values();
    v.insert(v.end(), px.begin(), px.end());
  }
  return Tensor::from({idx.size(), c, h, h}, std::move(v));
}

}  // namespace

TrainResult train(const TrainConfig& config, std::span<const CorpusItem> items,
                  const std::function<void(const TrainProgress&)>& on_step) {
  config.validate();
  if (items.empty()) throw DataError("training split is empty");
  const auto side = items[0].image.dim(1);
  for (const auto& it : items) {
    it.validate();
    if (it.image.dim(1) != side) throw DataError("training items mix image sizes");
  }
  if (side != config.encoder.image_side) {
    throw DataError("image_side " + std::to_string(config.encoder.image_side) +
                    " does not match corpus images of side " + std::to_string(side));
  }

  const SeedSequence seeds(config.seed);
  TrainResult result;
  auto& ck = result.checkpoint;
  ck.config = config;
  ck.model = Model::init(config.encoder, seeds.derive("model"));

  auto params = ck.model.parameters();
  params.push_back(ck.temperature.log_tau());

  const auto spe = steps_per_epoch(config, items);
  result.steps_per_epoch = spe;
  const auto total = config.total_steps ? config.total_steps : config.epochs * spe;
  const auto warmup = config.warmup_steps.value_or(std::size_t(std::llround(0.05 * double(total))));
  if (warmup >= total) throw DomainError("warmup_steps must be < total steps");

  std::mt19937_64 rng(seeds.derive("batching"));
  AdamState adam;
  double epoch_sum = 0.0;
  std::size_t epoch_n = 0;

  for (std::size_t step = 0; step < total; ++step) {
    Batch batch;
    switch (config.modalities) {
      case ModalityMix::both: batch = compose_batch(items, config.batch_size / 2, rng); break;
      case ModalityMix::sar:
        batch = compose_single_modality(items, Modality::sar, config.batch_size, rng);
        break;
      case ModalityMix::msi:
        batch = compose_single_modality(items, Modality::msi, config.batch_size, rng);
        break;
    }
    // Encode modality-major; the loss does not depend on row order.
    std::stable_partition(batch.begin(), batch.end(),
                          [&](std::size_t i) { return items[i].modality == Modality::sar; });
    const auto n_sar = std::size_t(std::count_if(
        batch.begin(), batch.end(), [&](std::size_t i) { return items[i].modality == Modality::sar; }));

    Tensor loss;
    try {
      Tensor img;
      const std::span<const std::size_t> all(batch);
      if (n_sar > 0) img = ck.model.vision(Modality::sar).forward(stack_images(items, all.first(n_sar)));
      if (n_sar < batch.size()) {
        auto msi = ck.model.vision(Modality::msi).forward(stack_images(items, all.subspan(n_sar)));
        img = img.defined() ? nd::concat_rows(img, msi) : msi;
      }
      std::vector<LabelSet> labels;
      for (auto i : batch) labels.push_back(items[i].labels);
      BatchEmbeddings emb{img, ck.model.text().forward(labels), {}};

      if (config.use_location) {
        std::vector<GeoPoint> pts;
        for (auto i : batch) pts.push_back({items[i].lon, items[i].lat});
        emb.loc = ck.model.location().forward(pts);
        loss = geo_loss(emb, ck.temperature, config.alpha);
      } else {
        loss = contrastive_loss(emb, ck.temperature);
      }
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at step " + std::to_string(step), (long long)step);
    }
    const double value = loss.item();
    if (!std::isfinite(value)) {
      throw NumericError("non-finite loss at step " + std::to_string(step), (long long)step);
    }

    nd::backward(loss, params);
    std::vector<std::span<const double>> grads;
    grads.reserve(params.size());
    for (const auto& p : params) grads.push_back(p.grad());
    const double lr = lr_schedule(step, total, warmup, config.max_lr);
    adam_step(params, grads, adam, lr);
    ck.step += 1;
    if (on_step) on_step({step, total, value, lr});

    epoch_sum += value;
    ++epoch_n;
    if (epoch_n == spe || step + 1 == total) {
      result.epoch_loss.push_back(epoch_sum / double(epoch_n));
      epoch_sum = 0.0;
      epoch_n = 0;
    }
  }
  return result;
}

}  // namespace closp
