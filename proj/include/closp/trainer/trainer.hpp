#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "closp/corpus/corpus.hpp"
#include "closp/encoders/encoders.hpp"
#include "closp/objective/objective.hpp"
#include "closp/util/config.hpp"

namespace closp {

enum class ModalityMix : std::uint8_t { both, sar, msi };

std::string_view mix_name(ModalityMix m);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double max_lr = 1e-3;
  std::optional<std::size_t> warmup_steps;  // unset: 5% of total steps
  double alpha = 1.0;
  std::uint64_t seed = 0;
  bool use_location = false;
  // both: M SAR + M MSI per batch; sar/msi: single-modality batches of N.
  ModalityMix modalities = ModalityMix::both;
  // 0: epochs x steps_per_epoch. Otherwise a fixed step budget; the loss
  // trace still closes an epoch every steps_per_epoch steps.
  std::size_t total_steps = 0;
  EncoderConfig encoder;

  // Throws ContractError or DomainError.
  void validate() const;

  // key=value rendering of every field; parse_train_config reads it back.
  std::string to_text() const;
};

TrainConfig parse_train_config(std::span<const ConfigEntry> entries, std::string_view source);
TrainConfig read_train_config(const std::filesystem::path& file);

// ---------------------------------------------------------------------------

// Indices into the training items, in the order the batch is encoded.
using Batch = std::vector<std::size_t>;

// M SAR and M MSI items, each drawn without replacement, interleaved and
// then shuffled. Throws DataError when a modality has fewer than M items.
Batch compose_batch(std::span<const CorpusItem> items, std::size_t m, std::mt19937_64& rng);

// n items of one modality, without replacement.
Batch compose_single_modality(std::span<const CorpusItem> items, Modality modality,
                              std::size_t n, std::mt19937_64& rng);

// ---------------------------------------------------------------------------

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;
};

// One bias-corrected Adam update in place. Throws DimensionError when a
// gradient does not match its parameter, DomainError for lr < 0.
void adam_step(std::span<nd::Tensor> params, std::span<const std::span<const double>> grads,
               AdamState& state, double lr, const AdamHyper& hyper = {});

// Linear warmup to max_lr, then cosine decay to 0 at total_steps.
double lr_schedule(std::size_t step, std::size_t total_steps, std::size_t warmup_steps,
                   double max_lr);

// ---------------------------------------------------------------------------

struct ModelCheckpoint {
  Model model;
  Temperature temperature;
  TrainConfig config;
  std::uint64_t step = 0;

  void save(const std::filesystem::path& file) const;
  // Throws FormatError on corruption or a vocabulary mismatch.
  static ModelCheckpoint load(const std::filesystem::path& file);
};

struct TrainResult {
  ModelCheckpoint checkpoint;
  std::vector<double> epoch_loss;  // mean loss per epoch
  std::size_t steps_per_epoch = 0;
};

struct TrainProgress {
  std::size_t step;
  std::size_t total_steps;
  double loss;
  double lr;
};

std::size_t steps_per_epoch(const TrainConfig& config, std::span<const CorpusItem> items);

// Trains a fresh model on `items`. A non-finite loss raises NumericError
// carrying the step index.
TrainResult train(const TrainConfig& config, std::span<const CorpusItem> items,
                  const std::function<void(const TrainProgress&)>& on_step = {});

}  // namespace closp
