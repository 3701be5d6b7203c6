#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "closp/encoders/vocabulary.hpp"
#include "closp/ndmath/tensor.hpp"

namespace closp {

enum class Modality : std::uint8_t { sar = 0, msi = 1 };

// SAR carries two polarisations, MSI twelve spectral bands.
constexpr std::size_t channel_count(Modality m) {
  return m == Modality::sar ? 2 : 12;
}
std::string_view modality_name(Modality m);
Modality parse_modality(std::string_view text);

struct GeoPoint {
  double lon = 0.0;
  double lat = 0.0;
};

struct EncoderConfig {
  std::size_t embed_dim = 32;
  std::size_t image_side = 24;
  int sh_degree = 3;
  std::size_t siren_layers = 2;
  double siren_omega0 = 30.0;
  std::size_t text_hidden = 64;
  std::size_t siren_hidden = 64;

  std::size_t sh_width() const {
    return std::size_t((sh_degree + 1) * (sh_degree + 1));
  }
  // Throws ContractError when an invariant is violated.
  void validate() const;
};

struct NamedParam {
  std::string name;
  nd::Tensor tensor;
};

// Learned embedding table over the vocabulary, mean-pooled over the label
// set, followed by a two-layer ReLU MLP and L2 normalisation.
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(const EncoderConfig& cfg, std::uint64_t seed);

  // Rows are unit-norm embeddings, one per label set.
  nd::Tensor forward(std::span<const LabelSet> sets) const;
  void collect(std::vector<NamedParam>& out) const;

 private:
  nd::Tensor embed_, w1_, b1_, w2_, b2_;
};

// Three stride-2 3x3 conv blocks (C -> 16 -> 32 -> D) with ReLU, global
// average pooling, a linear head and L2 normalisation.
class VisionEncoder {
 public:
  VisionEncoder() = default;
  VisionEncoder(const EncoderConfig& cfg, Modality modality, std::uint64_t seed);

  Modality modality() const { return modality_; }
  // images: [B × C × H × H]; throws ShapeError on a channel mismatch.
  nd::Tensor forward(const nd::Tensor& images) const;
  void collect(std::vector<NamedParam>& out) const;

 private:
  Modality modality_ = Modality::msi;
  std::size_t side_ = 0;
  nd::Tensor c1w_, c1b_, c2w_, c2b_, c3w_, c3b_, hw_, hb_;
};

// Spherical-harmonic features of (lon, lat) fed through a SIREN: sine layers
// sin(ω0·(xW + b)) followed by a linear projection and L2 normalisation.
class LocationEncoder {
 public:
  LocationEncoder() = default;
  LocationEncoder(const EncoderConfig& cfg, std::uint64_t seed);

  nd::Tensor forward(std::span<const GeoPoint> points) const;
  // Pre-activations ω0·(xW + b) of the first sine layer, for diagnostics.
  nd::Tensor first_layer_preactivations(std::span<const GeoPoint> points) const;
  void collect(std::vector<NamedParam>& out) const;

  std::size_t forward_calls() const { return calls_ ? calls_->load() : 0; }

 private:
  nd::Tensor sh_features(std::span<const GeoPoint> points) const;

  int degree_ = 0;
  double omega0_ = 30.0;
  std::vector<nd::Tensor> weights_, biases_;  // sine layers
  nd::Tensor out_w_, out_b_;
  std::shared_ptr<std::atomic<std::size_t>> calls_;
};

// The four encoders sharing one embedding space.
class Model {
 public:
  Model() = default;
  // Deterministic initialisation; each encoder draws from its own stream.
  static Model init(const EncoderConfig& cfg, std::uint64_t seed);

  const EncoderConfig& config() const { return cfg_; }
  const TextEncoder& text() const { return text_; }
  const VisionEncoder& vision(Modality m) const {
    return m == Modality::sar ? sar_ : msi_;
  }
  const LocationEncoder& location() const { return location_; }

  // Fixed order: text, sar, msi, location.
  std::vector<NamedParam> named_parameters() const;
  std::vector<nd::Tensor> parameters() const;

  // Deep copy: no storage shared with this model.
  Model clone() const;

  // Single-item conveniences, evaluated without recording a graph.
  nd::Tensor encode_text(LabelSet labels) const;
  nd::Tensor encode_image(const nd::Tensor& image, Modality modality) const;
  nd::Tensor encode_location(double lon, double lat) const;

 private:
  EncoderConfig cfg_;
  TextEncoder text_;
  VisionEncoder sar_, msi_;
  LocationEncoder location_;
};

}  // namespace closp
