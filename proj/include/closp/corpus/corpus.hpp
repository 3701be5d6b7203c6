#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "closp/encoders/encoders.hpp"
#include "closp/encoders/vocabulary.hpp"
#include "closp/ndmath/tensor.hpp"
#include "closp/util/config.hpp"

namespace closp {

enum class Crisis : std::uint8_t { wildfire, flood, earthquake };

std::string_view crisis_name(Crisis c);
Crisis parse_crisis(std::string_view text);  // throws DataError
Label crisis_label(Crisis c);

struct CorpusItem {
  std::uint64_t id = 0;
  Modality modality = Modality::sar;
  nd::Tensor image;  // [C x H x H]
  LabelSet labels;
  double lon = 0.0;
  double lat = 0.0;
  std::optional<Crisis> crisis;
  std::string source;

  // Throws DataError when an item invariant is broken.
  void validate() const;
};

using Corpus = std::vector<CorpusItem>;

// Bernoulli inclusion probability of each label inside one climate band.
struct ZonePrior {
  std::string name;
  double min_abs_lat;  // band is [min_abs_lat, max_abs_lat)
  double max_abs_lat;
  std::array<double, kNumLabels> p;
};

struct Hotspot {
  std::string name;
  double lon;
  double lat;
};

struct LabelPriors {
  std::vector<ZonePrior> zones;
  std::array<Hotspot, 6> seismic_hotspots;
  double hotspot_radius_deg;
  double p_flood;
  double p_wildfire;
  double p_earthquake;
  double max_abs_lat;  // sampled locations stay within this band

  // The shipped constants.
  static const LabelPriors& standard();
  const ZonePrior& zone_for(double lat) const;
};

struct GeneratorConfig {
  std::size_t sar_count = 1000;
  std::size_t msi_count = 1000;
  std::size_t image_side = 24;
  std::size_t max_labels = 5;
  double sar_looks = 3.0;       // speckle ~ Gamma(looks, 1/looks)
  double sar_texture = 0.35;    // amplitude of the per-label SAR grating
  double msi_noise_sd = 0.015;
  double tint_amplitude = 0.25;  // smooth geographic colouring
  LabelPriors priors = LabelPriors::standard();

  // key=value rendering of the scalar fields; priors are not configurable.
  std::string to_text() const;
};

GeneratorConfig parse_generator_config(std::span<const ConfigEntry> entries,
                                       std::string_view source);

struct CorpusSummary {
  std::array<std::size_t, kNumLabels> label_counts{};
  std::size_t sar = 0;
  std::size_t msi = 0;
};

// Items 0..sar_count-1 are SAR, the rest MSI.
Corpus generate_synthetic_corpus(const GeneratorConfig& config, std::uint64_t seed);

CorpusSummary summarize(std::span<const CorpusItem> corpus);

// Noise-free per-label, per-channel signature that the generator paints
// into a label's share of the image.
std::span<const double> label_signature(Modality m, Label l);

}  // namespace closp
