#include "closp/corpus/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "closp/error.hpp"
#include "closp/util/rng.hpp"

namespace closp {

namespace {

constexpr std::uint64_t kSignatureSeed = 0x5EED'C105'0000'0001ull;
constexpr double kDeg = std::numbers::pi / 180.0;

struct Texture {
  double kx, ky;
};

struct Signatures {
  std::array<std::array<double, 2>, kNumLabels> sar{};
  std::array<std::array<double, 12>, kNumLabels> msi{};
  std::array<Texture, kNumLabels> sar_texture{};
  std::array<std::array<double, 4>, 12> tint{};  // channel x sphere feature
};

const Signatures& signatures() {
  static const Signatures s = [] {
    Signatures out;
    std::mt19937_64 rng(kSignatureSeed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> sym(-1.0, 1.0);
    for (auto& row : out.sar)
      for (auto& v : row) v = 0.2 + 1.2 * unit(rng);
    for (auto& row : out.msi)
      for (auto& v : row) v = unit(rng);
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      // Distinct (kx, ky) lattice directions per label.
      const double freq = 1.0 + double(l % 4);
      const double angle = std::numbers::pi * double(l) / double(kNumLabels);
      out.sar_texture[l] = {freq * std::cos(angle), freq * std::sin(angle)};
    }
    for (auto& row : out.tint)
      for (auto& v : row) v = sym(rng);
    return out;
  }();
  return s;
}

// Smooth low-order functions of position on the unit sphere.
std::array<double, 4> sphere_features(double lon, double lat) {
  const double x = std::cos(lat * kDeg) * std::cos(lon * kDeg);
  const double y = std::cos(lat * kDeg) * std::sin(lon * kDeg);
  const double z = std::sin(lat * kDeg);
  return {x, y, z, x * z};
}

LabelPriors make_standard_priors() {
  LabelPriors p;
  //                      trees crops shrub water grass built fveg  bare  snow
  p.zones = {
      {"tropical", 0.0, 15.0, {0.42, 0.245, 0.14, 0.21, 0.14, 0.14, 0.21, 0.056, 0.0}},
      {"arid", 15.0, 35.0, {0.07, 0.175, 0.315, 0.084, 0.14, 0.175, 0.035, 0.455, 0.0}},
      {"temperate", 35.0, 55.0, {0.315, 0.385, 0.105, 0.21, 0.315, 0.245, 0.056, 0.07, 0.0}},
      {"polar", 55.0, 90.01, {0.21, 0.028, 0.245, 0.28, 0.14, 0.028, 0.105, 0.245, 0.455}},
  };
  p.seismic_hotspots = {{
      {"anatolia", 37.0, 37.2},
      {"tohoku", 142.4, 38.3},
      {"himalaya", 84.7, 28.2},
      {"hispaniola", -72.5, 18.5},
      {"maule", -72.9, -36.1},
      {"apennines", 13.4, 42.3},
  }};
  p.hotspot_radius_deg = 1.5;
  p.p_flood = 0.10;
  p.p_wildfire = 0.08;
  p.p_earthquake = 0.06;
  p.max_abs_lat = 75.0;
  return p;
}

LabelSet draw_labels(const ZonePrior& zone, std::optional<Crisis> crisis,
                     std::size_t max_labels, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  LabelSet set;
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    const auto label = LabelVocabulary::at(l);
    double p = zone.p[l];
    if (label == Label::built && crisis == Crisis::earthquake) p = std::max(p, 0.7);
    if (p > 0.0 && unit(rng) < p) set.insert(label);
  }
  std::optional<Label> forced;
  if (crisis) {
    forced = crisis_label(*crisis);
    set.insert(*forced);
  }
  if (set.empty()) {
    std::vector<double> w(zone.p.begin(), zone.p.end());
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    set.insert(LabelVocabulary::at(pick(rng)));
  }
  while (set.size() > max_labels) {
    auto present = set.labels();
    if (forced) std::erase(present, *forced);
    std::uniform_int_distribution<std::size_t> idx(0, present.size() - 1);
    set.erase(present[idx(rng)]);
  }
  return set;
}

nd::Tensor paint_image(const GeneratorConfig& cfg, Modality m, LabelSet labels,
                       double lon, double lat, std::mt19937_64& rng) {
  const auto& sig = signatures();
  const std::size_t c_count = channel_count(m);
  const std::size_t h = cfg.image_side;
  const auto present = labels.labels();
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Soft land-cover fractions from one Gaussian blob per label.
  std::vector<double> frac(present.size() * h * h);
  for (std::size_t k = 0; k < present.size(); ++k) {
    const double cx = unit(rng) * double(h), cy = unit(rng) * double(h);
    const double sigma = double(h) * (1.0 / 6.0 + unit(rng) / 3.0);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < h; ++x) {
        const double dx = double(x) - cx, dy = double(y) - cy;
        frac[(k * h + y) * h + x] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) + 0.05;
      }
  }
  for (std::size_t p = 0; p < h * h; ++p) {
    double s = 0.0;
    for (std::size_t k = 0; k < present.size(); ++k) s += frac[k * h * h + p];
    for (std::size_t k = 0; k < present.size(); ++k) frac[k * h * h + p] /= s;
  }

  const auto geo = sphere_features(lon, lat);
  std::vector<double> img(c_count * h * h);
  std::gamma_distribution<double> speckle(cfg.sar_looks, 1.0 / cfg.sar_looks);
  std::normal_distribution<double> noise(0.0, cfg.msi_noise_sd);
  const double phase = 2 * std::numbers::pi * unit(rng);

  for (std::size_t c = 0; c < c_count; ++c) {
    double tint = 0.0;
    for (std::size_t f = 0; f < geo.size(); ++f) tint += sig.tint[c][f] * geo[f];
    tint *= cfg.tint_amplitude;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < h; ++x) {
        const std::size_t p = y * h + x;
        double v = tint;
        for (std::size_t k = 0; k < present.size(); ++k) {
          const auto l = LabelVocabulary::index(present[k]);
          double s;
          if (m == Modality::sar) {
            const auto& t = sig.sar_texture[l];
            const double arg = 2 * std::numbers::pi * (t.kx * double(x) + t.ky * double(y)) / double(h);
            s = sig.sar[l][c] + cfg.sar_texture * std::cos(arg + phase);
          } else {
            s = sig.msi[l][c];
          }
          v += frac[k * h * h + p] * s;
        }
        if (m == Modality::sar) {
          v = std::max(0.4 + v, 0.05) * speckle(rng);
        } else {
          v += noise(rng);
        }
        img[c * h * h + p] = v;
      }
  }
  return nd::Tensor::from({c_count, h, h}, std::move(img));
}

}  // namespace

std::string_view crisis_name(Crisis c) {
  switch (c) {
    case Crisis::wildfire: return "wildfire";
    case Crisis::flood: return "flood";
    case Crisis::earthquake: return "earthquake";
  }
  return "?";
}

Crisis parse_crisis(std::string_view text) {
  if (text == "wildfire") return Crisis::wildfire;
  if (text == "flood") return Crisis::flood;
  if (text == "earthquake") return Crisis::earthquake;
  throw DataError("unknown crisis tag '" + std::string(text) + "'");
}

Label crisis_label(Crisis c) {
  switch (c) {
    case Crisis::wildfire: return Label::burned_area;
    case Crisis::flood: return Label::flooded_area;
    case Crisis::earthquake: return Label::earthquake_damage;
  }
  return Label::flooded_area;
}

void CorpusItem::validate() const {
  const auto where = "item " + std::to_string(id) + ": ";
  if (!image.defined() || image.rank() != 3 || image.dim(0) != channel_count(modality) ||
      image.dim(1) != image.dim(2)) {
    throw DataError(where + "image shape does not match modality " +
                    std::string(modality_name(modality)));
  }
  if (labels.empty()) throw DataError(where + "empty label set");
  if (crisis && !labels.contains(crisis_label(*crisis))) {
    throw DataError(where + "crisis tag without its label");
  }
  if (!(lon >= -180.0 && lon <= 180.0 && lat >= -90.0 && lat <= 90.0)) {
    throw DataError(where + "coordinates out of range");
  }
}

const LabelPriors& LabelPriors::standard() {
  static const LabelPriors p = make_standard_priors();
  return p;
}

const ZonePrior& LabelPriors::zone_for(double lat) const {
  const double a = std::abs(lat);
  for (const auto& z : zones) {
    if (a >= z.min_abs_lat && a < z.max_abs_lat) return z;
  }
  throw DomainError("no climate zone covers latitude " + std::to_string(lat));
}

std::span<const double> label_signature(Modality m, Label l) {
  const auto i = LabelVocabulary::index(l);
  if (m == Modality::sar) return signatures().sar[i];
  return signatures().msi[i];
}

std::string GeneratorConfig::to_text() const {
  std::ostringstream os;
  os << "sar_count=" << sar_count << '\n'
     << "msi_count=" << msi_count << '\n'
     << "image_side=" << image_side << '\n'
     << "max_labels=" << max_labels << '\n'
     << "sar_looks=" << format_real(sar_looks) << '\n'
     << "sar_texture=" << format_real(sar_texture) << '\n'
     << "msi_noise_sd=" << format_real(msi_noise_sd) << '\n'
     << "tint_amplitude=" << format_real(tint_amplitude) << '\n';
  return os.str();
}

GeneratorConfig parse_generator_config(std::span<const ConfigEntry> entries,
                                       std::string_view source) {
  GeneratorConfig g;
  for (const auto& e : entries) {
    const auto& k = e.key;
    if (k == "sar_count") g.sar_count = config_uint(e, source);
    else if (k == "msi_count") g.msi_count = config_uint(e, source);
    else if (k == "image_side") g.image_side = config_uint(e, source);
    else if (k == "max_labels") g.max_labels = config_uint(e, source);
    else if (k == "sar_looks") g.sar_looks = config_real(e, source);
    else if (k == "sar_texture") g.sar_texture = config_real(e, source);
    else if (k == "msi_noise_sd") g.msi_noise_sd = config_real(e, source);
    else if (k == "tint_amplitude") g.tint_amplitude = config_real(e, source);
    else config_fail(e, source, "unknown key");
  }
  return g;
}

Corpus generate_synthetic_corpus(const GeneratorConfig& cfg, std::uint64_t seed) {
  if (cfg.sar_count + cfg.msi_count == 0) {
    throw ContractError("corpus must contain at least one item");
  }
  if (cfg.image_side < 8) throw ContractError("image_side must be >= 8");
  if (cfg.max_labels < 1) throw ContractError("max_labels must be >= 1");
  if (!(cfg.sar_looks > 0.0)) throw ContractError("sar_looks must be > 0");
  if (!(cfg.msi_noise_sd >= 0.0)) throw ContractError("msi_noise_sd must be >= 0");
  const auto& pri = cfg.priors;
  const std::uint64_t stream = SeedSequence(seed).derive("generator");

  Corpus out;
  out.reserve(cfg.sar_count + cfg.msi_count);
  const double sin_max = std::sin(pri.max_abs_lat * kDeg);
  for (std::size_t id = 0; id < cfg.sar_count + cfg.msi_count; ++id) {
    std::mt19937_64 rng(splitmix64(stream ^ splitmix64(id)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    CorpusItem item;
    item.id = id;
    item.modality = id < cfg.sar_count ? Modality::sar : Modality::msi;

    const double u = unit(rng);
    if (u < pri.p_earthquake) {
      item.crisis = Crisis::earthquake;
    } else if (u < pri.p_earthquake + pri.p_flood) {
      item.crisis = Crisis::flood;
    } else if (u < pri.p_earthquake + pri.p_flood + pri.p_wildfire) {
      item.crisis = Crisis::wildfire;
    }

    if (item.crisis == Crisis::earthquake) {
      std::uniform_int_distribution<std::size_t> which(0, pri.seismic_hotspots.size() - 1);
      const auto& hs = pri.seismic_hotspots[which(rng)];
      std::uniform_real_distribution<double> jitter(-pri.hotspot_radius_deg, pri.hotspot_radius_deg);
      item.lon = hs.lon + jitter(rng);
      item.lat = hs.lat + jitter(rng);
    } else {
      item.lon = -180.0 + 360.0 * unit(rng);
      item.lat = std::asin((2.0 * unit(rng) - 1.0) * sin_max) / kDeg;
    }

    const auto& zone = pri.zone_for(item.lat);
    item.labels = draw_labels(zone, item.crisis, cfg.max_labels, rng);
    item.image = paint_image(cfg, item.modality, item.labels, item.lon, item.lat, rng);
    item.source = "synthetic/" + std::string(modality_name(item.modality)) + "/" + zone.name;
    out.push_back(std::move(item));
  }
  return out;
}

CorpusSummary summarize(std::span<const CorpusItem> corpus) {
  CorpusSummary s;
  for (const auto& item : corpus) {
    (item.modality == Modality::sar ? s.sar : s.msi)++;
    for (auto l : item.labels.labels()) s.label_counts[LabelVocabulary::index(l)]++;
  }
  return s;
}

}  // namespace closp
