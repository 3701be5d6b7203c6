#include "closp/encoders/encoders.hpp"

#include <cmath>
#include <map>
#include <random>

#include "closp/encoders/spherical_harmonics.hpp"
#include "closp/error.hpp"
#include "closp/ndmath/ops.hpp"
#include "closp/util/rng.hpp"

namespace closp {

using nd::Shape;
using nd::Tensor;

namespace {

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(nd::numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }

}  // namespace

std::string_view modality_name(Modality m) {
  return m == Modality::sar ? "sar" : "msi";
}

Modality parse_modality(std::string_view text) {
  if (text == "sar" || text == "SAR") return Modality::sar;
  if (text == "msi" || text == "MSI") return Modality::msi;
  throw DataError("unknown modality '" + std::string(text) + "'");
}

void EncoderConfig::validate() const {
  if (embed_dim < 2) throw ContractError("embed_dim must be >= 2");
  if (image_side < 8) throw ContractError("image_side must be >= 8");
  if (sh_degree < 0 || sh_degree > 10) {
    throw ContractError("sh_degree must lie in [0, 10]");
  }
  if (siren_layers < 1) throw ContractError("siren_layers must be >= 1");
  if (!(siren_omega0 > 0.0)) throw ContractError("siren_omega0 must be positive");
  if (text_hidden < 1 || siren_hidden < 1) {
    throw ContractError("hidden widths must be positive");
  }
}

// ---------------------------------------------------------------------------

TextEncoder::TextEncoder(const EncoderConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto h = cfg.text_hidden;
  embed_ = uniform({kNumLabels, h}, 1.0, rng);
  w1_ = uniform({h, h}, std::sqrt(6.0 / double(h)), rng);
  b1_ = zeros_param({h});
  w2_ = uniform({h, cfg.embed_dim}, std::sqrt(3.0 / double(h)), rng);
  b2_ = zeros_param({cfg.embed_dim});
}

Tensor TextEncoder::forward(std::span<const LabelSet> sets) const {
  if (sets.empty()) throw ContractError("encode_text: no label sets given");
  std::vector<double> pool(sets.size() * kNumLabels, 0.0);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (sets[i].empty()) throw ContractError("encode_text: empty label set");
    const double w = 1.0 / double(sets[i].size());
    for (auto l : sets[i].labels()) {
      pool[i * kNumLabels + LabelVocabulary::index(l)] = w;
    }
  }
  auto weights = Tensor::from({sets.size(), kNumLabels}, std::move(pool));
  auto pooled = nd::matmul(weights, embed_);
  auto hidden = nd::relu(nd::add_bias(nd::matmul(pooled, w1_), b1_));
  return nd::l2_normalize_rows(nd::add_bias(nd::matmul(hidden, w2_), b2_));
}

void TextEncoder::collect(std::vector<NamedParam>& out) const {
  out.push_back({"text.embed", embed_});
  out.push_back({"text.fc1.weight", w1_});
  out.push_back({"text.fc1.bias", b1_});
  out.push_back({"text.fc2.weight", w2_});
  out.push_back({"text.fc2.bias", b2_});
}

// ---------------------------------------------------------------------------

VisionEncoder::VisionEncoder(const EncoderConfig& cfg, Modality modality,
                             std::uint64_t seed)
    : modality_(modality), side_(cfg.image_side) {
  std::mt19937_64 rng(seed);
  const auto c = channel_count(modality);
  const auto d = cfg.embed_dim;
  auto he = [](std::size_t fan_in) { return std::sqrt(6.0 / double(fan_in)); };
  c1w_ = uniform({16, c, 3, 3}, he(c * 9), rng);
  c1b_ = zeros_param({16});
  c2w_ = uniform({32, 16, 3, 3}, he(16 * 9), rng);
  c2b_ = zeros_param({32});
  c3w_ = uniform({d, 32, 3, 3}, he(32 * 9), rng);
  c3b_ = zeros_param({d});
  hw_ = uniform({d, d}, std::sqrt(3.0 / double(d)), rng);
  hb_ = zeros_param({d});
}

Tensor VisionEncoder::forward(const Tensor& images) const {
  const auto c = channel_count(modality_);
  if (images.rank() != 4 || images.dim(1) != c || images.dim(2) != side_ ||
      images.dim(3) != side_) {
    throw ShapeError("encode_image: " + std::string(modality_name(modality_)) +
                     " expects [B x " + std::to_string(c) + " x " +
                     std::to_string(side_) + " x " + std::to_string(side_) +
                     "], got " + nd::to_string(images.shape()));
  }
  auto x = nd::relu(nd::conv2d(images, c1w_, c1b_, 2, 1));
  x = nd::relu(nd::conv2d(x, c2w_, c2b_, 2, 1));
  x = nd::relu(nd::conv2d(x, c3w_, c3b_, 2, 1));
  auto pooled = nd::global_avg_pool(x);
  return nd::l2_normalize_rows(nd::add_bias(nd::matmul(pooled, hw_), hb_));
}

void VisionEncoder::collect(std::vector<NamedParam>& out) const {
  const std::string p = std::string(modality_name(modality_)) + ".";
  out.push_back({p + "conv1.weight", c1w_});
  out.push_back({p + "conv1.bias", c1b_});
  out.push_back({p + "conv2.weight", c2w_});
  out.push_back({p + "conv2.bias", c2b_});
  out.push_back({p + "conv3.weight", c3w_});
  out.push_back({p + "conv3.bias", c3b_});
  out.push_back({p + "head.weight", hw_});
  out.push_back({p + "head.bias", hb_});
}

// ---------------------------------------------------------------------------

LocationEncoder::LocationEncoder(const EncoderConfig& cfg, std::uint64_t seed)
    : degree_(cfg.sh_degree),
      omega0_(cfg.siren_omega0),
      calls_(std::make_shared<std::atomic<std::size_t>>(0)) {
  std::mt19937_64 rng(seed);
  std::size_t fan_in = cfg.sh_width();
  for (std::size_t layer = 0; layer < cfg.siren_layers; ++layer) {
    // First layer: U(-1/fan_in, 1/fan_in), scaled by ω0 at the activation.
    // Hidden layers: U(-sqrt(6/fan_in)/ω0, +sqrt(6/fan_in)/ω0).
    const double bound = layer == 0 ? 1.0 / double(fan_in)
                                    : std::sqrt(6.0 / double(fan_in)) / omega0_;
    weights_.push_back(uniform({fan_in, cfg.siren_hidden}, bound, rng));
    biases_.push_back(uniform({cfg.siren_hidden}, bound, rng));
    fan_in = cfg.siren_hidden;
  }
  const double bound = std::sqrt(6.0 / double(fan_in)) / omega0_;
  out_w_ = uniform({fan_in, cfg.embed_dim}, bound, rng);
  out_b_ = zeros_param({cfg.embed_dim});
}

Tensor LocationEncoder::sh_features(std::span<const GeoPoint> points) const {
  if (points.empty()) throw ContractError("encode_location: no points given");
  const auto width = std::size_t(sh_feature_count(degree_));
  std::vector<double> feats;
  feats.reserve(points.size() * width);
  for (const auto& p : points) {
    auto f = sh_encode(p.lon, p.lat, degree_);
    feats.insert(feats.end(), f.begin(), f.end());
  }
  return Tensor::from({points.size(), width}, std::move(feats));
}

Tensor LocationEncoder::first_layer_preactivations(
    std::span<const GeoPoint> points) const {
  nd::NoGradGuard guard;
  return nd::scale(nd::add_bias(nd::matmul(sh_features(points), weights_[0]),
                                biases_[0]),
                   omega0_);
}

Tensor LocationEncoder::forward(std::span<const GeoPoint> points) const {
  calls_->fetch_add(1);
  auto x = sh_features(points);
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    x = nd::sin(
        nd::scale(nd::add_bias(nd::matmul(x, weights_[i]), biases_[i]), omega0_));
  }
  return nd::l2_normalize_rows(nd::add_bias(nd::matmul(x, out_w_), out_b_));
}

void LocationEncoder::collect(std::vector<NamedParam>& out) const {
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.push_back({"location.siren" + std::to_string(i) + ".weight", weights_[i]});
    out.push_back({"location.siren" + std::to_string(i) + ".bias", biases_[i]});
  }
  out.push_back({"location.out.weight", out_w_});
  out.push_back({"location.out.bias", out_b_});
}

// ---------------------------------------------------------------------------

Model Model::init(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SeedSequence seeds(seed);
  Model m;
  m.cfg_ = cfg;
  m.text_ = TextEncoder(cfg, seeds.derive("text"));
  m.sar_ = VisionEncoder(cfg, Modality::sar, seeds.derive("sar"));
  m.msi_ = VisionEncoder(cfg, Modality::msi, seeds.derive("msi"));
  m.location_ = LocationEncoder(cfg, seeds.derive("location"));
  return m;
}

std::vector<NamedParam> Model::named_parameters() const {
  std::vector<NamedParam> out;
  text_.collect(out);
  sar_.collect(out);
  msi_.collect(out);
  location_.collect(out);
  return out;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (auto& p : named_parameters()) out.push_back(p.tensor);
  return out;
}

Model Model::clone() const {
  Model m = init(cfg_, 0);
  auto src = named_parameters();
  auto dst = m.named_parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto v = src[i].tensor.values();
    auto d = dst[i].tensor.mutable_values();
    std::copy(v.begin(), v.end(), d.begin());
  }
  return m;
}

Tensor Model::encode_text(LabelSet labels) const {
  nd::NoGradGuard guard;
  const LabelSet one[] = {labels};
  auto rows = text_.forward(one);
  return Tensor::from({cfg_.embed_dim}, {rows.values().begin(), rows.values().end()});
}

Tensor Model::encode_image(const Tensor& image, Modality modality) const {
  nd::NoGradGuard guard;
  if (image.rank() != 3) {
    throw ShapeError("encode_image expects [C x H x H], got " +
                     nd::to_string(image.shape()));
  }
  auto batch = Tensor::from({1, image.dim(0), image.dim(1), image.dim(2)},
                            {image.values().begin(), image.values().end()});
  auto rows = vision(modality).forward(batch);
  return Tensor::from({cfg_.embed_dim}, {rows.values().begin(), rows.values().end()});
}

Tensor Model::encode_location(double lon, double lat) const {
  nd::NoGradGuard guard;
  const GeoPoint one[] = {{lon, lat}};
  auto rows = location_.forward(one);
  return Tensor::from({cfg_.embed_dim}, {rows.values().begin(), rows.values().end()});
}

}  // namespace closp
