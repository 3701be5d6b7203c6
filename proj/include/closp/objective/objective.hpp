#pragma once

#include "closp/ndmath/tensor.hpp"

namespace closp {

// Learnable temperature, parameterised as log τ.
class Temperature {
 public:
  static constexpr double kInitialTau = 0.07;

  Temperature();
  explicit Temperature(double tau);

  double tau() const;
  const nd::Tensor& log_tau() const { return log_tau_; }
  Temperature clone() const;

 private:
  nd::Tensor log_tau_;
};

// Rows of img/txt/loc are the per-item embeddings of one batch.
struct BatchEmbeddings {
  nd::Tensor img;
  nd::Tensor txt;
  nd::Tensor loc;  // optional

  std::size_t size() const { return img.defined() ? img.dim(0) : 0; }
  bool has_location() const { return loc.defined(); }
  // Throws ContractError unless shapes agree and every row is unit norm
  // within 1e-6.
  void validate() const;
};

// Symmetric cross-entropy over one similarity-logit matrix whose diagonal
// holds the positives: mean of the row-anchored and column-anchored terms.
nd::Tensor symmetric_cross_entropy(const nd::Tensor& logits);

// Image-text objective: (L_img + L_txt) / 2 with logits i·t / τ.
nd::Tensor contrastive_loss(const BatchEmbeddings& batch, const Temperature& temp);

// α·(L_img + L_txt)/2 + (1 - α)·(L_loc + L_iloc)/2, one shared τ. L_loc
// anchors each location against all images, L_iloc each image against all
// locations.
nd::Tensor geo_loss(const BatchEmbeddings& batch, const Temperature& temp,
                    double alpha);

}  // namespace closp
