#include "closp/objective/objective.hpp"

#include <cmath>
#include <string>

#include "closp/error.hpp"
#include "closp/ndmath/ops.hpp"

namespace closp {

using nd::Tensor;

Temperature::Temperature() : Temperature(kInitialTau) {}

Temperature::Temperature(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw DomainError("temperature must be positive and finite");
  }
  log_tau_ = Tensor::scalar(std::log(tau), true);
}

double Temperature::tau() const { return std::exp(log_tau_.item()); }

Temperature Temperature::clone() const {
  Temperature t;
  t.log_tau_ = log_tau_.clone();
  return t;
}

namespace {

void check_rows(const Tensor& t, const char* what, std::size_t n, std::size_t d) {
  if (t.rank() != 2 || t.dim(0) != n || t.dim(1) != d) {
    throw ContractError(std::string("batch ") + what + " has shape " +
                        nd::to_string(t.shape()) + ", expected [" +
                        std::to_string(n) + "x" + std::to_string(d) + "]");
  }
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += t.at(r, j) * t.at(r, j);
    if (std::abs(std::sqrt(s) - 1.0) > 1e-6) {
      throw ContractError(std::string("batch ") + what + " row " +
                          std::to_string(r) + " is not unit norm");
    }
  }
}

// Logits a·bᵀ / τ.
Tensor scaled_similarity(const Tensor& a, const Tensor& b, const Temperature& temp) {
  auto inv_tau = nd::exp(nd::scale(temp.log_tau(), -1.0));
  return nd::mul_scalar(nd::matmul(a, nd::transpose(b)), inv_tau);
}

}  // namespace

void BatchEmbeddings::validate() const {
  if (!img.defined() || !txt.defined()) {
    throw ContractError("batch must hold at least one item");
  }
  if (img.rank() != 2) throw ContractError("batch images must be a matrix");
  const auto n = img.dim(0), d = img.dim(1);
  check_rows(img, "img", n, d);
  check_rows(txt, "txt", n, d);
  if (loc.defined()) check_rows(loc, "loc", n, d);
}

Tensor symmetric_cross_entropy(const Tensor& logits) {
  auto row_term = nd::mean(nd::diagonal(nd::log_softmax_rows(logits)));
  auto col_term =
      nd::mean(nd::diagonal(nd::log_softmax_rows(nd::transpose(logits))));
  return nd::scale(nd::add(row_term, col_term), -0.5);
}

Tensor contrastive_loss(const BatchEmbeddings& batch, const Temperature& temp) {
  batch.validate();
  return symmetric_cross_entropy(scaled_similarity(batch.img, batch.txt, temp));
}

Tensor geo_loss(const BatchEmbeddings& batch, const Temperature& temp,
                double alpha) {
  if (!batch.has_location()) {
    throw ContractError("geo_loss requires location embeddings");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw DomainError("alpha must lie in [0, 1]");
  }
  batch.validate();
  auto semantic = symmetric_cross_entropy(scaled_similarity(batch.img, batch.txt, temp));
  // Rows of I·Lᵀ anchor images over locations (L_iloc); its transpose
  // anchors locations over images (L_loc).
  auto geographic = symmetric_cross_entropy(scaled_similarity(batch.img, batch.loc, temp));
  return nd::add(nd::scale(semantic, alpha), nd::scale(geographic, 1.0 - alpha));
}

}  // namespace closp
