#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "closp/ndmath/kernels.hpp"
#include "closp/ndmath/tensor.hpp"

namespace closp::nd {

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_bias(const Tensor& x, const Tensor& bias);  // x[N×F] + bias[F]
Tensor scale(const Tensor& a, double factor);
Tensor mul_scalar(const Tensor& a, const Tensor& s);  // s has one element
Tensor exp(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Normalisation and softmax. The 1-D forms act on a vector, the *_rows forms
// on every row of a matrix.
Tensor l2_normalize(const Tensor& v);
Tensor l2_normalize_rows(const Tensor& x);
Tensor log_softmax_row(const Tensor& logits);
Tensor log_softmax_rows(const Tensor& logits);

// Indexing.
Tensor diagonal(const Tensor& square_matrix);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

// Convolution over x[B×C×H×W] with w[O×C×k×k], bias[O].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding);
Tensor global_avg_pool(const Tensor& x);  // [B×C×H×W] -> [B×C]

// Central-difference check of the analytic gradient of a scalar function of
// `params`. Returns max over all coordinates of
// |analytic - numeric| / max(1, |analytic|). With max_coords > 0 only that
// many evenly spaced coordinates per parameter are probed.
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
};

GradCheckResult grad_check(const std::function<Tensor()>& f,
                           std::span<Tensor> params, double eps,
                           std::size_t max_coords = 0);

}  // namespace closp::nd
