#pragma once

#include <cstddef>
#include <span>

// Dense inner loops used by the autograd ops and the vector index, each as
// an OpenMP version and a serial reference. Work is split over independent
// outputs with the reference summation order, so results are bit-identical
// for any thread count.
namespace closp::nd::kernels {

enum class Exec { reference, parallel };

// Process-wide default used by the tensor ops.
Exec default_exec() noexcept;
void set_default_exec(Exec exec) noexcept;

// RAII override of the default, restored on scope exit.
class ScopedExec {
 public:
  explicit ScopedExec(Exec exec) noexcept;
  ~ScopedExec();
  ScopedExec(const ScopedExec&) = delete;
  ScopedExec& operator=(const ScopedExec&) = delete;

 private:
  Exec saved_;
};

struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t in_height = 0;
  std::size_t in_width = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_height() const {
    return (in_height + 2 * padding - kernel) / stride + 1;
  }
  std::size_t out_width() const {
    return (in_width + 2 * padding - kernel) / stride + 1;
  }
};

// c[m×n] (+)= op(a) · op(b), row-major. op(x) is x or xᵀ per the flag; a is
// stored m×k (or k×m when transposed), b is k×n (or n×k).
void gemm(Exec exec, bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate);

void conv2d_forward(Exec exec, const ConvGeometry& g,
                    std::span<const double> input,
                    std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output);

// Accumulates into grad_input.
void conv2d_backward_input(Exec exec, const ConvGeometry& g,
                           std::span<const double> grad_output,
                           std::span<const double> weight,
                           std::span<double> grad_input);

// Accumulates into grad_weight and grad_bias.
void conv2d_backward_weight(Exec exec, const ConvGeometry& g,
                            std::span<const double> grad_output,
                            std::span<const double> input,
                            std::span<double> grad_weight,
                            std::span<double> grad_bias);

// scores[r] = <rows[r], query> for an n×d row-major matrix.
void inner_products(Exec exec, std::size_t n, std::size_t d,
                    std::span<const double> rows,
                    std::span<const double> query, std::span<double> scores);

}  // namespace closp::nd::kernels
