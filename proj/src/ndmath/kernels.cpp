#include "closp/ndmath/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <vector>

namespace closp::nd::kernels {

namespace {

std::atomic<Exec> g_default{Exec::parallel};

using Index = std::int64_t;  // OpenMP loop counters must be signed

inline double read_a(std::span<const double> a, bool trans, std::size_t m,
                     std::size_t k, std::size_t i, std::size_t p) {
  return trans ? a[p * m + i] : a[i * k + p];
}

inline double read_b(std::span<const double> b, bool trans, std::size_t n,
                     std::size_t k, std::size_t p, std::size_t j) {
  return trans ? b[j * k + p] : b[p * n + j];
}

// ---------------------------------------------------------------------------
// Serial reference implementations: textbook loops, one output at a time.

void gemm_reference(bool ta, bool tb, std::size_t m, std::size_t n,
                    std::size_t k, std::span<const double> a,
                    std::span<const double> b, std::span<double> c,
                    bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        s += read_a(a, ta, m, k, i, p) * read_b(b, tb, n, k, p, j);
      }
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void conv_forward_reference(const ConvGeometry& g, std::span<const double> in,
                            std::span<const double> w,
                            std::span<const double> bias,
                            std::span<double> out) {
  const auto oh = g.out_height(), ow = g.out_width();
  const auto kk = g.kernel;
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double s = 0.0;
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ky = 0; ky < kk; ++ky)
              for (std::size_t kx = 0; kx < kk; ++kx) {
                const Index iy = Index(y * g.stride + ky) - Index(g.padding);
                const Index ix = Index(x * g.stride + kx) - Index(g.padding);
                if (iy < 0 || ix < 0 || iy >= Index(g.in_height) ||
                    ix >= Index(g.in_width))
                  continue;
                s += w[((o * g.in_channels + c) * kk + ky) * kk + kx] *
                     in[((b * g.in_channels + c) * g.in_height + iy) *
                            g.in_width +
                        ix];
              }
          out[((b * g.out_channels + o) * oh + y) * ow + x] = s + bias[o];
        }
}

void conv_backward_input_reference(const ConvGeometry& g,
                                   std::span<const double> gout,
                                   std::span<const double> w,
                                   std::span<double> gin) {
  const auto oh = g.out_height(), ow = g.out_width();
  const auto kk = g.kernel;
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          const double go = gout[((b * g.out_channels + o) * oh + y) * ow + x];
          for (std::size_t c = 0; c < g.in_channels; ++c)
            for (std::size_t ky = 0; ky < kk; ++ky)
              for (std::size_t kx = 0; kx < kk; ++kx) {
                const Index iy = Index(y * g.stride + ky) - Index(g.padding);
                const Index ix = Index(x * g.stride + kx) - Index(g.padding);
                if (iy < 0 || ix < 0 || iy >= Index(g.in_height) ||
                    ix >= Index(g.in_width))
                  continue;
                gin[((b * g.in_channels + c) * g.in_height + iy) * g.in_width +
                    ix] += go * w[((o * g.in_channels + c) * kk + ky) * kk + kx];
              }
        }
}

void conv_backward_weight_reference(const ConvGeometry& g,
                                    std::span<const double> gout,
                                    std::span<const double> in,
                                    std::span<double> gw,
                                    std::span<double> gb) {
  const auto oh = g.out_height(), ow = g.out_width();
  const auto kk = g.kernel;
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    for (std::size_t c = 0; c < g.in_channels; ++c)
      for (std::size_t ky = 0; ky < kk; ++ky)
        for (std::size_t kx = 0; kx < kk; ++kx) {
          double s = 0.0;
          for (std::size_t b = 0; b < g.batch; ++b)
            for (std::size_t y = 0; y < oh; ++y)
              for (std::size_t x = 0; x < ow; ++x) {
                const Index iy = Index(y * g.stride + ky) - Index(g.padding);
                const Index ix = Index(x * g.stride + kx) - Index(g.padding);
                if (iy < 0 || ix < 0 || iy >= Index(g.in_height) ||
                    ix >= Index(g.in_width))
                  continue;
                s += gout[((b * g.out_channels + o) * oh + y) * ow + x] *
                     in[((b * g.in_channels + c) * g.in_height + iy) *
                            g.in_width +
                        ix];
              }
          gw[((o * g.in_channels + c) * kk + ky) * kk + kx] += s;
        }
    double s = 0.0;
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x)
          s += gout[((b * g.out_channels + o) * oh + y) * ow + x];
    gb[o] += s;
  }
}

// ---------------------------------------------------------------------------
// OpenMP versions. Loops are reordered for locality but each output keeps
// the reference summation order.

void gemm_parallel(bool ta, bool tb, std::size_t m, std::size_t n,
                   std::size_t k, std::span<const double> a,
                   std::span<const double> b, std::span<double> c,
                   bool accumulate) {
#pragma omp parallel
  {
    std::vector<double> acc(n);
#pragma omp for schedule(static)
    for (Index ii = 0; ii < Index(m); ++ii) {
      const auto i = std::size_t(ii);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const double av = read_a(a, ta, m, k, i, p);
        if (tb) {
          for (std::size_t j = 0; j < n; ++j) acc[j] += av * b[j * k + p];
        } else {
          const double* brow = b.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
        }
      }
      double* crow = c.data() + i * n;
      if (accumulate) {
        for (std::size_t j = 0; j < n; ++j) crow[j] = crow[j] + acc[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] = acc[j];
      }
    }
  }
}

// Valid output range [lo, hi) along one axis for kernel tap `t`.
inline void tap_range(std::size_t t, std::size_t stride, std::size_t pad,
                      std::size_t in_extent, std::size_t out_extent,
                      std::size_t& lo, std::size_t& hi) {
  // need 0 <= y*stride + t - pad < in_extent
  lo = 0;
  if (t < pad) lo = (pad - t + stride - 1) / stride;
  const Index last = Index(in_extent) - 1 + Index(pad) - Index(t);
  hi = last < 0 ? 0 : std::min(out_extent, std::size_t(last) / stride + 1);
  if (hi < lo) hi = lo;
}

void conv_forward_parallel(const ConvGeometry& g, std::span<const double> in,
                           std::span<const double> w,
                           std::span<const double> bias,
                           std::span<double> out) {
  const auto oh = g.out_height(), ow = g.out_width();
  const auto kk = g.kernel;
  const auto plane = oh * ow;
  const Index jobs = Index(g.batch * g.out_channels);
#pragma omp parallel for schedule(static)
  for (Index job = 0; job < jobs; ++job) {
    const auto b = std::size_t(job) / g.out_channels;
    const auto o = std::size_t(job) % g.out_channels;
    double* acc = out.data() + (b * g.out_channels + o) * plane;
    std::fill(acc, acc + plane, 0.0);
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      const double* src =
          in.data() + (b * g.in_channels + c) * g.in_height * g.in_width;
      for (std::size_t ky = 0; ky < kk; ++ky) {
        std::size_t y0, y1;
        tap_range(ky, g.stride, g.padding, g.in_height, oh, y0, y1);
        for (std::size_t kx = 0; kx < kk; ++kx) {
          std::size_t x0, x1;
          tap_range(kx, g.stride, g.padding, g.in_width, ow, x0, x1);
          const double wv = w[((o * g.in_channels + c) * kk + ky) * kk + kx];
          for (std::size_t y = y0; y < y1; ++y) {
            const double* srow =
                src + (y * g.stride + ky - g.padding) * g.in_width;
            double* arow = acc + y * ow;
            for (std::size_t x = x0; x < x1; ++x) {
              arow[x] += wv * srow[x * g.stride + kx - g.padding];
            }
          }
        }
      }
    }
    for (std::size_t i = 0; i < plane; ++i) acc[i] = acc[i] + bias[o];
  }
}

void conv_backward_input_parallel(const ConvGeometry& g,
                                  std::span<const double> gout,
                                  std::span<const double> w,
                                  std::span<double> gin) {
  // Split over batch items only.
  const auto oh = g.out_height(), ow = g.out_width();
  const auto kk = g.kernel;
#pragma omp parallel for schedule(static)
  for (Index bb = 0; bb < Index(g.batch); ++bb) {
    const auto b = std::size_t(bb);
    for (std::size_t o = 0; o < g.out_channels; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          const double go = gout[((b * g.out_channels + o) * oh + y) * ow + x];
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            double* dst =
                gin.data() + (b * g.in_channels + c) * g.in_height * g.in_width;
            const double* wk = w.data() + (o * g.in_channels + c) * kk * kk;
            for (std::size_t ky = 0; ky < kk; ++ky) {
              const Index iy = Index(y * g.stride + ky) - Index(g.padding);
              if (iy < 0 || iy >= Index(g.in_height)) continue;
              for (std::size_t kx = 0; kx < kk; ++kx) {
                const Index ix = Index(x * g.stride + kx) - Index(g.padding);
                if (ix < 0 || ix >= Index(g.in_width)) continue;
                dst[iy * Index(g.in_width) + ix] += go * wk[ky * kk + kx];
              }
            }
          }
        }
  }
}

void conv_backward_weight_parallel(const ConvGeometry& g,
                                   std::span<const double> gout,
                                   std::span<const double> in,
                                   std::span<double> gw,
                                   std::span<double> gb) {
  const auto oh = g.out_height(), ow = g.out_width();
  const auto kk = g.kernel;
  const auto taps = g.in_channels * kk * kk;
  const Index jobs = Index(g.out_channels * (taps + 1));
#pragma omp parallel for schedule(static)
  for (Index job = 0; job < jobs; ++job) {
    const auto o = std::size_t(job) / (taps + 1);
    const auto t = std::size_t(job) % (taps + 1);
    if (t == taps) {
      double s = 0.0;
      for (std::size_t b = 0; b < g.batch; ++b) {
        const double* go = gout.data() + (b * g.out_channels + o) * oh * ow;
        for (std::size_t i = 0; i < oh * ow; ++i) s += go[i];
      }
      gb[o] += s;
      continue;
    }
    const auto c = t / (kk * kk);
    const auto ky = (t / kk) % kk;
    const auto kx = t % kk;
    std::size_t y0, y1, x0, x1;
    tap_range(ky, g.stride, g.padding, g.in_height, oh, y0, y1);
    tap_range(kx, g.stride, g.padding, g.in_width, ow, x0, x1);
    double s = 0.0;
    for (std::size_t b = 0; b < g.batch; ++b) {
      const double* go = gout.data() + (b * g.out_channels + o) * oh * ow;
      const double* src =
          in.data() + (b * g.in_channels + c) * g.in_height * g.in_width;
      for (std::size_t y = y0; y < y1; ++y) {
        const double* srow = src + (y * g.stride + ky - g.padding) * g.in_width;
        for (std::size_t x = x0; x < x1; ++x) {
          s += go[y * ow + x] * srow[x * g.stride + kx - g.padding];
        }
      }
    }
    gw[(o * g.in_channels + c) * kk * kk + ky * kk + kx] += s;
  }
}

}  // namespace

Exec default_exec() noexcept { return g_default.load(); }
void set_default_exec(Exec exec) noexcept { g_default.store(exec); }

ScopedExec::ScopedExec(Exec exec) noexcept : saved_(default_exec()) {
  set_default_exec(exec);
}
ScopedExec::~ScopedExec() { set_default_exec(saved_); }

void gemm(Exec exec, bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate) {
  if (exec == Exec::reference)
    gemm_reference(trans_a, trans_b, m, n, k, a, b, c, accumulate);
  else
    gemm_parallel(trans_a, trans_b, m, n, k, a, b, c, accumulate);
}

void conv2d_forward(Exec exec, const ConvGeometry& g,
                    std::span<const double> input,
                    std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output) {
  if (exec == Exec::reference)
    conv_forward_reference(g, input, weight, bias, output);
  else
    conv_forward_parallel(g, input, weight, bias, output);
}

void conv2d_backward_input(Exec exec, const ConvGeometry& g,
                           std::span<const double> grad_output,
                           std::span<const double> weight,
                           std::span<double> grad_input) {
  if (exec == Exec::reference)
    conv_backward_input_reference(g, grad_output, weight, grad_input);
  else
    conv_backward_input_parallel(g, grad_output, weight, grad_input);
}

void conv2d_backward_weight(Exec exec, const ConvGeometry& g,
                            std::span<const double> grad_output,
                            std::span<const double> input,
                            std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  if (exec == Exec::reference)
    conv_backward_weight_reference(g, grad_output, input, grad_weight,
                                   grad_bias);
  else
    conv_backward_weight_parallel(g, grad_output, input, grad_weight,
                                  grad_bias);
}

void inner_products(Exec exec, std::size_t n, std::size_t d,
                    std::span<const double> rows,
                    std::span<const double> query, std::span<double> scores) {
  if (exec == Exec::reference) {
    for (std::size_t r = 0; r < n; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += rows[r * d + j] * query[j];
      scores[r] = s;
    }
    return;
  }
#pragma omp parallel for schedule(static)
  for (Index rr = 0; rr < Index(n); ++rr) {
    const double* row = rows.data() + std::size_t(rr) * d;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += row[j] * query[j];
    scores[std::size_t(rr)] = s;
  }
}

}  // namespace closp::nd::kernels
