#include "closp/ndmath/ops.hpp"

#include <algorithm>
#include <cmath>

#include "closp/error.hpp"

namespace closp::nd {

namespace {

using NodePtr = std::shared_ptr<Node>;

Tensor make_result(Shape shape, std::vector<double> values, const char* op,
                   std::vector<NodePtr> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->op = op;
  if (!grad_enabled()) return Tensor(std::move(node));
  node->requires_grad =
      std::any_of(inputs.begin(), inputs.end(),
                  [](const NodePtr& n) { return n->requires_grad; });
  if (node->requires_grad) node->backward_fn = std::move(backward_fn);
  node->inputs = std::move(inputs);
  return Tensor(std::move(node));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got " +
                         to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, const char* op, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.size());
  const auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return make_result(a.shape(), std::move(out), op, {a.node()},
                     [deriv](Node& self) {
                       Node& x = *self.inputs[0];
                       if (!x.requires_grad) return;
                       auto& gx = x.grad_buffer();
                       for (std::size_t i = 0; i < gx.size(); ++i) {
                         gx[i] += self.grad[i] *
                                  deriv(x.values[i], self.values[i]);
                       }
                     });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ, " +
                         to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  std::vector<double> out(m * n);
  kernels::gemm(kernels::default_exec(), false, false, m, n, k, a.values(),
                b.values(), out, false);
  return make_result({m, n}, std::move(out), "matmul", {a.node(), b.node()},
                     [m, n, k](Node& self) {
                       const auto exec = kernels::default_exec();
                       Node& x = *self.inputs[0];
                       Node& y = *self.inputs[1];
                       if (x.requires_grad) {
                         kernels::gemm(exec, false, true, m, k, n, self.grad,
                                       y.values, x.grad_buffer(), true);
                       }
                       if (y.requires_grad) {
                         kernels::gemm(exec, true, false, k, n, m, x.values,
                                       self.grad, y.grad_buffer(), true);
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const auto r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  const auto in = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  return make_result({c, r}, std::move(out), "transpose", {a.node()},
                     [r, c](Node& self) {
                       Node& x = *self.inputs[0];
                       if (!x.requires_grad) return;
                       auto& gx = x.grad_buffer();
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j)
                           gx[i * c + j] += self.grad[j * r + i];
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result(a.shape(), std::move(out), "add", {a.node(), b.node()},
                     [](Node& self) {
                       for (auto& in : self.inputs) {
                         if (!in->requires_grad) continue;
                         auto& g = in->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[i];
                       }
                     });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_bias");
  require_rank(bias, 1, "add_bias");
  const auto rows = x.dim(0), cols = x.dim(1);
  if (bias.dim(0) != cols) {
    throw DimensionError("add_bias: bias " + to_string(bias.shape()) +
                         " does not match " + to_string(x.shape()));
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out[i * cols + j] = x[i * cols + j] + bias[j];
  return make_result(x.shape(), std::move(out), "add_bias",
                     {x.node(), bias.node()}, [rows, cols](Node& self) {
                       Node& xn = *self.inputs[0];
                       Node& bn = *self.inputs[1];
                       if (xn.requires_grad) {
                         auto& g = xn.grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[i];
                       }
                       if (bn.requires_grad) {
                         auto& g = bn.grad_buffer();
                         for (std::size_t i = 0; i < rows; ++i)
                           for (std::size_t j = 0; j < cols; ++j)
                             g[j] += self.grad[i * cols + j];
                       }
                     });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) {
    throw DimensionError("mul_scalar: factor must hold one element, got " +
                         to_string(s.shape()));
  }
  const double f = s[0];
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * f;
  return make_result(a.shape(), std::move(out), "mul_scalar",
                     {a.node(), s.node()}, [](Node& self) {
                       Node& x = *self.inputs[0];
                       Node& sn = *self.inputs[1];
                       if (x.requires_grad) {
                         auto& g = x.grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[i] * sn.values[0];
                       }
                       if (sn.requires_grad) {
                         double acc = 0.0;
                         for (std::size_t i = 0; i < x.values.size(); ++i)
                           acc += self.grad[i] * x.values[i];
                         sn.grad_buffer()[0] += acc;
                       }
                     });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor sin(const Tensor& a) {
  return unary(
      a, "sin", [](double v) { return std::sin(v); },
      [](double x, double) { return std::cos(x); });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double v) { return v < 0.0 ? 0.0 : v; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, "square", [](double v) { return v * v; },
      [](double x, double) { return 2.0 * x; });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_result({1}, {s}, "sum", {a.node()}, [](Node& self) {
    Node& x = *self.inputs[0];
    if (!x.requires_grad) return;
    auto& g = x.grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  const double n = static_cast<double>(a.size());
  return make_result({1}, {s / n}, "mean", {a.node()}, [n](Node& self) {
    Node& x = *self.inputs[0];
    if (!x.requires_grad) return;
    auto& g = x.grad_buffer();
    for (auto& v : g) v += self.grad[0] / n;
  });
}

namespace {

// Shared row-wise implementation; a vector is a single row.
Tensor normalize_rows_impl(const Tensor& x, std::size_t rows, std::size_t cols,
                           const char* op) {
  std::vector<double> out(x.size());
  std::vector<double> norms(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < cols; ++j) ss += x[i * cols + j] * x[i * cols + j];
    const double nrm = std::sqrt(ss);
    if (!std::isfinite(nrm)) throw NumericError(std::string(op) + ": non-finite row");
    if (!(nrm > 0.0)) {
      throw DegenerateInputError(std::string(op) +
                                 ": cannot normalise a zero-norm vector");
    }
    norms[i] = nrm;
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = x[i * cols + j] / nrm;
  }
  return make_result(
      x.shape(), std::move(out), op, {x.node()},
      [rows, cols, norms = std::move(norms)](Node& self) {
        Node& xn = *self.inputs[0];
        if (!xn.requires_grad) return;
        auto& g = xn.grad_buffer();
        // d(v/|v|) = (g - y (y.g)) / |v|
        for (std::size_t i = 0; i < rows; ++i) {
          const double* y = self.values.data() + i * cols;
          const double* gy = self.grad.data() + i * cols;
          double dot = 0.0;
          for (std::size_t j = 0; j < cols; ++j) dot += y[j] * gy[j];
          for (std::size_t j = 0; j < cols; ++j)
            g[i * cols + j] += (gy[j] - y[j] * dot) / norms[i];
        }
      });
}

Tensor log_softmax_impl(const Tensor& x, std::size_t rows, std::size_t cols,
                        const char* op) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < rows; ++i) {
    const double* r = x.values().data() + i * cols;
    const double mx = *std::max_element(r, r + cols);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += std::exp(r[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = r[j] - lse;
  }
  return make_result(x.shape(), std::move(out), op, {x.node()},
                     [rows, cols](Node& self) {
                       Node& xn = *self.inputs[0];
                       if (!xn.requires_grad) return;
                       auto& g = xn.grad_buffer();
                       for (std::size_t i = 0; i < rows; ++i) {
                         const double* y = self.values.data() + i * cols;
                         const double* gy = self.grad.data() + i * cols;
                         double gs = 0.0;
                         for (std::size_t j = 0; j < cols; ++j) gs += gy[j];
                         for (std::size_t j = 0; j < cols; ++j)
                           g[i * cols + j] += gy[j] - std::exp(y[j]) * gs;
                       }
                     });
}

}  // namespace

Tensor l2_normalize(const Tensor& v) {
  require_rank(v, 1, "l2_normalize");
  return normalize_rows_impl(v, 1, v.dim(0), "l2_normalize");
}

Tensor l2_normalize_rows(const Tensor& x) {
  require_rank(x, 2, "l2_normalize_rows");
  return normalize_rows_impl(x, x.dim(0), x.dim(1), "l2_normalize_rows");
}

Tensor log_softmax_row(const Tensor& logits) {
  if (!logits.defined()) throw DimensionError("log_softmax_row: empty row");
  require_rank(logits, 1, "log_softmax_row");
  return log_softmax_impl(logits, 1, logits.dim(0), "log_softmax_row");
}

Tensor log_softmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "log_softmax_rows");
  return log_softmax_impl(logits, logits.dim(0), logits.dim(1),
                          "log_softmax_rows");
}

Tensor diagonal(const Tensor& m) {
  require_rank(m, 2, "diagonal");
  const auto n = m.dim(0);
  if (m.dim(1) != n) {
    throw DimensionError("diagonal: matrix is not square " +
                         to_string(m.shape()));
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = m[i * n + i];
  return make_result({n}, std::move(out), "diagonal", {m.node()},
                     [n](Node& self) {
                       Node& x = *self.inputs[0];
                       if (!x.requires_grad) return;
                       auto& g = x.grad_buffer();
                       for (std::size_t i = 0; i < n; ++i)
                         g[i * n + i] += self.grad[i];
                     });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "concat_rows");
  require_rank(b, 2, "concat_rows");
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError("concat_rows: column mismatch " +
                         to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  const auto split = a.size();
  return make_result({a.dim(0) + b.dim(0), a.dim(1)}, std::move(out),
                     "concat_rows", {a.node(), b.node()},
                     [split](Node& self) {
                       Node& x = *self.inputs[0];
                       Node& y = *self.inputs[1];
                       if (x.requires_grad) {
                         auto& g = x.grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[i];
                       }
                       if (y.requires_grad) {
                         auto& g = y.grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[split + i];
                       }
                     });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank(x, 2, "gather_rows");
  if (rows.empty()) throw DimensionError("gather_rows: no rows requested");
  const auto cols = x.dim(1);
  std::vector<double> out(rows.size() * cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.dim(0)) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[i]) +
                           " out of range for " + to_string(x.shape()));
    }
    std::copy_n(x.values().data() + rows[i] * cols, cols,
                out.data() + i * cols);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_result({rows.size(), cols}, std::move(out), "gather_rows",
                     {x.node()}, [cols, idx = std::move(idx)](Node& self) {
                       Node& xn = *self.inputs[0];
                       if (!xn.requires_grad) return;
                       auto& g = xn.grad_buffer();
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t j = 0; j < cols; ++j)
                           g[idx[i] * cols + j] += self.grad[i * cols + j];
                     });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
  require_rank(x, 4, "conv2d");
  require_rank(weight, 4, "conv2d");
  require_rank(bias, 1, "conv2d");
  kernels::ConvGeometry g;
  g.batch = x.dim(0);
  g.in_channels = x.dim(1);
  g.in_height = x.dim(2);
  g.in_width = x.dim(3);
  g.out_channels = weight.dim(0);
  g.kernel = weight.dim(2);
  g.stride = stride;
  g.padding = padding;
  if (weight.dim(1) != g.in_channels || weight.dim(3) != g.kernel ||
      bias.dim(0) != g.out_channels || stride == 0 ||
      g.in_height + 2 * padding < g.kernel ||
      g.in_width + 2 * padding < g.kernel) {
    throw DimensionError("conv2d: incompatible input " + to_string(x.shape()) +
                         " and weight " + to_string(weight.shape()));
  }
  Shape out_shape{g.batch, g.out_channels, g.out_height(), g.out_width()};
  std::vector<double> out(numel(out_shape));
  kernels::conv2d_forward(kernels::default_exec(), g, x.values(),
                          weight.values(), bias.values(), out);
  return make_result(std::move(out_shape), std::move(out), "conv2d",
                     {x.node(), weight.node(), bias.node()}, [g](Node& self) {
                       const auto exec = kernels::default_exec();
                       Node& xn = *self.inputs[0];
                       Node& wn = *self.inputs[1];
                       Node& bn = *self.inputs[2];
                       if (xn.requires_grad) {
                         kernels::conv2d_backward_input(exec, g, self.grad,
                                                        wn.values,
                                                        xn.grad_buffer());
                       }
                       if (wn.requires_grad || bn.requires_grad) {
                         std::vector<double> gw(wn.values.size(), 0.0);
                         std::vector<double> gb(bn.values.size(), 0.0);
                         kernels::conv2d_backward_weight(exec, g, self.grad,
                                                         xn.values, gw, gb);
                         if (wn.requires_grad) {
                           auto& dst = wn.grad_buffer();
                           for (std::size_t i = 0; i < gw.size(); ++i)
                             dst[i] += gw[i];
                         }
                         if (bn.requires_grad) {
                           auto& dst = bn.grad_buffer();
                           for (std::size_t i = 0; i < gb.size(); ++i)
                             dst[i] += gb[i];
                         }
                       }
                     });
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool");
  const auto b = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  std::vector<double> out(b * c);
  for (std::size_t i = 0; i < b * c; ++i) {
    double s = 0.0;
    for (std::size_t p = 0; p < plane; ++p) s += x[i * plane + p];
    out[i] = s / static_cast<double>(plane);
  }
  return make_result({b, c}, std::move(out), "global_avg_pool", {x.node()},
                     [b, c, plane](Node& self) {
                       Node& xn = *self.inputs[0];
                       if (!xn.requires_grad) return;
                       auto& g = xn.grad_buffer();
                       const double inv = 1.0 / static_cast<double>(plane);
                       for (std::size_t i = 0; i < b * c; ++i)
                         for (std::size_t p = 0; p < plane; ++p)
                           g[i * plane + p] += self.grad[i] * inv;
                     });
}

GradCheckResult grad_check(const std::function<Tensor()>& f,
                           std::span<Tensor> params, double eps,
                           std::size_t max_coords) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw DomainError("grad_check: eps must lie in (0, 1e-2]");
  }
  auto evaluate = [&f]() {
    const double v = f().item();
    if (!std::isfinite(v)) {
      throw NumericError("grad_check: objective evaluated to a non-finite value");
    }
    return v;
  };

  const Tensor loss = f();
  if (!std::isfinite(loss.item())) {
    throw NumericError("grad_check: objective evaluated to a non-finite value");
  }
  backward(loss, params);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    analytic.emplace_back(p.grad().begin(), p.grad().end());
  }

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].mutable_values();
    const std::size_t n = values.size();
    const std::size_t probes = (max_coords == 0 || max_coords >= n) ? n : max_coords;
    for (std::size_t t = 0; t < probes; ++t) {
      const std::size_t i = probes == n ? t : (t * n) / probes;
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = evaluate();
      values[i] = saved - eps;
      const double down = evaluate();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      if (std::isnan(rel) || rel > result.max_rel_error) result.max_rel_error = rel;
      ++result.coords_checked;
    }
  }
  return result;
}

}  // namespace closp::nd
