#include "wsss/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "wsss/error.hpp"

namespace wsss {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

using detail::Node;

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

bool wants(const Node& self, std::size_t i) {
  return self.parents[i]->requires_grad;
}

std::vector<double>& pgrad(Node& self, std::size_t i) {
  return self.parents[i]->grad_buffer();
}

// outer x n x inner decomposition around an axis.
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <typename F, typename D>
Tensor unary(const Tensor& x, F f, D dfdx_from_xy) {
  const auto xv = x.values();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  return make_result(x.shape(), std::move(y), {x}, [dfdx_from_xy](Node& self) {
    if (!wants(self, 0)) return;
    const auto& xs = self.parents[0]->values;
    auto& g = pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * dfdx_from_xy(xs[i], self.values[i]);
    }
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  MapMat(out.data(), m, n).noalias() =
      ConstMapMat(a.values().data(), m, k) * ConstMapMat(b.values().data(), k, n);
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    ConstMapMat dc(self.grad.data(), m, n);
    if (wants(self, 0)) {
      ConstMapMat bm(self.parents[1]->values.data(), k, n);
      MapMat(pgrad(self, 0).data(), m, k).noalias() += dc * bm.transpose();
    }
    if (wants(self, 1)) {
      ConstMapMat am(self.parents[0]->values.data(), m, k);
      MapMat(pgrad(self, 1).data(), k, n).noalias() += am.transpose() * dc;
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  const auto av = a.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_result({n, m}, std::move(out), {a}, [m, n](Node& self) {
    if (!wants(self, 0)) return;
    auto& g = pgrad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!wants(self, p)) continue;
      auto& g = pgrad(self, p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (wants(self, 0)) {
      auto& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      auto& g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.parents[0]->values;
    const auto& bv = self.parents[1]->values;
    if (wants(self, 0)) {
      auto& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (wants(self, 1)) {
      auto& g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      a, [value](double x) { return x + value; },
      [](double, double) { return 1.0; });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_rank(a, 2, "add_row");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (row.numel() != n) {
    throw ShapeError("add_row: row " + shape_str(row.shape()) +
                     " does not match " + shape_str(a.shape()));
  }
  const auto av = a.values(), rv = row.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] + rv[j];
  return make_result({m, n}, std::move(out), {a, row}, [m, n](Node& self) {
    if (wants(self, 0)) {
      auto& g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      auto& g = pgrad(self, 1);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) +
               v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(std::max(v, kLogClamp)); },
      [](double v, double) { return v < kLogClamp ? 0.0 : 1.0 / v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lo > hi");
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v < lo || v > hi) ? 0.0 : 1.0; });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "softmax");
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      double mx = xv[base];
      for (std::size_t j = 1; j < s.n; ++j) mx = std::max(mx, xv[base + j * s.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) {
        const double e = std::exp(xv[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.n; ++j) out[base + j * s.inner] /= total;
    }
  }
  return make_result(x.shape(), std::move(out), {x}, [s](Node& self) {
    if (!wants(self, 0)) return;
    auto& g = pgrad(self, 0);
    const auto& y = self.values;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.n * s.inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < s.n; ++j) {
          const std::size_t idx = base + j * s.inner;
          dot += self.grad[idx] * y[idx];
        }
        for (std::size_t j = 0; j < s.n; ++j) {
          const std::size_t idx = base + j * s.inner;
          g[idx] += y[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) {
    const Shape& ps = p.shape();
    bool ok = ps.size() == first.size();
    for (std::size_t d = 0; ok && d < ps.size(); ++d) {
      if (d != axis && ps[d] != first[d]) ok = false;
    }
    if (!ok) {
      throw ShapeError("concat: incompatible operands " + shape_str(first) +
                       " and " + shape_str(ps));
    }
    out_shape[axis] += ps[axis];
  }
  const AxisSplit s = split_axis(out_shape, axis, "concat");
  for (const Tensor& p : parts) widths.push_back(p.shape()[axis] * s.inner);
  const std::size_t row = s.n * s.inner;
  std::vector<double> out(s.outer * row);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto pv = parts[p].values();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pv.begin() + o * widths[p], widths[p],
                  out.begin() + o * row + offset);
    }
    offset += widths[p];
  }
  return make_result(out_shape, std::move(out), parts, [s, widths, row](Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      if (wants(self, p)) {
        auto& g = pgrad(self, p);
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t j = 0; j < widths[p]; ++j)
            g[o * widths[p] + j] += self.grad[o * row + offset + j];
      }
      offset += widths[p];
    }
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t length) {
  const AxisSplit s = split_axis(x.shape(), axis, "slice");
  if (length == 0 || start + length > s.n) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") out of bounds for " +
                     shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  const std::size_t in_row = s.n * s.inner, out_row = length * s.inner;
  const std::size_t off = start * s.inner;
  const auto xv = x.values();
  std::vector<double> out(s.outer * out_row);
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(xv.begin() + o * in_row + off, out_row, out.begin() + o * out_row);
  return make_result(out_shape, std::move(out), {x},
                     [s, in_row, out_row, off](Node& self) {
                       if (!wants(self, 0)) return;
                       auto& g = pgrad(self, 0);
                       for (std::size_t o = 0; o < s.outer; ++o)
                         for (std::size_t j = 0; j < out_row; ++j)
                           g[o * in_row + off + j] += self.grad[o * out_row + j];
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  const auto xv = x.values();
  return make_result(std::move(shape), std::vector<double>(xv.begin(), xv.end()),
                     {x}, [](Node& self) {
                       if (!wants(self, 0)) return;
                       auto& g = pgrad(self, 0);
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                     });
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  require_rank(x, 2, "gather_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (rows.empty()) throw ShapeError("gather_rows: empty index list");
  const auto xv = x.values();
  std::vector<double> out(rows.size() * n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= m) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[r]) +
                       " out of range for " + shape_str(x.shape()));
    }
    std::copy_n(xv.begin() + rows[r] * n, n, out.begin() + r * n);
  }
  return make_result({rows.size(), n}, std::move(out), {x}, [rows, n](Node& self) {
    if (!wants(self, 0)) return;
    auto& g = pgrad(self, 0);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) g[rows[r] * n + j] += self.grad[r * n + j];
  });
}

Tensor take(const Tensor& x, const std::vector<std::size_t>& flat, Shape shape) {
  if (shape_numel(shape) != flat.size()) {
    throw ShapeError("take: " + std::to_string(flat.size()) +
                     " indices do not fill " + shape_str(shape));
  }
  const auto xv = x.values();
  std::vector<double> out(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (flat[i] >= xv.size()) throw ShapeError("take: index out of range");
    out[i] = xv[flat[i]];
  }
  return make_result(std::move(shape), std::move(out), {x}, [flat](Node& self) {
    if (!wants(self, 0)) return;
    auto& g = pgrad(self, 0);
    for (std::size_t i = 0; i < flat.size(); ++i) g[flat[i]] += self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result({1}, {total}, {x}, [](Node& self) {
    if (!wants(self, 0)) return;
    auto& g = pgrad(self, 0);
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result({1}, {total / n}, {x}, [n](Node& self) {
    if (!wants(self, 0)) return;
    auto& g = pgrad(self, 0);
    for (double& v : g) v += self.grad[0] / n;
  });
}

namespace {

Tensor reduce_axis(const Tensor& x, std::size_t axis, bool average) {
  const AxisSplit s = split_axis(x.shape(), axis, average ? "mean_axis" : "sum_axis");
  Shape out_shape;
  for (std::size_t d = 0; d < x.rank(); ++d)
    if (d != axis) out_shape.push_back(x.shape()[d]);
  if (out_shape.empty()) out_shape.push_back(1);
  const auto xv = x.values();
  const double n = static_cast<double>(s.n);
  std::vector<double> out(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      double total = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) total += xv[(o * s.n + j) * s.inner + in];
      out[o * s.inner + in] = average ? total / n : total;
    }
  }
  return make_result(out_shape, std::move(out), {x}, [s, n, average](Node& self) {
    if (!wants(self, 0)) return;
    auto& g = pgrad(self, 0);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t in = 0; in < s.inner; ++in) {
        const double d = average ? self.grad[o * s.inner + in] / n
                                 : self.grad[o * s.inner + in];
        for (std::size_t j = 0; j < s.n; ++j) g[(o * s.n + j) * s.inner + in] += d;
      }
  });
}

}  // namespace

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  return reduce_axis(x, axis, false);
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  return reduce_axis(x, axis, true);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (gamma.numel() != n || beta.numel() != n) {
    throw ShapeError("layer_norm: affine parameters do not match " +
                     shape_str(x.shape()));
  }
  const auto xv = x.values(), gv = gamma.values(), bv = beta.values();
  std::vector<double> out(m * n);
  // Normalised activations and inverse stddev kept for the backward rule.
  std::vector<double> xhat(m * n), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xv[i * n + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (xv[i * n + j] - mu) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * gv[j] + bv[j];
    }
  }
  return make_result(
      {m, n}, std::move(out), {x, gamma, beta},
      [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const auto& gv = self.parents[1]->values;
        if (wants(self, 1)) {
          auto& g = pgrad(self, 1);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
              g[j] += self.grad[i * n + j] * xhat[i * n + j];
        }
        if (wants(self, 2)) {
          auto& g = pgrad(self, 2);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
        }
        if (wants(self, 0)) {
          auto& g = pgrad(self, 0);
          const double nn = static_cast<double>(n);
          for (std::size_t i = 0; i < m; ++i) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dy = self.grad[i * n + j] * gv[j];
              sum_dy += dy;
              sum_dy_xhat += dy * xhat[i * n + j];
            }
            for (std::size_t j = 0; j < n; ++j) {
              const double dy = self.grad[i * n + j] * gv[j];
              g[i * n + j] += inv_std[i] *
                              (dy - sum_dy / nn - xhat[i * n + j] * sum_dy_xhat / nn);
            }
          }
        }
      });
}

}  // namespace wsss
