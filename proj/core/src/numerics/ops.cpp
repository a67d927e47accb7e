#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "trinity/error.hpp"
#include "trinity/numerics/tensor.hpp"

namespace trinity::nn {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                               Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

// Builds an output node. The node joins the tape only when recording is on
// and some parent requires grad; `fn` is attached in that case.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<NodePtr> parents,
                   std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return Tensor(std::move(node));
}

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw ContractViolation(std::string(op) + ": undefined operand");
  }
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw ContractViolation(std::string(op) + ": incompatible shapes " +
                          shape_str(a) + " and " + shape_str(b));
}

// --- broadcasting -----------------------------------------------------------

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) shape_error(op, a, b);
    out[i] = std::max(da, db);
  }
  return out;
}

// Flat index into `in` for every flat index of `out`. Empty when `in`
// already has the output shape.
std::vector<std::size_t> broadcast_map(const Shape& out, const Shape& in) {
  if (in == out) return {};
  const std::size_t n = shape_numel(out);
  std::vector<std::size_t> map(n);
  const std::size_t r = out.size();
  std::vector<std::size_t> in_stride(r, 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t axis = in.size() - 1 - k;
    const std::size_t oaxis = r - 1 - k;
    in_stride[oaxis] = in[axis] == 1 ? 0 : stride;
    stride *= in[axis];
  }
  std::vector<std::size_t> idx(r, 0);
  std::size_t flat_in = 0;
  for (std::size_t i = 0; i < n; ++i) {
    map[i] = flat_in;
    for (std::size_t ax = r; ax-- > 0;) {
      ++idx[ax];
      flat_in += in_stride[ax];
      if (idx[ax] < out[ax]) break;
      flat_in -= in_stride[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return map;
}

template <typename Fwd, typename DA, typename DB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd,
                 DA da, DB db) {
  check_defined(a, name);
  check_defined(b, name);
  Shape out_shape = broadcast_shape(name, a.shape(), b.shape());
  auto map_a = broadcast_map(out_shape, a.shape());
  auto map_b = broadcast_map(out_shape, b.shape());
  const std::size_t n = shape_numel(out_shape);
  const auto& xa = a.node()->data;
  const auto& xb = b.node()->data;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double va = xa[map_a.empty() ? i : map_a[i]];
    const double vb = xb[map_b.empty() ? i : map_b[i]];
    out[i] = fwd(va, vb);
  }
  NodePtr pa = a.node_ptr();
  NodePtr pb = b.node_ptr();
  return make_result(
      std::move(out_shape), std::move(out), {pa, pb},
      [pa, pb, map_a = std::move(map_a), map_b = std::move(map_b), da,
       db](Node& self) {
        const std::size_t n = self.data.size();
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t ia = map_a.empty() ? i : map_a[i];
          const std::size_t ib = map_b.empty() ? i : map_b[i];
          const double g = self.grad[i];
          if (pa->requires_grad) {
            pa->grad[ia] += g * da(pa->data[ia], pb->data[ib], self.data[i]);
          }
          if (pb->requires_grad) {
            pb->grad[ib] += g * db(pa->data[ia], pb->data[ib], self.data[i]);
          }
        }
      });
}

template <typename Fwd, typename Deriv>
Tensor unary_op(const char* name, const Tensor& a, Fwd fwd, Deriv deriv) {
  check_defined(a, name);
  const auto& x = a.node()->data;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  NodePtr pa = a.node_ptr();
  return make_result(a.shape(), std::move(out), {pa}, [pa, deriv](Node& self) {
    for (std::size_t i = 0; i < self.data.size(); ++i) {
      pa->grad[i] += self.grad[i] * deriv(pa->data[i], self.data[i]);
    }
  });
}

// Splits a shape into (outer rows, last-axis length).
std::pair<std::size_t, std::size_t> rows_cols(const char* op, const Tensor& t) {
  if (t.rank() == 0) {
    throw ContractViolation(std::string(op) + ": requires rank >= 1");
  }
  const std::size_t cols = t.shape().back();
  return {cols == 0 ? 0 : t.numel() / cols, cols};
}

}  // namespace

// --- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_op(
      "scale", a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary_op(
      "add_scalar", a, [value](double x) { return x + value; },
      [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor exp(const Tensor& a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary_op(
      "square", a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  // Exact form x * Phi(x).
  constexpr double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary_op(
      "gelu", a,
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [inv_sqrt_2pi](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      "sigmoid", a,
      [](double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                        : std::exp(x) / (1.0 + std::exp(x));
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

// --- reductions -------------------------------------------------------------

Tensor sum(const Tensor& a) {
  check_defined(a, "sum");
  double s = 0.0;
  for (double v : a.data()) s += v;
  NodePtr pa = a.node_ptr();
  return make_result({}, {s}, {pa}, [pa](Node& self) {
    const double g = self.grad[0];
    for (double& v : pa->grad) v += g;
  });
}

Tensor mean(const Tensor& a) {
  check_defined(a, "mean");
  if (a.numel() == 0) throw ContractViolation("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

// --- last-axis normalizations -----------------------------------------------

Tensor softmax(const Tensor& a) {
  check_defined(a, "softmax");
  auto [rows, cols] = rows_cols("softmax", a);
  const auto& x = a.node()->data;
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) o[c] /= z;
  }
  NodePtr pa = a.node_ptr();
  return make_result(a.shape(), std::move(out), {pa},
                     [pa, rows, cols](Node& self) {
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* y = self.data.data() + r * cols;
                         const double* g = self.grad.data() + r * cols;
                         double dot = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) dot += y[c] * g[c];
                         double* dx = pa->grad.data() + r * cols;
                         for (std::size_t c = 0; c < cols; ++c) {
                           dx[c] += y[c] * (g[c] - dot);
                         }
                       }
                     });
}

Tensor log_softmax(const Tensor& a) {
  check_defined(a, "log_softmax");
  auto [rows, cols] = rows_cols("log_softmax", a);
  const auto& x = a.node()->data;
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(in[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) o[c] = in[c] - lse;
  }
  NodePtr pa = a.node_ptr();
  return make_result(a.shape(), std::move(out), {pa},
                     [pa, rows, cols](Node& self) {
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* y = self.data.data() + r * cols;
                         const double* g = self.grad.data() + r * cols;
                         double gs = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) gs += g[c];
                         double* dx = pa->grad.data() + r * cols;
                         for (std::size_t c = 0; c < cols; ++c) {
                           dx[c] += g[c] - std::exp(y[c]) * gs;
                         }
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  check_defined(x, "layer_norm");
  auto [rows, cols] = rows_cols("layer_norm", x);
  if (gamma.shape() != Shape{cols} || beta.shape() != Shape{cols}) {
    shape_error("layer_norm", x.shape(), gamma.shape());
  }
  const auto& in = x.node()->data;
  const auto& g = gamma.node()->data;
  const auto& b = beta.node()->data;
  std::vector<double> out(in.size());
  std::vector<double> xhat(in.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* v = in.data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += v[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (v[c] - mu) * (v[c] - mu);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (v[c] - mu) * is;
      xhat[r * cols + c] = h;
      out[r * cols + c] = h * g[c] + b[c];
    }
  }
  NodePtr px = x.node_ptr(), pg = gamma.node_ptr(), pb = beta.node_ptr();
  return make_result(
      x.shape(), std::move(out), {px, pg, pb},
      [px, pg, pb, rows, cols, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Node& self) {
        const double n = static_cast<double>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* dy = self.grad.data() + r * cols;
          const double* h = xhat.data() + r * cols;
          if (pg->requires_grad || pb->requires_grad) {
            for (std::size_t c = 0; c < cols; ++c) {
              if (pg->requires_grad) pg->grad[c] += dy[c] * h[c];
              if (pb->requires_grad) pb->grad[c] += dy[c];
            }
          }
          if (!px->requires_grad) continue;
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            const double dh = dy[c] * pg->data[c];
            s1 += dh;
            s2 += dh * h[c];
          }
          double* dx = px->grad.data() + r * cols;
          for (std::size_t c = 0; c < cols; ++c) {
            const double dh = dy[c] * pg->data[c];
            dx[c] += inv_std[r] * (dh - s1 / n - h[c] * s2 / n);
          }
        }
      });
}

Tensor l2_normalize(const Tensor& x, double eps) {
  check_defined(x, "l2_normalize");
  auto [rows, cols] = rows_cols("l2_normalize", x);
  const auto& in = x.node()->data;
  std::vector<double> out(in.size());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* v = in.data() + r * cols;
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += v[c] * v[c];
    const double nrm = std::max(std::sqrt(s), eps);
    norms[r] = nrm;
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = v[c] / nrm;
  }
  NodePtr px = x.node_ptr();
  return make_result(x.shape(), std::move(out), {px},
                     [px, rows, cols, norms = std::move(norms)](Node& self) {
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* y = self.data.data() + r * cols;
                         const double* g = self.grad.data() + r * cols;
                         double dot = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) dot += y[c] * g[c];
                         double* dx = px->grad.data() + r * cols;
                         for (std::size_t c = 0; c < cols; ++c) {
                           dx[c] += (g[c] - y[c] * dot) / norms[r];
                         }
                       }
                     });
}

// --- contractions -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) shape_error("matmul", sa, sb);
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa.back();
  const std::size_t kb = sb[sb.size() - 2];
  const std::size_t n = sb.back();
  if (k != kb) shape_error("matmul", sa, sb);
  const bool shared_b = sb.size() == 2;
  if (!shared_b) {
    if (sa.size() != sb.size() ||
        !std::equal(sa.begin(), sa.end() - 2, sb.begin())) {
      shape_error("matmul", sa, sb);
    }
  }
  const std::size_t batch = shape_numel(Shape(sa.begin(), sa.end() - 2));
  Shape out_shape(sa.begin(), sa.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);

  std::vector<double> out(batch * m * n);
  const double* xa = a.node()->data.data();
  const double* xb = b.node()->data.data();
  if (shared_b) {
    // Fold the batch into the row dimension.
    Map(out.data(), static_cast<Eigen::Index>(batch * m), n).noalias() =
        MapC(xa, static_cast<Eigen::Index>(batch * m), k) * MapC(xb, k, n);
  } else {
    for (std::size_t t = 0; t < batch; ++t) {
      Map(out.data() + t * m * n, m, n).noalias() =
          MapC(xa + t * m * k, m, k) * MapC(xb + t * k * n, k, n);
    }
  }
  NodePtr pa = a.node_ptr(), pb = b.node_ptr();
  return make_result(
      std::move(out_shape), std::move(out), {pa, pb},
      [pa, pb, batch, m, k, n, shared_b](Node& self) {
        const double* g = self.grad.data();
        if (shared_b) {
          const auto rows = static_cast<Eigen::Index>(batch * m);
          MapC gm(g, rows, n);
          if (pa->requires_grad) {
            Map(pa->grad.data(), rows, k).noalias() +=
                gm * MapC(pb->data.data(), k, n).transpose();
          }
          if (pb->requires_grad) {
            Map(pb->grad.data(), k, n).noalias() +=
                MapC(pa->data.data(), rows, k).transpose() * gm;
          }
          return;
        }
        for (std::size_t t = 0; t < batch; ++t) {
          MapC gm(g + t * m * n, m, n);
          if (pa->requires_grad) {
            Map(pa->grad.data() + t * m * k, m, k).noalias() +=
                gm * MapC(pb->data.data() + t * k * n, k, n).transpose();
          }
          if (pb->requires_grad) {
            Map(pb->grad.data() + t * k * n, k, n).noalias() +=
                MapC(pa->data.data() + t * m * k, m, k).transpose() * gm;
          }
        }
      });
}

namespace {

struct ConvGeometry {
  std::size_t cin, h, w, kh, kw, stride, pad, hout, wout;
};

// cols: [cin*kh*kw, hout*wout]
void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const std::size_t plane = g.hout * g.wout;
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = cols + ((c * g.kh + ki) * g.kw + kj) * plane;
        for (std::size_t oy = 0; oy < g.hout; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) -
                          static_cast<long>(g.pad);
          double* dst = row + oy * g.wout;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.wout, 0.0);
            continue;
          }
          const double* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wout; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) -
                            static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w))
                          ? 0.0
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* dx) {
  const std::size_t plane = g.hout * g.wout;
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = cols + ((c * g.kh + ki) * g.kw + kj) * plane;
        for (std::size_t oy = 0; oy < g.hout; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) -
                          static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          double* dst = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const double* src = row + oy * g.wout;
          for (std::size_t ox = 0; ox < g.wout; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) -
                            static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) {
              dst[static_cast<std::size_t>(ix)] += src[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
  check_defined(x, "conv2d");
  check_defined(weight, "conv2d");
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  if (sx.size() != 4 || sw.size() != 4 || sw[1] != sx[1]) {
    shape_error("conv2d", sx, sw);
  }
  if (stride == 0) throw ContractViolation("conv2d: stride must be positive");
  const std::size_t batch = sx[0];
  const std::size_t cout = sw[0];
  ConvGeometry g{sx[1], sx[2], sx[3], sw[2], sw[3], stride, padding, 0, 0};
  if (g.h + 2 * padding < g.kh || g.w + 2 * padding < g.kw) {
    shape_error("conv2d", sx, sw);
  }
  g.hout = (g.h + 2 * padding - g.kh) / stride + 1;
  g.wout = (g.w + 2 * padding - g.kw) / stride + 1;
  if (bias.defined() && bias.shape() != Shape{cout}) {
    shape_error("conv2d", sw, bias.shape());
  }
  const std::size_t krows = g.cin * g.kh * g.kw;
  const std::size_t plane = g.hout * g.wout;
  std::vector<double> cols(krows * plane);
  std::vector<double> out(batch * cout * plane);
  const double* xd = x.node()->data.data();
  const double* wd = weight.node()->data.data();
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(xd + b * g.cin * g.h * g.w, g, cols.data());
    Map o(out.data() + b * cout * plane, cout, plane);
    o.noalias() = MapC(wd, cout, krows) * MapC(cols.data(), krows, plane);
    if (bias.defined()) {
      const double* bd = bias.node()->data.data();
      for (std::size_t c = 0; c < cout; ++c) o.row(c).array() += bd[c];
    }
  }
  NodePtr px = x.node_ptr(), pw = weight.node_ptr();
  NodePtr pb = bias.defined() ? bias.node_ptr() : nullptr;
  std::vector<NodePtr> parents{px, pw};
  if (pb) parents.push_back(pb);
  return make_result(
      {batch, cout, g.hout, g.wout}, std::move(out), std::move(parents),
      [px, pw, pb, g, batch, cout, krows, plane](Node& self) {
        std::vector<double> cols(krows * plane);
        std::vector<double> dcols(krows * plane);
        for (std::size_t b = 0; b < batch; ++b) {
          MapC dy(self.grad.data() + b * cout * plane, cout, plane);
          if (pb && pb->requires_grad) {
            // Plain accumulate: Eigen's vectorized redux peels to an aligned
            // address, which makes the sum depend on where the buffer landed.
            const double* row = self.grad.data() + b * cout * plane;
            for (std::size_t c = 0; c < cout; ++c) {
              pb->grad[c] += std::accumulate(row + c * plane, row + (c + 1) * plane, 0.0);
            }
          }
          if (pw->requires_grad) {
            im2col(px->data.data() + b * g.cin * g.h * g.w, g, cols.data());
            Map(pw->grad.data(), cout, krows).noalias() +=
                dy * MapC(cols.data(), krows, plane).transpose();
          }
          if (px->requires_grad) {
            Map(dcols.data(), krows, plane).noalias() =
                MapC(pw->data.data(), cout, krows).transpose() * dy;
            col2im_add(dcols.data(), g, px->grad.data() + b * g.cin * g.h * g.w);
          }
        }
      });
}

Tensor max_pool2d(const Tensor& x, std::size_t window) {
  check_defined(x, "max_pool2d");
  const Shape& s = x.shape();
  if (s.size() != 4 || window == 0 || s[2] % window || s[3] % window) {
    throw ContractViolation("max_pool2d: window " + std::to_string(window) +
                            " does not tile shape " + shape_str(s));
  }
  const std::size_t planes = s[0] * s[1];
  const std::size_t h = s[2], w = s[3], ho = h / window, wo = w / window;
  const auto& in = x.node()->data;
  std::vector<double> out(planes * ho * wo);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t i =
                (p * h + oy * window + dy) * w + ox * window + dx;
            if (in[i] > best) {
              best = in[i];
              best_i = i;
            }
          }
        }
        const std::size_t o = (p * ho + oy) * wo + ox;
        out[o] = best;
        argmax[o] = best_i;
      }
    }
  }
  NodePtr px = x.node_ptr();
  return make_result({s[0], s[1], ho, wo}, std::move(out), {px},
                     [px, argmax = std::move(argmax)](Node& self) {
                       for (std::size_t o = 0; o < argmax.size(); ++o) {
                         px->grad[argmax[o]] += self.grad[o];
                       }
                     });
}

Tensor upsample_nearest2d(const Tensor& x, std::size_t factor) {
  check_defined(x, "upsample_nearest2d");
  const Shape& s = x.shape();
  if (s.size() != 4 || factor == 0) {
    throw ContractViolation("upsample_nearest2d: bad input shape " +
                            shape_str(s));
  }
  const std::size_t planes = s[0] * s[1];
  const std::size_t h = s[2], w = s[3], ho = h * factor, wo = w * factor;
  const auto& in = x.node()->data;
  std::vector<double> out(planes * ho * wo);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        out[(p * ho + oy) * wo + ox] = in[(p * h + oy / factor) * w + ox / factor];
      }
    }
  }
  NodePtr px = x.node_ptr();
  return make_result({s[0], s[1], ho, wo}, std::move(out), {px},
                     [px, planes, h, w, ho, wo, factor](Node& self) {
                       for (std::size_t p = 0; p < planes; ++p) {
                         for (std::size_t oy = 0; oy < ho; ++oy) {
                           for (std::size_t ox = 0; ox < wo; ++ox) {
                             px->grad[(p * h + oy / factor) * w + ox / factor] +=
                                 self.grad[(p * ho + oy) * wo + ox];
                           }
                         }
                       }
                     });
}

// --- layout -----------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  check_defined(a, "reshape");
  if (shape_numel(shape) != a.numel()) shape_error("reshape", a.shape(), shape);
  NodePtr pa = a.node_ptr();
  return make_result(std::move(shape), a.node()->data, {pa}, [pa](Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& order) {
  check_defined(a, "permute");
  const Shape& s = a.shape();
  const std::size_t r = s.size();
  if (order.size() != r) {
    throw ContractViolation("permute: order rank mismatch for shape " +
                            shape_str(s));
  }
  std::vector<bool> seen(r, false);
  for (std::size_t o : order) {
    if (o >= r || seen[o]) throw ContractViolation("permute: invalid order");
    seen[o] = true;
  }
  Shape out_shape(r);
  std::vector<std::size_t> in_stride(r);
  std::size_t st = 1;
  for (std::size_t i = r; i-- > 0;) {
    in_stride[i] = st;
    st *= s[i];
  }
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = s[order[i]];
    src_stride[i] = in_stride[order[i]];
  }
  const std::size_t n = a.numel();
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < n; ++i) {
    map[i] = src;
    for (std::size_t ax = r; ax-- > 0;) {
      ++idx[ax];
      src += src_stride[ax];
      if (idx[ax] < out_shape[ax]) break;
      src -= src_stride[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  const auto& in = a.node()->data;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = in[map[i]];
  NodePtr pa = a.node_ptr();
  return make_result(std::move(out_shape), std::move(out), {pa},
                     [pa, map = std::move(map)](Node& self) {
                       for (std::size_t i = 0; i < map.size(); ++i) {
                         pa->grad[map[i]] += self.grad[i];
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rank();
  if (r < 2) throw ContractViolation("transpose: requires rank >= 2");
  std::vector<std::size_t> order(r);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::swap(order[r - 1], order[r - 2]);
  return permute(a, order);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractViolation("concat: no operands");
  for (const auto& p : parts) check_defined(p, "concat");
  const Shape& s0 = parts[0].shape();
  const int r = static_cast<int>(s0.size());
  const int ax = axis < 0 ? axis + r : axis;
  if (ax < 0 || ax >= r) throw ContractViolation("concat: axis out of range");
  const auto uax = static_cast<std::size_t>(ax);
  Shape out_shape = s0;
  out_shape[uax] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) shape_error("concat", s0, s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != uax && s[i] != s0[i]) shape_error("concat", s0, s);
    }
    out_shape[uax] += s[uax];
  }
  const std::size_t outer = shape_numel(Shape(s0.begin(), s0.begin() + ax));
  const std::size_t inner = shape_numel(Shape(s0.begin() + ax + 1, s0.end()));
  const std::size_t out_block = out_shape[uax] * inner;
  std::vector<double> out(outer * out_block);
  std::vector<NodePtr> parents;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t block = p.shape()[uax] * inner;
    const auto& d = p.node()->data;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(d.data() + o * block, block, out.data() + o * out_block + off);
    }
    parents.push_back(p.node_ptr());
    offsets.push_back(off);
    off += block;
  }
  std::vector<NodePtr> captured = parents;
  return make_result(
      std::move(out_shape), std::move(out), std::move(parents),
      [captured = std::move(captured), offsets = std::move(offsets), outer,
       out_block](Node& self) {
        for (std::size_t i = 0; i < captured.size(); ++i) {
          Node& p = *captured[i];
          if (!p.requires_grad) continue;
          const std::size_t block = p.data.size() / outer;
          for (std::size_t o = 0; o < outer; ++o) {
            const double* g = self.grad.data() + o * out_block + offsets[i];
            double* dst = p.grad.data() + o * block;
            for (std::size_t j = 0; j < block; ++j) dst[j] += g[j];
          }
        }
      });
}

Tensor slice(const Tensor& a, int axis, std::size_t start, std::size_t length) {
  check_defined(a, "slice");
  const Shape& s = a.shape();
  const int r = static_cast<int>(s.size());
  const int ax = axis < 0 ? axis + r : axis;
  if (ax < 0 || ax >= r) throw ContractViolation("slice: axis out of range");
  const auto uax = static_cast<std::size_t>(ax);
  if (start + length > s[uax]) {
    throw ContractViolation("slice: range [" + std::to_string(start) + ", " +
                            std::to_string(start + length) +
                            ") exceeds extent of shape " + shape_str(s));
  }
  const std::size_t outer = shape_numel(Shape(s.begin(), s.begin() + ax));
  const std::size_t inner = shape_numel(Shape(s.begin() + ax + 1, s.end()));
  const std::size_t in_block = s[uax] * inner;
  const std::size_t out_block = length * inner;
  Shape out_shape = s;
  out_shape[uax] = length;
  const auto& in = a.node()->data;
  std::vector<double> out(outer * out_block);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(in.data() + o * in_block + start * inner, out_block,
                out.data() + o * out_block);
  }
  NodePtr pa = a.node_ptr();
  return make_result(std::move(out_shape), std::move(out), {pa},
                     [pa, outer, in_block, out_block, start, inner](Node& self) {
                       for (std::size_t o = 0; o < outer; ++o) {
                         const double* g = self.grad.data() + o * out_block;
                         double* dst =
                             pa->grad.data() + o * in_block + start * inner;
                         for (std::size_t j = 0; j < out_block; ++j) dst[j] += g[j];
                       }
                     });
}

Tensor diagonal(const Tensor& a) {
  check_defined(a, "diagonal");
  const Shape& s = a.shape();
  if (s.size() < 2 || s[s.size() - 1] != s[s.size() - 2]) {
    throw ContractViolation("diagonal: expects [..., n, n], got " +
                            shape_str(s));
  }
  const std::size_t n = s.back();
  const std::size_t batch = n == 0 ? 0 : a.numel() / (n * n);
  Shape out_shape(s.begin(), s.end() - 1);
  const auto& in = a.node()->data;
  std::vector<double> out(batch * n);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < n; ++i) out[b * n + i] = in[(b * n + i) * n + i];
  }
  NodePtr pa = a.node_ptr();
  return make_result(std::move(out_shape), std::move(out), {pa},
                     [pa, batch, n](Node& self) {
                       for (std::size_t b = 0; b < batch; ++b) {
                         for (std::size_t i = 0; i < n; ++i) {
                           pa->grad[(b * n + i) * n + i] += self.grad[b * n + i];
                         }
                       }
                     });
}

Tensor embedding(const Tensor& table, const std::vector<std::size_t>& indices,
                 Shape index_shape) {
  check_defined(table, "embedding");
  if (table.rank() != 2) {
    throw ContractViolation("embedding: table must be [V, E], got " +
                            shape_str(table.shape()));
  }
  if (shape_numel(index_shape) != indices.size()) {
    throw ContractViolation("embedding: index shape " + shape_str(index_shape) +
                            " does not match " + std::to_string(indices.size()) +
                            " indices");
  }
  const std::size_t vocab = table.dim(0);
  const std::size_t width = table.dim(1);
  const auto& t = table.node()->data;
  std::vector<double> out(indices.size() * width);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= vocab) {
      throw ContractViolation("embedding: index " + std::to_string(indices[i]) +
                              " out of range for vocabulary " +
                              std::to_string(vocab));
    }
    std::copy_n(t.data() + indices[i] * width, width, out.data() + i * width);
  }
  Shape out_shape = std::move(index_shape);
  out_shape.push_back(width);
  NodePtr pt = table.node_ptr();
  return make_result(std::move(out_shape), std::move(out), {pt},
                     [pt, indices, width](Node& self) {
                       for (std::size_t i = 0; i < indices.size(); ++i) {
                         const double* g = self.grad.data() + i * width;
                         double* dst = pt->grad.data() + indices[i] * width;
                         for (std::size_t j = 0; j < width; ++j) dst[j] += g[j];
                       }
                     });
}

}  // namespace trinity::nn
