// Copyright 2026 The getnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "getnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "getnet/error.hpp"

namespace getnet::ops {

using detail::make_result;
using detail::Node;

namespace {

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw Error(ErrorCode::ShapeMismatch,
              op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

template <typename T>
std::vector<T>& grad_of(const std::shared_ptr<Node<T>>& n) {
  return n->ensure_grad();
}

// C[m×n] += op(A)·op(B), op(A) is m×k, op(B) is k×n. Double accumulation.
template <typename T>
void gemm_acc(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
              const T* a, const T* b, T* c) {
  const T* bb = b;
  std::vector<T> bcopy;
  if (tb) {
    // Stored n×k; materialize k×n so the inner loop is contiguous.
    bcopy.resize(k * n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) bcopy[p * n + j] = b[j * k + p];
    bb = bcopy.data();
  }
  std::vector<double> row(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? a[p * m + i] : a[i * k + p];
      const T* brow = bb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
    T* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = static_cast<T>(crow[j] + row[j]);
  }
}

template <typename T>
Tensor<T> elementwise_binary(const std::string& name, const Tensor<T>& a,
                             const Tensor<T>& b, int kind) {
  if (a.shape() != b.shape()) shape_error(name, a.shape(), b.shape());
  const auto& av = a.vec();
  const auto& bv = b.vec();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (kind) {
      case 0: out[i] = av[i] + bv[i]; break;
      case 1: out[i] = av[i] - bv[i]; break;
      default: out[i] = av[i] * bv[i]; break;
    }
  }
  return make_result<T>(a.shape(), std::move(out), {a, b}, [kind](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    const auto& g = self.grad;
    if (pa->requires_grad) {
      auto& ga = grad_of(pa);
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += kind == 2 ? g[i] * pb->data[i] : g[i];
    }
    if (pb->requires_grad) {
      auto& gb = grad_of(pb);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (kind == 0) gb[i] += g[i];
        else if (kind == 1) gb[i] -= g[i];
        else gb[i] += g[i] * pa->data[i];
      }
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise_binary("add", a, b, 0);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise_binary("sub", a, b, 1);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise_binary("mul", a, b, 2);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double factor) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(a.vec()[i] * factor);
  return make_result<T>(a.shape(), std::move(out), {a}, [factor](Node<T>& self) {
    auto& g = grad_of(self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] = static_cast<T>(g[i] + self.grad[i] * factor);
  });
}

template <typename T>
Tensor<T> add_broadcast(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size() || !std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
    shape_error("add_broadcast", sa, sb);
  }
  const std::size_t inner = b.numel();
  const std::size_t outer = inner == 0 ? 0 : a.numel() / inner;
  std::vector<T> out(a.vec());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += b.vec()[i];
  return make_result<T>(sa, std::move(out), {a, b}, [outer, inner](Node<T>& self) {
    if (self.parents[0]->requires_grad) {
      auto& ga = grad_of(self.parents[0]);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& gb = grad_of(self.parents[1]);
      for (std::size_t i = 0; i < inner; ++i) {
        double acc = 0.0;
        for (std::size_t o = 0; o < outer; ++o) acc += self.grad[o * inner + i];
        gb[i] = static_cast<T>(gb[i] + acc);
      }
    }
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a, bool trans_b) {
  if (a.rank() != 2 || b.rank() != 2) shape_error("matmul", a.shape(), b.shape());
  return bmm(a, b, trans_a, trans_b);
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool trans_a, bool trans_b) {
  const bool a3 = a.rank() == 3;
  const bool b3 = b.rank() == 3;
  if (a.rank() < 2 || a.rank() > 3 || b.rank() < 2 || b.rank() > 3) {
    shape_error("bmm", a.shape(), b.shape());
  }
  const std::size_t batch = a3 ? a.dim(0) : (b3 ? b.dim(0) : 1);
  if (a3 && b3 && a.dim(0) != b.dim(0)) shape_error("bmm", a.shape(), b.shape());
  const std::size_t ar = a.dim(a.rank() - 2), ac = a.dim(a.rank() - 1);
  const std::size_t br = b.dim(b.rank() - 2), bc = b.dim(b.rank() - 1);
  const std::size_t m = trans_a ? ac : ar;
  const std::size_t k = trans_a ? ar : ac;
  const std::size_t kb = trans_b ? bc : br;
  const std::size_t n = trans_b ? br : bc;
  if (k != kb) shape_error("bmm", a.shape(), b.shape());

  const std::size_t a_stride = a3 ? ar * ac : 0;
  const std::size_t b_stride = b3 ? br * bc : 0;
  std::vector<T> out(batch * m * n, T(0));
  for (std::size_t q = 0; q < batch; ++q) {
    gemm_acc(trans_a, trans_b, m, n, k, a.vec().data() + q * a_stride,
             b.vec().data() + q * b_stride, out.data() + q * m * n);
  }
  Shape shape = (a3 || b3) ? Shape{batch, m, n} : Shape{m, n};
  return make_result<T>(
      std::move(shape), std::move(out), {a, b},
      [=](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        for (std::size_t q = 0; q < batch; ++q) {
          const T* g = self.grad.data() + q * m * n;
          const T* av = pa->data.data() + q * a_stride;
          const T* bv = pb->data.data() + q * b_stride;
          if (pa->requires_grad) {
            T* ga = grad_of(pa).data() + q * a_stride;
            if (!trans_a) gemm_acc(false, !trans_b, m, k, n, g, bv, ga);
            else gemm_acc(trans_b, true, k, m, n, bv, g, ga);
          }
          if (pb->requires_grad) {
            T* gb = grad_of(pb).data() + q * b_stride;
            if (!trans_b) gemm_acc(!trans_a, false, k, n, m, av, g, gb);
            else gemm_acc(true, trans_a, n, k, m, g, av, gb);
          }
        }
      });
}

template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& x) {
  if (x.rank() < 2) shape_error("transpose_last2", x.shape(), x.shape());
  Shape shape = x.shape();
  const std::size_t r = shape[shape.size() - 2], c = shape[shape.size() - 1];
  std::swap(shape[shape.size() - 2], shape[shape.size() - 1]);
  const std::size_t batch = x.numel() / (r * c == 0 ? 1 : r * c);
  std::vector<T> out(x.numel());
  for (std::size_t q = 0; q < batch; ++q)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        out[q * r * c + j * r + i] = x.vec()[q * r * c + i * c + j];
  return make_result<T>(std::move(shape), std::move(out), {x}, [=](Node<T>& self) {
    auto& g = grad_of(self.parents[0]);
    for (std::size_t q = 0; q < batch; ++q)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          g[q * r * c + i * c + j] += self.grad[q * r * c + j * r + i];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) shape_error("reshape", x.shape(), shape);
  return make_result<T>(std::move(shape), x.vec(), {x}, [](Node<T>& self) {
    auto& g = grad_of(self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  if (x.rank() < 1 || x.shape().back() == 0) shape_error("softmax", x.shape(), x.shape());
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.vec().data() + r * n;
    T* o = out.data() + r * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max<double>(mx, in[j]);
    double total = 0.0;
    std::vector<double> e(n);
    for (std::size_t j = 0; j < n; ++j) {
      e[j] = std::exp(static_cast<double>(in[j]) - mx);
      total += e[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] = static_cast<T>(e[j] / total);
  }
  return make_result<T>(x.shape(), std::move(out), {x}, [rows, n](Node<T>& self) {
    auto& g = grad_of(self.parents[0]);
    // The op's own output lives in self.data.
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.data.data() + r * n;
      const T* dy = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += static_cast<double>(dy[j]) * y[j];
      for (std::size_t j = 0; j < n; ++j)
        g[r * n + j] = static_cast<T>(g[r * n + j] + y[j] * (dy[j] - dot));
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps) {
  if (x.rank() < 1) shape_error("layer_norm", x.shape(), gamma.shape());
  const std::size_t n = x.shape().back();
  if (gamma.shape() != Shape{n} || beta.shape() != Shape{n}) {
    shape_error("layer_norm", x.shape(), gamma.shape());
  }
  const std::size_t rows = n == 0 ? 0 : x.numel() / n;
  std::vector<T> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.vec().data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += in[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = in[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (in[j] - mean) * rstd[r];
      xhat[r * n + j] = h;
      out[r * n + j] = static_cast<T>(h * gamma.vec()[j] + beta.vec()[j]);
    }
  }
  return make_result<T>(
      x.shape(), std::move(out), {x, gamma, beta},
      [rows, n, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        std::vector<double> dg(n, 0.0), db(n, 0.0), dxh(n);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* dy = self.grad.data() + r * n;
          const double* h = xhat.data() + r * n;
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            dg[j] += dy[j] * h[j];
            db[j] += dy[j];
            dxh[j] = static_cast<double>(dy[j]) * pg->data[j];
            m1 += dxh[j];
            m2 += dxh[j] * h[j];
          }
          if (px->requires_grad) {
            m1 /= static_cast<double>(n);
            m2 /= static_cast<double>(n);
            auto& gx = grad_of(px);
            for (std::size_t j = 0; j < n; ++j)
              gx[r * n + j] = static_cast<T>(gx[r * n + j] + rstd[r] * (dxh[j] - m1 - h[j] * m2));
          }
        }
        if (pg->requires_grad) {
          auto& g = grad_of(pg);
          for (std::size_t j = 0; j < n; ++j) g[j] = static_cast<T>(g[j] + dg[j]);
        }
        if (pb->requires_grad) {
          auto& g = grad_of(pb);
          for (std::size_t j = 0; j < n; ++j) g[j] = static_cast<T>(g[j] + db[j]);
        }
      });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.vec()[i];
    out[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)));
  }
  return make_result<T>(x.shape(), std::move(out), {x}, [](Node<T>& self) {
    auto& px = self.parents[0];
    auto& g = grad_of(px);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = px->data[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
      g[i] = static_cast<T>(g[i] + self.grad[i] * (cdf + v * pdf));
    }
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return add_broadcast(matmul(x, w), b);
}

template <typename T>
Tensor<T> grouped_linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() != 2 || w.rank() != 3 || b.rank() != 2) {
    shape_error("grouped_linear", x.shape(), w.shape());
  }
  const std::size_t rows = x.dim(0);
  const std::size_t groups = w.dim(0), cin = w.dim(1), cout = w.dim(2);
  if (x.dim(1) != groups * cin || b.dim(0) != groups || b.dim(1) != cout) {
    shape_error("grouped_linear", x.shape(), w.shape());
  }
  const std::size_t xw = groups * cin, yw = groups * cout;
  std::vector<T> out(rows * yw);
  std::vector<double> acc(cout);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t o = 0; o < cout; ++o) acc[o] = b.vec()[g * cout + o];
      for (std::size_t i = 0; i < cin; ++i) {
        const double xv = x.vec()[r * xw + g * cin + i];
        const T* wrow = w.vec().data() + (g * cin + i) * cout;
        for (std::size_t o = 0; o < cout; ++o) acc[o] += xv * wrow[o];
      }
      for (std::size_t o = 0; o < cout; ++o) out[r * yw + g * cout + o] = static_cast<T>(acc[o]);
    }
  }
  return make_result<T>({rows, yw}, std::move(out), {x, w, b}, [=](Node<T>& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto& pb = self.parents[2];
    const T* dy = self.grad.data();
    if (px->requires_grad) {
      auto& gx = grad_of(px);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t g = 0; g < groups; ++g)
          for (std::size_t i = 0; i < cin; ++i) {
            double a = 0.0;
            const T* wrow = pw->data.data() + (g * cin + i) * cout;
            for (std::size_t o = 0; o < cout; ++o) a += static_cast<double>(dy[r * yw + g * cout + o]) * wrow[o];
            gx[r * xw + g * cin + i] = static_cast<T>(gx[r * xw + g * cin + i] + a);
          }
    }
    if (pw->requires_grad) {
      auto& gw = grad_of(pw);
      std::vector<double> a(groups * cin * cout, 0.0);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t g = 0; g < groups; ++g)
          for (std::size_t i = 0; i < cin; ++i) {
            const double xv = px->data[r * xw + g * cin + i];
            for (std::size_t o = 0; o < cout; ++o)
              a[(g * cin + i) * cout + o] += xv * dy[r * yw + g * cout + o];
          }
      for (std::size_t i = 0; i < a.size(); ++i) gw[i] = static_cast<T>(gw[i] + a[i]);
    }
    if (pb->requires_grad) {
      auto& gb = grad_of(pb);
      for (std::size_t c = 0; c < yw; ++c) {
        double a = 0.0;
        for (std::size_t r = 0; r < rows; ++r) a += dy[r * yw + c];
        gb[c] = static_cast<T>(gb[c] + a);
      }
    }
  });
}

template <typename T>
Tensor<T> channel_window_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                                std::size_t out_groups, std::size_t in_stride,
                                std::size_t pad) {
  if (x.rank() != 3 || w.rank() != 4 || b.rank() != 1) {
    shape_error("conv2d", x.shape(), w.shape());
  }
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t cout = w.dim(0), window = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (out_groups == 0 || cout % out_groups != 0) {
    throw Error(ErrorCode::GroupMismatch, "conv2d: output channels " + std::to_string(cout) +
                                              " not divisible into " +
                                              std::to_string(out_groups) + " groups");
  }
  if (b.dim(0) != cout) shape_error("conv2d", w.shape(), b.shape());
  if (h + 2 * pad < kh || wd + 2 * pad < kw) shape_error("conv2d", x.shape(), w.shape());
  const std::size_t oh = h + 2 * pad - kh + 1, ow = wd + 2 * pad - kw + 1;
  const std::size_t per_group = cout / out_groups;
  const auto ipad = static_cast<std::ptrdiff_t>(pad);

  std::vector<T> out(cout * oh * ow);
  std::vector<double> acc(oh * ow);
  for (std::size_t co = 0; co < cout; ++co) {
    const std::size_t base = (co / per_group) * in_stride;
    std::fill(acc.begin(), acc.end(), static_cast<double>(b.vec()[co]));
    for (std::size_t c = 0; c < window; ++c) {
      const std::size_t ci = base + c;
      if (ci >= cin) break;
      const T* xin = x.vec().data() + ci * h * wd;
      for (std::size_t ky = 0; ky < kh; ++ky)
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const double wv = w.vec()[((co * window + c) * kh + ky) * kw + kx];
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - ipad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - ipad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
              acc[oy * ow + ox] += wv * xin[iy * wd + ix];
            }
          }
        }
    }
    for (std::size_t i = 0; i < oh * ow; ++i) out[co * oh * ow + i] = static_cast<T>(acc[i]);
  }
  return make_result<T>({cout, oh, ow}, std::move(out), {x, w, b}, [=](Node<T>& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto& pb = self.parents[2];
    const T* dy = self.grad.data();
    std::vector<double> gx(px->requires_grad ? cin * h * wd : 0, 0.0);
    for (std::size_t co = 0; co < cout; ++co) {
      const std::size_t base = (co / per_group) * in_stride;
      const T* g = dy + co * oh * ow;
      if (pb->requires_grad) {
        double a = 0.0;
        for (std::size_t i = 0; i < oh * ow; ++i) a += g[i];
        grad_of(pb)[co] = static_cast<T>(grad_of(pb)[co] + a);
      }
      for (std::size_t c = 0; c < window; ++c) {
        const std::size_t ci = base + c;
        if (ci >= cin) break;
        const T* xin = px->data.data() + ci * h * wd;
        for (std::size_t ky = 0; ky < kh; ++ky)
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::size_t widx = ((co * window + c) * kh + ky) * kw + kx;
            const double wv = pw->data[widx];
            double dw = 0.0;
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - ipad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - ipad;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                const double gv = g[oy * ow + ox];
                dw += gv * xin[iy * wd + ix];
                if (!gx.empty()) gx[ci * h * wd + iy * wd + ix] += gv * wv;
              }
            }
            if (pw->requires_grad) grad_of(pw)[widx] = static_cast<T>(grad_of(pw)[widx] + dw);
          }
      }
    }
    if (px->requires_grad) {
      auto& g = grad_of(px);
      for (std::size_t i = 0; i < gx.size(); ++i) g[i] = static_cast<T>(g[i] + gx[i]);
    }
  });
}

template <typename T>
Tensor<T> grouped_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                         std::size_t groups, std::size_t pad) {
  if (x.rank() != 3 || w.rank() != 4) shape_error("grouped_conv2d", x.shape(), w.shape());
  if (groups == 0 || x.dim(0) % groups != 0 || w.dim(0) % groups != 0) {
    throw Error(ErrorCode::GroupMismatch,
                "grouped_conv2d: channels not divisible by " + std::to_string(groups) + " groups");
  }
  const std::size_t per_group = x.dim(0) / groups;
  if (w.dim(1) != per_group) shape_error("grouped_conv2d", x.shape(), w.shape());
  return channel_window_conv2d(x, w, b, groups, per_group, pad);
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::size_t kernel, std::size_t stride,
                    std::size_t pad) {
  if (x.rank() != 3 || x.dim(1) == 0 || x.dim(2) == 0 || stride == 0 ||
      x.dim(1) + 2 * pad < kernel || x.dim(2) + 2 * pad < kernel) {
    shape_error("maxpool2d", x.shape(), x.shape());
  }
  const std::size_t c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t oh = (h + 2 * pad - kernel) / stride + 1;
  const std::size_t ow = (wd + 2 * pad - kernel) / stride + 1;
  std::vector<T> out(c * oh * ow);
  std::vector<std::size_t> arg(c * oh * ow);
  const auto ipad = static_cast<std::ptrdiff_t>(pad);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        bool found = false;
        T best{};
        std::size_t best_i = 0;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - ipad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - ipad;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
            const std::size_t idx = (ch * h + iy) * wd + ix;
            if (!found || x.vec()[idx] > best) {
              best = x.vec()[idx];
              best_i = idx;
              found = true;
            }
          }
        }
        const std::size_t o = (ch * oh + oy) * ow + ox;
        out[o] = best;
        arg[o] = best_i;
      }
  return make_result<T>({c, oh, ow}, std::move(out), {x},
                        [arg = std::move(arg)](Node<T>& self) {
                          auto& g = grad_of(self.parents[0]);
                          for (std::size_t o = 0; o < arg.size(); ++o) g[arg[o]] += self.grad[o];
                        });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::int64_t>& index) {
  if (x.rank() < 1) shape_error("gather_rows", x.shape(), x.shape());
  const std::size_t rows = x.dim(0);
  const std::size_t width = rows == 0 ? 0 : x.numel() / rows;
  Shape shape = x.shape();
  shape[0] = index.size();
  std::vector<T> out(index.size() * width, T(0));
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0) continue;
    if (static_cast<std::size_t>(index[i]) >= rows) {
      throw Error(ErrorCode::IndexOutOfRange, "gather_rows index " + std::to_string(index[i]) +
                                                  " >= " + std::to_string(rows));
    }
    std::copy_n(x.vec().data() + index[i] * width, width, out.data() + i * width);
  }
  return make_result<T>(std::move(shape), std::move(out), {x}, [index, width](Node<T>& self) {
    auto& g = grad_of(self.parents[0]);
    for (std::size_t i = 0; i < index.size(); ++i) {
      if (index[i] < 0) continue;
      for (std::size_t j = 0; j < width; ++j) g[index[i] * width + j] += self.grad[i * width + j];
    }
  });
}

template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x) {
  if (x.rank() != 2 || x.dim(0) == 0) shape_error("mean_rows", x.shape(), x.shape());
  const std::size_t rows = x.dim(0), d = x.dim(1);
  std::vector<T> out(d);
  for (std::size_t j = 0; j < d; ++j) {
    double a = 0.0;
    for (std::size_t r = 0; r < rows; ++r) a += x.vec()[r * d + j];
    out[j] = static_cast<T>(a / static_cast<double>(rows));
  }
  return make_result<T>({d}, std::move(out), {x}, [rows, d](Node<T>& self) {
    auto& g = grad_of(self.parents[0]);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < d; ++j)
        g[r * d + j] = static_cast<T>(g[r * d + j] + self.grad[j] / static_cast<double>(rows));
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double a = 0.0;
  for (T v : x.vec()) a += v;
  return make_result<T>({1}, {static_cast<T>(a)}, {x}, [](Node<T>& self) {
    auto& g = grad_of(self.parents[0]);
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::size_t>& labels) {
  if (logits.rank() < 1 || logits.rank() > 2) shape_error("cross_entropy", logits.shape(), logits.shape());
  const std::size_t n = logits.shape().back();
  const std::size_t batch = logits.rank() == 2 ? logits.dim(0) : 1;
  if (labels.size() != batch || batch == 0) {
    throw Error(ErrorCode::ShapeMismatch, "cross_entropy: label count does not match batch");
  }
  std::vector<double> prob(batch * n);
  double loss = 0.0;
  for (std::size_t q = 0; q < batch; ++q) {
    if (labels[q] >= n) throw Error(ErrorCode::IndexOutOfRange, "cross_entropy: label out of range");
    const T* z = logits.vec().data() + q * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max<double>(mx, z[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(z[j] - mx);
    const double lse = mx + std::log(total);
    loss += lse - z[labels[q]];
    for (std::size_t j = 0; j < n; ++j) prob[q * n + j] = std::exp(z[j] - lse);
  }
  loss /= static_cast<double>(batch);
  return make_result<T>({1}, {static_cast<T>(loss)}, {logits},
                        [=, prob = std::move(prob)](Node<T>& self) {
                          auto& g = grad_of(self.parents[0]);
                          const double s = self.grad[0] / static_cast<double>(batch);
                          for (std::size_t q = 0; q < batch; ++q)
                            for (std::size_t j = 0; j < n; ++j) {
                              const double d = prob[q * n + j] - (j == labels[q] ? 1.0 : 0.0);
                              g[q * n + j] = static_cast<T>(g[q * n + j] + s * d);
                            }
                        });
}

template <typename T>
Tensor<T> tokens_to_chw(const Tensor<T>& x, std::size_t h, std::size_t w) {
  if (x.rank() != 2 || x.dim(0) != h * w) shape_error("tokens_to_chw", x.shape(), {h, w});
  return reshape(transpose_last2(x), {x.dim(1), h, w});
}

template <typename T>
Tensor<T> chw_to_tokens(const Tensor<T>& x) {
  if (x.rank() != 3) shape_error("chw_to_tokens", x.shape(), x.shape());
  return transpose_last2(reshape(x, {x.dim(0), x.dim(1) * x.dim(2)}));
}

#define GETNET_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, double);                                          \
  template Tensor<T> add_broadcast(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool, bool);                   \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&, bool, bool);                      \
  template Tensor<T> transpose_last2(const Tensor<T>&);                                        \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
  template Tensor<T> softmax_lastdim(const Tensor<T>&);                                        \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double); \
  template Tensor<T> gelu(const Tensor<T>&);                                                   \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> grouped_linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> channel_window_conv2d(const Tensor<T>&, const Tensor<T>&,                 \
                                           const Tensor<T>&, std::size_t, std::size_t,         \
                                           std::size_t);                                       \
  template Tensor<T> grouped_conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                    std::size_t, std::size_t);                                 \
  template Tensor<T> maxpool2d(const Tensor<T>&, std::size_t, std::size_t, std::size_t);       \
  template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<std::int64_t>&);          \
  template Tensor<T> mean_rows(const Tensor<T>&);                                              \
  template Tensor<T> sum(const Tensor<T>&);                                                    \
  template Tensor<T> cross_entropy(const Tensor<T>&, const std::vector<std::size_t>&);         \
  template Tensor<T> tokens_to_chw(const Tensor<T>&, std::size_t, std::size_t);                \
  template Tensor<T> chw_to_tokens(const Tensor<T>&);

GETNET_INSTANTIATE_OPS(float)
GETNET_INSTANTIATE_OPS(double)

#undef GETNET_INSTANTIATE_OPS

}  // namespace getnet::ops
