// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/nd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "edaq/nd/gemm.hpp"

namespace edaq::nd {

namespace {

using Span = std::span<float>;
using CSpan = std::span<const float>;

std::size_t sz(std::int64_t v) { return static_cast<std::size_t>(v); }

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError(op, {a.shape(), b.shape()});
}

int norm_axis(const char* op, const Tensor& x, int axis) {
  const int r = static_cast<int>(x.rank());
  const int ax = axis < 0 ? axis + r : axis;
  if (ax < 0 || ax >= r) throw ShapeError(op, {x.shape()}, "axis " + std::to_string(axis));
  return ax;
}

// Splits shape around `axis` into (outer, extent, inner).
struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisView axis_view(const Shape& s, int axis) {
  AxisView v;
  for (int i = 0; i < axis; ++i) v.outer *= sz(s[sz(i)]);
  v.extent = sz(s[sz(axis)]);
  for (std::size_t i = sz(axis) + 1; i < s.size(); ++i) v.inner *= sz(s[i]);
  return v;
}

// Elementwise map; dydx(x) is re-evaluated from the input during backward.
template <class F, class D>
Tensor unary(const char* op, const Tensor& x, F f, D dydx) {
  auto xd = x.data();
  std::vector<float> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  return make_result(op, x.shape(), std::move(out), {x}, [x, dydx](CSpan g, GradSink& sink) {
    Span gx = sink[0];
    auto xd = x.data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * dydx(xd[i]);
  });
}

// exp(-v) overflows to inf for very negative v, giving exactly 0.
inline float stable_sigmoid(float v) { return 1.0f / (1.0f + std::exp(-v)); }

// im2col for stride-1 convolution: cols[(c*kh+ky)*kw+kx, (n*ho+y)*wo+x].
void im2col(CSpan x, std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, std::size_t pad, std::size_t ho, std::size_t wo, float* cols) {
  const std::size_t row_len = n * ho * wo;
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        float* dst = cols + ((ci * kh + ky) * kw + kx) * row_len;
        for (std::size_t b = 0; b < n; ++b) {
          const float* src = x.data() + (b * c + ci) * h * w;
          for (std::size_t y = 0; y < ho; ++y) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(pad);
            float* d = dst + (b * ho + y) * wo;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
              std::fill_n(d, wo, 0.0f);
              continue;
            }
            for (std::size_t xx = 0; xx < wo; ++xx) {
              const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + kx) - static_cast<std::ptrdiff_t>(pad);
              d[xx] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) ? 0.0f : src[sy * static_cast<std::ptrdiff_t>(w) + sx];
            }
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  const bool batched = as.size() == 3;
  if (!((as.size() == 2 && bs.size() == 2) || (as.size() == 3 && bs.size() == 3)) ||
      as[as.size() - 1] != bs[bs.size() - 2] || (batched && as[0] != bs[0])) {
    throw ShapeError("matmul", {as, bs});
  }
  const std::size_t batch = batched ? sz(as[0]) : 1;
  const std::size_t m = sz(as[as.size() - 2]), k = sz(as.back()), n = sz(bs.back());
  std::vector<float> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    gemm(m, n, k, a.data().data() + i * m * k, b.data().data() + i * k * n, out.data() + i * m * n);
  }
  Shape os = batched ? Shape{as[0], as[1], bs[2]} : Shape{as[0], bs[1]};
  return make_result("matmul", os, std::move(out), {a, b},
                     [a, b, batch, m, n, k](CSpan g, GradSink& sink) {
                       if (sink.wants(0)) {
                         Span ga = sink[0];
                         std::vector<float> bt(k * n);
                         for (std::size_t i = 0; i < batch; ++i) {
                           transpose_copy(k, n, b.data().data() + i * k * n, bt.data());
                           gemm(m, k, n, g.data() + i * m * n, bt.data(), ga.data() + i * m * k, true);
                         }
                       }
                       if (sink.wants(1)) {
                         Span gb = sink[1];
                         std::vector<float> at(m * k);
                         for (std::size_t i = 0; i < batch; ++i) {
                           transpose_copy(m, k, a.data().data() + i * m * k, at.data());
                           gemm(k, n, m, at.data(), g.data() + i * m * n, gb.data() + i * k * n, true);
                         }
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  const auto& s = a.shape();
  if (s.size() != 2 && s.size() != 3) throw ShapeError("transpose", {s}, "rank 2 or 3 expected");
  const std::size_t batch = s.size() == 3 ? sz(s[0]) : 1;
  const std::size_t m = sz(s[s.size() - 2]), n = sz(s.back());
  std::vector<float> out(a.data().size());
  for (std::size_t i = 0; i < batch; ++i) {
    transpose_copy(m, n, a.data().data() + i * m * n, out.data() + i * m * n);
  }
  Shape os = s;
  std::swap(os[os.size() - 1], os[os.size() - 2]);
  return make_result("transpose", os, std::move(out), {a}, [batch, m, n](CSpan g, GradSink& sink) {
    Span ga = sink[0];
    std::vector<float> tmp(m * n);
    for (std::size_t i = 0; i < batch; ++i) {
      transpose_copy(n, m, g.data() + i * m * n, tmp.data());
      for (std::size_t j = 0; j < m * n; ++j) ga[i * m * n + j] += tmp[j];
    }
  });
}

namespace {

struct ConvDims {
  std::size_t n, c, h, w, o, k, pad, ho, wo;
};

// Stride-1 correlation of x[n,c,h,w] with w[o,c,k,k]; returns [n,o,ho,wo].
std::vector<float> conv_raw(const float* x, const float* w, const ConvDims& d) {
  const std::size_t ckk = d.c * d.k * d.k, cols_n = d.n * d.ho * d.wo, plane = d.ho * d.wo;
  std::vector<float> cols(ckk * cols_n);
  im2col(CSpan(x, d.n * d.c * d.h * d.w), d.n, d.c, d.h, d.w, d.k, d.k, d.pad, d.ho, d.wo, cols.data());
  std::vector<float> ycols(d.o * cols_n);
  gemm(d.o, cols_n, ckk, w, cols.data(), ycols.data());
  std::vector<float> out(d.n * d.o * plane);
  for (std::size_t oc = 0; oc < d.o; ++oc) {
    for (std::size_t b = 0; b < d.n; ++b) {
      std::copy_n(ycols.data() + oc * cols_n + b * plane, plane, out.data() + (b * d.o + oc) * plane);
    }
  }
  return out;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, Padding padding) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1] || ws[2] != ws[3]) {
    throw ShapeError("conv2d", {xs, ws});
  }
  ConvDims d{sz(xs[0]), sz(xs[1]), sz(xs[2]), sz(xs[3]), sz(ws[0]), sz(ws[2]), 0, 0, 0};
  if (padding == Padding::same) {
    if (d.k % 2 == 0) throw ShapeError("conv2d", {xs, ws}, "same padding needs an odd kernel");
    d.pad = (d.k - 1) / 2;
  } else if (d.k > d.h || d.k > d.w) {
    throw ShapeError("conv2d", {xs, ws}, "kernel larger than input");
  }
  d.ho = d.h + 2 * d.pad - d.k + 1;
  d.wo = d.w + 2 * d.pad - d.k + 1;
  std::vector<float> out = conv_raw(x.data().data(), w.data().data(), d);
  Shape os{xs[0], ws[0], static_cast<std::int64_t>(d.ho), static_cast<std::int64_t>(d.wo)};
  return make_result("conv2d", os, std::move(out), {x, w}, [x, w, d](CSpan g, GradSink& sink) {
    const std::size_t ckk = d.c * d.k * d.k, cols_n = d.n * d.ho * d.wo, plane = d.ho * d.wo;
    if (sink.wants(1)) {
      // dW^T[ckk, o] = cols[ckk, cols_n] * g^T[cols_n, o]
      std::vector<float> cols(ckk * cols_n);
      im2col(x.data(), d.n, d.c, d.h, d.w, d.k, d.k, d.pad, d.ho, d.wo, cols.data());
      std::vector<float> gt(cols_n * d.o);
      for (std::size_t b = 0; b < d.n; ++b) {
        for (std::size_t oc = 0; oc < d.o; ++oc) {
          const float* src = g.data() + (b * d.o + oc) * plane;
          for (std::size_t i = 0; i < plane; ++i) gt[(b * plane + i) * d.o + oc] = src[i];
        }
      }
      std::vector<float> dwt(ckk * d.o);
      gemm(ckk, d.o, cols_n, cols.data(), gt.data(), dwt.data());
      Span gw = sink[1];
      for (std::size_t r = 0; r < ckk; ++r) {
        for (std::size_t oc = 0; oc < d.o; ++oc) gw[oc * ckk + r] += dwt[r * d.o + oc];
      }
    }
    if (sink.wants(0)) {
      // dX is the correlation of g with the flipped, channel-swapped kernel.
      const std::size_t kk = d.k * d.k;
      std::vector<float> wf(d.c * d.o * kk);
      auto wd = w.data();
      for (std::size_t oc = 0; oc < d.o; ++oc) {
        for (std::size_t ci = 0; ci < d.c; ++ci) {
          for (std::size_t i = 0; i < kk; ++i) wf[(ci * d.o + oc) * kk + (kk - 1 - i)] = wd[(oc * d.c + ci) * kk + i];
        }
      }
      const ConvDims back{d.n, d.o, d.ho, d.wo, d.c, d.k, d.k - 1 - d.pad, d.h, d.w};
      std::vector<float> dx = conv_raw(g.data(), wf.data(), back);
      Span gx = sink[0];
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dx[i];
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1)) {
    throw ShapeError("linear", {x.shape(), w.shape()});
  }
  Tensor y = matmul(x, transpose(w));
  return bias ? add_bias(y, *bias) : y;
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  auto ad = a.data(), bd = b.data();
  std::vector<float> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](CSpan g, GradSink& sink) {
    for (std::size_t p = 0; p < 2; ++p) {
      Span gp = sink[p];
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  auto ad = a.data(), bd = b.data();
  std::vector<float> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](CSpan g, GradSink& sink) {
    Span ga = sink[0];
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    Span gb = sink[1];
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  auto ad = a.data(), bd = b.data();
  std::vector<float> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [a, b](CSpan g, GradSink& sink) {
    Span ga = sink[0];
    auto bd = b.data();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bd[i];
    Span gb = sink[1];
    auto ad = a.data();
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * ad[i];
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const bool per_sample = bias.rank() == 2;
  if (x.rank() < 2 || bias.rank() < 1 || bias.rank() > 2 || bias.dim(-1) != x.dim(1) ||
      (per_sample && bias.dim(0) != x.dim(0))) {
    throw ShapeError("add_bias", {x.shape(), bias.shape()});
  }
  const AxisView v = axis_view(x.shape(), 1);
  auto xd = x.data(), bd = bias.data();
  std::vector<float> out(xd.size());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t c = 0; c < v.extent; ++c) {
      const std::size_t base = (o * v.extent + c) * v.inner;
      const float b = bd[per_sample ? o * v.extent + c : c];
      for (std::size_t i = 0; i < v.inner; ++i) out[base + i] = xd[base + i] + b;
    }
  }
  return make_result("add_bias", x.shape(), std::move(out), {x, bias},
                     [v, per_sample](CSpan g, GradSink& sink) {
                       Span gx = sink[0];
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                       if (!sink.wants(1)) return;
                       Span gb = sink[1];
                       if (per_sample) {
                         for (std::size_t o = 0; o < v.outer; ++o) {
                           for (std::size_t c = 0; c < v.extent; ++c) {
                             const std::size_t base = (o * v.extent + c) * v.inner;
                             double acc = 0.0;
                             for (std::size_t i = 0; i < v.inner; ++i) acc += g[base + i];
                             gb[o * v.extent + c] += static_cast<float>(acc);
                           }
                         }
                         return;
                       }
                       for (std::size_t c = 0; c < v.extent; ++c) {
                         double acc = 0.0;
                         for (std::size_t o = 0; o < v.outer; ++o) {
                           const std::size_t base = (o * v.extent + c) * v.inner;
                           for (std::size_t i = 0; i < v.inner; ++i) acc += g[base + i];
                         }
                         gb[c] += static_cast<float>(acc);
                       }
                     });
}

Tensor affine(const Tensor& x, float scale, float shift) {
  return unary(
      "affine", x, [scale, shift](float v) { return scale * v + shift; }, [scale](float) { return scale; });
}

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, float eps) {
  const auto& xs = x.shape();
  if (xs.size() < 2 || groups <= 0 || xs[1] % groups != 0 || gamma.rank() != 1 ||
      beta.rank() != 1 || gamma.dim(0) != xs[1] || beta.dim(0) != xs[1]) {
    throw ShapeError("group_norm", {xs, gamma.shape(), beta.shape()},
                     "groups " + std::to_string(groups));
  }
  const AxisView v = axis_view(xs, 1);
  const std::size_t n = v.outer, c = v.extent, spatial = v.inner;
  const std::size_t g = sz(groups), cpg = c / g, count = cpg * spatial;
  auto xd = x.data(), gd = gamma.data(), bd = beta.data();
  std::vector<float> xhat(xd.size());
  std::vector<double> rstd(n * g);
  std::vector<float> out(xd.size());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t gi = 0; gi < g; ++gi) {
      const std::size_t base = (b * c + gi * cpg) * spatial;
      const float* src = xd.data() + base;
      double s = 0.0;
      for (std::size_t i = 0; i < count; ++i) s += src[i];
      const double m = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t i = 0; i < count; ++i) {
        const double d = src[i] - m;
        ss += d * d;
      }
      const double r = 1.0 / std::sqrt(ss / static_cast<double>(count) + eps);
      rstd[b * g + gi] = r;
      for (std::size_t cc = 0; cc < cpg; ++cc) {
        const std::size_t ch = gi * cpg + cc;
        for (std::size_t i = cc * spatial; i < (cc + 1) * spatial; ++i) {
          const float xh = static_cast<float>((src[i] - m) * r);
          xhat[base + i] = xh;
          out[base + i] = gd[ch] * xh + bd[ch];
        }
      }
    }
  }
  return make_result(
      "group_norm", xs, std::move(out), {x, gamma, beta},
      [gamma, xhat = std::move(xhat), rstd = std::move(rstd), n, c, spatial, g, cpg, count](
          CSpan go, GradSink& sink) {
        auto gd = gamma.data();
        if (sink.wants(1) || sink.wants(2)) {
          Span gg = sink[1];
          Span gb = sink[2];
          for (std::size_t ch = 0; ch < c; ++ch) {
            double sg = 0.0, sb = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
              const std::size_t base = (b * c + ch) * spatial;
              for (std::size_t i = 0; i < spatial; ++i) {
                sg += static_cast<double>(go[base + i]) * xhat[base + i];
                sb += go[base + i];
              }
            }
            if (!gg.empty()) gg[ch] += static_cast<float>(sg);
            if (!gb.empty()) gb[ch] += static_cast<float>(sb);
          }
        }
        if (!sink.wants(0)) return;
        Span gx = sink[0];
        const double inv_n = 1.0 / static_cast<double>(count);
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t gi = 0; gi < g; ++gi) {
            const std::size_t base = (b * c + gi * cpg) * spatial;
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t cc = 0; cc < cpg; ++cc) {
              const double gam = gd[gi * cpg + cc];
              for (std::size_t i = base + cc * spatial; i < base + (cc + 1) * spatial; ++i) {
                const double dxh = go[i] * gam;
                s1 += dxh;
                s2 += dxh * xhat[i];
              }
            }
            const double r = rstd[b * g + gi];
            const double m1 = inv_n * s1, m2 = inv_n * s2;
            for (std::size_t cc = 0; cc < cpg; ++cc) {
              const double gam = gd[gi * cpg + cc];
              for (std::size_t i = base + cc * spatial; i < base + (cc + 1) * spatial; ++i) {
                gx[i] += static_cast<float>(r * (go[i] * gam - m1 - xhat[i] * m2));
              }
            }
          }
        }
      });
}

Tensor silu(const Tensor& x) {
  return unary(
      "silu", x, [](float v) { return v * stable_sigmoid(v); },
      [](float v) {
        const float s = stable_sigmoid(v);
        return s * (1.0f + v * (1.0f - s));
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, stable_sigmoid, [](float v) {
    const float y = stable_sigmoid(v);
    return y * (1.0f - y);
  });
}

Tensor sin(const Tensor& x) {
  return unary("sin", x, [](float v) { return std::sin(v); }, [](float v) { return std::cos(v); });
}

Tensor cos(const Tensor& x) {
  return unary("cos", x, [](float v) { return std::cos(v); }, [](float v) { return -std::sin(v); });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](float v) { return std::exp(v); }, [](float v) { return std::exp(v); });
}

Tensor sqrt(const Tensor& x) {
  return unary("sqrt", x, [](float v) { return std::sqrt(v); }, [](float v) { return 0.5f / std::sqrt(v); });
}

Tensor power(const Tensor& x, float exponent) {
  return unary(
      "power", x, [exponent](float v) { return std::pow(v, exponent); },
      [exponent](float v) { return exponent * std::pow(v, exponent - 1.0f); });
}

Tensor softmax(const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("softmax", {x.shape()}, "rank >= 1 expected");
  const std::size_t cols = sz(x.shape().back());
  const std::size_t rows = x.data().size() / std::max<std::size_t>(cols, 1);
  auto xd = x.data();
  std::vector<float> out(xd.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* src = xd.data() + r * cols;
    float* dst = out.data() + r * cols;
    const float mx = *std::max_element(src, src + cols);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      dst[j] = std::exp(src[j] - mx);
      s += dst[j];
    }
    for (std::size_t j = 0; j < cols; ++j) dst[j] = static_cast<float>(dst[j] / s);
  }
  std::vector<float> y(out);
  return make_result("softmax", x.shape(), std::move(out), {x},
                     [y = std::move(y), rows, cols](CSpan g, GradSink& sink) {
                       Span gx = sink[0];
                       for (std::size_t r = 0; r < rows; ++r) {
                         const float* yr = y.data() + r * cols;
                         const float* gr = g.data() + r * cols;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < cols; ++j) dot += static_cast<double>(gr[j]) * yr[j];
                         for (std::size_t j = 0; j < cols; ++j) {
                           gx[r * cols + j] += static_cast<float>(yr[j] * (gr[j] - dot));
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// Layout

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) throw ShapeError("reshape", {x.shape(), shape});
  auto xd = x.data();
  return make_result("reshape", std::move(shape), std::vector<float>(xd.begin(), xd.end()), {x},
                     [](CSpan g, GradSink& sink) {
                       Span gx = sink[0];
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                     });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat", {}, "no inputs");
  const int ax = norm_axis("concat", parts[0], axis);
  std::vector<Shape> shapes;
  for (const auto& p : parts) shapes.push_back(p.shape());
  Shape os = parts[0].shape();
  os[sz(ax)] = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = parts[0].shape();
    if (a.size() != b.size()) throw ShapeError("concat", shapes);
    a[sz(ax)] = b[sz(ax)] = 0;
    if (a != b) throw ShapeError("concat", shapes);
    os[sz(ax)] += p.shape()[sz(ax)];
  }
  const AxisView ov = axis_view(os, ax);
  std::vector<float> out(sz(numel(os)));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const AxisView pv = axis_view(p.shape(), ax);
    auto pd = p.data();
    for (std::size_t o = 0; o < pv.outer; ++o) {
      std::copy_n(pd.data() + o * pv.extent * pv.inner, pv.extent * pv.inner,
                  out.data() + (o * ov.extent + off) * ov.inner);
    }
    off += pv.extent;
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  std::vector<std::size_t> extents;
  for (const auto& p : parts) extents.push_back(sz(p.shape()[sz(ax)]));
  return make_result("concat", os, std::move(out), std::move(parents),
                     [ov, offsets, extents](CSpan g, GradSink& sink) {
                       for (std::size_t p = 0; p < offsets.size(); ++p) {
                         Span gp = sink[p];
                         if (gp.empty()) continue;
                         const std::size_t len = extents[p] * ov.inner;
                         for (std::size_t o = 0; o < ov.outer; ++o) {
                           const float* src = g.data() + (o * ov.extent + offsets[p]) * ov.inner;
                           float* dst = gp.data() + o * len;
                           for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length) {
  const int ax = norm_axis("slice", x, axis);
  const auto& xs = x.shape();
  if (start < 0 || length < 0 || start + length > xs[sz(ax)]) {
    throw ShapeError("slice", {xs},
                     "range [" + std::to_string(start) + "," + std::to_string(start + length) + ")");
  }
  const AxisView v = axis_view(xs, ax);
  Shape os = xs;
  os[sz(ax)] = length;
  const std::size_t len = sz(length) * v.inner;
  std::vector<float> out(v.outer * len);
  auto xd = x.data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    std::copy_n(xd.data() + (o * v.extent + sz(start)) * v.inner, len, out.data() + o * len);
  }
  return make_result("slice", os, std::move(out), {x}, [v, start, len](CSpan g, GradSink& sink) {
    Span gx = sink[0];
    for (std::size_t o = 0; o < v.outer; ++o) {
      float* dst = gx.data() + (o * v.extent + sz(start)) * v.inner;
      for (std::size_t i = 0; i < len; ++i) dst[i] += g[o * len + i];
    }
  });
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::int64_t> indices) {
  if (table.rank() != 2) throw ShapeError("embedding_lookup", {table.shape()});
  const std::size_t rows = sz(table.dim(0)), d = sz(table.dim(1));
  std::vector<float> out(indices.size() * d);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || sz(indices[i]) >= rows) {
      throw ShapeError("embedding_lookup", {table.shape()}, "index " + std::to_string(indices[i]));
    }
    std::copy_n(table.data().data() + sz(indices[i]) * d, d, out.data() + i * d);
  }
  std::vector<std::int64_t> idx(indices.begin(), indices.end());
  return make_result("embedding_lookup", {static_cast<std::int64_t>(indices.size()), table.dim(1)},
                     std::move(out), {table}, [idx = std::move(idx), d](CSpan g, GradSink& sink) {
                       Span gt = sink[0];
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         for (std::size_t j = 0; j < d; ++j) gt[sz(idx[i]) * d + j] += g[i * d + j];
                       }
                     });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (float v : x.data()) s += v;
  return make_result("sum", {}, {static_cast<float>(s)}, {x}, [](CSpan g, GradSink& sink) {
    Span gx = sink[0];
    for (float& v : gx) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean", {x.shape()}, "empty");
  double s = 0.0;
  for (float v : x.data()) s += v;
  const double n = static_cast<double>(x.numel());
  return make_result("mean", {}, {static_cast<float>(s / n)}, {x}, [n](CSpan g, GradSink& sink) {
    Span gx = sink[0];
    const float d = static_cast<float>(g[0] / n);
    for (float& v : gx) v += d;
  });
}

Tensor mse_loss(const Tensor& a, const Tensor& b) {
  require_same("mse_loss", a, b);
  if (a.numel() == 0) throw ShapeError("mse_loss", {a.shape()}, "empty");
  auto ad = a.data(), bd = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < ad.size(); ++i) {
    const double d = static_cast<double>(ad[i]) - bd[i];
    s += d * d;
  }
  const double n = static_cast<double>(ad.size());
  return make_result("mse_loss", {}, {static_cast<float>(s / n)}, {a, b},
                     [a, b, n](CSpan g, GradSink& sink) {
                       auto ad = a.data(), bd = b.data();
                       const double k = 2.0 * g[0] / n;
                       Span ga = sink[0];
                       for (std::size_t i = 0; i < ga.size(); ++i) {
                         ga[i] += static_cast<float>(k * (static_cast<double>(ad[i]) - bd[i]));
                       }
                       Span gb = sink[1];
                       for (std::size_t i = 0; i < gb.size(); ++i) {
                         gb[i] -= static_cast<float>(k * (static_cast<double>(ad[i]) - bd[i]));
                       }
                     });
}

// ---------------------------------------------------------------------------
// Resampling

Tensor avg_pool2(const Tensor& x) {
  const auto& xs = x.shape();
  if (xs.size() != 4 || xs[2] % 2 != 0 || xs[3] % 2 != 0) throw ShapeError("avg_pool2", {xs});
  const std::size_t planes = sz(xs[0] * xs[1]), h = sz(xs[2]), w = sz(xs[3]);
  const std::size_t ho = h / 2, wo = w / 2;
  auto xd = x.data();
  std::vector<float> out(planes * ho * wo);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < ho; ++y) {
      for (std::size_t xx = 0; xx < wo; ++xx) {
        const float* s = xd.data() + p * h * w + 2 * y * w + 2 * xx;
        out[(p * ho + y) * wo + xx] = 0.25f * ((s[0] + s[1]) + (s[w] + s[w + 1]));
      }
    }
  }
  return make_result("avg_pool2", {xs[0], xs[1], xs[2] / 2, xs[3] / 2}, std::move(out), {x},
                     [planes, h, w, ho, wo](CSpan g, GradSink& sink) {
                       Span gx = sink[0];
                       for (std::size_t p = 0; p < planes; ++p) {
                         for (std::size_t y = 0; y < ho; ++y) {
                           for (std::size_t xx = 0; xx < wo; ++xx) {
                             const float v = 0.25f * g[(p * ho + y) * wo + xx];
                             float* d = gx.data() + p * h * w + 2 * y * w + 2 * xx;
                             d[0] += v;
                             d[1] += v;
                             d[w] += v;
                             d[w + 1] += v;
                           }
                         }
                       }
                     });
}

Tensor upsample_nearest2(const Tensor& x) {
  const auto& xs = x.shape();
  if (xs.size() != 4) throw ShapeError("upsample_nearest2", {xs});
  const std::size_t planes = sz(xs[0] * xs[1]), h = sz(xs[2]), w = sz(xs[3]);
  const std::size_t wo = 2 * w;
  auto xd = x.data();
  std::vector<float> out(planes * 4 * h * w);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < 2 * h; ++y) {
      for (std::size_t xx = 0; xx < wo; ++xx) {
        out[(p * 2 * h + y) * wo + xx] = xd[p * h * w + (y / 2) * w + xx / 2];
      }
    }
  }
  return make_result("upsample_nearest2", {xs[0], xs[1], 2 * xs[2], 2 * xs[3]}, std::move(out), {x},
                     [planes, h, w, wo](CSpan g, GradSink& sink) {
                       Span gx = sink[0];
                       for (std::size_t p = 0; p < planes; ++p) {
                         for (std::size_t y = 0; y < 2 * h; ++y) {
                           for (std::size_t xx = 0; xx < wo; ++xx) {
                             gx[p * h * w + (y / 2) * w + xx / 2] += g[(p * 2 * h + y) * wo + xx];
                           }
                         }
                       }
                     });
}

}  // namespace edaq::nd
