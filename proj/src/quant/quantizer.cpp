// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/quant/quantizer.hpp"

#include <algorithm>
#include <cmath>

namespace edaq::quant {

namespace {

double sigmoid(double a) {
  if (a >= 0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

// d h / d alpha; zero where the rectification clips.
double rect_sigmoid_grad(double a) {
  const double s = sigmoid(a);
  const double v = 1.2 * s - 0.1;
  return (v <= 0.0 || v >= 1.0) ? 0.0 : 1.2 * s * (1.0 - s);
}

}  // namespace

double rect_sigmoid(double a) { return std::clamp(sigmoid(a) * 1.2 - 0.1, 0.0, 1.0); }

QuantizerState make_quantizer(int bits, QuantMode mode) {
  if (bits < 2 || (bits > 8 && bits < kPassThroughBits)) {
    throw std::invalid_argument("quantizer bits must be in [2, 8] or >= 32 (pass-through), got " +
                                std::to_string(bits));
  }
  QuantizerState q;
  q.bits = bits;
  q.mode = mode;
  return q;
}

nd::Tensor fake_quant(const nd::Tensor& x, const QuantizerState& q) {
  if (q.pass_through()) return x;
  if (!q.initialized) throw UninitializedQuantizerError("fake_quant on an uninitialized quantizer");
  const std::size_t c = q.channels();
  if (q.mode == QuantMode::weight_per_channel && (x.rank() == 0 || static_cast<std::size_t>(x.dim(0)) != c)) {
    throw nd::ShapeError("fake_quant", {x.shape(), q.scale.shape()}, "output channels differ from scale length");
  }
  if (q.mode == QuantMode::act_per_tensor && c != 1) {
    throw nd::ShapeError("fake_quant", {x.shape(), q.scale.shape()}, "activation quantizer needs one scale");
  }
  const bool soft = q.use_alpha && q.alpha.defined();
  if (soft && q.alpha.shape() != x.shape()) throw nd::ShapeError("fake_quant", {x.shape(), q.alpha.shape()});

  const std::size_t n = static_cast<std::size_t>(x.numel());
  const std::size_t inner = c == 0 ? 0 : n / c;
  const float qmax = q.qmax();
  auto xd = x.data();
  auto sd = q.scale.data();
  std::vector<float> out(n);
  // 0: in range, 1: clipped low, 2: clipped high, 3: degenerate pass-through.
  std::vector<std::uint8_t> region(n);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float s = sd[ch];
    const float z = q.zero_point[ch];
    const bool degen = q.degenerate[ch] != 0;
    for (std::size_t i = ch * inner; i < (ch + 1) * inner; ++i) {
      if (degen) {
        out[i] = xd[i];
        region[i] = 3;
        continue;
      }
      const float v = xd[i] / s;
      float r;
      if (soft) {
        const double a = q.alpha.data()[i];
        const float h = q.hardened ? (a >= 0.0 ? 1.0f : 0.0f) : static_cast<float>(rect_sigmoid(a));
        r = std::floor(v) + h;
      } else {
        r = round_half_away(v);
      }
      float qv = r + z;
      std::uint8_t reg = 0;
      if (qv < 0.0f) {
        qv = 0.0f;
        reg = 1;
      } else if (qv > qmax) {
        qv = qmax;
        reg = 2;
      }
      region[i] = reg;
      out[i] = (qv - z) * s;
    }
  }

  std::vector<nd::Tensor> parents{x, q.scale};
  if (soft) parents.push_back(q.alpha);
  const bool alpha_grad = soft && !q.hardened;
  std::vector<float> outv = out;
  return nd::make_result(
      "fake_quant", x.shape(), std::move(out), std::move(parents),
      [x, q, region = std::move(region), outv = std::move(outv), c, inner, soft, alpha_grad](
          std::span<const float> g, nd::GradSink& sink) {
        auto xd = x.data();
        auto sd = q.scale.data();
        if (sink.wants(0) && !soft) {
          auto gx = sink[0];
          for (std::size_t i = 0; i < gx.size(); ++i) {
            if (region[i] == 0 || region[i] == 3) gx[i] += g[i];
          }
        }
        if (sink.wants(1)) {
          auto gs = sink[1];
          for (std::size_t ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            const double s = sd[ch];
            for (std::size_t i = ch * inner; i < (ch + 1) * inner; ++i) {
              if (region[i] == 3) continue;
              // (xbar - z) - [in range] x/s
              double d = outv[i] / s;
              if (region[i] == 0) d -= static_cast<double>(xd[i]) / s;
              acc += g[i] * d;
            }
            gs[ch] += static_cast<float>(acc);
          }
        }
        if (alpha_grad && sink.wants(2)) {
          auto ga = sink[2];
          auto ad = q.alpha.data();
          for (std::size_t ch = 0; ch < c; ++ch) {
            const double s = sd[ch];
            for (std::size_t i = ch * inner; i < (ch + 1) * inner; ++i) {
              if (region[i] != 0) continue;
              ga[i] += static_cast<float>(g[i] * s * rect_sigmoid_grad(ad[i]));
            }
          }
        }
      });
}

double quant_error(std::span<const float> x, float lo, float hi, int bits) {
  const float qmax = static_cast<float>((1u << bits) - 1u);
  const float s = (hi - lo) / qmax;
  if (!(s > 0.0f)) return std::numeric_limits<double>::infinity();
  const float z = std::clamp(round_half_away(-lo / s), 0.0f, qmax);
  double err = 0.0;
  for (float v : x) {
    const float qv = std::clamp(round_half_away(v / s) + z, 0.0f, qmax);
    const double d = static_cast<double>((qv - z) * s) - v;
    err += d * d;
  }
  return err;
}

RangeChoice search_range(std::span<const float> x, int bits) {
  if (x.empty()) throw std::invalid_argument("init_range: empty sample");
  const auto [mn_it, mx_it] = std::minmax_element(x.begin(), x.end());
  const float mn = *mn_it, mx = *mx_it;
  RangeChoice best;
  if (mx == mn) {
    best.degenerate = true;
    return best;
  }
  const float lo = std::min(mn, 0.0f), hi = std::max(mx, 0.0f);
  const float qmax = static_cast<float>((1u << bits) - 1u);
  double best_err = std::numeric_limits<double>::infinity();
  for (int k = 100; k >= 50; --k) {
    const float l = lo * static_cast<float>(k) / 100.0f;
    const float h = hi * static_cast<float>(k) / 100.0f;
    const double err = quant_error(x, l, h, bits);
    if (err < best_err) {
      best_err = err;
      best.k = k;
      best.scale = (h - l) / qmax;
      best.zero_point = std::clamp(round_half_away(-l / best.scale), 0.0f, qmax);
    }
  }
  return best;
}

void init_range(const nd::Tensor& x, QuantizerState& q) {
  if (x.numel() == 0) throw std::invalid_argument("init_range: empty sample");
  if (q.pass_through()) {
    q.initialized = true;
    return;
  }
  const std::size_t c = q.mode == QuantMode::weight_per_channel ? static_cast<std::size_t>(x.dim(0)) : 1;
  const std::size_t inner = static_cast<std::size_t>(x.numel()) / c;
  std::vector<float> scale(c);
  q.zero_point.assign(c, 0.0f);
  q.degenerate.assign(c, 0);
  auto xd = x.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const RangeChoice r = search_range(xd.subspan(ch * inner, inner), q.bits);
    scale[ch] = r.scale;
    q.zero_point[ch] = r.zero_point;
    q.degenerate[ch] = r.degenerate ? 1 : 0;
  }
  q.scale = nd::Tensor({static_cast<std::int64_t>(c)}, std::move(scale));
  q.initialized = true;
}

void init_alpha(const nd::Tensor& weight, QuantizerState& q) {
  if (q.pass_through()) return;
  if (!q.initialized) throw UninitializedQuantizerError("init_alpha before init_range");
  const std::size_t c = q.channels();
  const std::size_t inner = static_cast<std::size_t>(weight.numel()) / c;
  std::vector<float> a(static_cast<std::size_t>(weight.numel()));
  auto wd = weight.data();
  auto sd = q.scale.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = ch * inner; i < (ch + 1) * inner; ++i) {
      const float v = wd[i] / sd[ch];
      const double frac = static_cast<double>(v) - std::floor(v);
      const double p = (frac + 0.1) / 1.2;
      a[i] = static_cast<float>(std::log(p / (1.0 - p)));
    }
  }
  q.alpha = nd::Tensor(weight.shape(), std::move(a));
  q.use_alpha = true;
  q.hardened = false;
}

nd::Tensor rounding_regularizer(const nd::Tensor& alpha, double beta) {
  auto ad = alpha.data();
  double acc = 0.0;
  for (float a : ad) acc += 1.0 - std::pow(std::abs(2.0 * rect_sigmoid(a) - 1.0), beta);
  return nd::make_result("rounding_regularizer", {}, {static_cast<float>(acc)}, {alpha},
                         [alpha, beta](std::span<const float> g, nd::GradSink& sink) {
                           auto ga = sink[0];
                           auto ad = alpha.data();
                           for (std::size_t i = 0; i < ga.size(); ++i) {
                             const double u = 2.0 * rect_sigmoid(ad[i]) - 1.0;
                             if (u == 0.0) continue;
                             const double d = -beta * std::pow(std::abs(u), beta - 1.0) * (u > 0 ? 1.0 : -1.0) *
                                              2.0 * rect_sigmoid_grad(ad[i]);
                             ga[i] += static_cast<float>(g[0] * d);
                           }
                         });
}

void harden(QuantizerState& q) {
  if (!q.use_alpha || !q.alpha.defined()) return;
  q.alpha = q.alpha.detach();
  q.hardened = true;
}

}  // namespace edaq::quant
