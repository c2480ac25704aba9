// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/net/reference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace edaq::net {

namespace {

struct D {
  std::vector<std::int64_t> shape;
  std::vector<double> v;

  std::int64_t dim(std::size_t i) const { return shape[i]; }
};

using Params = std::map<std::string, const nd::Tensor*>;

std::vector<double> vals(const nd::Tensor& t) { return {t.data().begin(), t.data().end()}; }

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

D silu(D x) {
  for (double& e : x.v) e = e * sigm(e);
  return x;
}

D add(D a, const D& b) {
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
  return a;
}

D linear(const D& x, const nd::Tensor& w, const nd::Tensor* b) {
  const auto n = x.dim(0), in = x.dim(1), out = w.dim(0);
  const auto wv = vals(w);
  const auto bv = b ? vals(*b) : std::vector<double>(static_cast<std::size_t>(out), 0.0);
  D y{{n, out}, std::vector<double>(static_cast<std::size_t>(n * out))};
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t o = 0; o < out; ++o) {
      double s = bv[o];
      for (std::int64_t p = 0; p < in; ++p) s += x.v[i * in + p] * wv[o * in + p];
      y.v[i * out + o] = s;
    }
  return y;
}

D conv(const D& x, const nd::Tensor& w, const nd::Tensor* b) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3), o = w.dim(0), k = w.dim(2);
  const std::int64_t pad = k / 2;
  const auto wv = vals(w);
  const auto bv = b ? vals(*b) : std::vector<double>(static_cast<std::size_t>(o), 0.0);
  D y{{n, o, h, wd}, std::vector<double>(static_cast<std::size_t>(n * o * h * wd))};
  for (std::int64_t s = 0; s < n; ++s)
    for (std::int64_t oc = 0; oc < o; ++oc)
      for (std::int64_t i = 0; i < h; ++i)
        for (std::int64_t j = 0; j < wd; ++j) {
          double acc = bv[oc];
          for (std::int64_t ic = 0; ic < c; ++ic)
            for (std::int64_t u = 0; u < k; ++u)
              for (std::int64_t q = 0; q < k; ++q) {
                const std::int64_t yy = i + u - pad, xx = j + q - pad;
                if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
                acc += x.v[((s * c + ic) * h + yy) * wd + xx] * wv[((oc * c + ic) * k + u) * k + q];
              }
          y.v[((s * o + oc) * h + i) * wd + j] = acc;
        }
  return y;
}

D group_norm(const D& x, int groups, const nd::Tensor& gamma, const nd::Tensor& beta) {
  const auto n = x.dim(0), c = x.dim(1);
  const std::int64_t sp = static_cast<std::int64_t>(x.v.size()) / (n * c);
  const std::int64_t cg = c / groups;
  const auto g = vals(gamma), b = vals(beta);
  D y = x;
  for (std::int64_t s = 0; s < n; ++s)
    for (std::int64_t gr = 0; gr < groups; ++gr) {
      const std::int64_t base = (s * c + gr * cg) * sp, cnt = cg * sp;
      double m = 0.0, var = 0.0;
      for (std::int64_t i = 0; i < cnt; ++i) m += x.v[base + i];
      m /= static_cast<double>(cnt);
      for (std::int64_t i = 0; i < cnt; ++i) var += (x.v[base + i] - m) * (x.v[base + i] - m);
      var /= static_cast<double>(cnt);
      const double inv = 1.0 / std::sqrt(var + 1e-5);
      for (std::int64_t i = 0; i < cnt; ++i) {
        const std::int64_t ch = gr * cg + i / sp;
        y.v[base + i] = (x.v[base + i] - m) * inv * g[ch] + b[ch];
      }
    }
  return y;
}

D concat_channels(const D& a, const D& b) {
  const auto n = a.dim(0), sp = a.dim(2) * a.dim(3), ca = a.dim(1), cb = b.dim(1);
  D y{{n, ca + cb, a.dim(2), a.dim(3)}, {}};
  for (std::int64_t s = 0; s < n; ++s) {
    y.v.insert(y.v.end(), a.v.begin() + s * ca * sp, a.v.begin() + (s + 1) * ca * sp);
    y.v.insert(y.v.end(), b.v.begin() + s * cb * sp, b.v.begin() + (s + 1) * cb * sp);
  }
  return y;
}

D avg_pool(const D& x) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  D y{{n, c, h / 2, w / 2}, std::vector<double>(static_cast<std::size_t>(n * c * (h / 2) * (w / 2)))};
  for (std::int64_t p = 0; p < n * c; ++p)
    for (std::int64_t i = 0; i < h / 2; ++i)
      for (std::int64_t j = 0; j < w / 2; ++j) {
        const double* b = &x.v[p * h * w];
        y.v[(p * (h / 2) + i) * (w / 2) + j] =
            0.25 * (b[2 * i * w + 2 * j] + b[2 * i * w + 2 * j + 1] + b[(2 * i + 1) * w + 2 * j] + b[(2 * i + 1) * w + 2 * j + 1]);
      }
  return y;
}

D upsample(const D& x) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  D y{{n, c, 2 * h, 2 * w}, std::vector<double>(static_cast<std::size_t>(n * c * 4 * h * w))};
  for (std::int64_t p = 0; p < n * c; ++p)
    for (std::int64_t i = 0; i < 2 * h; ++i)
      for (std::int64_t j = 0; j < 2 * w; ++j) y.v[(p * 2 * h + i) * 2 * w + j] = x.v[(p * h + i / 2) * w + j / 2];
  return y;
}

struct Net {
  const Model& m;
  Params p;

  const nd::Tensor& t(const std::string& name) const { return *p.at(name); }
  const nd::Tensor* bias(const std::string& l) const {
    auto it = p.find(l + ".bias");
    return it == p.end() ? nullptr : it->second;
  }
  D lin(const std::string& l, const D& x) const { return linear(x, t(l + ".weight"), bias(l)); }
  D cv(const std::string& l, const D& x) const { return conv(x, t(l + ".weight"), bias(l)); }
  D gn(const std::string& l, const D& x) const { return group_norm(x, m.config().groups, t(l + ".gamma"), t(l + ".beta")); }

  D res(const std::string& b, const D& x, const D& temb) const {
    D h = cv(b + ".conv1", silu(gn(b + ".norm1", x)));
    const D e = lin(b + ".temb_proj", silu(temb));
    const auto n = h.dim(0), c = h.dim(1), sp = h.dim(2) * h.dim(3);
    for (std::int64_t s = 0; s < n; ++s)
      for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t i = 0; i < sp; ++i) h.v[(s * c + ch) * sp + i] += e.v[s * c + ch];
    h = cv(b + ".conv2", silu(gn(b + ".norm2", h)));
    const D sc = p.count(b + ".nin_shortcut.weight") ? cv(b + ".nin_shortcut", x) : x;
    return add(sc, h);
  }

  D attn(const std::string& b, const D& x) const {
    const D h = gn(b + ".norm", x);
    const D q = cv(b + ".q", h), k = cv(b + ".k", h), v = cv(b + ".v", h);
    const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    D o{x.shape, std::vector<double>(x.v.size(), 0.0)};
    const double scale = 1.0 / std::sqrt(static_cast<double>(c));
    std::vector<double> a(static_cast<std::size_t>(hw));
    for (std::int64_t s = 0; s < n; ++s) {
      const std::int64_t base = s * c * hw;
      for (std::int64_t i = 0; i < hw; ++i) {
        double mx = -1e300;
        for (std::int64_t j = 0; j < hw; ++j) {
          double dot = 0.0;
          for (std::int64_t ch = 0; ch < c; ++ch) dot += q.v[base + ch * hw + i] * k.v[base + ch * hw + j];
          a[j] = dot * scale;
          mx = std::max(mx, a[j]);
        }
        double z = 0.0;
        for (std::int64_t j = 0; j < hw; ++j) z += (a[j] = std::exp(a[j] - mx));
        for (std::int64_t ch = 0; ch < c; ++ch) {
          double acc = 0.0;
          for (std::int64_t j = 0; j < hw; ++j) acc += v.v[base + ch * hw + j] * a[j] / z;
          o.v[base + ch * hw + i] = acc;
        }
      }
    }
    return add(x, cv(b + ".proj_out", o));
  }
};

D features(std::span<const std::int64_t> t, int dim) {
  const int half = dim / 2;
  D f{{static_cast<std::int64_t>(t.size()), dim}, std::vector<double>(t.size() * static_cast<std::size_t>(dim))};
  for (std::size_t n = 0; n < t.size(); ++n)
    for (int i = 0; i < half; ++i) {
      const double a = static_cast<double>(t[n]) * std::pow(10000.0, -static_cast<double>(i) / half);
      // Same float32 rounding as the model's embedding input.
      f.v[n * dim + i] = static_cast<float>(std::sin(a));
      f.v[n * dim + half + i] = static_cast<float>(std::cos(a));
    }
  return f;
}

}  // namespace

std::vector<double> reference_forward(const Model& model, const nd::Tensor& x, std::span<const std::int64_t> t) {
  Net net{model, {}};
  // parameters() returns handles by value; keep them alive for the pass.
  const auto params = model.parameters();
  for (const auto& np : params) net.p[np.name] = &np.tensor;

  D in{x.shape(), vals(x)};
  const D f = features(t, model.config().temb_dim);
  if (model.arch() == Arch::mlp_denoiser) {
    const auto n = in.dim(0), dx = in.dim(1), df = f.dim(1);
    D h{{n, dx + df}, {}};
    for (std::int64_t s = 0; s < n; ++s) {
      h.v.insert(h.v.end(), in.v.begin() + s * dx, in.v.begin() + (s + 1) * dx);
      h.v.insert(h.v.end(), f.v.begin() + s * df, f.v.begin() + (s + 1) * df);
    }
    for (const char* l : {"fc1", "fc2", "fc3"}) h = silu(net.lin(l, h));
    return net.lin("out", h).v;
  }
  const D temb = net.lin("temb.dense1", silu(net.lin("temb.dense0", f)));
  D h = net.cv("conv_in", in);
  const D skip0 = net.res("down0.res0", h, temb);
  const D skip1 = net.res("down1.res0", avg_pool(skip0), temb);
  h = net.res("mid.res0", skip1, temb);
  h = net.attn("mid.attn", h);
  h = net.res("up1.res0", concat_channels(h, skip1), temb);
  h = upsample(h);
  h = net.res("up0.res0", concat_channels(h, skip0), temb);
  return net.cv("out.conv", silu(net.gn("out.norm", h))).v;
}

}  // namespace edaq::net
