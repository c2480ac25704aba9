// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/metrics/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "edaq/tdac/scores.hpp"

namespace edaq::metrics {

nlohmann::json DifCurve::to_json() const { return {{"t", t}, {"dif", dif}, {"avg", avg}, {"range", range}}; }

DifCurve dif_curve(const diffuse::Trajectory& traj) {
  DifCurve c;
  for (std::size_t i = 1; i < traj.steps.size(); ++i) {
    c.t.push_back(traj.steps[i].t);
    c.dif.push_back(1.0 - tdac::cosine_similarity(traj.steps[i - 1].F, traj.steps[i].F));
  }
  if (!c.dif.empty()) {
    double s = 0.0;
    for (double v : c.dif) s += v;
    c.avg = s / static_cast<double>(c.dif.size());
    const auto [lo, hi] = std::minmax_element(c.dif.begin(), c.dif.end());
    c.range = *hi - *lo;
  }
  return c;
}

Histogram histogram(std::span<const double> values, double lo, double hi, std::size_t bins) {
  if (bins == 0 || !(hi > lo)) throw std::invalid_argument("histogram: need bins > 0 and hi > lo");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.mass.assign(bins, 0.0);
  if (values.empty()) return h;
  for (double v : values) {
    auto b = static_cast<std::int64_t>(std::floor((v - lo) / (hi - lo) * static_cast<double>(bins)));
    b = std::clamp<std::int64_t>(b, 0, static_cast<std::int64_t>(bins) - 1);
    h.mass[static_cast<std::size_t>(b)] += 1.0;
  }
  for (double& m : h.mass) m /= static_cast<double>(values.size());
  return h;
}

double wasserstein1(const Histogram& a, const Histogram& b) {
  if (a.mass.size() != b.mass.size() || a.lo != b.lo || a.hi != b.hi) {
    throw std::invalid_argument("wasserstein1: histograms use different bins");
  }
  double ca = 0.0, cb = 0.0, w = 0.0;
  for (std::size_t i = 0; i < a.mass.size(); ++i) {
    ca += a.mass[i];
    cb += b.mass[i];
    w += std::abs(ca - cb);
  }
  return w * a.bin_width();
}

std::vector<std::vector<double>> mid_features(const net::Model& model, const nd::Tensor& x,
                                              std::span<const std::int64_t> t, std::size_t chunk) {
  const auto n = static_cast<std::size_t>(x.dim(0));
  const std::size_t per = static_cast<std::size_t>(x.numel()) / n;
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (std::size_t b = 0; b < n; b += chunk) {
    const std::size_t m = std::min(chunk, n - b);
    nd::Shape s = x.shape();
    s[0] = static_cast<std::int64_t>(m);
    auto xd = x.data().subspan(b * per, m * per);
    net::Taps taps;
    model.forward(nd::Tensor(s, std::vector<float>(xd.begin(), xd.end())), t.subspan(b, m), {}, {true, false, false},
                  &taps);
    const std::size_t f = static_cast<std::size_t>(taps.mid.numel()) / m;
    auto md = taps.mid.data();
    for (std::size_t i = 0; i < m; ++i) out.emplace_back(md.begin() + i * f, md.begin() + (i + 1) * f);
  }
  return out;
}

nlohmann::json DistanceHistograms::to_json() const {
  nlohmann::json sets_j = nlohmann::json::array();
  for (std::size_t i = 0; i < sets.size(); ++i) {
    sets_j.push_back({{"strategy", names[i]}, {"mass", sets[i].mass}, {"w1_to_overall", w1[i]}});
  }
  return {{"lo", overall.lo}, {"hi", overall.hi}, {"overall", overall.mass}, {"sets", sets_j}};
}

namespace {

std::vector<double> distances(const std::vector<std::vector<double>>& f, const std::vector<double>& center) {
  std::vector<double> d;
  d.reserve(f.size());
  for (const auto& v : f) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += (v[i] - center[i]) * (v[i] - center[i]);
    d.push_back(std::sqrt(s));
  }
  return d;
}

}  // namespace

DistanceHistograms distance_histograms(const net::Model& model, const diffuse::Trajectory& traj,
                                       const std::vector<tdac::CalibrationSet>& sets, std::size_t bins) {
  if (traj.steps.empty()) throw std::invalid_argument("distance_histograms: empty trajectory");
  std::vector<std::vector<double>> all;
  for (const auto& s : traj.steps) {
    const std::vector<std::int64_t> tv(static_cast<std::size_t>(s.x.dim(0)), s.t);
    auto f = mid_features(model, s.x, tv);
    all.insert(all.end(), std::make_move_iterator(f.begin()), std::make_move_iterator(f.end()));
  }
  std::vector<double> center(all.front().size(), 0.0);
  for (const auto& v : all) {
    for (std::size_t i = 0; i < v.size(); ++i) center[i] += v[i];
  }
  for (double& c : center) c /= static_cast<double>(all.size());

  const auto d_all = distances(all, center);
  std::vector<std::vector<double>> d_sets;
  double hi = *std::max_element(d_all.begin(), d_all.end());
  for (const auto& cs : sets) {
    d_sets.push_back(distances(mid_features(model, cs.x, cs.t), center));
    if (!d_sets.back().empty()) hi = std::max(hi, *std::max_element(d_sets.back().begin(), d_sets.back().end()));
  }
  if (!(hi > 0.0)) hi = 1.0;
  DistanceHistograms h;
  h.overall = histogram(d_all, 0.0, hi, bins);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    h.names.push_back(tdac::to_string(sets[i].strategy));
    h.sets.push_back(histogram(d_sets[i], 0.0, hi, bins));
    h.w1.push_back(wasserstein1(h.sets.back(), h.overall));
  }
  return h;
}

}  // namespace edaq::metrics
