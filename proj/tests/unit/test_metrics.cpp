// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cmath>

#include <doctest.h>

#include "edaq/diffuse/sampler.hpp"
#include "edaq/metrics/compression.hpp"
#include "edaq/metrics/diagnostics.hpp"
#include "edaq/metrics/fidelity.hpp"
#include "edaq/nd/parallel.hpp"
#include "edaq/tdac/calibration.hpp"
#include "helpers.hpp"

using namespace edaq;
using nd::Tensor;

namespace {

// Output positions of each tiny_unet layer, from the resolution it runs at.
std::int64_t positions_by_hand(const std::string& name) {
  if (name.rfind("temb", 0) == 0 || name.find("temb_proj") != std::string::npos) return 1;
  for (const char* p : {"down1.", "mid.", "up1."})
    if (name.rfind(p, 0) == 0) return 16;
  return 64;
}

struct Oracle {
  double bops = 0, fp_bops = 0, size = 0, fp_size = 0, q_bops = 0, q_fp_bops = 0;
};

Oracle oracle_counts(const net::Model& m, int bw, int ba) {
  Oracle o;
  std::int64_t layer_params = 0;
  for (const auto& l : m.layers()) {
    const auto& s = l.weight.shape();
    std::int64_t macs = 1;
    for (auto d : s) macs *= d;
    macs *= positions_by_hand(l.name);
    const std::int64_t params = l.weight.numel() + (l.bias.defined() ? l.bias.numel() : 0);
    layer_params += params;
    const bool q = l.quantizable;
    const double b_w = q ? bw : 32, b_a = q ? ba : 32;
    o.bops += static_cast<double>(macs) * b_w * b_a;
    o.fp_bops += static_cast<double>(macs) * 1024.0;
    if (q) {
      o.q_bops += static_cast<double>(macs) * b_w * b_a;
      o.q_fp_bops += static_cast<double>(macs) * 1024.0;
    }
    o.size += static_cast<double>(params) * b_w / 8.0;
    if (q) o.size += static_cast<double>(s[0]) * (32 + bw) / 8.0 + (32 + ba) / 8.0;
  }
  std::int64_t all = 0;
  for (const auto& p : m.parameters()) all += p.tensor.numel();
  o.size += static_cast<double>(all - layer_params) * 4.0;
  o.fp_size = static_cast<double>(all) * 4.0;
  return o;
}

std::vector<double> gaussian(std::size_t n, std::size_t d, double shift, std::uint64_t seed) {
  nd::Rng rng(seed);
  std::vector<double> v(n * d);
  for (auto& x : v) x = rng.normal();
  for (std::size_t i = 0; i < n; ++i) v[i * d] += shift;
  return v;
}

}  // namespace

TEST_CASE("compression totals match a shape-only oracle") {
  const auto m = net::build_model(net::Arch::tiny_unet, {}, 1);
  CHECK(m.parameter_count() <= 200000);
  for (auto [bw, ba] : {std::pair{4, 8}, std::pair{8, 8}, std::pair{2, 4}}) {
    const auto r = metrics::count_compression(m, bw, ba);
    const auto o = oracle_counts(m, bw, ba);
    CHECK(r.bops == o.bops);
    CHECK(r.fp_bops == o.fp_bops);
    CHECK(r.size_bytes == doctest::Approx(o.size).epsilon(1e-12));
    CHECK(r.fp_size_bytes == o.fp_size);
    CHECK(r.quantized_bops_ratio == doctest::Approx(o.q_fp_bops / o.q_bops).epsilon(1e-12));
    double sb = 0, ss = 0;
    for (const auto& row : r.rows) {
      sb += row.bops;
      ss += row.size_bytes;
    }
    CHECK(sb == r.bops);
    CHECK(ss + static_cast<double>(r.other_params) * 4.0 == doctest::Approx(r.size_bytes).epsilon(1e-12));
    CHECK(r.bops_ratio() > 1.0);
    CHECK(r.size_ratio() > 1.0);
  }
}

TEST_CASE("compression ratios") {
  const auto m = net::build_model(net::Arch::tiny_unet, {}, 1);
  CHECK(metrics::count_compression(m, 8, 8).quantized_bops_ratio == 16.0);
  const auto fp = metrics::count_compression(m, 32, 32);
  CHECK(fp.bops_ratio() == 1.0);
  CHECK(fp.size_ratio() == 1.0);
  const auto w4 = metrics::count_compression(m, 4, 8);
  CHECK(w4.bops_ratio() >= 28.0);
  CHECK(w4.bops_ratio() <= 32.0);
  CHECK(w4.size_ratio() >= 7.0);
  CHECK(w4.size_ratio() <= 8.0);
  const auto j = w4.to_json();
  CHECK(j["layers"].size() == m.layers().size());
  CHECK(j["bops_ratio"].get<double>() == w4.bops_ratio());
}

TEST_CASE("frechet distance examples") {
  const std::size_t n = 4000, d = 3;
  const auto a = gaussian(n, d, 0.0, 1);
  CHECK(metrics::frechet_distance(a, n, a, n, d).distance < 1e-6);
  // Unit Gaussians a distance 2 apart: d^2 = 4 up to sampling error.
  const auto b = gaussian(n, d, 2.0, 2);
  const auto ab = metrics::frechet_distance(a, n, b, n, d);
  CHECK(ab.distance == doctest::Approx(4.0).epsilon(0.05));
  const auto ba = metrics::frechet_distance(b, n, a, n, d);
  CHECK(std::abs(ab.distance - ba.distance) < 1e-8);
  CHECK_FALSE(ab.rank_deficient);

  // Closed form for diagonal covariances: sum (sqrt(s1) - sqrt(s2))^2.
  auto c = gaussian(n, d, 0.0, 3);
  for (auto& x : c) x *= 3.0;
  const auto ac = metrics::frechet_distance(a, n, c, n, d).distance;
  CHECK(ac == doctest::Approx(3.0 * 4.0).epsilon(0.08));

  // Fewer samples than dimensions: flagged and still finite.
  const auto s1 = gaussian(8, 20, 0.0, 4), s2 = gaussian(8, 20, 0.0, 5);
  const auto r = metrics::frechet_distance(s1, 8, s2, 8, 20);
  CHECK(r.rank_deficient);
  CHECK(std::isfinite(r.distance));
  CHECK(r.distance >= 0.0);
}

TEST_CASE("frechet proxy needs enough samples") {
  const Tensor a = test::random_tensor({300, 2}, 1), b = test::random_tensor({300, 2}, 2);
  const auto r = metrics::frechet_proxy(a, b);
  CHECK(r.distance >= 0.0);
  CHECK(metrics::frechet_proxy(a, a).distance < 1e-6);
  CHECK_THROWS(metrics::frechet_proxy(test::random_tensor({100, 2}, 3), b));
}

TEST_CASE("dif curve and histograms") {
  diffuse::Trajectory tr;
  for (int i = 0; i < 5; ++i) {
    diffuse::TrajectoryStep s;
    s.t = 40 - 10 * i;
    s.F = {1.0f, 2.0f};
    tr.steps.push_back(s);
  }
  auto c = metrics::dif_curve(tr);
  CHECK(c.dif.size() == 4);
  for (double v : c.dif) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(c.range == doctest::Approx(0.0).epsilon(1e-12));
  tr.steps[2].F = {2.0f, -1.0f};
  c = metrics::dif_curve(tr);
  double mean = 0.0;
  for (double v : c.dif) mean += v / 4.0;
  CHECK(c.avg == doctest::Approx(mean));
  CHECK(c.range == doctest::Approx(1.0));

  const std::vector<double> v{0.1, 0.2, 0.9, 1.0};
  const auto h = metrics::histogram(v, 0.0, 1.0, 4);
  CHECK(h.mass == std::vector<double>{0.5, 0.0, 0.0, 0.5});
  // Moving all mass by one bin costs one bin width.
  const auto p = metrics::histogram(std::vector<double>{0.1}, 0.0, 1.0, 4);
  const auto q = metrics::histogram(std::vector<double>{0.35}, 0.0, 1.0, 4);
  CHECK(metrics::wasserstein1(p, q) == doctest::Approx(0.25));
  CHECK(metrics::wasserstein1(p, p) == 0.0);
  CHECK_THROWS(metrics::wasserstein1(p, metrics::histogram(v, 0.0, 2.0, 4)));
}

TEST_CASE("teacher-forced trajectory mse") {
  const auto sched = diffuse::make_schedule(1000);
  const auto m = net::build_model(net::Arch::tiny_unet, {}, 2);
  diffuse::SamplerConfig cfg;
  cfg.steps = 8;
  cfg.seed = 3;
  const auto calib = diffuse::run_trajectory(m, sched, cfg, 8);
  Tensor cx;
  std::vector<std::int64_t> ct;
  {
    std::vector<float> xs;
    for (const auto& s : calib.steps) {
      xs.insert(xs.end(), s.x.data().begin(), s.x.data().end());
      ct.insert(ct.end(), 8, s.t);
    }
    cx = Tensor({64, 1, 8, 8}, std::move(xs));
  }
  const auto same = quant::attach_quantizers(m, 32, 32, cx, ct);
  const auto z = metrics::trajectory_mse(m, same, sched, cfg, 4);
  CHECK(z.mse.size() == 8);
  for (double v : z.mse) CHECK(v == 0.0);
  CHECK(z.auc() == 0.0);

  const auto w8 = metrics::trajectory_mse(m, quant::attach_quantizers(m, 8, 8, cx, ct), sched, cfg, 4);
  const auto w4 = metrics::trajectory_mse(m, quant::attach_quantizers(m, 4, 8, cx, ct), sched, cfg, 4);
  int above = 0;
  for (std::size_t i = 0; i < 8; ++i) above += w4.mse[i] >= w8.mse[i];
  CHECK(above >= 4);
  CHECK(w4.auc() > w8.auc());
  CHECK(w8.auc() > 0.0);
}

TEST_CASE("calibration spread: tdac histogram is closer than a single step") {
  const auto sched = diffuse::make_schedule(1000);
  const auto m = net::build_model(net::Arch::tiny_unet, {}, 6);
  diffuse::SamplerConfig cfg;
  cfg.steps = 20;
  cfg.seed = 1;
  const auto tr = diffuse::run_trajectory(m, sched, cfg, 16);
  tdac::TdacOptions o;
  o.N = 64;
  const auto td = tdac::build_tdac(tr, o).calib;
  tdac::BaselineOptions b;
  b.N = 16;
  b.single_t = tr.steps.front().t;
  const auto ss = tdac::baseline_calibration(tr, tdac::Strategy::single_step, b);
  const auto h = metrics::distance_histograms(m, tr, {td, ss});
  REQUIRE(h.w1.size() == 2);
  CHECK(h.overall.mass.size() == 40);
  CHECK(h.w1[0] <= h.w1[1]);
}

TEST_CASE("trajectory mse does not depend on the thread count") {
  const auto sched = diffuse::make_schedule(1000);
  const auto m = net::build_model(net::Arch::tiny_unet, {}, 4);
  diffuse::SamplerConfig cfg;
  cfg.steps = 5;
  cfg.seed = 8;
  const Tensor cx = test::random_tensor({16, 1, 8, 8}, 9);
  const std::vector<std::int64_t> ct(16, 500);
  const auto q = quant::attach_quantizers(m, 4, 8, cx, ct);
  const int before = nd::thread_count();
  nd::set_thread_count(1);
  const auto one = metrics::trajectory_mse(m, q, sched, cfg, 8);
  nd::set_thread_count(4);
  const auto four = metrics::trajectory_mse(m, q, sched, cfg, 8);
  nd::set_thread_count(before);
  REQUIRE(one.mse.size() == four.mse.size());
  for (std::size_t i = 0; i < one.mse.size(); ++i) {
    CHECK(std::bit_cast<std::uint64_t>(one.mse[i]) == std::bit_cast<std::uint64_t>(four.mse[i]));
  }
}
