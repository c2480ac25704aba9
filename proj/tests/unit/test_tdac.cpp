// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include <doctest.h>

#include "edaq/diffuse/sampler.hpp"
#include "edaq/tdac/calibration.hpp"
#include "edaq/tdac/scores.hpp"
#include "helpers.hpp"
#include "tdac_oracle.hpp"

using namespace edaq;
using tdac::Features;

namespace {

std::int64_t total(const std::vector<std::int64_t>& x) { return std::accumulate(x.begin(), x.end(), std::int64_t{0}); }

// Trajectory on the 100-step grid of T = 1000 with sample values encoding
// (t, batch index) so draws can be traced back.
diffuse::Trajectory synthetic_trajectory(std::int64_t batch, int steps = 100, std::uint64_t seed = 1) {
  diffuse::Trajectory tr;
  tr.T = 1000;
  tr.sampler.steps = steps;
  nd::Rng rng(seed);
  for (auto t : diffuse::timestep_grid(1000, steps)) {
    diffuse::TrajectoryStep s;
    s.t = t;
    std::vector<float> x(static_cast<std::size_t>(batch * 2));
    for (std::int64_t b = 0; b < batch; ++b) {
      x[static_cast<std::size_t>(2 * b)] = static_cast<float>(t);
      x[static_cast<std::size_t>(2 * b + 1)] = static_cast<float>(b);
    }
    s.x = nd::Tensor({batch, 2}, std::move(x));
    s.F.resize(6);
    const double phase = static_cast<double>(t) / 1000.0;
    for (std::size_t k = 0; k < s.F.size(); ++k) {
      s.F[k] = static_cast<float>(std::sin(phase * 3.0 * static_cast<double>(k + 1)) + 0.05 * rng.normal());
    }
    tr.steps.push_back(std::move(s));
  }
  return tr;
}

}  // namespace

TEST_CASE("density and variety examples") {
  CHECK(tdac::density_scores({{0, 0}, {0, 0}, {1, 1}}, 0.5) == std::vector<std::int64_t>{2, 2, 1});
  const Features same(5, {1.0f, 2.0f});
  CHECK(tdac::density_scores(same, 1e-9) == std::vector<std::int64_t>(5, 5));
  CHECK(tdac::density_scores({{0}, {5}, {-7}}, 1e30) == std::vector<std::int64_t>(3, 3));
  CHECK_THROWS_AS(tdac::density_scores(same, 0.0), std::invalid_argument);

  const auto V = tdac::variety_scores({{1, 0}, {0, 1}, {1, 0}});
  CHECK(V[0] == doctest::Approx(1.0));
  CHECK(V[1] == doctest::Approx(2.0));
  CHECK(V[2] == doctest::Approx(1.0));
  for (double v : tdac::variety_scores(same)) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
  const auto Vn = tdac::variety_scores({{1, 2}, {1, 2}, {-1, -2}});
  CHECK(Vn[2] == doctest::Approx(4.0));
  CHECK(Vn[0] == doctest::Approx(2.0));
  // Zero vectors count as orthogonal.
  CHECK(tdac::cosine_similarity(std::vector<float>{0, 0}, std::vector<float>{1, 1}) == 0.0);
}

TEST_CASE("min-max scaling") {
  const std::vector<double> a{2, 1, 2}, b{3, 3, 3}, c{0, 10};
  CHECK(tdac::min_max_scale(a).values == std::vector<double>{1, 0, 1});
  const auto sb = tdac::min_max_scale(b);
  CHECK(sb.values == std::vector<double>{0, 0, 0});
  CHECK(sb.degenerate);
  CHECK(tdac::min_max_scale(c).values == std::vector<double>{0, 1});
  CHECK_FALSE(tdac::min_max_scale(c).degenerate);
}

TEST_CASE("allocation examples") {
  CHECK(tdac::allocate(std::vector<double>{1, 1, 2}, 8) == std::vector<std::int64_t>{2, 2, 4});
  CHECK(tdac::allocate(std::vector<double>{1, 1, 1}, 4) == std::vector<std::int64_t>{2, 1, 1});
  CHECK(tdac::allocate(std::vector<double>{0, 0, 0}, 3) == std::vector<std::int64_t>{1, 1, 1});
  // 4/3 and 7/3 share a remainder; the lower index wins.
  CHECK(tdac::allocate(std::vector<double>{4, 7, 1}, 4) == std::vector<std::int64_t>{2, 2, 0});
  CHECK_THROWS_AS(tdac::allocate(std::vector<double>{1, -1}, 3), std::invalid_argument);
  CHECK_THROWS_AS(tdac::allocate(std::vector<double>{1, 1}, 0), std::invalid_argument);
}

TEST_CASE("apportionment oracle agrees with the examples") {
  auto v = test::oracle_apportionments({1, 1, 1}, 4);
  REQUIRE(v.size() == 1);
  CHECK(v[0] == std::vector<std::int64_t>{2, 1, 1});
  v = test::oracle_apportionments({0, 0, 0, 0}, 6);
  REQUIRE(v.size() == 1);
  CHECK(v[0] == std::vector<std::int64_t>{2, 2, 1, 1});
}

TEST_CASE("scores and allocation match brute-force oracles") {
  const auto r = test::run_tdac_oracles(1000, 11);
  CHECK(r.cases == 1000);
  CHECK(r.density_mismatch == 0);
  CHECK(r.variety_mismatch == 0);
  CHECK(r.allocate_mismatch == 0);
  CHECK(r.budget_violation == 0);
}

TEST_CASE("default epsilon is the lower quartile of pairwise mse") {
  const Features F{{0}, {1}, {3}, {6}};
  // pairwise mse: 1, 9, 36, 4, 25, 9 -> sorted 1 4 9 9 25 36, q25 at 1.25 -> 4 + 0.25 * 5
  CHECK(tdac::default_epsilon(F) == doctest::Approx(5.25));
  CHECK(tdac::default_epsilon(Features(3, {1.0f})) > 0.0);
}

TEST_CASE("variety ranking is invariant to uniform positive scaling") {
  nd::Rng rng(3);
  Features F(12, std::vector<float>(5));
  for (auto& f : F)
    for (auto& v : f) v = static_cast<float>(rng.normal());
  Features G = F;
  for (auto& f : G)
    for (auto& v : f) v *= 8.0f;
  const auto a = tdac::variety_scores(F), b = tdac::variety_scores(G);
  std::vector<std::size_t> ra(12), rb(12);
  std::iota(ra.begin(), ra.end(), 0);
  std::iota(rb.begin(), rb.end(), 0);
  std::sort(ra.begin(), ra.end(), [&](auto i, auto j) { return a[i] < a[j]; });
  std::sort(rb.begin(), rb.end(), [&](auto i, auto j) { return b[i] < b[j]; });
  CHECK(ra == rb);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-6));
}

TEST_CASE("permuting timesteps permutes every score") {
  nd::Rng rng(4);
  const std::size_t T = 15;
  Features F(T, std::vector<float>(4));
  for (auto& f : F)
    for (auto& v : f) v = static_cast<float>(rng.normal());
  // Distinct totals so that the permutation cannot reshuffle remainder ties.
  const auto perm = rng.permutation(T);
  Features P(T);
  for (std::size_t i = 0; i < T; ++i) P[i] = F[perm[i]];
  const double eps = tdac::default_epsilon(F);
  const auto D = tdac::density_scores(F, eps), Dp = tdac::density_scores(P, eps);
  const auto V = tdac::variety_scores(F), Vp = tdac::variety_scores(P);
  for (std::size_t i = 0; i < T; ++i) {
    CHECK(Dp[i] == D[perm[i]]);
    CHECK(Vp[i] == doctest::Approx(V[perm[i]]).epsilon(1e-12));
  }
  std::vector<double> S(T), Sp(T);
  for (std::size_t i = 0; i < T; ++i) S[i] = 1.0 + static_cast<double>(i) * 0.173;
  for (std::size_t i = 0; i < T; ++i) Sp[i] = S[perm[i]];
  const auto X = tdac::allocate(S, 1024), Xp = tdac::allocate(Sp, 1024);
  for (std::size_t i = 0; i < T; ++i) CHECK(Xp[i] == X[perm[i]]);
}

TEST_CASE("lambda moves the share of the most varied step monotonically") {
  // share(lambda) = (D_k + lambda) / (sum D + lambda sum V) with V_k = 1, so
  // its slope has the sign of sum D - D_k sum V: non-decreasing exactly when
  // that is >= 0, non-increasing otherwise.
  nd::Rng rng(8);
  int rising = 0;
  for (int c = 0; c < 200; ++c) {
    const std::size_t T = 3 + c % 15;
    Features F(T, std::vector<float>(4));
    for (auto& f : F)
      for (auto& v : f) v = static_cast<float>(rng.normal());
    std::vector<std::int64_t> t(T);
    std::iota(t.begin(), t.end(), 0);
    std::size_t k = 0;
    double sD = 0.0, sV = 0.0, prev = -1.0;
    bool up = true;
    for (double lambda : {0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 50.0}) {
      tdac::TdacOptions o;
      o.lambda = lambda;
      o.epsilon = 1.0;
      const auto tab = tdac::score_timesteps(t, F, o);
      if (tab.variety_degenerate) break;
      if (lambda == 0.0) {
        for (std::size_t i = 0; i < T; ++i) {
          if (tab.rows[i].V_hat == 1.0) k = i;
          sD += tab.rows[i].D_hat;
          sV += tab.rows[i].V_hat;
        }
        up = sD - tab.rows[k].D_hat * sV >= 0.0;
        rising += up;
      }
      double sum = 0.0;
      for (const auto& r : tab.rows) sum += r.S;
      const double raw = sum > 0.0 ? tab.rows[k].S / sum : 0.0;
      if (prev >= 0.0) {
        if (up) {
          CHECK(raw >= prev - 1e-12);
        } else {
          CHECK(raw <= prev + 1e-12);
        }
      }
      prev = raw;
    }
  }
  CHECK(rising > 0);
}

TEST_CASE("a sparse most-varied step gains share with lambda") {
  // Steps 0..3 cluster, step 4 is an isolated outlier: lowest density and
  // highest variety, so its share grows with lambda.
  const Features F{{1, 0}, {1, 0.05f}, {1, -0.05f}, {0.98f, 0.02f}, {-1, 0.3f}};
  const std::vector<std::int64_t> t{0, 1, 2, 3, 4};
  double prev = -1.0;
  for (double lambda : {0.0, 0.5, 1.0, 2.0, 8.0}) {
    tdac::TdacOptions o;
    o.lambda = lambda;
    o.epsilon = 0.01;
    o.N = 100;
    const auto tab = tdac::score_timesteps(t, F, o);
    CHECK(tab.rows[4].V_hat == 1.0);
    double sum = 0.0;
    for (const auto& r : tab.rows) sum += r.S;
    const double share = tab.rows[4].S / sum;
    CHECK(share > prev);
    prev = share;
  }
}

TEST_CASE("lambda zero ranks by density") {
  const auto tr = synthetic_trajectory(16);
  std::vector<std::int64_t> t;
  Features F;
  for (auto it = tr.steps.rbegin(); it != tr.steps.rend(); ++it) {
    t.push_back(it->t);
    F.push_back(it->F);
  }
  tdac::TdacOptions o;
  o.lambda = 0.0;
  const auto tab = tdac::score_timesteps(t, F, o);
  for (std::size_t i = 1; i < tab.rows.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      CHECK((tab.rows[i].S < tab.rows[j].S) == (tab.rows[i].D_hat < tab.rows[j].D_hat));
    }
  }
}

TEST_CASE("build_tdac table, draw and CSV") {
  const auto tr = synthetic_trajectory(128);
  tdac::TdacOptions o;
  o.N = 1024;
  o.seed = 5;
  const auto r = tdac::build_tdac(tr, o);
  REQUIRE(r.table.rows.size() == 100);
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < r.table.rows.size(); ++i) {
    const auto& row = r.table.rows[i];
    if (i > 0) CHECK(row.t > r.table.rows[i - 1].t);
    CHECK(row.D >= 1);
    CHECK(row.D_hat >= 0.0);
    CHECK(row.D_hat <= 1.0);
    CHECK(row.V_hat >= 0.0);
    CHECK(row.V_hat <= 1.0);
    CHECK(row.S == doctest::Approx(row.D_hat + row.V_hat));
    sum += row.X;
  }
  CHECK(sum == 1024);
  CHECK(r.table.epsilon_default);
  CHECK(r.calib.size() == 1024);
  CHECK(r.calib.x.dim(0) == 1024);
  // Each item comes from its own step, and no batch entry is drawn twice.
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  for (std::size_t i = 0; i < r.calib.size(); ++i) {
    const auto xt = static_cast<std::int64_t>(r.calib.x.data()[2 * i]);
    const auto xb = static_cast<std::int64_t>(r.calib.x.data()[2 * i + 1]);
    CHECK(xt == r.calib.t[i]);
    CHECK(seen.insert({xt, xb}).second);
  }
  const auto again = tdac::build_tdac(tr, o);
  CHECK(test::bit_equal(again.calib.x, r.calib.x));

  const auto dir = test::scratch_dir("tdac_csv");
  r.table.write_csv(dir / "scores.csv");
  std::ifstream in(dir / "scores.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,D,V,D_hat,V_hat,S,X");
  int rows = 0;
  while (std::getline(in, line)) rows += line.empty() ? 0 : 1;
  CHECK(rows == 100);
  const auto side = r.table.sidecar();
  CHECK(side.contains("epsilon"));
  CHECK(side.contains("lambda"));
  CHECK(side["N"] == 1024);

  tdac::save_calibration(r.calib, dir / "calib.bin");
  const auto back = tdac::load_calibration(dir / "calib.bin");
  CHECK(back.t == r.calib.t);
  CHECK(test::bit_equal(back.x, r.calib.x));
}

TEST_CASE("identical features give a uniform allocation") {
  auto tr = synthetic_trajectory(16);
  for (auto& s : tr.steps) s.F = {1.0f, 2.0f, 3.0f};
  tdac::TdacOptions o;
  o.N = 1000;
  const auto r = tdac::build_tdac(tr, o);
  CHECK(r.table.density_degenerate);
  CHECK(r.table.variety_degenerate);
  for (const auto& row : r.table.rows) CHECK(row.X == 10);
}

TEST_CASE("oversized steps raise a budget error") {
  const auto tr = synthetic_trajectory(4);
  tdac::BaselineOptions b;
  b.N = 10;
  b.single_t = 0;
  CHECK_THROWS_AS(tdac::baseline_calibration(tr, tdac::Strategy::single_step, b), tdac::BudgetError);
  tdac::TdacOptions o;
  o.N = 1024;
  CHECK_THROWS_AS(tdac::build_tdac(tr, o), tdac::BudgetError);
}

TEST_CASE("baseline strategies") {
  const auto tr = synthetic_trajectory(32);
  tdac::BaselineOptions b;
  b.N = 1024;
  b.seed = 2;
  const auto eq = tdac::baseline_calibration(tr, tdac::Strategy::equal_spaced, b);
  CHECK(eq.size() == 1024);
  std::map<std::int64_t, std::int64_t> counts;
  for (auto t : eq.t) ++counts[t];
  CHECK(counts.size() == 100);
  std::int64_t lo = 1 << 30, hi = 0;
  for (auto& [t, c] : counts) {
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  CHECK(hi - lo <= 1);

  b.single_t = 0;
  b.N = 20;
  const auto ss = tdac::baseline_calibration(tr, tdac::Strategy::single_step, b);
  CHECK(ss.size() == 20);
  for (auto t : ss.t) CHECK(t == 0);
  b.single_t = 3;
  CHECK_THROWS(tdac::baseline_calibration(tr, tdac::Strategy::single_step, b));

  b.N = 1024;
  const auto rnd = tdac::baseline_calibration(tr, tdac::Strategy::random, b);
  CHECK(rnd.size() == 1024);
  std::set<std::pair<float, float>> uniq;
  for (std::size_t i = 0; i < rnd.size(); ++i) uniq.insert({rnd.x.data()[2 * i], rnd.x.data()[2 * i + 1]});
  CHECK(uniq.size() == 1024);
  b.N = 32 * 100 + 1;
  CHECK_THROWS_AS(tdac::baseline_calibration(tr, tdac::Strategy::random, b), tdac::BudgetError);

  b.N = 1024;
  const auto nd_ = tdac::baseline_calibration(tr, tdac::Strategy::normal_density, b);
  CHECK(nd_.size() == 1024);
  CHECK_THROWS(tdac::baseline_calibration(tr, tdac::Strategy::tdac, b));
  CHECK(tdac::parse_strategy("normal_density") == tdac::Strategy::normal_density);
  CHECK_THROWS(tdac::parse_strategy("bogus"));
}

TEST_CASE("normal-density counts are unimodal around 0.4 T") {
  const auto grid = diffuse::timestep_grid(1000, 100);
  std::vector<std::int64_t> t(grid.rbegin(), grid.rend());
  const auto c = tdac::normal_density_counts(t, 1000, 1024);
  CHECK(total(c) == 1024);
  const auto peak = static_cast<std::size_t>(std::max_element(c.begin(), c.end()) - c.begin());
  const auto at400 = static_cast<std::size_t>(std::find(t.begin(), t.end(), 400) - t.begin());
  CHECK(c[at400] == c[peak]);
  CHECK(c.front() < c[peak]);
  CHECK(c.back() < c[peak]);
  for (std::size_t i = 1; i <= peak; ++i) CHECK(c[i] >= c[i - 1]);
  for (std::size_t i = peak + 1; i < c.size(); ++i) CHECK(c[i] <= c[i - 1]);
}

TEST_CASE("budget holds for every strategy and seed") {
  const auto tr = synthetic_trajectory(256);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (std::int64_t N : {1, 99, 100, 1024, 2047}) {
      tdac::TdacOptions o;
      o.N = N;
      o.seed = seed;
      CHECK(tdac::build_tdac(tr, o).calib.size() == static_cast<std::size_t>(N));
      tdac::BaselineOptions b;
      b.N = N;
      b.seed = seed;
      for (auto s : {tdac::Strategy::equal_spaced, tdac::Strategy::normal_density, tdac::Strategy::random}) {
        CHECK(tdac::baseline_calibration(tr, s, b).size() == static_cast<std::size_t>(N));
      }
    }
  }
}
