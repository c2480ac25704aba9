// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/tdac/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "edaq/net/container.hpp"
#include "edaq/nd/rng.hpp"

namespace edaq::tdac {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::tdac: return "tdac";
    case Strategy::equal_spaced: return "equal_spaced";
    case Strategy::normal_density: return "normal_density";
    case Strategy::random: return "random";
    case Strategy::single_step: return "single_step";
  }
  return "?";
}

Strategy parse_strategy(const std::string& s) {
  for (Strategy v : {Strategy::tdac, Strategy::equal_spaced, Strategy::normal_density, Strategy::random,
                     Strategy::single_step}) {
    if (s == to_string(v)) return v;
  }
  throw std::invalid_argument("unknown calibration strategy '" + s +
                              "' (expected tdac, equal_spaced, normal_density, random, single_step)");
}

void ScoreTable::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "t,D,V,D_hat,V_hat,S,X\n" << std::setprecision(17);
  for (const auto& r : rows) {
    f << r.t << ',' << r.D << ',' << r.V << ',' << r.D_hat << ',' << r.V_hat << ',' << r.S << ',' << r.X << '\n';
  }
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

nlohmann::json ScoreTable::sidecar() const {
  return {{"epsilon", epsilon},
          {"epsilon_source", epsilon_default ? "pairwise_mse_p25" : "override"},
          {"lambda", lambda},
          {"N", N},
          {"seed", seed},
          {"steps", rows.size()},
          {"density_degenerate", density_degenerate},
          {"variety_degenerate", variety_degenerate}};
}

void save_calibration(const CalibrationSet& c, const std::filesystem::path& path) {
  net::Container ct;
  ct.meta = {{"kind", "calibration"}, {"strategy", to_string(c.strategy)}, {"provenance", c.provenance}};
  const auto n = static_cast<std::int64_t>(c.t.size());
  ct.tensors.push_back({"x", c.x});
  ct.tensors.push_back({"t", nd::Tensor({n}, std::vector<float>(c.t.begin(), c.t.end()))});
  net::write_container(path, ct);
}

CalibrationSet load_calibration(const std::filesystem::path& path) {
  net::Container ct = net::read_container(path);
  if (ct.meta.value("kind", "") != "calibration") {
    throw net::MetadataMismatchError(path.string() + " is not a calibration set");
  }
  const nd::Tensor* x = ct.find("x");
  const nd::Tensor* t = ct.find("t");
  if (!x || !t || x->rank() == 0 || x->dim(0) != t->numel()) {
    throw net::MetadataMismatchError(path.string() + ": calibration tensors missing or inconsistent");
  }
  CalibrationSet c;
  c.strategy = parse_strategy(ct.meta.at("strategy").get<std::string>());
  c.provenance = ct.meta.value("provenance", nlohmann::json::object());
  c.x = *x;
  for (float v : t->data()) c.t.push_back(static_cast<std::int64_t>(v));
  return c;
}

ScoreTable score_timesteps(const std::vector<std::int64_t>& t, const Features& F, const TdacOptions& opts) {
  if (F.empty() || F.size() != t.size()) throw std::invalid_argument("score_timesteps: need one feature per step");
  if (opts.lambda < 0.0) throw std::invalid_argument("score_timesteps: lambda must be >= 0");
  ScoreTable tab;
  tab.epsilon_default = !opts.epsilon.has_value();
  tab.epsilon = opts.epsilon ? *opts.epsilon : default_epsilon(F);
  tab.lambda = opts.lambda;
  tab.N = opts.N;
  tab.seed = opts.seed;

  const auto D = density_scores(F, tab.epsilon);
  const auto V = variety_scores(F);
  const std::vector<double> Dd(D.begin(), D.end());
  const Scaled dh = min_max_scale(Dd);
  const Scaled vh = min_max_scale(V);
  tab.density_degenerate = dh.degenerate;
  tab.variety_degenerate = vh.degenerate;

  std::vector<double> S(F.size());
  for (std::size_t i = 0; i < F.size(); ++i) S[i] = dh.values[i] + opts.lambda * vh.values[i];
  const auto X = allocate(S, opts.N);
  for (std::size_t i = 0; i < F.size(); ++i) {
    tab.rows.push_back({t[i], D[i], V[i], dh.values[i], vh.values[i], S[i], X[i]});
  }
  return tab;
}

namespace {

const diffuse::TrajectoryStep& step_at(const diffuse::Trajectory& traj, std::int64_t t) {
  for (const auto& s : traj.steps) {
    if (s.t == t) return s;
  }
  throw std::invalid_argument("timestep " + std::to_string(t) + " is not on the trajectory grid");
}

std::vector<std::int64_t> ascending_steps(const diffuse::Trajectory& traj) {
  std::vector<std::int64_t> t;
  for (const auto& s : traj.steps) t.push_back(s.t);
  std::sort(t.begin(), t.end());
  return t;
}

void check_trajectory(const diffuse::Trajectory& traj) {
  if (traj.steps.empty()) throw std::invalid_argument("trajectory has no steps");
}

}  // namespace

CalibrationSet draw_items(const diffuse::Trajectory& traj, const std::vector<std::int64_t>& t,
                          const std::vector<std::int64_t>& counts, Strategy strategy, std::uint64_t seed) {
  check_trajectory(traj);
  const nd::Shape& s0 = traj.steps.front().x.shape();
  const std::int64_t batch = s0[0];
  const std::size_t per = static_cast<std::size_t>(traj.steps.front().x.numel() / batch);
  std::int64_t total = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (counts[i] > batch) {
      throw BudgetError("step t=" + std::to_string(t[i]) + " needs " + std::to_string(counts[i]) +
                        " calibration samples but the profiling batch holds " + std::to_string(batch) +
                        "; rerun profile with a larger --batch");
    }
    total += counts[i];
  }
  nd::Rng rng(nd::derive_seed(seed, "calib-draw"));
  std::vector<float> xs;
  xs.reserve(static_cast<std::size_t>(total) * per);
  CalibrationSet c;
  c.strategy = strategy;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (counts[i] == 0) continue;
    const auto& st = step_at(traj, t[i]);
    const auto perm = rng.permutation(static_cast<std::size_t>(batch));
    auto d = st.x.data();
    for (std::int64_t k = 0; k < counts[i]; ++k) {
      auto row = d.subspan(perm[static_cast<std::size_t>(k)] * per, per);
      xs.insert(xs.end(), row.begin(), row.end());
      c.t.push_back(t[i]);
    }
  }
  nd::Shape s = s0;
  s[0] = total;
  c.x = nd::Tensor(s, std::move(xs));
  return c;
}

TdacResult build_tdac(const diffuse::Trajectory& traj, const TdacOptions& opts) {
  check_trajectory(traj);
  const auto t = ascending_steps(traj);
  Features F;
  for (auto ti : t) F.push_back(step_at(traj, ti).F);
  TdacResult r;
  r.table = score_timesteps(t, F, opts);
  std::vector<std::int64_t> X;
  for (const auto& row : r.table.rows) X.push_back(row.X);
  r.calib = draw_items(traj, t, X, Strategy::tdac, opts.seed);
  r.calib.provenance = r.table.sidecar();
  r.calib.provenance["strategy"] = "tdac";
  return r;
}

std::vector<std::int64_t> normal_density_counts(const std::vector<std::int64_t>& t, int T, std::int64_t N) {
  const double mu = 0.4 * T, sd = 0.4 * T;
  std::vector<double> w;
  for (auto ti : t) {
    const double z = (static_cast<double>(ti) - mu) / sd;
    w.push_back(std::exp(-0.5 * z * z));
  }
  return allocate(w, N);
}

CalibrationSet baseline_calibration(const diffuse::Trajectory& traj, Strategy strategy, const BaselineOptions& opts) {
  check_trajectory(traj);
  if (opts.N < 1) throw std::invalid_argument("calibration size must be >= 1");
  const auto t = ascending_steps(traj);
  CalibrationSet c;
  switch (strategy) {
    case Strategy::equal_spaced:
      c = draw_items(traj, t, allocate(std::vector<double>(t.size(), 1.0), opts.N), strategy, opts.seed);
      break;
    case Strategy::normal_density:
      c = draw_items(traj, t, normal_density_counts(t, traj.T, opts.N), strategy, opts.seed);
      break;
    case Strategy::single_step: {
      std::vector<std::int64_t> counts(t.size(), 0);
      const auto it = std::find(t.begin(), t.end(), opts.single_t);
      if (it == t.end()) {
        throw std::invalid_argument("single_step: t=" + std::to_string(opts.single_t) +
                                    " is not on the trajectory grid");
      }
      counts[static_cast<std::size_t>(it - t.begin())] = opts.N;
      c = draw_items(traj, t, counts, strategy, opts.seed);
      break;
    }
    case Strategy::random: {
      // Uniform over all (step, sample) pairs without replacement.
      const std::int64_t batch = traj.steps.front().x.dim(0);
      const auto pool = static_cast<std::size_t>(batch) * t.size();
      if (static_cast<std::size_t>(opts.N) > pool) {
        throw BudgetError("random calibration of " + std::to_string(opts.N) + " items exceeds the " +
                          std::to_string(pool) + " trajectory samples");
      }
      nd::Rng rng(nd::derive_seed(opts.seed, "calib-draw"));
      auto perm = rng.permutation(pool);
      perm.resize(static_cast<std::size_t>(opts.N));
      std::sort(perm.begin(), perm.end());
      const std::size_t per = static_cast<std::size_t>(traj.steps.front().x.numel() / batch);
      std::vector<float> xs;
      c.strategy = strategy;
      for (std::size_t id : perm) {
        const std::int64_t ti = t[id / static_cast<std::size_t>(batch)];
        auto row = step_at(traj, ti).x.data().subspan((id % static_cast<std::size_t>(batch)) * per, per);
        xs.insert(xs.end(), row.begin(), row.end());
        c.t.push_back(ti);
      }
      nd::Shape s = traj.steps.front().x.shape();
      s[0] = opts.N;
      c.x = nd::Tensor(s, std::move(xs));
      break;
    }
    case Strategy::tdac:
      throw std::invalid_argument("baseline_calibration: use build_tdac for the tdac strategy");
  }
  c.provenance = {{"strategy", to_string(strategy)}, {"N", opts.N}, {"seed", opts.seed}};
  if (strategy == Strategy::single_step) c.provenance["t"] = opts.single_t;
  return c;
}

}  // namespace edaq::tdac
