// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/metrics/fidelity.hpp"

#include <algorithm>
#include <stdexcept>

#include <Eigen/Dense>

#include "edaq/nd/rng.hpp"

namespace edaq::metrics {

double TrajectoryMse::auc() const {
  double s = 0.0;
  for (double v : mse) s += v;
  return s;
}

nlohmann::json TrajectoryMse::to_json() const { return {{"t", t}, {"mse", mse}, {"auc", auc()}}; }

TrajectoryMse trajectory_mse(const net::Model& fp, const quant::QuantizedModel& q, const diffuse::NoiseSchedule& sched,
                             const diffuse::SamplerConfig& cfg, std::size_t batch) {
  const nd::Tensor x_T = diffuse::initial_noise(fp, batch, cfg.seed);
  const auto grid = diffuse::timestep_grid(sched.T, cfg.steps);
  const net::LayerFn qexec = q.exec();
  TrajectoryMse r;
  nd::Tensor x = x_T;
  nd::Rng rng(nd::derive_seed(cfg.seed, "ddim_noise"));
  const std::size_t per = static_cast<std::size_t>(x.numel()) / batch;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const std::int64_t t = grid[i];
    const std::int64_t t_prev = i + 1 < grid.size() ? grid[i + 1] : -1;
    const std::vector<std::int64_t> tv(batch, t);
    const nd::Tensor e_fp = fp.forward(x, tv);
    const nd::Tensor e_q = q.model().forward(x, tv, qexec);
    double s = 0.0;
    auto a = e_fp.data();
    auto b = e_q.data();
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = static_cast<double>(a[k]) - b[k];
      s += d * d;
    }
    r.t.push_back(t);
    r.mse.push_back(s / static_cast<double>(batch));
    nd::Tensor noise;
    if (cfg.eta > 0.0) noise = nd::Tensor(x.shape(), rng.normal_vector(batch * per));
    x = diffuse::ddim_step(x, e_fp, t, t_prev, cfg.eta, sched, noise);
  }
  return r;
}

nlohmann::json FrechetResult::to_json() const {
  return {{"distance", distance}, {"rank_deficient", rank_deficient}};
}

namespace {

using Mat = Eigen::MatrixXd;

void moments(const std::vector<double>& x, std::size_t n, std::size_t d, Eigen::VectorXd& mu, Mat& cov) {
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
      x.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  mu = m.colwise().mean().transpose();
  const Mat c = m.rowwise() - mu.transpose();
  cov = (c.transpose() * c) / static_cast<double>(n - 1);
}

Mat sqrt_psd(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.transpose()));
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// trace((A B)^{1/2}) via the symmetric form (A^{1/2} B A^{1/2})^{1/2}.
double trace_sqrt_product(const Mat& a, const Mat& b) {
  const Mat ra = sqrt_psd(a);
  const Mat m = ra * b * ra;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

}  // namespace

FrechetResult frechet_distance(const std::vector<double>& a, std::size_t na, const std::vector<double>& b,
                               std::size_t nb, std::size_t d) {
  if (d == 0 || na < 2 || nb < 2) throw std::invalid_argument("frechet_distance: need >= 2 samples of dimension >= 1");
  if (a.size() != na * d || b.size() != nb * d) throw std::invalid_argument("frechet_distance: size mismatch");
  Eigen::VectorXd mu_a, mu_b;
  Mat ca, cb;
  moments(a, na, d, mu_a, ca);
  moments(b, nb, d, mu_b, cb);
  FrechetResult r;
  r.rank_deficient = na <= d || nb <= d;
  if (r.rank_deficient) {
    ca += 1e-6 * Mat::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    cb += 1e-6 * Mat::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  }
  // Averaging both orderings makes the result exactly symmetric.
  const double cross = 0.5 * (trace_sqrt_product(ca, cb) + trace_sqrt_product(cb, ca));
  const double dist = (mu_a - mu_b).squaredNorm() + ca.trace() + cb.trace() - 2.0 * cross;
  r.distance = std::max(0.0, dist);
  return r;
}

FrechetResult frechet_proxy(const nd::Tensor& a, const nd::Tensor& b) {
  if (a.rank() == 0 || b.rank() == 0) throw std::invalid_argument("frechet_proxy: empty sample set");
  const auto na = static_cast<std::size_t>(a.dim(0));
  const auto nb = static_cast<std::size_t>(b.dim(0));
  if (na < kMinFrechetSamples || nb < kMinFrechetSamples) {
    throw std::invalid_argument("frechet_proxy: each set needs at least " + std::to_string(kMinFrechetSamples) +
                                " samples");
  }
  const std::size_t d = static_cast<std::size_t>(a.numel()) / na;
  if (static_cast<std::size_t>(b.numel()) / nb != d) throw std::invalid_argument("frechet_proxy: feature sizes differ");
  std::vector<double> va(a.data().begin(), a.data().end());
  std::vector<double> vb(b.data().begin(), b.data().end());
  return frechet_distance(va, na, vb, nb, d);
}

}  // namespace edaq::metrics
