// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/pipeline/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "edaq/diffuse/data.hpp"
#include "edaq/diffuse/train.hpp"
#include "edaq/nd/parallel.hpp"
#include "edaq/nd/rng.hpp"

namespace edaq::pipeline {

namespace fs = std::filesystem;

namespace {

void say(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

void apply_threads(const RunConfig& cfg) {
  if (cfg.threads > 0) nd::set_thread_count(cfg.threads);
}

Artifacts artifacts(const RunConfig& cfg) { return Artifacts{cfg.out}; }

void ensure_dir(const RunConfig& cfg) { fs::create_directories(cfg.out); }

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double v, int prec = 6) {
  std::ostringstream s;
  s << std::setprecision(prec) << v;
  return s.str();
}

}  // namespace

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << '\n';
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

std::uint64_t stream_seed(const RunConfig& cfg, const std::string& stream) { return nd::derive_seed(cfg.seed, stream); }

diffuse::NoiseSchedule schedule_for(const RunConfig& cfg) { return diffuse::make_schedule(cfg.T); }

diffuse::SamplerConfig sampler_for(const RunConfig& cfg, const std::string& stream) {
  return {cfg.steps, cfg.eta, stream_seed(cfg, stream)};
}

net::Checkpoint require_checkpoint(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw MissingArtifactError("missing " + path.string() + "; run `edaq " + producer + "` first");
  }
  return net::load_checkpoint(path);
}

diffuse::Trajectory require_trajectory(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw MissingArtifactError("missing " + path.string() + "; run `edaq " + producer + "` first");
  }
  return diffuse::load_trajectory(path);
}

TrainOutput train_stage(const RunConfig& cfg, const Log& log) {
  cfg.validate();
  TrainOutput out;
  out.checkpoint.model = net::build_model(net::parse_arch(cfg.arch), {}, cfg.seed);
  diffuse::TrainConfig tc;
  tc.iters = cfg.train_iters;
  tc.batch = static_cast<std::size_t>(cfg.train_batch);
  tc.lr = cfg.train_lr;
  tc.seed = cfg.seed;
  const auto every = std::max<std::int64_t>(1, cfg.train_iters / 10);
  out.result = diffuse::train_denoiser(out.checkpoint.model, diffuse::parse_dataset(cfg.dataset), schedule_for(cfg), tc,
                                       [&](std::int64_t it, double loss) {
                                         if ((it + 1) % every == 0) {
                                           say(log, "train iter " + std::to_string(it + 1) + " loss " + fmt(loss));
                                         }
                                       });
  out.checkpoint.info = {{"kind", "fp"}, {"config", cfg.to_json()}, {"train", out.result.to_json()}};
  return out;
}

diffuse::Trajectory profile_stage(const net::Model& fp, const RunConfig& cfg) {
  cfg.validate();
  return diffuse::run_trajectory(fp, schedule_for(cfg), sampler_for(cfg, "profile"),
                                 static_cast<std::size_t>(cfg.profile_batch));
}

CalibrateOutput calibrate_stage(const diffuse::Trajectory& traj, const RunConfig& cfg) {
  cfg.validate();
  const auto strategy = tdac::parse_strategy(cfg.strategy);
  const std::int64_t pool = static_cast<std::int64_t>(traj.steps.size()) * traj.steps.front().x.dim(0);
  if (cfg.calib_size > pool) {
    throw ConfigError("calib_size " + std::to_string(cfg.calib_size) + " exceeds the " + std::to_string(pool) +
                      " profiled samples");
  }
  CalibrateOutput out;
  if (strategy == tdac::Strategy::tdac) {
    tdac::TdacOptions o;
    o.epsilon = cfg.epsilon;
    o.lambda = cfg.lambda;
    o.N = cfg.calib_size;
    o.seed = stream_seed(cfg, "calib");
    auto r = tdac::build_tdac(traj, o);
    out.calib = std::move(r.calib);
    out.table = std::move(r.table);
  } else {
    tdac::BaselineOptions o;
    o.N = cfg.calib_size;
    o.seed = stream_seed(cfg, "calib");
    o.single_t = cfg.single_t;
    out.calib = tdac::baseline_calibration(traj, strategy, o);
  }
  return out;
}

fbr::ReconResult quantize_stage(const net::Model& fp, const tdac::CalibrationSet& calib, const RunConfig& cfg,
                                const Log& log) {
  cfg.validate();
  quant::QuantizedModel qm = quant::attach_quantizers(fp, cfg.bits_w, cfg.bits_a, calib.x, calib.t);
  fbr::ReconConfig rc;
  rc.method = fbr::parse_method(cfg.recon);
  rc.gamma = cfg.gamma;
  rc.iters = cfg.recon_iters;
  rc.batch = cfg.recon_batch;
  rc.seed = stream_seed(cfg, "recon");
  return fbr::reconstruct_model(fp, std::move(qm), calib, rc, [&](const std::string& unit, std::size_t i, std::size_t n) {
    say(log, "reconstruct " + unit + " (" + std::to_string(i + 1) + "/" + std::to_string(n) + ")");
  });
}

nd::Tensor generate(const net::Model& model, const net::LayerFn& exec, const RunConfig& cfg, std::size_t n) {
  const auto sc = sampler_for(cfg, "eval");
  return diffuse::sample(model, schedule_for(cfg), sc, diffuse::initial_noise(model, n, sc.seed), exec);
}

nd::Tensor heldout_data(const RunConfig& cfg, std::size_t n) {
  nd::Rng rng(stream_seed(cfg, "heldout"));
  return diffuse::sample_dataset(diffuse::parse_dataset(cfg.dataset), n, rng);
}

nlohmann::json FidelityReport::to_json() const {
  return {{"trajectory_mse", trajectory_mse.to_json()},
          {"frechet_q_vs_fp", q_vs_fp.to_json()},
          {"frechet_q_vs_data", q_vs_data.to_json()},
          {"frechet_fp_vs_data", fp_vs_data.to_json()}};
}

FidelityReport evaluate_stage(const net::Model& fp, const quant::QuantizedModel& q, const RunConfig& cfg,
                              const nd::Tensor* fp_samples, const nd::Tensor* data) {
  const auto n = static_cast<std::size_t>(cfg.eval_samples);
  FidelityReport r;
  r.trajectory_mse = metrics::trajectory_mse(fp, q, schedule_for(cfg), sampler_for(cfg, "eval-traj"),
                                             static_cast<std::size_t>(cfg.eval_batch));
  const nd::Tensor fs_own = fp_samples ? nd::Tensor{} : generate(fp, {}, cfg, n);
  const nd::Tensor data_own = data ? nd::Tensor{} : heldout_data(cfg, n);
  const nd::Tensor& fsm = fp_samples ? *fp_samples : fs_own;
  const nd::Tensor& dat = data ? *data : data_own;
  const nd::Tensor qs = generate(q.model(), q.exec(), cfg, n);
  r.q_vs_fp = metrics::frechet_proxy(qs, fsm);
  r.q_vs_data = metrics::frechet_proxy(qs, dat);
  r.fp_vs_data = metrics::frechet_proxy(fsm, dat);
  return r;
}

nlohmann::json CellResult::to_json() const {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : records) {
    blocks.push_back({{"name", b.name},
                      {"kind", b.kind},
                      {"L_b_last", b.last.L_b},
                      {"L_m_sum_last", b.last.L_m_sum()},
                      {"calib_L_b_end", b.calib_L_b_end},
                      {"calib_L_m_end", b.calib_L_m_end}});
  }
  return {{"strategy", strategy},
          {"recon", recon},
          {"seed", seed},
          {"frechet", frechet},
          {"traj_mse_auc", traj_mse_auc},
          {"blocks", blocks}};
}

// ---------------------------------------------------------------------------

void cmd_train(const RunConfig& cfg, const Log& log) {
  cfg.validate();
  apply_threads(cfg);
  ensure_dir(cfg);
  const Artifacts a = artifacts(cfg);
  TrainOutput out = train_stage(cfg, log);
  net::save_checkpoint(out.checkpoint, a.fp_checkpoint());
  nlohmann::json j = {{"config", cfg.to_json()}, {"train", out.result.to_json()}, {"losses", out.result.losses}};
  write_json(a.train_log(), j);
  say(log, "final loss " + fmt(out.result.final_loss) + (out.result.below_threshold ? "" : " (above threshold)"));
  say(log, "wrote " + a.fp_checkpoint().string());
}

void cmd_profile(const RunConfig& cfg, const Log& log) {
  cfg.validate();
  apply_threads(cfg);
  const Artifacts a = artifacts(cfg);
  const net::Checkpoint ck = require_checkpoint(a.fp_checkpoint(), "train");
  const diffuse::Trajectory traj = profile_stage(ck.model, cfg);
  diffuse::save_trajectory(traj, a.trajectory());

  // Distance histograms of every strategy at the configured budget.
  std::vector<tdac::CalibrationSet> sets;
  for (const char* s : {"tdac", "equal_spaced", "normal_density", "random", "single_step"}) {
    RunConfig c = cfg;
    c.strategy = s;
    if (c.strategy == "single_step") c.calib_size = std::min(c.calib_size, c.profile_batch);
    sets.push_back(calibrate_stage(traj, c).calib);
  }
  const auto dif = metrics::dif_curve(traj);
  const auto hist = metrics::distance_histograms(ck.model, traj, sets);
  write_json(a.diagnostics(), {{"config", cfg.to_json()},
                               {"feature_space", "mid-tap output of " + ck.model.mid_tap()},
                               {"dif", dif.to_json()},
                               {"distance_histograms", hist.to_json()}});
  say(log, "DIF avg " + fmt(dif.avg) + " range " + fmt(dif.range));
  say(log, "wrote " + a.trajectory().string() + " and " + a.diagnostics().string());
}

namespace {

CalibrateOutput calibrate_and_write(const RunConfig& cfg, const Artifacts& a, const Log& log) {
  const diffuse::Trajectory traj = require_trajectory(a.trajectory(), "profile");
  CalibrateOutput out = calibrate_stage(traj, cfg);
  out.calib.provenance["config"] = cfg.to_json();
  tdac::save_calibration(out.calib, a.calibration());
  if (out.table) {
    out.table->write_csv(a.scores_csv());
    nlohmann::json side = out.table->sidecar();
    side["config"] = cfg.to_json();
    write_json(a.scores_json(), side);
    say(log, "epsilon " + fmt(out.table->epsilon) + ", wrote " + a.scores_csv().string());
  }
  say(log, "calibration set of " + std::to_string(out.calib.size()) + " items (" + cfg.strategy + ")");
  return out;
}

}  // namespace

void cmd_calibrate(const RunConfig& cfg, const Log& log) {
  cfg.validate();
  apply_threads(cfg);
  calibrate_and_write(cfg, artifacts(cfg), log);
}

void cmd_quantize(const RunConfig& cfg, const Log& log) {
  cfg.validate();
  apply_threads(cfg);
  const Artifacts a = artifacts(cfg);
  const net::Checkpoint fp = require_checkpoint(a.fp_checkpoint(), "train");
  const CalibrateOutput cal = calibrate_and_write(cfg, a, log);
  fbr::ReconResult res = quantize_stage(fp.model, cal.calib, cfg, log);

  net::Checkpoint ck;
  ck.model = res.model.model();
  ck.info = {{"kind", "quantized"}, {"config", cfg.to_json()}};
  res.model.store(ck);
  net::save_checkpoint(ck, a.wq_checkpoint());
  nlohmann::json rep = res.report();
  rep["config"] = cfg.to_json();
  write_json(a.loss_report(), rep);
  res.write_trace_csv(a.loss_trace());
  std::size_t warnings = 0;
  for (const auto& r : res.records) warnings += r.warning_non_decreasing ? 1 : 0;
  if (warnings) say(log, "warning: " + std::to_string(warnings) + " units did not reduce their block loss");
  say(log, "wrote " + a.wq_checkpoint().string());
}

void cmd_sample(const RunConfig& cfg, bool full_precision, const Log& log) {
  cfg.validate();
  apply_threads(cfg);
  const Artifacts a = artifacts(cfg);
  nd::Tensor s;
  if (full_precision) {
    const net::Checkpoint fp = require_checkpoint(a.fp_checkpoint(), "train");
    s = generate(fp.model, {}, cfg, static_cast<std::size_t>(cfg.eval_samples));
  } else {
    const net::Checkpoint wq = require_checkpoint(a.wq_checkpoint(), "quantize");
    const quant::QuantizedModel qm = quant::QuantizedModel::restore(wq);
    s = generate(qm.model(), qm.exec(), cfg, static_cast<std::size_t>(cfg.eval_samples));
  }
  net::Container c;
  c.meta = {{"kind", "samples"}, {"model", full_precision ? "fp" : "quantized"}, {"config", cfg.to_json()}};
  c.tensors.push_back({"samples", s});
  net::write_container(a.samples(), c);
  say(log, "wrote " + std::to_string(s.dim(0)) + " samples to " + a.samples().string());
}

void cmd_evaluate(const RunConfig& cfg, const Log& log) {
  cfg.validate();
  apply_threads(cfg);
  const Artifacts a = artifacts(cfg);
  const net::Checkpoint fp = require_checkpoint(a.fp_checkpoint(), "train");
  const net::Checkpoint wq = require_checkpoint(a.wq_checkpoint(), "quantize");
  const quant::QuantizedModel qm = quant::QuantizedModel::restore(wq);
  const FidelityReport fr = evaluate_stage(fp.model, qm, cfg);
  nlohmann::json fj = fr.to_json();
  fj["config"] = cfg.to_json();
  write_json(a.fidelity(), fj);
  {
    std::ofstream f(a.trajectory_mse_csv());
    f << "t,mse\n" << std::setprecision(17);
    for (std::size_t i = 0; i < fr.trajectory_mse.t.size(); ++i) {
      f << fr.trajectory_mse.t[i] << ',' << fr.trajectory_mse.mse[i] << '\n';
    }
  }
  const auto comp = metrics::count_compression(fp.model, qm.bits_w(), qm.bits_a());
  nlohmann::json cj = comp.to_json();
  cj["config"] = cfg.to_json();
  write_json(a.compression_json(), cj);
  comp.write_csv(a.compression_csv());
  say(log, "frechet q-vs-fp " + fmt(fr.q_vs_fp.distance) + ", q-vs-data " + fmt(fr.q_vs_data.distance) +
               ", fp-vs-data " + fmt(fr.fp_vs_data.distance));
  say(log, "bops ratio " + fmt(comp.bops_ratio()) + ", size ratio " + fmt(comp.size_ratio()));
}

void cmd_ablate(const RunConfig& cfg, const std::vector<std::string>& strategies,
                const std::vector<std::string>& methods, const Log& log) {
  cfg.validate();
  apply_threads(cfg);
  if (strategies.empty() || methods.empty()) throw ConfigError("ablate needs at least one strategy and one method");
  for (const auto& s : strategies) tdac::parse_strategy(s);
  for (const auto& m : methods) fbr::parse_method(m);
  const Artifacts a = artifacts(cfg);
  const net::Checkpoint fp = require_checkpoint(a.fp_checkpoint(), "train");

  std::vector<CellResult> cells;
  for (const auto seed : cfg.seeds) {
    RunConfig cs = cfg;
    cs.seed = seed;
    say(log, "seed " + std::to_string(seed) + ": profiling");
    const diffuse::Trajectory traj = profile_stage(fp.model, cs);
    const nd::Tensor fs = generate(fp.model, {}, cs, static_cast<std::size_t>(cs.eval_samples));
    for (const auto& s : strategies) {
      RunConfig cc = cs;
      cc.strategy = s;
      const CalibrateOutput cal = calibrate_stage(traj, cc);
      for (const auto& m : methods) {
        cc.recon = m;
        say(log, "seed " + std::to_string(seed) + ": " + s + " x " + m);
        fbr::ReconResult res = quantize_stage(fp.model, cal.calib, cc, {});
        const auto tm = metrics::trajectory_mse(fp.model, res.model, schedule_for(cc), sampler_for(cc, "eval-traj"),
                                                static_cast<std::size_t>(cc.eval_batch));
        const nd::Tensor qs = generate(res.model.model(), res.model.exec(), cc, static_cast<std::size_t>(cc.eval_samples));
        CellResult cell{s, m, seed, metrics::frechet_proxy(qs, fs).distance, tm.auc(), std::move(res.records)};
        say(log, "  frechet " + fmt(cell.frechet) + ", traj-mse auc " + fmt(cell.traj_mse_auc));
        cells.push_back(std::move(cell));
      }
    }
  }

  nlohmann::json grid = nlohmann::json::array();
  std::ostringstream md;
  md << "# Ablation\n\nMedian over seeds";
  for (auto s : cfg.seeds) md << ' ' << s;
  md << ". Frechet proxy of quantized vs full-precision samples (lower is better), trajectory-MSE area in "
        "parentheses.\n\n| calibration |";
  for (const auto& m : methods) md << ' ' << m << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < methods.size(); ++i) md << "---|";
  md << '\n';
  for (const auto& s : strategies) {
    md << "| " << s << " |";
    for (const auto& m : methods) {
      std::vector<double> f, auc;
      for (const auto& c : cells) {
        if (c.strategy == s && c.recon == m) {
          f.push_back(c.frechet);
          auc.push_back(c.traj_mse_auc);
        }
      }
      grid.push_back({{"strategy", s}, {"recon", m}, {"frechet_median", median(f)}, {"traj_mse_auc_median", median(auc)}});
      md << ' ' << fmt(median(f), 4) << " (" << fmt(median(auc), 4) << ") |";
    }
    md << '\n';
  }
  nlohmann::json cj = nlohmann::json::array();
  for (const auto& c : cells) cj.push_back(c.to_json());
  write_json(a.ablate_json(), {{"config", cfg.to_json()}, {"grid", grid}, {"cells", cj}});
  std::ofstream(a.ablate_md()) << md.str();
  say(log, md.str());
}

void cmd_report(const RunConfig& cfg, const Log& log) {
  const Artifacts a = artifacts(cfg);
  nlohmann::json rep = {{"config", cfg.to_json()}};
  std::ostringstream md;
  md << "# Run report: " << cfg.out << "\n\n";
  bool any = false;
  auto load = [&](const fs::path& p, const std::string& key) -> const nlohmann::json* {
    if (!fs::exists(p)) return nullptr;
    std::ifstream f(p);
    rep[key] = nlohmann::json::parse(f);
    any = true;
    return &rep[key];
  };
  if (const auto* j = load(a.train_log(), "train")) {
    rep["train"].erase("losses");
    md << "## Training\n\nfinal loss " << fmt(j->at("train").at("final_loss").get<double>()) << "\n\n";
  }
  if (const auto* j = load(a.diagnostics(), "diagnostics")) {
    md << "## Profile\n\nDIF avg " << fmt(j->at("dif").at("avg").get<double>()) << ", range "
       << fmt(j->at("dif").at("range").get<double>()) << "\n\n| strategy | W1 to overall |\n|---|---|\n";
    for (const auto& s : j->at("distance_histograms").at("sets")) {
      md << "| " << s.at("strategy").get<std::string>() << " | " << fmt(s.at("w1_to_overall").get<double>()) << " |\n";
    }
    md << '\n';
  }
  if (const auto* j = load(a.scores_json(), "scores")) {
    md << "## Calibration\n\nepsilon " << fmt(j->at("epsilon").get<double>()) << ", lambda "
       << fmt(j->at("lambda").get<double>()) << ", N " << j->at("N").get<std::int64_t>() << "\n\n";
  }
  if (const auto* j = load(a.loss_report(), "reconstruction")) {
    md << "## Reconstruction\n\n| unit | L_b first | L_b last | sum L_m last |\n|---|---|---|---|\n";
    for (const auto& b : j->at("blocks")) {
      md << "| " << b.at("name").get<std::string>() << " | " << fmt(b.at("L_b_first").get<double>()) << " | "
         << fmt(b.at("L_b_last").get<double>()) << " | " << fmt(b.at("L_m_sum_last").get<double>()) << " |\n";
    }
    md << '\n';
  }
  if (const auto* j = load(a.fidelity(), "fidelity")) {
    md << "## Fidelity\n\nFrechet proxy: quantized vs FP " << fmt(j->at("frechet_q_vs_fp").at("distance").get<double>())
       << ", quantized vs data " << fmt(j->at("frechet_q_vs_data").at("distance").get<double>()) << ", FP vs data "
       << fmt(j->at("frechet_fp_vs_data").at("distance").get<double>()) << "; trajectory-MSE area "
       << fmt(j->at("trajectory_mse").at("auc").get<double>()) << "\n\n";
  }
  if (const auto* j = load(a.compression_json(), "compression")) {
    j = &rep["compression"];
    rep["compression"].erase("layers");
    md << "## Compression\n\nW" << j->at("bits_w").get<int>() << "A" << j->at("bits_a").get<int>() << ": Bops ratio "
       << fmt(j->at("bops_ratio").get<double>()) << ", size ratio " << fmt(j->at("size_ratio").get<double>()) << "\n\n";
  }
  if (fs::exists(a.ablate_md())) {
    load(a.ablate_json(), "ablate");
    std::ifstream f(a.ablate_md());
    md << "##" << std::string(std::istreambuf_iterator<char>(f), {}).substr(1) << '\n';
  }
  if (!any) throw MissingArtifactError("no artifacts in " + cfg.out + "; run `edaq train` first");
  write_json(a.report_json(), rep);
  std::ofstream(a.report_md()) << md.str();
  say(log, "wrote " + a.report_json().string() + " and " + a.report_md().string());
}

}  // namespace edaq::pipeline
