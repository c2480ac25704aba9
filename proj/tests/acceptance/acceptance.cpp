// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion, exit status 0 iff all pass.
// The expensive criteria share one trained model and one ablation grid.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "edaq/net/reference.hpp"
#include "edaq/pipeline/pipeline.hpp"
#include "op_gradient_suite.hpp"
#include "quant_fuzz.hpp"
#include "tdac_oracle.hpp"

using namespace edaq;
using pipeline::RunConfig;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

void note(const std::string& m) { std::cerr << "[acceptance] " << m << std::endl; }

struct Outcome {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Outcome> outcomes;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  outcomes.push_back({id, name, pass, detail});
  std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << id << ": " << name << " | " << detail << std::endl;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

bool bit_equal(const nd::Tensor& a, const nd::Tensor& b) {
  if (a.defined() != b.defined()) return false;
  if (!a.defined()) return true;
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    if (std::bit_cast<std::uint32_t>(a.data()[i]) != std::bit_cast<std::uint32_t>(b.data()[i])) return false;
  }
  return true;
}

bool same_state(const quant::QuantizerState& a, const quant::QuantizerState& b) {
  return a.hardened == b.hardened && a.zero_point == b.zero_point && bit_equal(a.scale, b.scale) &&
         bit_equal(a.alpha, b.alpha);
}

// ---------------------------------------------------------------------------

void criterion_gradients() {
  const auto t0 = Clock::now();
  double worst_op = 0.0;
  bool ops_ok = true;
  std::size_t n_ops = 0;
  for (const auto& r : test::ops::run_op_gradient_suite(1e-4)) {
    ++n_ops;
    ops_ok = ops_ok && r.report.pass();
    worst_op = std::max(worst_op, r.report.max_rel_error());
  }
  net::Model m = net::build_model(net::Arch::tiny_unet, {}, 11);
  const nd::Tensor x = test::ops::rnd({1, 1, 8, 8}, 12);
  const std::vector<std::int64_t> t = {250};
  nd::GradCheckOptions o;
  o.tolerance = 1e-3;
  o.max_coords = 6;
  const auto net_rep = nd::grad_check(
      m.parameters(), [&] { return m.forward(x, t); }, o, [&] { return net::reference_forward(m, x, t); });
  // Tensors whose gradient is identically zero pass on the absolute floor.
  std::size_t zero_grad = 0;
  double worst_net = 0.0;
  for (const auto& e : net_rep.entries) {
    if (e.max_rel_error >= o.tolerance && e.pass) ++zero_grad;
    else worst_net = std::max(worst_net, e.max_rel_error);
  }
  const double secs = seconds_since(t0);
  const bool pass = ops_ok && net_rep.pass() && m.parameter_count() <= 200000 && secs < 300.0;
  report(1, "gradient correctness", pass,
         std::to_string(n_ops) + " op checks max rel " + fmt(worst_op) + " (< 1e-4); tiny UNet " +
             std::to_string(m.parameter_count()) + " params, " + std::to_string(net_rep.entries.size()) +
             " tensors, max rel " + fmt(worst_net) + " (< 1e-3); " + std::to_string(zero_grad) +
             " zero-gradient tensor(s) within 1e-6 absolute; " + fmt(secs, 3) + " s");
}

void criterion_quantizer() {
  std::size_t scalars = 0, violations = 0;
  std::ostringstream per;
  for (int b : {2, 4, 8}) {
    const auto r = test::fuzz_quantizer(b, 100000, 1000 + static_cast<std::uint64_t>(b));
    scalars += r.scalars;
    violations += r.violations();
    per << " b=" << b << ":" << r.violations();
  }
  report(2, "quantizer properties", violations == 0,
         std::to_string(scalars) + " scalars, violations" + per.str());
}

void criterion_tdac_oracles() {
  const auto r = test::run_tdac_oracles(1000, 77);
  report(3, "TDAC unit oracles", r.mismatches() == 0 && r.budget_violation == 0 && r.cases == 1000,
         std::to_string(r.cases) + " cases; density " + std::to_string(r.density_mismatch) + ", variety " +
             std::to_string(r.variety_mismatch) + ", allocate " + std::to_string(r.allocate_mismatch) +
             " mismatches; budget violations " + std::to_string(r.budget_violation));
}

void criterion_compression() {
  const auto t0 = Clock::now();
  const net::Model m = net::build_model(net::Arch::tiny_unet, {}, 0);
  const auto w8 = metrics::count_compression(m, 8, 8);
  const auto w4 = metrics::count_compression(m, 4, 8);
  const double secs = seconds_since(t0);
  const bool pass = w8.quantized_bops_ratio == 16.0 && w4.bops_ratio() >= 28.0 && w4.bops_ratio() <= 32.0 &&
                    w4.size_ratio() >= 7.0 && w4.size_ratio() <= 8.0 && secs < 1.0;
  report(9, "compression accounting", pass,
         "W8A8 quantized-subset Bops ratio " + fmt(w8.quantized_bops_ratio, 10) + "; W4A8 Bops ratio " +
             fmt(w4.bops_ratio()) + ", size ratio " + fmt(w4.size_ratio()) + "; " + fmt(secs * 1e3, 3) + " ms");
}

// ---------------------------------------------------------------------------

struct PipelineRun {
  net::Model fp;
  double seconds = 0.0;
};

// Full train .. evaluate pipeline at W8A8, then the determinism re-runs.
PipelineRun end_to_end(const RunConfig& base) {
  RunConfig cfg = base;
  cfg.bits_w = 8;
  cfg.bits_a = 8;
  cfg.out = (fs::path(base.out) / "pipeline").string();
  fs::create_directories(cfg.out);
  const pipeline::Log log = [](const std::string& m) { note(m); };
  const pipeline::Artifacts a{cfg.out};

  const auto t0 = Clock::now();
  pipeline::cmd_train(cfg, log);
  pipeline::cmd_profile(cfg, log);
  pipeline::cmd_calibrate(cfg, log);
  pipeline::cmd_quantize(cfg, log);
  pipeline::cmd_sample(cfg, false, log);
  pipeline::cmd_evaluate(cfg, log);
  pipeline::cmd_report(cfg, log);
  const double secs = seconds_since(t0);

  const auto fid = nlohmann::json::parse(slurp(a.fidelity()));
  const double fp_data = fid["frechet_fp_vs_data"]["distance"].get<double>();
  const double q_data = fid["frechet_q_vs_data"]["distance"].get<double>();

  // Untrained network with the same architecture and initialization seed.
  const net::Model untrained = net::build_model(net::parse_arch(cfg.arch), {}, cfg.seed);
  const auto n = static_cast<std::size_t>(cfg.eval_samples);
  const double raw_data =
      metrics::frechet_proxy(pipeline::generate(untrained, {}, cfg, n), pipeline::heldout_data(cfg, n)).distance;

  const bool pass = raw_data >= 10.0 * fp_data && q_data <= 1.5 * fp_data && secs < 3600.0;
  report(11, "end-to-end sanity", pass,
         "Frechet vs data: untrained " + fmt(raw_data) + ", FP " + fmt(fp_data) + " (ratio " +
             fmt(raw_data / fp_data) + ", need >= 10); W8A8 " + fmt(q_data) + " (" + fmt(q_data / fp_data) +
             "x FP, need <= 1.5); pipeline " + fmt(secs / 60.0, 3) + " min");

  // Determinism: quantize and sample again into the same directory.
  const std::string ck1 = slurp(a.wq_checkpoint()), s1 = slurp(a.samples());
  pipeline::cmd_quantize(cfg, log);
  const std::string ck2 = slurp(a.wq_checkpoint());
  pipeline::cmd_sample(cfg, false, log);
  const std::string s2 = slurp(a.samples());
  report(10, "determinism", !ck1.empty() && ck1 == ck2 && !s1.empty() && s1 == s2,
         "W_q checkpoint " + std::string(ck1 == ck2 ? "identical" : "differs") + " (" + std::to_string(ck1.size()) +
             " bytes); eta=0 samples " + (s1 == s2 ? "identical" : "differ") + " (" + std::to_string(s1.size()) +
             " bytes)");

  return {net::load_checkpoint(a.fp_checkpoint()).model, secs};
}

void criterion_reduction(const net::Model& fp, const RunConfig& base) {
  RunConfig cfg = base;
  const diffuse::Trajectory traj = pipeline::profile_stage(fp, cfg);
  const auto calib = pipeline::calibrate_stage(traj, cfg).calib;
  const quant::QuantizedModel qm = quant::attach_quantizers(fp, 4, 8, calib.x, calib.t);
  fbr::ReconConfig rc;
  rc.iters = std::min<std::int64_t>(cfg.recon_iters, 200);
  rc.batch = cfg.recon_batch;
  rc.seed = pipeline::stream_seed(cfg, "recon");
  std::size_t units = 0, iters = 0;
  bool identical = true;
  for (const auto& u : fbr::make_units(fp, fbr::Method::fbr)) {
    if (u.name.rfind("mid.", 0) != 0) continue;
    ++units;
    const auto tg = fbr::block_targets(fp, qm, calib, u);
    auto qa = qm.clone(), qb = qm.clone();
    rc.method = fbr::Method::fbr;
    rc.gamma = 0.0;
    const auto ra = fbr::reconstruct_block(qa, u, tg, rc);
    rc.method = fbr::Method::block_wise;
    const auto rb = fbr::reconstruct_block(qb, u, tg, rc);
    identical = identical && ra.trace.size() == rb.trace.size();
    for (std::size_t i = 0; identical && i < ra.trace.size(); ++i) {
      identical = same_bits(ra.trace[i].L_b, rb.trace[i].L_b) && same_bits(ra.trace[i].L, rb.trace[i].L) &&
                  same_bits(ra.trace[i].reg, rb.trace[i].reg);
      ++iters;
    }
    for (const auto& l : u.layers) {
      identical = identical && same_state(qa.at(l).weight, qb.at(l).weight) && same_state(qa.at(l).act, qb.at(l).act);
    }
  }
  report(4, "FBR reduction identity", identical && units > 0,
         std::to_string(units) + " mid units, " + std::to_string(iters) + " trace entries compared, W4A8, " +
             std::to_string(rc.iters) + " iters: " + (identical ? "bit-identical" : "differ"));
}

// ---------------------------------------------------------------------------

struct Cell {
  std::string strategy, recon;
  std::uint64_t seed;
  double frechet, auc, seconds;
  std::vector<fbr::BlockLossRecord> records;
};

std::vector<Cell> run_grid(const net::Model& fp, const RunConfig& base, double& c5_seconds) {
  const std::vector<std::pair<std::string, std::string>> cells = {
      {"tdac", "fbr"},         {"tdac", "block_wise"},           {"tdac", "layer_wise"},
      {"equal_spaced", "fbr"}, {"equal_spaced", "block_wise"},   {"normal_density", "fbr"}};
  std::vector<Cell> out;
  c5_seconds = 0.0;
  for (const auto seed : base.seeds) {
    RunConfig cs = base;
    cs.seed = seed;
    auto t0 = Clock::now();
    const diffuse::Trajectory traj = pipeline::profile_stage(fp, cs);
    const double profile_secs = seconds_since(t0);
    c5_seconds += profile_secs;
    const nd::Tensor fs = pipeline::generate(fp, {}, cs, static_cast<std::size_t>(cs.eval_samples));
    std::map<std::string, tdac::CalibrationSet> calibs;
    for (const auto& [s, m] : cells) {
      RunConfig cc = cs;
      cc.strategy = s;
      cc.recon = m;
      t0 = Clock::now();
      if (!calibs.count(s)) calibs[s] = pipeline::calibrate_stage(traj, cc).calib;
      fbr::ReconResult res = pipeline::quantize_stage(fp, calibs[s], cc);
      const double recon_secs = seconds_since(t0);
      if (s == "tdac" && m != "layer_wise") c5_seconds += recon_secs;
      const auto tm = metrics::trajectory_mse(fp, res.model, pipeline::schedule_for(cc),
                                              pipeline::sampler_for(cc, "eval-traj"),
                                              static_cast<std::size_t>(cc.eval_batch));
      const nd::Tensor qs =
          pipeline::generate(res.model.model(), res.model.exec(), cc, static_cast<std::size_t>(cc.eval_samples));
      Cell c{s, m, seed, metrics::frechet_proxy(qs, fs).distance, tm.auc(), recon_secs, std::move(res.records)};
      note("seed " + std::to_string(seed) + " " + s + " x " + m + ": frechet " + fmt(c.frechet) + ", traj-mse auc " +
           fmt(c.auc) + ", recon " + fmt(recon_secs, 3) + " s");
      out.push_back(std::move(c));
    }
  }
  return out;
}

void write_grid(const std::vector<Cell>& cells, const fs::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : cells) {
    pipeline::CellResult r{c.strategy, c.recon, c.seed, c.frechet, c.auc, c.records};
    auto e = r.to_json();
    e["recon_seconds"] = c.seconds;
    j.push_back(std::move(e));
  }
  pipeline::write_json(path, j);
}

std::vector<const Cell*> select(const std::vector<Cell>& cells, const std::string& s, const std::string& m) {
  std::vector<const Cell*> v;
  for (const auto& c : cells)
    if (c.strategy == s && c.recon == m) v.push_back(&c);
  return v;
}

double median_of(const std::vector<Cell>& cells, const std::string& s, const std::string& m, double Cell::*field) {
  std::vector<double> v;
  for (const auto* c : select(cells, s, m)) v.push_back(c->*field);
  return median(v);
}

void criterion_front_layers(const std::vector<Cell>& cells, double seconds) {
  const auto f = select(cells, "tdac", "fbr"), b = select(cells, "tdac", "block_wise");
  std::size_t blocks = 0, ok = 0;
  std::ostringstream failed;
  for (std::size_t k = 0; k < f.front()->records.size(); ++k) {
    const auto& name = f.front()->records[k].name;
    const auto& kind = f.front()->records[k].kind;
    if (kind != "residual_bottleneck" && kind != "attention") continue;
    std::vector<double> lm_f, lm_b, lb_f, lb_b;
    for (std::size_t s = 0; s < f.size(); ++s) {
      lm_f.push_back(f[s]->records[k].calib_L_m_end);
      lb_f.push_back(f[s]->records[k].calib_L_b_end);
      lm_b.push_back(b[s]->records[k].calib_L_m_end);
      lb_b.push_back(b[s]->records[k].calib_L_b_end);
    }
    ++blocks;
    const bool pass = median(lm_f) <= median(lm_b) && median(lb_f) <= 1.5 * median(lb_b);
    if (pass) ++ok;
    else failed << ' ' << name << "(L_m " << fmt(median(lm_f)) << " vs " << fmt(median(lm_b)) << ", L_b "
                << fmt(median(lb_f)) << " vs " << fmt(median(lb_b)) << ')';
  }
  const bool pass = blocks > 0 && ok * 5 >= blocks * 4 && seconds < 1800.0;
  report(5, "front-layer losses under FBR", pass,
         std::to_string(ok) + "/" + std::to_string(blocks) + " blocks pass (need >= 80%)" +
             (failed.str().empty() ? "" : "; failing:" + failed.str()) + "; " + fmt(seconds / 60.0, 3) + " min");
}

void criterion_calibration(const std::vector<Cell>& cells) {
  const double tf = median_of(cells, "tdac", "fbr", &Cell::frechet);
  const double ef = median_of(cells, "equal_spaced", "fbr", &Cell::frechet);
  const double nf = median_of(cells, "normal_density", "fbr", &Cell::frechet);
  const double ta = median_of(cells, "tdac", "fbr", &Cell::auc);
  const double ea = median_of(cells, "equal_spaced", "fbr", &Cell::auc);
  const double na = median_of(cells, "normal_density", "fbr", &Cell::auc);
  const bool direction = tf <= ef && tf <= nf && ta <= ea && ta <= na;
  const bool gate = tf <= 1.05 * std::max(ef, nf) && ta <= 1.05 * std::max(ea, na);
  report(6, "calibration ablation", gate,
         "Frechet tdac " + fmt(tf) + ", equal_spaced " + fmt(ef) + ", normal_density " + fmt(nf) +
             "; traj-MSE AUC tdac " + fmt(ta) + ", equal_spaced " + fmt(ea) + ", normal_density " + fmt(na) +
             "; no-worse direction " + (direction ? "holds" : "does not hold") +
             "; gate (within 5% of the worst baseline) " + (gate ? "met" : "not met"));
}

void criterion_reconstruction(const std::vector<Cell>& cells) {
  const double f = median_of(cells, "tdac", "fbr", &Cell::frechet);
  const double b = median_of(cells, "tdac", "block_wise", &Cell::frechet);
  const double l = median_of(cells, "tdac", "layer_wise", &Cell::frechet);
  report(7, "reconstruction ablation", f <= b && f <= l,
         "Frechet fbr " + fmt(f) + ", block_wise " + fmt(b) + ", layer_wise " + fmt(l));
}

void criterion_combination(const std::vector<Cell>& cells) {
  std::map<std::string, double> grid;
  for (const auto* s : {"tdac", "equal_spaced"})
    for (const auto* m : {"fbr", "block_wise"})
      grid[std::string(s) + "+" + m] = median_of(cells, s, m, &Cell::frechet);
  double best = 1e300;
  for (const auto& [k, v] : grid) best = std::min(best, v);
  const double ours = grid["tdac+fbr"];
  std::ostringstream d;
  for (const auto& [k, v] : grid) d << k << ' ' << fmt(v) << "; ";
  report(8, "combination grid", ours <= best,
         d.str() + "tdac+fbr is " + (ours <= best ? "best" : "not best"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string out = "acceptance_run";
  std::int64_t recon_iters = 500;
  std::int64_t train_iters = 2000;
  std::int64_t eval_samples = 512;
  bool fast_only = false;
  app.add_option("--out", out, "scratch directory");
  app.add_option("--recon-iters", recon_iters, "reconstruction iterations per unit");
  app.add_option("--train-iters", train_iters, "FP training iterations");
  app.add_option("--eval-samples", eval_samples, "samples per Frechet estimate");
  app.add_flag("--fast-only", fast_only, "run only the criteria that need no trained model");
  CLI11_PARSE(app, argc, argv);

  const auto t0 = Clock::now();
  try {
    criterion_gradients();
    criterion_quantizer();
    criterion_tdac_oracles();
    criterion_compression();
    if (!fast_only) {
      fs::remove_all(out);
      fs::create_directories(out);
      RunConfig cfg;
      cfg.out = out;
      cfg.seed = 0;
      cfg.seeds = {0, 1, 2};
      cfg.train_iters = train_iters;
      cfg.recon_iters = recon_iters;
      cfg.eval_samples = eval_samples;
      cfg.validate();
      note("config " + cfg.to_json().dump());

      const PipelineRun run = end_to_end(cfg);
      criterion_reduction(run.fp, cfg);

      double c5_seconds = 0.0;
      const auto cells = run_grid(run.fp, cfg, c5_seconds);
      write_grid(cells, fs::path(out) / "grid.json");
      criterion_front_layers(cells, c5_seconds);
      criterion_calibration(cells);
      criterion_reconstruction(cells);
      criterion_combination(cells);
    }
  } catch (const std::exception& e) {
    std::cout << "FAIL  acceptance aborted: " << e.what() << std::endl;
    return 1;
  }

  std::sort(outcomes.begin(), outcomes.end(), [](const Outcome& a, const Outcome& b) { return a.id < b.id; });
  std::size_t passed = 0;
  std::cout << "\nsummary (" << fmt(seconds_since(t0) / 60.0, 3) << " min)\n";
  for (const auto& o : outcomes) {
    passed += o.pass ? 1 : 0;
    std::cout << "  " << (o.pass ? "PASS" : "FAIL") << "  " << o.id << ". " << o.name << '\n';
  }
  std::cout << passed << "/" << outcomes.size() << " criteria passed" << std::endl;
  return passed == outcomes.size() ? 0 : 1;
}
