// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

// edaq: train, profile, calibrate, quantize, sample, evaluate, ablate, report.

#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "edaq/pipeline/pipeline.hpp"

namespace {

using edaq::pipeline::RunConfig;

struct Flags {
  std::optional<std::string> config;
  std::vector<std::string> sets;
  std::map<std::string, std::string> values;
};

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Registers `--name` storing its text under config key `key`.
void value_flag(CLI::App* app, Flags& f, const std::string& name, const std::string& key, const std::string& help) {
  app->add_option_function<std::string>(
      "--" + name, [&f, key](const std::string& v) { f.values[key] = v; }, help);
}

void common_flags(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "key=value config file applied before flags");
  app->add_option("--set", f.sets, "override any config key: --set key=value (repeatable)");
  value_flag(app, f, "arch", "arch", "tiny_unet | mlp_denoiser");
  value_flag(app, f, "dataset", "dataset", "shapes8x8 | moons2d");
  value_flag(app, f, "steps", "steps", "DDIM sampling steps");
  value_flag(app, f, "eta", "eta", "DDIM eta (0 = deterministic)");
  value_flag(app, f, "bits-w", "bits_w", "weight bits (2..8, 32 = FP)");
  value_flag(app, f, "bits-a", "bits_a", "activation bits (2..8, 32 = FP)");
  value_flag(app, f, "epsilon", "epsilon", "density threshold (default: 25th percentile of pairwise mse)");
  value_flag(app, f, "lambda", "lambda", "variety weight in the timestep score");
  value_flag(app, f, "gamma", "gamma", "front-layer loss weight");
  value_flag(app, f, "calib-size", "calib_size", "calibration budget N");
  value_flag(app, f, "strategy", "strategy", "tdac | equal_spaced | normal_density | random | single_step");
  value_flag(app, f, "single-t", "single_t", "timestep for the single_step strategy");
  value_flag(app, f, "recon", "recon", "fbr | block_wise | layer_wise");
  value_flag(app, f, "seed", "seed", "root seed");
  value_flag(app, f, "seeds", "seeds", "comma-separated seeds for ablate");
  value_flag(app, f, "out", "out", "run directory");
  value_flag(app, f, "threads", "threads", "worker threads (0 = EDAQ_THREADS or all cores)");
}

RunConfig resolve(const Flags& f) {
  RunConfig cfg;
  if (f.config) cfg = edaq::pipeline::load_config_file(*f.config, cfg);
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw edaq::pipeline::ConfigError("--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [k, v] : f.values) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Post-training quantization toolkit for small diffusion models"};
  app.require_subcommand(1);

  const auto log = [](const std::string& m) { std::cerr << m << '\n'; };
  std::map<std::string, Flags> flags;
  std::map<std::string, CLI::App*> subs;
  auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* s = app.add_subcommand(name, help);
    common_flags(s, flags[name]);
    subs[name] = s;
    return s;
  };

  add("train", "train the full-precision denoiser");
  value_flag(subs["train"], flags["train"], "iters", "train_iters", "training iterations");
  value_flag(subs["train"], flags["train"], "batch", "train_batch", "training batch size");

  add("profile", "record a sampling trajectory and diagnostics");
  value_flag(subs["profile"], flags["profile"], "batch", "profile_batch", "trajectory batch size");

  add("calibrate", "score timesteps and build a calibration set");
  value_flag(subs["calibrate"], flags["calibrate"], "batch", "profile_batch", "profiling batch the trajectory used");

  add("quantize", "attach quantizers and reconstruct");
  value_flag(subs["quantize"], flags["quantize"], "iters", "recon_iters", "reconstruction iterations per unit");
  value_flag(subs["quantize"], flags["quantize"], "batch", "recon_batch", "reconstruction batch size");

  bool fp_samples = false;
  add("sample", "generate samples with the quantized model")->add_flag("--fp", fp_samples, "use the FP model");
  value_flag(subs["sample"], flags["sample"], "batch", "eval_samples", "number of samples");

  add("evaluate", "fidelity and compression reports");
  value_flag(subs["evaluate"], flags["evaluate"], "batch", "eval_batch", "trajectory-MSE batch size");

  std::string strategies = "tdac,equal_spaced";
  std::string methods = "fbr,block_wise";
  CLI::App* ab = add("ablate", "calibration x reconstruction grid over seeds");
  value_flag(ab, flags["ablate"], "iters", "recon_iters", "reconstruction iterations per unit");
  value_flag(ab, flags["ablate"], "batch", "recon_batch", "reconstruction batch size");
  ab->add_option("--strategies", strategies, "calibration strategies of the grid");
  ab->add_option("--methods", methods, "reconstruction methods of the grid");

  add("report", "consolidated JSON and Markdown report");

  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& [name, sub] : subs) {
      if (!sub->parsed()) continue;
      const RunConfig cfg = resolve(flags[name]);
      if (name == "train") edaq::pipeline::cmd_train(cfg, log);
      else if (name == "profile") edaq::pipeline::cmd_profile(cfg, log);
      else if (name == "calibrate") edaq::pipeline::cmd_calibrate(cfg, log);
      else if (name == "quantize") edaq::pipeline::cmd_quantize(cfg, log);
      else if (name == "sample") edaq::pipeline::cmd_sample(cfg, fp_samples, log);
      else if (name == "evaluate") edaq::pipeline::cmd_evaluate(cfg, log);
      else if (name == "ablate") edaq::pipeline::cmd_ablate(cfg, split(strategies), split(methods), log);
      else if (name == "report") edaq::pipeline::cmd_report(cfg, log);
    }
  } catch (const std::exception& e) {
    std::cerr << "edaq: error: " << e.what() << '\n';
    return 1;
  }
  return EXIT_SUCCESS;
}
