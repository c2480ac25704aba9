// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/pipeline/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "edaq/diffuse/data.hpp"
#include "edaq/fbr/reconstruct.hpp"
#include "edaq/net/model.hpp"
#include "edaq/tdac/calibration.hpp"

namespace edaq::pipeline {

namespace {

std::string normalize(std::string k) {
  std::replace(k.begin(), k.end(), '-', '_');
  return k;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_int(const std::string& key, const std::string& v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError("invalid integer for " + key + ": '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("invalid number for " + key + ": '" + v + "'");
  }
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "arch",        "dataset",     "T",           "steps",         "eta",          "bits_w",
      "bits_a",      "epsilon",     "lambda",      "gamma",         "calib_size",   "strategy",
      "single_t",    "recon",       "train_iters", "train_batch",   "train_lr",     "profile_batch",
      "recon_iters", "recon_batch", "eval_samples", "eval_batch",   "seed",         "seeds",
      "out",         "threads"};
  return keys;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_int<std::uint64_t>("seeds", item));
  }
  if (out.empty()) throw ConfigError("seed list is empty");
  return out;
}

void RunConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = normalize(raw_key);
  const std::string v = trim(raw_value);
  if (key == "arch") arch = v;
  else if (key == "dataset") dataset = v;
  else if (key == "T") T = parse_int<int>(key, v);
  else if (key == "steps") steps = parse_int<int>(key, v);
  else if (key == "eta") eta = parse_double(key, v);
  else if (key == "bits_w") bits_w = parse_int<int>(key, v);
  else if (key == "bits_a") bits_a = parse_int<int>(key, v);
  else if (key == "epsilon") epsilon = (v.empty() || v == "auto") ? std::nullopt : std::optional(parse_double(key, v));
  else if (key == "lambda") lambda = parse_double(key, v);
  else if (key == "gamma") gamma = parse_double(key, v);
  else if (key == "calib_size") calib_size = parse_int<std::int64_t>(key, v);
  else if (key == "strategy") strategy = v;
  else if (key == "single_t") single_t = parse_int<std::int64_t>(key, v);
  else if (key == "recon") recon = v;
  else if (key == "train_iters") train_iters = parse_int<std::int64_t>(key, v);
  else if (key == "train_batch") train_batch = parse_int<std::int64_t>(key, v);
  else if (key == "train_lr") train_lr = parse_double(key, v);
  else if (key == "profile_batch") profile_batch = parse_int<std::int64_t>(key, v);
  else if (key == "recon_iters") recon_iters = parse_int<std::int64_t>(key, v);
  else if (key == "recon_batch") recon_batch = parse_int<std::int64_t>(key, v);
  else if (key == "eval_samples") eval_samples = parse_int<std::int64_t>(key, v);
  else if (key == "eval_batch") eval_batch = parse_int<std::int64_t>(key, v);
  else if (key == "seed") seed = parse_int<std::uint64_t>(key, v);
  else if (key == "seeds") seeds = parse_seed_list(v);
  else if (key == "out") out = v;
  else if (key == "threads") threads = parse_int<int>(key, v);
  else throw ConfigError("unknown config key '" + raw_key + "'");
}

void RunConfig::validate() const {
  try {
    net::parse_arch(arch);
    diffuse::parse_dataset(dataset);
    tdac::parse_strategy(strategy);
    fbr::parse_method(recon);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const bool mlp = arch == "mlp_denoiser";
  if (mlp != (dataset == "moons2d")) throw ConfigError("arch " + arch + " does not fit dataset " + dataset);
  auto bits_ok = [](int b) { return (b >= 2 && b <= 8) || b >= 32; };
  if (!bits_ok(bits_w) || !bits_ok(bits_a)) throw ConfigError("bit widths must be in 2..8, or 32 for full precision");
  if (T < 2) throw ConfigError("T must be >= 2");
  if (steps < 1 || steps > T) throw ConfigError("steps must be in [1, T]");
  if (eta < 0.0) throw ConfigError("eta must be >= 0");
  if (epsilon && !(*epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  if (lambda < 0.0 || gamma < 0.0) throw ConfigError("lambda and gamma must be >= 0");
  if (calib_size < 1) throw ConfigError("calib_size must be >= 1");
  if (calib_size > profile_batch * steps) {
    throw ConfigError("calib_size " + std::to_string(calib_size) + " exceeds profile_batch x steps = " +
                      std::to_string(profile_batch * steps));
  }
  for (auto v : {train_iters, train_batch, profile_batch, recon_iters, recon_batch, eval_batch}) {
    if (v < 1) throw ConfigError("iteration counts and batch sizes must be >= 1");
  }
  if (eval_samples < 2) throw ConfigError("eval_samples must be >= 2");
  if (threads < 0) throw ConfigError("threads must be >= 0");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = {{"arch", arch},
                      {"dataset", dataset},
                      {"T", T},
                      {"steps", steps},
                      {"eta", eta},
                      {"bits_w", bits_w},
                      {"bits_a", bits_a},
                      {"lambda", lambda},
                      {"gamma", gamma},
                      {"calib_size", calib_size},
                      {"strategy", strategy},
                      {"single_t", single_t},
                      {"recon", recon},
                      {"train_iters", train_iters},
                      {"train_batch", train_batch},
                      {"train_lr", train_lr},
                      {"profile_batch", profile_batch},
                      {"recon_iters", recon_iters},
                      {"recon_batch", recon_batch},
                      {"eval_samples", eval_samples},
                      {"eval_batch", eval_batch},
                      {"seed", seed},
                      {"seeds", seeds},
                      {"out", out},
                      {"threads", threads}};
  j["epsilon"] = epsilon ? nlohmann::json(*epsilon) : nlohmann::json("auto");
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  for (const auto& [k, v] : j.items()) {
    if (k == "seeds") {
      c.seeds = v.get<std::vector<std::uint64_t>>();
    } else if (v.is_string()) {
      c.set(k, v.get<std::string>());
    } else {
      c.set(k, v.dump());
    }
  }
  return c;
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    try {
      base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

}  // namespace edaq::pipeline
