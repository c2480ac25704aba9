// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/metrics/compression.hpp"

#include <fstream>
#include <iomanip>
#include <stdexcept>

#include "edaq/quant/quantizer.hpp"

namespace edaq::metrics {

CompressionReport count_compression(const net::Model& model, int bits_w, int bits_a) {
  if (bits_w < 1 || bits_a < 1) throw std::invalid_argument("bit widths must be >= 1");
  CompressionReport r;
  r.bits_w = bits_w;
  r.bits_a = bits_a;
  const auto macs = model.layer_macs();
  std::int64_t layer_params = 0;
  double q_bops = 0.0, q_fp_bops = 0.0;
  for (const auto& l : model.layers()) {
    CompressionRow row;
    row.layer = l.name;
    row.macs = macs.at(l.name);
    row.weights = l.weight.numel();
    row.biases = l.bias.defined() ? l.bias.numel() : 0;
    layer_params += row.weights + row.biases;
    const bool wq = l.quantizable && bits_w < quant::kPassThroughBits;
    const bool aq = l.quantizable && bits_a < quant::kPassThroughBits;
    row.quantized = wq || aq;
    row.bits_w = wq ? bits_w : 32;
    row.bits_a = aq ? bits_a : 32;
    row.bops = static_cast<double>(row.macs) * row.bits_w * row.bits_a;
    row.size_bytes = static_cast<double>(row.weights + row.biases) * row.bits_w / 8.0;
    double overhead = 0.0;
    if (wq) overhead += static_cast<double>(l.out_channels()) * (32.0 + bits_w) / 8.0;
    if (aq) overhead += (32.0 + bits_a) / 8.0;
    row.size_bytes += overhead;
    r.overhead_bytes += overhead;
    r.bops += row.bops;
    r.fp_bops += static_cast<double>(row.macs) * 32.0 * 32.0;
    if (row.quantized) {
      q_bops += row.bops;
      q_fp_bops += static_cast<double>(row.macs) * 32.0 * 32.0;
    }
    r.size_bytes += row.size_bytes;
    r.rows.push_back(std::move(row));
  }
  r.other_params = model.parameter_count() - layer_params;
  r.size_bytes += static_cast<double>(r.other_params) * 4.0;
  r.fp_size_bytes = static_cast<double>(model.parameter_count()) * 4.0;
  r.quantized_bops_ratio = q_bops > 0.0 ? q_fp_bops / q_bops : 1.0;
  return r;
}

nlohmann::json CompressionReport::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& row : rows) {
    layers.push_back({{"layer", row.layer},
                      {"quantized", row.quantized},
                      {"macs", row.macs},
                      {"weights", row.weights},
                      {"biases", row.biases},
                      {"bits_w", row.bits_w},
                      {"bits_a", row.bits_a},
                      {"bops", row.bops},
                      {"size_bytes", row.size_bytes}});
  }
  return {{"bits_w", bits_w},
          {"bits_a", bits_a},
          {"layers", layers},
          {"other_params", other_params},
          {"bops", bops},
          {"fp_bops", fp_bops},
          {"bops_ratio", bops_ratio()},
          {"quantized_bops_ratio", quantized_bops_ratio},
          {"size_bytes", size_bytes},
          {"fp_size_bytes", fp_size_bytes},
          {"overhead_bytes", overhead_bytes},
          {"size_ratio", size_ratio()}};
}

void CompressionReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "layer,quantized,macs,weights,biases,bits_w,bits_a,bops,size_bytes\n" << std::setprecision(17);
  for (const auto& r : rows) {
    f << r.layer << ',' << (r.quantized ? 1 : 0) << ',' << r.macs << ',' << r.weights << ',' << r.biases << ','
      << r.bits_w << ',' << r.bits_a << ',' << r.bops << ',' << r.size_bytes << '\n';
  }
}

}  // namespace edaq::metrics
