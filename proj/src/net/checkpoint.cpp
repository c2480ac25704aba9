// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include "edaq/net/checkpoint.hpp"

#include <algorithm>
#include <set>

namespace edaq::net {

Container to_container(const Checkpoint& ckpt) {
  Container c;
  c.meta = {{"kind", "checkpoint"},
            {"arch", to_string(ckpt.model.arch())},
            {"config", ckpt.model.config().to_json()},
            {"info", ckpt.info}};
  for (const auto& p : ckpt.model.parameters()) c.tensors.push_back({p.name, p.tensor});
  for (const auto& e : ckpt.extra) c.tensors.push_back(e);
  return c;
}

Checkpoint from_container(const Container& c) {
  if (!c.meta.contains("arch") || !c.meta.contains("config")) {
    throw MetadataMismatchError("container is not a model checkpoint (no arch/config)");
  }
  Arch arch;
  ModelConfig cfg;
  try {
    arch = parse_arch(c.meta["arch"].get<std::string>());
    cfg = ModelConfig::from_json(c.meta["config"]);
  } catch (const std::exception& e) {
    throw MetadataMismatchError(std::string("bad checkpoint metadata: ") + e.what());
  }
  Checkpoint ck{build_model(arch, cfg, 0), c.meta.value("info", nlohmann::json::object()), {}};

  std::set<std::string> assigned;
  std::map<std::string, nd::Tensor> params;
  for (auto& p : ck.model.parameters()) params.emplace(p.name, p.tensor);
  for (const auto& t : c.tensors) {
    auto it = params.find(t.name);
    if (it == params.end()) {
      ck.extra.push_back({t.name, t.tensor});
      continue;
    }
    if (it->second.shape() != t.tensor.shape()) {
      throw MetadataMismatchError("tensor " + t.name + " has shape " + nd::to_string(t.tensor.shape()) +
                                  ", model expects " + nd::to_string(it->second.shape()));
    }
    auto dst = it->second.mutable_data();
    std::copy(t.tensor.data().begin(), t.tensor.data().end(), dst.begin());
    assigned.insert(t.name);
  }
  for (const auto& [name, _] : params) {
    if (!assigned.count(name)) throw MetadataMismatchError("checkpoint lacks parameter " + name);
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_container(path, to_container(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return from_container(read_container(path)); }

}  // namespace edaq::net
