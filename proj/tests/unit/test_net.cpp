// Copyright 2026 The EDAQ Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <set>

#include <doctest.h>

#include "edaq/net/checkpoint.hpp"
#include "edaq/net/container.hpp"
#include "edaq/net/model.hpp"
#include "edaq/net/reference.hpp"
#include "edaq/nd/gradcheck.hpp"
#include "helpers.hpp"

using namespace edaq;
using nd::Tensor;

namespace {

std::vector<std::int64_t> ts(std::size_t n, std::int64_t t) { return std::vector<std::int64_t>(n, t); }

}  // namespace

TEST_CASE("tiny_unet structure") {
  const net::Model m = net::build_model(net::Arch::tiny_unet);
  CHECK(m.parameter_count() >= 100000);
  CHECK(m.parameter_count() <= 200000);

  int attention = 0;
  for (const auto& b : m.blocks()) {
    if (b.kind == net::BlockKind::attention) {
      ++attention;
      CHECK(b.front_layers == std::vector<std::string>{"mid.attn.q", "mid.attn.k", "mid.attn.v"});
      CHECK(std::find(b.layers.begin(), b.layers.end(), "mid.attn.proj_out") != b.layers.end());
    }
    if (b.kind == net::BlockKind::residual_bottleneck) {
      CHECK(b.front_layers == std::vector<std::string>{b.name + ".conv1", b.name + ".temb_proj"});
    }
    if (b.kind == net::BlockKind::standalone) CHECK(b.front_layers.empty());
  }
  CHECK(attention == 1);
  // Up-stage residual blocks see concatenated skips and need a shortcut conv.
  for (const char* up : {"up1.res0", "up0.res0"}) CHECK_NOTHROW(m.layer(std::string(up) + ".nin_shortcut"));
}

TEST_CASE("every quantizable layer sits in exactly one block") {
  for (auto arch : {net::Arch::tiny_unet, net::Arch::mlp_denoiser}) {
    const net::Model m = net::build_model(arch);
    std::multiset<std::string> in_blocks;
    for (const auto& b : m.blocks()) in_blocks.insert(b.layers.begin(), b.layers.end());
    std::set<std::string> quantizable;
    for (const auto& l : m.layers()) {
      if (l.quantizable) {
        quantizable.insert(l.name);
        CHECK(in_blocks.count(l.name) == 1);
      } else {
        // Only the timestep-embedding MLP stays outside the blocks.
        CHECK(l.name.rfind("temb.", 0) == 0);
        CHECK(in_blocks.count(l.name) == 0);
      }
    }
    CHECK(std::set<std::string>(in_blocks.begin(), in_blocks.end()) == quantizable);
  }
}

TEST_CASE("build_model is deterministic and seed dependent") {
  const auto a = net::build_model(net::Arch::mlp_denoiser, {}, 0);
  const auto b = net::build_model(net::Arch::mlp_denoiser, {}, 0);
  const auto c = net::build_model(net::Arch::mlp_denoiser, {}, 1);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(test::bit_equal(pa[i].tensor, pb[i].tensor));
    differs = differs || !test::bit_equal(pa[i].tensor, pc[i].tensor);
  }
  CHECK(differs);
  CHECK_THROWS_AS(net::parse_arch("resnet"), std::invalid_argument);
}

TEST_CASE("forward shapes, taps and determinism") {
  const net::Model m = net::build_model(net::Arch::tiny_unet, {}, 3);
  const Tensor x = test::random_tensor({2, 1, 8, 8}, 4);
  const auto t = ts(2, 0);
  const Tensor y0 = m.forward(Tensor::zeros({2, 1, 8, 8}), t);
  CHECK(y0.shape() == nd::Shape{2, 1, 8, 8});

  net::Taps taps;
  const Tensor y1 = m.forward(x, t, {}, {true, true, true}, &taps);
  const Tensor y2 = m.forward(x, t);
  CHECK(test::bit_equal(y1, y2));
  CHECK(taps.mid.shape() == nd::Shape{2, m.config().mid_channels, 4, 4});
  CHECK(taps.layers.size() == m.layers().size());
  CHECK(taps.blocks.size() == m.blocks().size());

  net::Taps taps2;
  m.forward(x, t, {}, {true, true, true}, &taps2);
  CHECK(test::bit_equal(taps.mid, taps2.mid));

  CHECK_THROWS_AS(m.forward(test::random_tensor({2, 1, 4, 4}, 1), t), nd::ShapeError);
  CHECK_THROWS_AS(m.forward(x, ts(3, 0)), nd::ShapeError);
}

TEST_CASE("run_block reproduces the captured block output") {
  const net::Model m = net::build_model(net::Arch::tiny_unet, {}, 5);
  const Tensor x = test::random_tensor({2, 1, 8, 8}, 6);
  const std::vector<std::int64_t> t = {10, 500};
  net::Taps taps;
  m.forward(x, t, {}, {false, false, true}, &taps);
  for (const auto& b : m.blocks()) {
    const auto& io = taps.blocks.at(b.name);
    CHECK(test::bit_equal(m.run_block(b.name, io.inputs), io.output));
  }
}

TEST_CASE("residual output is conv2 path plus shortcut") {
  const net::Model m = net::build_model(net::Arch::tiny_unet, {}, 7);
  const Tensor x = test::random_tensor({1, 1, 8, 8}, 8);
  const std::vector<std::int64_t> t = {3};
  net::Taps taps;
  m.forward(x, t, {}, {false, true, true}, &taps);
  const auto& io = taps.blocks.at("up1.res0");
  const Tensor expect = nd::add(taps.layers.at("up1.res0.nin_shortcut").output, taps.layers.at("up1.res0.conv2").output);
  CHECK(test::bit_equal(io.output, expect));
}

TEST_CASE("mlp_denoiser taps the second hidden activation") {
  const net::Model m = net::build_model(net::Arch::mlp_denoiser);
  CHECK(m.mid_tap() == "fc2");
  net::Taps taps;
  const Tensor y = m.forward(test::random_tensor({4, 2}, 9), ts(4, 7), {}, {true, false, false}, &taps);
  CHECK(y.shape() == nd::Shape{4, 2});
  CHECK(taps.mid.shape() == nd::Shape{4, 64});
}

TEST_CASE("timestep features") {
  const std::vector<std::int64_t> t = {0, 5};
  const Tensor f = net::timestep_features(t, 8);
  CHECK(f.shape() == nd::Shape{2, 8});
  // t = 0 gives sin 0 = 0 and cos 0 = 1.
  for (int i = 0; i < 4; ++i) CHECK(f.data()[i] == 0.0f);
  for (int i = 4; i < 8; ++i) CHECK(f.data()[i] == 1.0f);
}

TEST_CASE("full tiny_unet gradient check") {
  net::Model m = net::build_model(net::Arch::tiny_unet, {}, 11);
  const Tensor x = test::random_tensor({1, 1, 8, 8}, 12);
  const std::vector<std::int64_t> t = {250};
  nd::GradCheckOptions o;
  o.tolerance = 1e-3;
  o.max_coords = 6;
  const auto rep = nd::grad_check(
      m.parameters(), [&] { return m.forward(x, t); }, o,
      [&] { return net::reference_forward(m, x, t); });
  for (const auto& e : rep.entries) {
    INFO(e.name << " " << e.max_rel_error);
    CHECK(e.pass);
  }
}

TEST_CASE("reference forward agrees with the float network") {
  for (auto arch : {net::Arch::tiny_unet, net::Arch::mlp_denoiser}) {
    net::Model m = net::build_model(arch, {}, 5);
    nd::Shape shape = m.sample_shape();
    shape.insert(shape.begin(), 3);
    const Tensor x = test::random_tensor(shape, 6);
    const std::vector<std::int64_t> t = {0, 17, 999};
    const Tensor y = m.forward(x, t);
    const auto ref = net::reference_forward(m, x, t);
    REQUIRE(ref.size() == static_cast<std::size_t>(y.numel()));
    double worst = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(ref[i] - y.data()[i]));
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("full mlp gradient check") {
  net::Model m = net::build_model(net::Arch::mlp_denoiser, {}, 21);
  const Tensor x = test::random_tensor({4, 2}, 22);
  const std::vector<std::int64_t> t = {3, 40, 500, 999};
  nd::GradCheckOptions o;
  o.tolerance = 1e-3;
  o.max_coords = 8;
  const auto rep = nd::grad_check(
      m.parameters(), [&] { return m.forward(x, t); }, o,
      [&] { return net::reference_forward(m, x, t); });
  for (const auto& e : rep.entries) {
    INFO(e.name << " " << e.max_rel_error);
    CHECK(e.pass);
  }
}

TEST_CASE("container round trip is bit exact") {
  net::Container c;
  c.meta = {{"kind", "test"}, {"n", 2}};
  c.tensors.push_back({"a", test::random_tensor({2, 3}, 1)});
  c.tensors.push_back({"b", test::random_tensor({4}, 2)});
  const std::string bytes = net::serialize_container(c);
  const net::Container r = net::parse_container(bytes);
  CHECK(r.meta["kind"] == "test");
  REQUIRE(r.tensors.size() == 2);
  CHECK(test::bit_equal(r.tensors[0].tensor, c.tensors[0].tensor));
  CHECK(test::bit_equal(*r.find("b"), c.tensors[1].tensor));
  CHECK(r.find("zz") == nullptr);
  CHECK(bytes.substr(0, 4) == "EDAQ");
}

TEST_CASE("container corruption gives distinct errors") {
  net::Container c;
  c.meta = {{"kind", "test"}};
  for (int i = 0; i < 10; ++i) c.tensors.push_back({"t" + std::to_string(i), test::random_tensor({3}, i)});
  const std::string good = net::serialize_container(c);

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(net::parse_container(bad_magic), net::BadMagicError);

  std::string bad_version = good;
  bad_version[4] = 9;
  CHECK_THROWS_AS(net::parse_container(bad_version), net::VersionMismatchError);

  // Ten tensors declared, the last blob cut off.
  const std::string nine_blobs = good.substr(0, good.size() - 3 * sizeof(float));
  CHECK_THROWS_AS(net::parse_container(nine_blobs), net::TruncatedBlobError);

  CHECK_THROWS_AS(net::parse_container(good + "xxxx"), net::MetadataMismatchError);
  CHECK_THROWS_AS(net::parse_container("EDAQ"), net::TruncatedBlobError);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = test::scratch_dir("ckpt");
  net::Checkpoint ck;
  ck.model = net::build_model(net::Arch::tiny_unet, {}, 13);
  ck.info = {{"note", "x"}};
  ck.extra.push_back({"quant.extra", test::random_tensor({5}, 3)});
  net::save_checkpoint(ck, dir / "m.ckpt");
  const net::Checkpoint r = net::load_checkpoint(dir / "m.ckpt");
  const auto pa = ck.model.parameters(), pb = r.model.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK(test::bit_equal(pa[i].tensor, pb[i].tensor));
  }
  CHECK(r.info["note"] == "x");
  REQUIRE(r.extra.size() == 1);
  CHECK(test::bit_equal(r.extra[0].tensor, ck.extra[0].tensor));
  CHECK(r.model.mid_tap() == ck.model.mid_tap());

  // A parameter with the wrong shape is rejected.
  net::Container c = net::to_container(ck);
  for (auto& t : c.tensors) {
    if (t.name == "conv_in.weight") t.tensor = test::random_tensor({3}, 1);
  }
  CHECK_THROWS_AS(net::from_container(c), net::MetadataMismatchError);
}
