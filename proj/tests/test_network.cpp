// Copyright (c) 2026 the lpfp authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "lpfp/error.hpp"
#include "lpfp/network.hpp"

using namespace lpfp;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  REQUIRE(out.good());
  out << text;
}

void write_blob(const std::string& path, const std::vector<float>& values) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  for (float v : values) {
    const auto u = std::bit_cast<std::uint32_t>(v);
    const char b[4] = {static_cast<char>(u), static_cast<char>(u >> 8),
                       static_cast<char>(u >> 16), static_cast<char>(u >> 24)};
    out.write(b, 4);
  }
}

const char* kBranchManifest =
    "# branched demo graph\n"
    "input c=1 h=8 w=8\n"
    "conv ic=1 oc=4 k=3x3 stride=1 pad=1 act=relu w=w0 b=b0\n"
    "conv ic=4 oc=4 k=3x3 pad=1 w=w1 b=b1\n"
    "conv ic=4 oc=2 k=1x1 src=0 w=w2 b=b2\n"
    "concat src=1,2\n"
    "relu\n"
    "maxpool k=2\n"
    "conv ic=6 oc=6 k=3x3 pad=1 w=w3 b=b3\n"
    "add src=5,6\n"
    "avgpool k=2\n"
    "fc ic=24 oc=4 w=w4 b=b4\n";

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("manifest parses a branched graph and infers every shape") {
  TempFile f("branch.manifest.tmp");
  write_text(f.path, kBranchManifest);
  const NetworkGraph net = parse_manifest(f.path);

  REQUIRE(net.layers.size() == 10);
  CHECK(net.input_shape == Shape{1, 8, 8});
  CHECK(net.layers[0].out_shape == Shape{4, 8, 8});
  CHECK(net.layers[0].act.kind == Activation::Kind::relu);
  CHECK(net.layers[1].out_shape == Shape{4, 8, 8});
  CHECK(net.layers[1].src == std::vector<int>{0});
  CHECK(net.layers[2].out_shape == Shape{2, 8, 8});
  CHECK(net.layers[2].src == std::vector<int>{0});
  CHECK(net.layers[3].kind == LayerKind::concat);
  CHECK(net.layers[3].out_shape == Shape{6, 8, 8});
  CHECK(net.layers[4].kind == LayerKind::relu);
  CHECK(net.layers[5].out_shape == Shape{6, 4, 4});
  CHECK(net.layers[5].pool_stride == 2);  // stride defaults to the window
  CHECK(net.layers[6].out_shape == Shape{6, 4, 4});
  CHECK(net.layers[7].src == std::vector<int>({5, 6}));
  CHECK(net.layers[8].out_shape == Shape{6, 2, 2});
  CHECK(net.layers[9].kind == LayerKind::fc);
  CHECK(net.layers[9].out_shape == Shape{4, 1, 1});

  const std::vector<std::pair<std::string, std::size_t>> expect_tensors = {
      {"w0", 36}, {"b0", 4}, {"w1", 144}, {"b1", 4}, {"w2", 8},
      {"b2", 2},  {"w3", 324}, {"b3", 6}, {"w4", 96}, {"b4", 4}};
  REQUIRE(net.tensor_order.size() == expect_tensors.size());
  for (std::size_t i = 0; i < expect_tensors.size(); ++i) {
    CHECK(net.tensor_order[i].id == expect_tensors[i].first);
    CHECK(net.tensor_order[i].count == expect_tensors[i].second);
  }
}

TEST_CASE("manifest rejects malformed and inconsistent graphs") {
  TempFile f("bad.manifest.tmp");
  auto expect_throw = [&](const std::string& text, auto tag) {
    write_text(f.path, text);
    CHECK_THROWS_AS(parse_manifest(f.path), decltype(tag));
  };

  expect_throw("conv ic=1 oc=1 k=1 w=w b=b\n", ParseError{""});  // no input line
  expect_throw("input c=1 h=4 w=4\n", ParseError{""});           // no layers
  expect_throw("input c=1 h=4 w=4\nconv ic=2 oc=1 k=1 w=w b=b\n", ConstraintError{""});
  expect_throw("input c=1 h=4 w=4\nfc ic=15 oc=2 w=w b=b\n", ConstraintError{""});
  expect_throw("input c=1 h=4 w=4\nconv ic=1 oc=1 k=1 src=3 w=w b=b\n", ParseError{""});
  expect_throw("input c=1 h=4 w=4\nconv ic=1 oc=1 k=1 w=w b=w\n", ParseError{""});
  expect_throw("input c=1 h=4 w=4\nwarp ic=1\n", ParseError{""});
  expect_throw("input c=1 h=4 w=4\nconv ic=1 oc=1 k=1 act=gelu w=w b=b\n", ParseError{""});
  expect_throw("input c=1 h=4 w=4\nconv ic=1 oc=1 k=9 w=w b=b\n", ConstraintError{""});
  expect_throw("input c=1 h=4 w=4\nconv ic=1 oc=1 k=1 pad=-1 w=w b=b\n", ConstraintError{""});
  expect_throw("input c=1 h=4 w=4\nleaky shift=16\n", ConstraintError{""});
  expect_throw("input c=1 h=4 w=4\nconv ic=1 oc=1 k=1 k=2 w=w b=b\n", ParseError{""});
  expect_throw(
      "input c=1 h=4 w=4\nconv ic=1 oc=1 k=1 w=w b=b\nconv ic=1 oc=2 k=1 src=input w=v b=c\n"
      "add src=0,1\n",
      ConstraintError{""});  // add shapes disagree
  expect_throw(
      "input c=1 h=4 w=4\nconv ic=1 oc=1 k=2 w=w b=b\nconcat src=0,input\n",
      ConstraintError{""});  // concat spatial mismatch
  expect_throw("input c=1 h=4 w=4\nadd src=0\n", ParseError{""});
  expect_throw("input c=1 h=4 w=4\nrelu junk=1\n", ParseError{""});
}

TEST_CASE("weight blobs load by catalog order and validate their size") {
  TempFile mf("wload.manifest.tmp");
  write_text(mf.path,
             "input c=1 h=2 w=2\n"
             "conv ic=1 oc=2 k=1 w=w0 b=b0\n");
  const NetworkGraph net = parse_manifest(mf.path);

  TempFile bf("wload.weights.tmp");
  write_blob(bf.path, {1.5f, -2.25f, 0.125f, 3.0f});
  const WeightMap weights = load_weights(net, bf.path);
  CHECK(weights.at("w0") == std::vector<float>({1.5f, -2.25f}));
  CHECK(weights.at("b0") == std::vector<float>({0.125f, 3.0f}));

  write_blob(bf.path, {1.0f, 2.0f, 3.0f});
  CHECK_THROWS_AS(load_weights(net, bf.path), ParseError);
  CHECK_THROWS_AS(load_weights(net, "missing.weights.tmp"), IoError);
}

TEST_CASE("batchnorm folds into the producing conv with hand-checked math") {
  TempFile mf("bn.manifest.tmp");
  write_text(mf.path,
             "input c=1 h=2 w=2\n"
             "conv ic=1 oc=2 k=1 w=w0 b=b0\n"
             "bn gamma=g beta=be mean=mu var=va eps=0.25\n"
             "relu\n");
  TempFile bf("bn.weights.tmp");
  // w0={2,-1} b0={0.5,1} gamma={3,0.5} beta={1,-2} mean={0.25,0.5} var={2,0}
  write_blob(bf.path, {2.0f, -1.0f, 0.5f, 1.0f, 3.0f, 0.5f, 1.0f, -2.0f,
                       0.25f, 0.5f, 2.0f, 0.0f});
  auto [net, weights] = import_network(mf.path, bf.path);

  REQUIRE(net.layers.size() == 2);
  CHECK(net.layers[0].kind == LayerKind::conv);
  CHECK(net.layers[1].kind == LayerKind::relu);
  CHECK(net.layers[1].src == std::vector<int>{0});
  // scale0 = 3/sqrt(2.25) = 2; scale1 = 0.5/sqrt(0.25) = 1.
  CHECK(weights.at("w0") == std::vector<float>({4.0f, -1.0f}));
  CHECK(weights.at("b0") == std::vector<float>({1.5f, -1.5f}));
}

TEST_CASE("chained batchnorms compose into one fold") {
  TempFile mf("bn2.manifest.tmp");
  write_text(mf.path,
             "input c=1 h=1 w=1\n"
             "conv ic=1 oc=1 k=1 w=w0 b=b0\n"
             "bn gamma=g1 beta=be1 mean=mu1 var=va1 eps=0\n"
             "bn gamma=g2 beta=be2 mean=mu2 var=va2 eps=0\n");
  TempFile bf("bn2.weights.tmp");
  // First: scale 2 (gamma 2, var 1), mean 1, beta 0 -> w=2w, b=(b-1)*2.
  // Second: scale 0.5 (gamma 0.5, var 1), mean 0, beta 3 -> w*=0.5, b=b*0.5+3.
  write_blob(bf.path, {3.0f, 2.0f,            // w0 b0
                       2.0f, 0.0f, 1.0f, 1.0f,  // g1 be1 mu1 va1
                       0.5f, 3.0f, 0.0f, 1.0f});  // g2 be2 mu2 va2
  auto [net, weights] = import_network(mf.path, bf.path);
  REQUIRE(net.layers.size() == 1);
  CHECK(weights.at("w0") == std::vector<float>({3.0f}));      // 3*2*0.5
  CHECK(weights.at("b0") == std::vector<float>({4.0f}));      // ((2-1)*2)*0.5+3
}

TEST_CASE("unfoldable batchnorm placements are rejected") {
  auto build = [](const std::string& manifest, const std::vector<float>& blob) {
    write_text("bnr.manifest.tmp", manifest);
    write_blob("bnr.weights.tmp", blob);
    return import_network("bnr.manifest.tmp", "bnr.weights.tmp");
  };
  TempFile m("bnr.manifest.tmp"), b("bnr.weights.tmp");

  // After a pool: no producer weights to fold into.
  CHECK_THROWS_AS(build("input c=1 h=2 w=2\nmaxpool k=2\nbn gamma=g beta=be mean=mu var=va\n",
                        {1, 0, 0, 1}),
                  ConstraintError);
  // Producer already applies an activation.
  CHECK_THROWS_AS(
      build("input c=1 h=1 w=1\nconv ic=1 oc=1 k=1 act=relu w=w b=bb\n"
            "bn gamma=g beta=be mean=mu var=va\n",
            {1, 0, 1, 0, 0, 1}),
      ConstraintError);
  // Producer output also consumed elsewhere.
  CHECK_THROWS_AS(
      build("input c=1 h=1 w=1\nconv ic=1 oc=1 k=1 w=w b=bb\n"
            "bn gamma=g beta=be mean=mu var=va\nrelu src=0\n",
            {1, 0, 1, 0, 0, 1}),
      ConstraintError);
  // Normalizing the raw input.
  CHECK_THROWS_AS(
      build("input c=1 h=1 w=1\nbn gamma=g beta=be mean=mu var=va src=input\n"
            "conv ic=1 oc=1 k=1 w=w b=bb\n",
            {1, 0, 0, 1, 1, 0}),
      ConstraintError);
  // Non-positive variance + eps.
  CHECK_THROWS_AS(
      build("input c=1 h=1 w=1\nconv ic=1 oc=1 k=1 w=w b=bb\n"
            "bn gamma=g beta=be mean=mu var=va eps=0\n",
            {1, 0, 1, 0, 0, 0}),
      ConstraintError);
}

TEST_CASE("code-passing layers force shared scale groups") {
  TempFile f("groups.manifest.tmp");
  write_text(f.path, kBranchManifest);
  const NetworkGraph net = parse_manifest(f.path);
  const auto groups = shared_sf_groups(net);

  REQUIRE(groups.size() == 2);
  CHECK(groups[0] == std::vector<std::string>({"act1", "act2", "act3", "act4", "act5"}));
  CHECK(groups[1] == std::vector<std::string>({"act7", "act8"}));
}

TEST_CASE("dataset blobs roundtrip and validate their header") {
  Dataset ds;
  ds.shape = {2, 3, 3};
  ds.num_classes = 4;
  for (int s = 0; s < 2; ++s) {
    std::vector<float> sample;
    for (int i = 0; i < ds.shape.count(); ++i) {
      sample.push_back(static_cast<float>(s * 100 + i) * 0.25f);
    }
    ds.samples.push_back(sample);
  }
  ds.labels = {1, 3};
  TempFile f("roundtrip.dataset.tmp");
  save_dataset(f.path, ds);
  const Dataset back = load_dataset(f.path);
  CHECK(back.shape == ds.shape);
  CHECK(back.num_classes == ds.num_classes);
  CHECK(back.samples == ds.samples);
  CHECK(back.labels == ds.labels);

  // Corrupt the magic.
  {
    std::fstream io(f.path, std::ios::in | std::ios::out | std::ios::binary);
    io.put('X');
  }
  CHECK_THROWS_AS(load_dataset(f.path), ParseError);

  save_dataset(f.path, ds);
  {
    std::ofstream io(f.path, std::ios::app | std::ios::binary);
    io.put('\0');  // now one byte too long
  }
  CHECK_THROWS_AS(load_dataset(f.path), ParseError);

  Dataset bad = ds;
  bad.labels[1] = 4;  // out of range for 4 classes
  save_dataset(f.path, bad);
  CHECK_THROWS_AS(load_dataset(f.path), ParseError);
}

TEST_CASE("raw input blobs check their size against the network shape") {
  TempFile f("input.blob.tmp");
  write_blob(f.path, {1.0f, 2.0f, 3.0f, 4.0f});
  const auto values = load_input_blob(f.path, Shape{1, 2, 2});
  CHECK(values == std::vector<float>({1.0f, 2.0f, 3.0f, 4.0f}));
  CHECK_THROWS_AS(load_input_blob(f.path, Shape{1, 2, 3}), ParseError);
}
