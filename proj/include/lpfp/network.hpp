// Copyright (c) 2026 the lpfp authors
// SPDX-License-Identifier: Apache-2.0
#ifndef LPFP_NETWORK_HPP
#define LPFP_NETWORK_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lpfp/pe.hpp"

namespace lpfp {

struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;

  int count() const { return c * h * w; }
  bool operator==(const Shape&) const = default;
};

enum class LayerKind { conv, fc, maxpool, avgpool, relu, leaky, add, concat, bn };

// One parsed layer. Which fields are meaningful depends on kind; src holds
// producing layer indices (kInputSource for the network input). After import
// every layer has resolved sources and inferred shapes, and bn layers are
// gone (folded into their producer).
struct Layer {
  LayerKind kind = LayerKind::conv;

  // conv / fc
  int ic = 0, oc = 0, kw = 0, kh = 0, stride = 1, pad = 0;
  Activation act;  // fused activation applied at writeback
  std::string w_id, b_id;

  // pool
  int pool_k = 0, pool_stride = 0;

  // standalone leaky
  int leaky_shift = 0;

  // bn (import-time only)
  std::string gamma_id, beta_id, mean_id, var_id;
  double eps = 0.0;

  std::vector<int> src;

  Shape in_shape, out_shape;
};

inline constexpr int kInputSource = -1;

struct TensorInfo {
  std::string id;
  std::size_t count = 0;
};

struct NetworkGraph {
  Shape input_shape;
  std::vector<Layer> layers;
  // Weight-blob catalog: first-appearance order, the blob layout contract.
  std::vector<TensorInfo> tensor_order;

  // Scheme tensor id of a layer's output ("act<i>"), or "input".
  static std::string output_id(int layer_index);
};

using WeightMap = std::map<std::string, std::vector<float>>;

// Parses the line-oriented manifest (see README for the grammar). Shapes are
// inferred and checked; bn layers are kept (weights are needed to fold them).
NetworkGraph parse_manifest(const std::string& path);

// Little-endian fp32 blob holding the catalog tensors back to back.
WeightMap load_weights(const NetworkGraph& net, const std::string& path);

// Folds every bn layer into its producing conv/fc (which must have no fused
// activation and no other consumer), rewrites weights/biases in place, drops
// the bn layers, and remaps source indices. Graphs where that is impossible
// are rejected with ConstraintError.
void fold_batchnorm(NetworkGraph& net, WeightMap& weights);

// parse + load + fold in one step.
std::pair<NetworkGraph, WeightMap> import_network(const std::string& manifest_path,
                                                  const std::string& weights_path);

// Groups of tensor ids forced to share one scale factor: pooling, standalone
// activations, and concat reinterpret codes without a writeback, so their
// inputs and outputs must live on the same scale.
std::vector<std::vector<std::string>> shared_sf_groups(const NetworkGraph& net);

// Labeled dataset blob:
//   magic "LPFPDS1\n"; uint32 LE n, c, h, w, num_classes;
//   n*c*h*w fp32 LE sample data; n uint32 LE labels in [0, num_classes).
struct Dataset {
  Shape shape;
  int num_classes = 0;
  std::vector<std::vector<float>> samples;
  std::vector<int> labels;
};

Dataset load_dataset(const std::string& path);
void save_dataset(const std::string& path, const Dataset& ds);

// Raw fp32 tensor blob for single inputs (no header, shape from the network).
std::vector<float> load_input_blob(const std::string& path, const Shape& shape);

}  // namespace lpfp

#endif
