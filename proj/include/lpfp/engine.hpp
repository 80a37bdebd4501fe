// Copyright (c) 2026 the lpfp authors
// SPDX-License-Identifier: Apache-2.0
#ifndef LPFP_ENGINE_HPP
#define LPFP_ENGINE_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lpfp/network.hpp"
#include "lpfp/quantize.hpp"

namespace lpfp {

// Full-precision activations, C-H-W order: index = (c * h + y) * w + x.
struct FpTensor {
  Shape shape;
  std::vector<float> values;
};

// Coded activations at one scale factor, same index order.
struct CodedTensor {
  Shape shape;
  int sf = 0;
  std::vector<LpfpCode> codes;
};

struct EngineOptions {
  bool use_intermediate16 = true;  // 16-bit staging between accumulate and encode
  int threads = 1;                 // deterministic: outputs are partitioned, never raced
};

// Quantized parameters of one conv/fc layer.
struct QuantizedLayerParams {
  std::vector<LpfpCode> weights;  // OC-IC-KH-KW order
  std::vector<std::int16_t> bias;
  int bias_frac = 0;
  int sf_w = 0;
};

struct QuantizedModel {
  LpfpFormat fmt;
  std::map<int, QuantizedLayerParams> params;  // keyed by layer index
};

// Encodes weights and biases per the scheme. The scheme must carry an sf for
// every weight tensor and activation and a bias frac for every conv/fc layer.
QuantizedModel quantize_model(const NetworkGraph& net, const WeightMap& weights,
                              const QuantScheme& scheme);

// Encodes a raw input at the scheme's input scale factor.
CodedTensor quantize_input(const NetworkGraph& net, const QuantScheme& scheme,
                           const std::vector<float>& values);

// Pre-writeback accumulator of one conv/fc output element: the inspectable
// seam between the exact datapath and the lossy writeback. Runs the fixed
// reduction order (kernel position major, input channel minor).
Accum conv_accumulate(const Layer& layer, const CodedTensor& input,
                      const std::vector<LpfpCode>& weights, int oc, int oy, int ox);

// Runs every layer; returns one coded tensor per layer (same indexing as
// net.layers). Deterministic for any thread count.
std::vector<CodedTensor> quantized_forward(const NetworkGraph& net,
                                           const QuantizedModel& model,
                                           const QuantScheme& scheme,
                                           const std::vector<float>& input,
                                           const EngineOptions& opts = {});

// Full-precision pass (float storage, double accumulation, same reduction
// order); baseline for calibration and accuracy.
std::vector<FpTensor> reference_forward(const NetworkGraph& net, const WeightMap& weights,
                                        const std::vector<float>& input);

// Runs the reference pass over a calibration batch and gathers quantizer
// inputs: every weight tensor plus the pooled input/activation values.
std::vector<NamedTensor> calibration_tensors(const NetworkGraph& net,
                                             const WeightMap& weights,
                                             const std::vector<std::vector<float>>& batch);

// One-call scheme construction: calibrate, search formats with the graph's
// shared-sf groups, then pick per-layer bias fractions.
std::pair<QuantScheme, QuantReport> build_scheme(const NetworkGraph& net,
                                                 const WeightMap& weights,
                                                 const std::vector<std::vector<float>>& calib,
                                                 const std::vector<LpfpFormat>& candidates,
                                                 const SfWindow& window = {});

struct AccuracyReport {
  int n = 0;
  std::vector<int> topk;            // the requested k values
  std::vector<double> quant_topk;   // accuracy per k, quantized path
  std::vector<double> ref_topk;     // accuracy per k, full-precision path
  std::vector<int> class_count;     // samples per class
  std::vector<double> per_class_quant;  // top-1 accuracy per class
  std::vector<double> per_class_ref;
  double gap_top1 = 0.0;  // quantized minus reference, top-1
};

// Runs both paths over the dataset. topk defaults to {1}.
AccuracyReport evaluate(const NetworkGraph& net, const WeightMap& weights,
                        const QuantScheme& scheme, const Dataset& ds,
                        const std::vector<int>& topk = {1},
                        const EngineOptions& opts = {});

}  // namespace lpfp

#endif
