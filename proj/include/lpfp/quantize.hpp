// Copyright (c) 2026 the lpfp authors
// SPDX-License-Identifier: Apache-2.0
#ifndef LPFP_QUANTIZE_HPP
#define LPFP_QUANTIZE_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lpfp/codec.hpp"
#include "lpfp/format.hpp"

namespace lpfp {

// One format per network, one integer scale factor per tensor, one bias
// fraction width per layer. A tensor holding values v is stored as
// encode(v * 2^sf); dequantization is decode(code) * 2^-sf.
struct QuantScheme {
  LpfpFormat format;
  std::map<std::string, int> scale_factors;
  std::map<int, int> bias_frac_bits;

  bool operator==(const QuantScheme&) const = default;
};

// Inclusive scale-factor search window.
struct SfWindow {
  int lo = -16;
  int hi = 16;
};

struct ScaleSearchResult {
  int sf = 0;
  double mse = 0.0;
};

struct TensorMseRow {
  std::string id;
  int sf = 0;
  double mse = 0.0;
  double normalized_mse = 0.0;  // mse / population variance (1.0 when var is 0)
};

struct FormatSummaryRow {
  LpfpFormat format;
  double mean_normalized_mse = 0.0;
  bool chosen = false;
};

struct QuantReport {
  std::vector<FormatSummaryRow> formats;  // one row per candidate, input order
  std::vector<TensorMseRow> tensors;      // rows for the chosen format
};

// A named full-precision tensor to be quantized (weights, or activations
// captured from a reference forward pass).
struct NamedTensor {
  std::string id;
  std::vector<double> values;
};

// Element-wise encode(v * 2^sf). Values must be finite.
std::vector<LpfpCode> quantize_tensor(const std::vector<double>& values,
                                      const LpfpFormat& fmt, int sf);

// Mean squared error between values and their dequantized images at sf.
// Fixed evaluation order, part of the contract so that independent
// re-implementations can match bit for bit: squared differences are summed
// in index order in double precision and divided by n at the end.
double quantization_mse(const std::vector<double>& values, const LpfpFormat& fmt,
                        int sf);

// The sf in the window minimizing quantization_mse; ties take the smallest
// sf. Empty input raises DegenerateInputError, an empty window
// ConstraintError.
ScaleSearchResult search_scale(const std::vector<double>& values,
                               const LpfpFormat& fmt, const SfWindow& window);

// Tensors listed in one group share a single sf (their values are pooled for
// the search); ids must reference entries of `tensors`. Tensors in no group
// get private scale factors. Every id appears in at most one group.
//
// Per candidate format each tensor (or group) gets its optimal sf; the
// format minimizing the mean variance-normalized MSE wins, earlier
// candidates winning ties. The full per-format table is reported so callers
// can apply a different rule.
std::pair<QuantScheme, QuantReport> search_format(
    const std::vector<NamedTensor>& tensors,
    const std::vector<std::vector<std::string>>& shared_sf_groups,
    const std::vector<LpfpFormat>& candidates, const SfWindow& window);

// Round-to-nearest-even 16-bit two's-complement at scale 2^-frac_bits.
// Any element rounding outside int16 range raises FixedOverflowError.
std::vector<std::int16_t> quantize_bias(const std::vector<double>& values,
                                        int frac_bits);

// Largest frac_bits in [-16, 15] for which quantize_bias succeeds; an
// all-zero (or empty) bias takes the top of the range. Values too large even
// at -16 raise ConstraintError.
int choose_bias_frac(const std::vector<double>& values);

// Line-oriented scheme file:
//   format M4E3
//   tensor <id> sf <int>
//   bias <layer-index> frac <int>
// Tensor ids must be whitespace-free. Sorted, so output is deterministic.
void write_scheme(const std::string& path, const QuantScheme& scheme);
QuantScheme read_scheme(const std::string& path);

}  // namespace lpfp

#endif
