// Copyright (c) 2026 the lpfp authors
// SPDX-License-Identifier: Apache-2.0
#ifndef LPFP_CODEC_HPP
#define LPFP_CODEC_HPP

#include <cstdint>
#include <vector>

#include "lpfp/exact.hpp"
#include "lpfp/format.hpp"

namespace lpfp {

// Decoded value of one code, exactly:
//   E > 0 :  (-1)^S * (1 + M/2^a) * 2^(E - bias)
//   E == 0:  (-1)^S * (M/2^a) * 2^(1 - bias)      (subnormal, no hidden bit)
//   b == 0:  (-1)^S * M/2^a                       (plain signed fraction)
// -0 decodes to the same canonical zero as +0.
ExactReal decode(const LpfpCode& code);

// Largest finite magnitude of the format; min_value is its negation.
ExactReal max_value(const LpfpFormat& fmt);
ExactReal min_value(const LpfpFormat& fmt);

// Nearest representable value with round-half-to-even on the decoded grid,
// saturating: x >= max -> max code, x <= min -> min code. Never yields -0.
LpfpCode encode(const LpfpFormat& fmt, const ExactReal& x);
LpfpCode encode(const LpfpFormat& fmt, double x);

// All 2^width decoded values indexed by raw code bits.
std::vector<ExactReal> decode_table(const LpfpFormat& fmt);

// Code blob wire format: one code per byte, right-aligned.
std::vector<std::uint8_t> codes_to_bytes(const std::vector<LpfpCode>& codes);
// Throws ParseError when a byte has bits set above the format width.
std::vector<LpfpCode> bytes_to_codes(const LpfpFormat& fmt,
                                     const std::vector<std::uint8_t>& bytes);

}  // namespace lpfp

#endif
