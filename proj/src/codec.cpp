// Copyright (c) 2026 the lpfp authors
// SPDX-License-Identifier: Apache-2.0
#include "lpfp/codec.hpp"

#include "lpfp/error.hpp"

namespace lpfp {

namespace {

using BigInt = ExactReal::BigInt;

// Round a nonnegative dyadic sig * 2^exp2 to the nearest integer, half to even.
BigInt round_half_even(const BigInt& sig, int exp2) {
  if (exp2 >= 0) return sig << exp2;
  const int f = -exp2;
  BigInt whole = sig >> f;
  const BigInt frac = sig - (whole << f);
  const BigInt half = BigInt(1) << (f - 1);
  if (frac > half || (frac == half && (whole & 1) != 0)) ++whole;
  return whole;
}

}  // namespace

ExactReal decode(const LpfpCode& code) {
  const int k = significand_int(code);
  if (k == 0) return ExactReal{};
  const int scale = effective_exponent(code) - code.fmt.mantissa_bits;
  return ExactReal::make(code.sign() != 0, BigInt(k), scale);
}

ExactReal max_value(const LpfpFormat& fmt) {
  const int a = fmt.mantissa_bits;
  if (fmt.exponent_bits == 0) {
    return ExactReal::make(false, BigInt((1 << a) - 1), -a);
  }
  return ExactReal::make(false, BigInt((1 << (a + 1)) - 1), fmt.max_exponent() - a);
}

ExactReal min_value(const LpfpFormat& fmt) { return -max_value(fmt); }

LpfpCode encode(const LpfpFormat& fmt, const ExactReal& x) {
  const int a = fmt.mantissa_bits;
  if (x.is_zero()) return make_code(fmt, 0, 0, 0);

  const int sign = x.negative() ? 1 : 0;
  const ExactReal mag = x.abs();
  const ExactReal top = max_value(fmt);
  if (mag >= top) {
    // Saturation, both directions.
    if (fmt.exponent_bits == 0) return make_code(fmt, sign, (1 << a) - 1, 0);
    return make_code(fmt, sign, (1 << a) - 1, (1 << fmt.exponent_bits) - 1);
  }

  if (fmt.exponent_bits == 0) {
    // One uniform grid at 2^-a.
    const ExactReal scaled = mag.ldexp2(a);
    const BigInt k = round_half_even(scaled.significand(), scaled.exponent2());
    if (k == 0) return make_code(fmt, 0, 0, 0);
    return make_code(fmt, sign, k.convert_to<int>(), 0);
  }

  // Pick the value's binade, clamped to the format's exponent range, then
  // round once on that binade's 2^(e-a) grid.
  const int floor_log2 =
      static_cast<int>(boost::multiprecision::msb(mag.significand())) + mag.exponent2();
  int e = floor_log2;
  if (e < fmt.min_exponent()) e = fmt.min_exponent();

  const ExactReal scaled = mag.ldexp2(a - e);
  BigInt k = round_half_even(scaled.significand(), scaled.exponent2());
  if (k == (BigInt(1) << (a + 1))) {
    // Mantissa rollover: exact power of two one binade up.
    ++e;
    k = BigInt(1) << a;
  }
  if (k == 0) return make_code(fmt, 0, 0, 0);

  const int ki = k.convert_to<int>();
  if (e == fmt.min_exponent() && ki < (1 << a)) {
    return make_code(fmt, sign, ki, 0);  // subnormal
  }
  return make_code(fmt, sign, ki - (1 << a), e + fmt.bias());
}

LpfpCode encode(const LpfpFormat& fmt, double x) {
  return encode(fmt, ExactReal::from_double(x));
}

std::vector<ExactReal> decode_table(const LpfpFormat& fmt) {
  std::vector<ExactReal> table;
  const int n = 1 << fmt.width();
  table.reserve(n);
  for (int bits = 0; bits < n; ++bits) {
    table.push_back(decode(LpfpCode{fmt, static_cast<std::uint8_t>(bits)}));
  }
  return table;
}

std::vector<std::uint8_t> codes_to_bytes(const std::vector<LpfpCode>& codes) {
  std::vector<std::uint8_t> out;
  out.reserve(codes.size());
  for (const auto& c : codes) out.push_back(c.bits);
  return out;
}

std::vector<LpfpCode> bytes_to_codes(const LpfpFormat& fmt,
                                     const std::vector<std::uint8_t>& bytes) {
  std::vector<LpfpCode> out;
  out.reserve(bytes.size());
  const int limit = 1 << fmt.width();
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (bytes[i] >= limit) {
      throw ParseError("code byte " + std::to_string(i) + " (value " +
                       std::to_string(int(bytes[i])) + ") exceeds " + format_name(fmt) +
                       " width");
    }
    out.push_back(LpfpCode{fmt, bytes[i]});
  }
  return out;
}

}  // namespace lpfp
