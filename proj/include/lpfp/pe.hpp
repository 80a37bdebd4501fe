// Copyright (c) 2026 the lpfp authors
// SPDX-License-Identifier: Apache-2.0
#ifndef LPFP_PE_HPP
#define LPFP_PE_HPP

#include <array>
#include <cstdint>

#include "lpfp/codec.hpp"
#include "lpfp/format.hpp"

namespace lpfp {

// Exact product of two codes of the same format:
//   value = (-1)^sign * mant * 2^(exp_sum - 2a)
// mant is the full significand product (< 2^(2a+2)); exp_sum is the sum of
// the two effective unbiased exponents. Zero products are canonical:
// sign 0, exp_sum = 2 * min_exponent.
struct ExactProduct {
  LpfpFormat fmt;
  int sign = 0;
  std::uint32_t mant = 0;
  int exp_sum = 0;

  ExactReal value() const;
  bool operator==(const ExactProduct&) const = default;
};

// Multiplier-free significand route: with hidden bits hx, hy the significand
// product decomposes as
//   (hx.Mx) * (hy.My) = 0.Mx * 0.My + (hx*hy + hy*0.Mx + hx*0.My)
// so the wide MAC multiplies only the a-bit mantissa fields and adds the
// second term pre-shifted by a. Exponents are summed in biased form and the
// double bias is taken out once here rather than per operand, matching an
// exponent adder that defers bias correction to the end.
ExactProduct lpfp_multiply(const LpfpCode& x, const LpfpCode& y);

// Field placement for the four-lane packed multiply emulation, frozen:
// P = A * B + C evaluated on plain unsigned words.
//   A (25 bits): Mb at bit 0, Ma at bit 20
//   B (18 bits): Md at bit 0, Mc at bit 10
//   C (48 bits): additive term for lane xy at bit (lane_base(xy) + a)
//   P lanes, 10 bits each: bd at 0, bc at 10, ad at 20, ac at 30
// Lane values peak at 961 (a = 4), so 10-bit lanes never carry across.
struct PackLayout {
  static constexpr int lane_width = 10;
  static constexpr int lane_bd = 0;
  static constexpr int lane_bc = 10;
  static constexpr int lane_ad = 20;
  static constexpr int lane_ac = 30;
  static constexpr int a_field_ma = 20;
  static constexpr int b_field_mc = 10;
  static constexpr int a_word_bits = 25;
  static constexpr int b_word_bits = 18;
  static constexpr int c_word_bits = 48;
};

// The emulated wide words and the four extracted lanes (bd, bc, ad, ac order
// by lane base). Operands a, b share weights c, d.
struct QuadPack {
  LpfpCode a, b, c, d;
  std::uint64_t a_word = 0;
  std::uint64_t b_word = 0;
  std::uint64_t c_word = 0;
  std::uint64_t p_word = 0;
  std::array<std::uint16_t, 4> lanes{};  // [bd, bc, ad, ac]
};

// Requires one shared format with mantissa_bits <= 4 (ConstraintError
// otherwise; exponent width is free since exponents stay outside the MAC).
QuadPack pack_quad(const LpfpCode& a, const LpfpCode& b, const LpfpCode& c,
                   const LpfpCode& d);

// Products (a*c, a*d, b*c, b*d) recovered from one wide MAC.
std::array<ExactProduct, 4> packed_quad_mac(const LpfpCode& a, const LpfpCode& b,
                                            const LpfpCode& c, const LpfpCode& d);

// Fixed-point grid that makes every product of the format integral:
// frac_bits = 2a - 2 * min_exponent.
int aligned_frac_bits(const LpfpFormat& fmt);

// Signed bit width needed for any single aligned product, found by exhaustive
// magnitude sweep over all code pairs (cached per format).
int aligned_width(const LpfpFormat& fmt);

// A product shifted onto the common grid. The shift is always left, so this
// step is lossless by construction.
struct AlignedFixed {
  std::int64_t value = 0;
  int frac_bits = 0;
};

AlignedFixed align(const ExactProduct& p);

// Running fixed-point sum. Overflow beyond the declared width raises
// FixedOverflowError; nothing ever wraps.
struct Accum {
  std::int64_t value = 0;
  int frac_bits = 0;
  int width = 48;
};

Accum make_accum(const LpfpFormat& fmt);
void accumulate(Accum& acc, const AlignedFixed& v);
void accumulate_product(Accum& acc, const LpfpCode& x, const LpfpCode& y);

// Bias arrives as 16-bit fixed with its own frac_bits; shifting up to the
// accumulator grid is exact, shifting down rounds to nearest even.
void add_bias(Accum& acc, std::int16_t bias, int bias_frac_bits);

// Round-to-nearest-even helpers shared by the fixed-point paths.
std::int64_t rne_shift_right(std::int64_t v, int shift);
std::int64_t rne_divide(std::int64_t v, std::int64_t divisor);

struct Activation {
  enum class Kind { none, relu, leaky } kind = Kind::none;
  int leaky_shift = 0;  // slope 2^-leaky_shift, power-of-two slopes only
};

struct WritebackOptions {
  // Models the 16-bit staging of sums leaving the accumulator: round at
  // accumulator scale >> (aligned_width - 15), saturating to int16. When off
  // the full accumulator value feeds the final encode.
  bool use_intermediate16 = true;
};

struct WritebackResult {
  LpfpCode code;
  std::int16_t intermediate = 0;
};

// End of the dataflow for one output element: stage to 16 bits (see options),
// apply activation in fixed point, rescale by 2^(sf_out - sf_in - sf_w)
// exactly, and encode. The encode is the only lossy step when staging is off.
WritebackResult writeback(const Accum& acc, const LpfpFormat& fmt, int sf_in, int sf_w,
                          int sf_out, const Activation& act,
                          const WritebackOptions& opts = {});

}  // namespace lpfp

#endif
