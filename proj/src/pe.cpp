// Copyright (c) 2026 the lpfp authors
// SPDX-License-Identifier: Apache-2.0
#include "lpfp/pe.hpp"

#include <algorithm>
#include <bit>
#include <map>
#include <mutex>
#include <string>
#include <utility>

#include "lpfp/error.hpp"

namespace lpfp {
namespace {

void require_same_format(const LpfpCode& x, const LpfpCode& y) {
  if (x.fmt != y.fmt) {
    throw ConstraintError("product operands use different formats: " +
                          format_name(x.fmt) + " vs " + format_name(y.fmt));
  }
}

// The term added alongside the raw mantissa product; carries all hidden-bit
// cross contributions, pre-weighted so (extra << a) + Mx*My equals the full
// significand product.
std::uint32_t extra_term(const LpfpCode& x, const LpfpCode& y) {
  const int a = x.fmt.mantissa_bits;
  const std::uint32_t hx = (x.fmt.exponent_bits > 0 && x.exponent() > 0) ? 1u : 0u;
  const std::uint32_t hy = (y.fmt.exponent_bits > 0 && y.exponent() > 0) ? 1u : 0u;
  return ((hx * hy) << a) + hx * static_cast<std::uint32_t>(y.mantissa()) +
         hy * static_cast<std::uint32_t>(x.mantissa());
}

ExactProduct finish_product(const LpfpCode& x, const LpfpCode& y, std::uint32_t mant) {
  ExactProduct p;
  p.fmt = x.fmt;
  p.mant = mant;
  if (mant == 0) {
    p.sign = 0;
    p.exp_sum = 2 * p.fmt.min_exponent();
    return p;
  }
  p.sign = x.sign() ^ y.sign();
  if (p.fmt.exponent_bits > 0) {
    // Biased exponents sum first; the double bias comes off once at the end,
    // the way an exponent adder defers the correction.
    const int ex = std::max(x.exponent(), 1);
    const int ey = std::max(y.exponent(), 1);
    p.exp_sum = ex + ey - 2 * p.fmt.bias();
  } else {
    p.exp_sum = 0;
  }
  return p;
}

}  // namespace

ExactReal ExactProduct::value() const {
  return ExactReal::make(sign != 0, mant, exp_sum - 2 * fmt.mantissa_bits);
}

ExactProduct lpfp_multiply(const LpfpCode& x, const LpfpCode& y) {
  require_same_format(x, y);
  const int a = x.fmt.mantissa_bits;
  const std::uint32_t mx = static_cast<std::uint32_t>(x.mantissa());
  const std::uint32_t my = static_cast<std::uint32_t>(y.mantissa());
  const std::uint32_t mant = mx * my + (extra_term(x, y) << a);
  return finish_product(x, y, mant);
}

QuadPack pack_quad(const LpfpCode& a, const LpfpCode& b, const LpfpCode& c,
                   const LpfpCode& d) {
  require_same_format(a, b);
  require_same_format(a, c);
  require_same_format(a, d);
  const int abits = a.fmt.mantissa_bits;
  if (abits > 4) {
    throw ConstraintError("packed quad multiply supports mantissa_bits <= 4, got " +
                          format_name(a.fmt));
  }

  QuadPack q;
  q.a = a;
  q.b = b;
  q.c = c;
  q.d = d;
  q.a_word = static_cast<std::uint64_t>(b.mantissa()) |
             static_cast<std::uint64_t>(a.mantissa()) << PackLayout::a_field_ma;
  q.b_word = static_cast<std::uint64_t>(d.mantissa()) |
             static_cast<std::uint64_t>(c.mantissa()) << PackLayout::b_field_mc;
  q.c_word =
      static_cast<std::uint64_t>(extra_term(b, d)) << (PackLayout::lane_bd + abits) |
      static_cast<std::uint64_t>(extra_term(b, c)) << (PackLayout::lane_bc + abits) |
      static_cast<std::uint64_t>(extra_term(a, d)) << (PackLayout::lane_ad + abits) |
      static_cast<std::uint64_t>(extra_term(a, c)) << (PackLayout::lane_ac + abits);
  q.p_word = q.a_word * q.b_word + q.c_word;

  const std::uint64_t mask = (1u << PackLayout::lane_width) - 1;
  q.lanes[0] = static_cast<std::uint16_t>(q.p_word >> PackLayout::lane_bd & mask);
  q.lanes[1] = static_cast<std::uint16_t>(q.p_word >> PackLayout::lane_bc & mask);
  q.lanes[2] = static_cast<std::uint16_t>(q.p_word >> PackLayout::lane_ad & mask);
  q.lanes[3] = static_cast<std::uint16_t>(q.p_word >> PackLayout::lane_ac & mask);
  return q;
}

std::array<ExactProduct, 4> packed_quad_mac(const LpfpCode& a, const LpfpCode& b,
                                            const LpfpCode& c, const LpfpCode& d) {
  const QuadPack q = pack_quad(a, b, c, d);
  return {finish_product(a, c, q.lanes[3]), finish_product(a, d, q.lanes[2]),
          finish_product(b, c, q.lanes[1]), finish_product(b, d, q.lanes[0])};
}

int aligned_frac_bits(const LpfpFormat& fmt) {
  return 2 * fmt.mantissa_bits - 2 * fmt.min_exponent();
}

int aligned_width(const LpfpFormat& fmt) {
  static std::map<std::pair<int, int>, int> cache;
  static std::mutex mu;
  const auto key = std::make_pair(fmt.mantissa_bits, fmt.exponent_bits);
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }

  // Exhaustive magnitude sweep: widest product over all code pairs. Tracked as
  // msb position + grid shift so formats whose grid exceeds 64 bits still
  // report an honest width.
  const int min2 = 2 * fmt.min_exponent();
  const int mag_codes = 1 << (fmt.width() - 1);
  int max_bits = 1;  // at least one magnitude bit
  for (int i = 0; i < mag_codes; ++i) {
    for (int j = i; j < mag_codes; ++j) {
      const ExactProduct p =
          lpfp_multiply(LpfpCode{fmt, static_cast<std::uint8_t>(i)},
                        LpfpCode{fmt, static_cast<std::uint8_t>(j)});
      if (p.mant == 0) continue;
      const int bits = std::bit_width(p.mant) + (p.exp_sum - min2);
      max_bits = std::max(max_bits, bits);
    }
  }
  const int width = max_bits + 1;  // sign

  std::lock_guard<std::mutex> lock(mu);
  cache.emplace(key, width);
  return width;
}

AlignedFixed align(const ExactProduct& p) {
  AlignedFixed out;
  out.frac_bits = aligned_frac_bits(p.fmt);
  if (p.mant == 0) return out;
  const int shift = p.exp_sum - 2 * p.fmt.min_exponent();
  // shift >= 0 because exp_sum >= 2 * min_exponent for any nonzero product.
  if (shift + std::bit_width(p.mant) > 63) {
    throw FixedOverflowError("aligned product for " + format_name(p.fmt) +
                             " exceeds the fixed-point range");
  }
  const std::int64_t mag = static_cast<std::int64_t>(p.mant) << shift;
  out.value = p.sign ? -mag : mag;
  return out;
}

Accum make_accum(const LpfpFormat& fmt) {
  Accum acc;
  acc.frac_bits = aligned_frac_bits(fmt);
  return acc;
}

namespace {

void check_accum_range(const Accum& acc) {
  const std::int64_t limit = (std::int64_t{1} << (acc.width - 1)) - 1;
  if (acc.value > limit || acc.value < -limit) {
    throw FixedOverflowError("accumulator exceeded " + std::to_string(acc.width) +
                             " signed bits");
  }
}

}  // namespace

void accumulate(Accum& acc, const AlignedFixed& v) {
  if (v.frac_bits != acc.frac_bits) {
    throw ConstraintError("aligned value frac_bits " + std::to_string(v.frac_bits) +
                          " does not match accumulator grid " +
                          std::to_string(acc.frac_bits));
  }
  acc.value += v.value;
  check_accum_range(acc);
}

void accumulate_product(Accum& acc, const LpfpCode& x, const LpfpCode& y) {
  accumulate(acc, align(lpfp_multiply(x, y)));
}

std::int64_t rne_shift_right(std::int64_t v, int shift) {
  if (shift <= 0) return v;
  const std::int64_t q = v >> shift;  // arithmetic shift floors
  const std::int64_t rem = v - (q << shift);
  const std::int64_t half = std::int64_t{1} << (shift - 1);
  if (rem > half || (rem == half && (q & 1))) return q + 1;
  return q;
}

std::int64_t rne_divide(std::int64_t v, std::int64_t divisor) {
  if (divisor <= 0) throw ConstraintError("divisor must be positive");
  std::int64_t q = v / divisor;
  std::int64_t rem = v % divisor;
  if (rem < 0) {  // normalize to floor division
    rem += divisor;
    q -= 1;
  }
  if (2 * rem > divisor || (2 * rem == divisor && (q & 1))) return q + 1;
  return q;
}

void add_bias(Accum& acc, std::int16_t bias, int bias_frac_bits) {
  const int shift = acc.frac_bits - bias_frac_bits;
  if (shift >= 0) {
    acc.value += static_cast<std::int64_t>(bias) << shift;
  } else {
    acc.value += rne_shift_right(bias, -shift);
  }
  check_accum_range(acc);
}

WritebackResult writeback(const Accum& acc, const LpfpFormat& fmt, int sf_in, int sf_w,
                          int sf_out, const Activation& act,
                          const WritebackOptions& opts) {
  if (acc.frac_bits != aligned_frac_bits(fmt)) {
    throw ConstraintError("accumulator grid does not match the output format");
  }

  // Stage through the 16-bit path: keep the top of the single-product range.
  // Multi-term sums can exceed it; the staging register saturates rather than
  // wraps, mirroring a bounded physical register.
  const int stage_shift = std::max(0, aligned_width(fmt) - 15);
  const std::int64_t staged =
      std::clamp<std::int64_t>(rne_shift_right(acc.value, stage_shift), -32768, 32767);
  WritebackResult out;
  out.intermediate = static_cast<std::int16_t>(staged);

  std::int64_t working =
      opts.use_intermediate16 ? (staged << stage_shift) : acc.value;

  int slope_shift = 0;
  switch (act.kind) {
    case Activation::Kind::none:
      break;
    case Activation::Kind::relu:
      if (working < 0) working = 0;
      break;
    case Activation::Kind::leaky:
      // Power-of-two slope folds into the final rescale exponent, so the
      // negative branch still rounds exactly once (at encode).
      if (working < 0) slope_shift = act.leaky_shift;
      break;
  }

  const int delta = sf_out - sf_in - sf_w;
  const ExactReal y = ExactReal::make(
      working < 0, working < 0 ? -working : working,
      delta - acc.frac_bits - slope_shift);
  out.code = encode(fmt, y);
  return out;
}

}  // namespace lpfp
