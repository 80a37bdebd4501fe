// Copyright (c) 2026 the lpfp authors
// SPDX-License-Identifier: Apache-2.0
#ifndef LPFP_FORMAT_HPP
#define LPFP_FORMAT_HPP

#include <compare>
#include <cstdint>
#include <string>

namespace lpfp {

// Minifloat format descriptor "MaEb": 1 sign bit, a mantissa bits, b exponent
// bits, 1 + a + b <= 8. The encoded bit layout is S | M | E from MSB to LSB:
// sign on top, mantissa in the middle, exponent in the low bits. That order is
// part of the wire format here (code blobs, packed-MAC field extraction), so
// it is fixed and asserted by tests; it is not the IEEE-754 field order.
struct LpfpFormat {
  int mantissa_bits = 0;  // a, >= 1
  int exponent_bits = 0;  // b, >= 0

  int width() const { return 1 + mantissa_bits + exponent_bits; }

  // Exponent bias 2^(b-1) - 1; 0 when there is no exponent field.
  int bias() const { return exponent_bits > 0 ? (1 << (exponent_bits - 1)) - 1 : 0; }

  // Smallest effective unbiased exponent of any nonzero value.
  // With an exponent field both subnormals (E = 0) and E = 1 normals sit at
  // 1 - bias. A pure-mantissa format decodes as a plain fraction at scale 2^0.
  int min_exponent() const { return exponent_bits > 0 ? 1 - bias() : 0; }

  // Largest effective unbiased exponent: Emax - bias, or 0 without an
  // exponent field.
  int max_exponent() const {
    return exponent_bits > 0 ? ((1 << exponent_bits) - 1) - bias() : 0;
  }

  bool operator==(const LpfpFormat&) const = default;
  auto operator<=>(const LpfpFormat&) const = default;
};

// Throws ConstraintError when a or b is out of range or the width exceeds 8.
LpfpFormat make_format(int mantissa_bits, int exponent_bits);

// "M4E3" <-> format. parse throws ParseError on malformed strings and
// ConstraintError on out-of-range widths.
LpfpFormat parse_format(const std::string& text);
std::string format_name(const LpfpFormat& fmt);

// One encoded value. Bits are right-aligned in the byte; bits above width()
// are zero. Field split per the S | M | E layout above.
struct LpfpCode {
  LpfpFormat fmt;
  std::uint8_t bits = 0;

  int sign() const { return (bits >> (fmt.mantissa_bits + fmt.exponent_bits)) & 1; }
  int mantissa() const { return (bits >> fmt.exponent_bits) & ((1 << fmt.mantissa_bits) - 1); }
  int exponent() const {
    return fmt.exponent_bits > 0 ? bits & ((1 << fmt.exponent_bits) - 1) : 0;
  }

  bool operator==(const LpfpCode&) const = default;
};

LpfpCode make_code(const LpfpFormat& fmt, int sign, int mantissa, int exponent);

// Integer significand on the 2^-a grid: hidden bit 1 for normal values
// (E > 0), 0 for subnormals and pure-mantissa formats.
inline int significand_int(const LpfpCode& c) {
  const int hidden = (c.fmt.exponent_bits > 0 && c.exponent() > 0) ? 1 : 0;
  return (hidden << c.fmt.mantissa_bits) + c.mantissa();
}

// Effective unbiased exponent of the decoded value.
inline int effective_exponent(const LpfpCode& c) {
  if (c.fmt.exponent_bits == 0) return 0;
  return (c.exponent() > 0 ? c.exponent() : 1) - c.fmt.bias();
}

}  // namespace lpfp

#endif
