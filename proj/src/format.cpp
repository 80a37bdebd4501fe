// Copyright (c) 2026 the lpfp authors
// SPDX-License-Identifier: Apache-2.0
#include "lpfp/format.hpp"

#include <cctype>

#include "lpfp/error.hpp"

namespace lpfp {

LpfpFormat make_format(int mantissa_bits, int exponent_bits) {
  if (mantissa_bits < 1) {
    throw ConstraintError("format needs at least one mantissa bit, got M" +
                          std::to_string(mantissa_bits));
  }
  if (exponent_bits < 0) {
    throw ConstraintError("negative exponent width E" + std::to_string(exponent_bits));
  }
  const int width = 1 + mantissa_bits + exponent_bits;
  if (width > 8) {
    throw ConstraintError("format M" + std::to_string(mantissa_bits) + "E" +
                          std::to_string(exponent_bits) + " is " + std::to_string(width) +
                          " bits wide, limit is 8");
  }
  return LpfpFormat{mantissa_bits, exponent_bits};
}

LpfpFormat parse_format(const std::string& text) {
  // Exactly "M<digits>E<digits>", no sign, no spaces.
  auto fail = [&]() -> ParseError {
    return ParseError("bad format string '" + text + "', expected e.g. M4E3");
  };
  if (text.size() < 4 || text[0] != 'M') throw fail();
  const auto epos = text.find('E', 1);
  if (epos == std::string::npos || epos == 1 || epos + 1 >= text.size()) throw fail();
  for (std::size_t i = 1; i < text.size(); ++i) {
    if (i == epos) continue;
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) throw fail();
  }
  const int a = std::stoi(text.substr(1, epos - 1));
  const int b = std::stoi(text.substr(epos + 1));
  return make_format(a, b);
}

std::string format_name(const LpfpFormat& fmt) {
  return "M" + std::to_string(fmt.mantissa_bits) + "E" + std::to_string(fmt.exponent_bits);
}

LpfpCode make_code(const LpfpFormat& fmt, int sign, int mantissa, int exponent) {
  if (sign < 0 || sign > 1 || mantissa < 0 || mantissa >= (1 << fmt.mantissa_bits) ||
      exponent < 0 || exponent >= (1 << fmt.exponent_bits) ||
      (fmt.exponent_bits == 0 && exponent != 0)) {
    throw ConstraintError("code fields out of range for " + format_name(fmt));
  }
  const std::uint8_t bits = static_cast<std::uint8_t>(
      (sign << (fmt.mantissa_bits + fmt.exponent_bits)) | (mantissa << fmt.exponent_bits) |
      exponent);
  return LpfpCode{fmt, bits};
}

}  // namespace lpfp
