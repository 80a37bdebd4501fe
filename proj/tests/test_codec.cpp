// Copyright (c) 2026 the lpfp authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "lpfp/codec.hpp"
#include "lpfp/error.hpp"

using namespace lpfp;

namespace {

// Independent decode path for cross-checking: plain double math straight from
// the field definitions, no shared code with the library implementation.
double oracle_decode(int a, int b, unsigned bits) {
  const int s = (bits >> (a + b)) & 1;
  const int m = (bits >> b) & ((1u << a) - 1);
  const int e = b > 0 ? int(bits & ((1u << b) - 1)) : 0;
  double v;
  if (b == 0) {
    v = std::ldexp(double(m), -a);
  } else {
    const int bias = (1 << (b - 1)) - 1;
    if (e == 0) {
      v = std::ldexp(double(m), 1 - bias - a);
    } else {
      v = std::ldexp(double((1 << a) + m), e - bias - a);
    }
  }
  return s ? -v : v;
}

std::vector<LpfpFormat> all_formats() {
  std::vector<LpfpFormat> out;
  for (int a = 1; a <= 7; ++a) {
    for (int b = 0; a + b <= 7; ++b) out.push_back(make_format(a, b));
  }
  return out;
}

std::vector<LpfpFormat> full_width_formats() {
  std::vector<LpfpFormat> out;
  for (int a = 1; a <= 7; ++a) out.push_back(make_format(a, 7 - a));
  return out;
}

}  // namespace

TEST_CASE("format strings parse and print") {
  const LpfpFormat f = parse_format("M4E3");
  CHECK(f.mantissa_bits == 4);
  CHECK(f.exponent_bits == 3);
  CHECK(f.width() == 8);
  CHECK(f.bias() == 3);
  CHECK(format_name(f) == "M4E3");
  CHECK(parse_format("M7E0").exponent_bits == 0);
  CHECK_THROWS_AS(parse_format("M8E1"), ConstraintError);  // 10 bits wide
  CHECK_THROWS_AS(parse_format("M0E3"), ConstraintError);
  CHECK_THROWS_AS(parse_format("4E3"), ParseError);
  CHECK_THROWS_AS(parse_format("M4"), ParseError);
  CHECK_THROWS_AS(parse_format("M4E-1"), ParseError);
  CHECK_THROWS_AS(parse_format("E4M3"), ParseError);
}

TEST_CASE("decode matches the field definitions on every code of every format") {
  for (const auto& fmt : all_formats()) {
    for (int bits = 0; bits < (1 << fmt.width()); ++bits) {
      const LpfpCode c{fmt, std::uint8_t(bits)};
      const double got = decode(c).to_double();
      const double want = oracle_decode(fmt.mantissa_bits, fmt.exponent_bits, bits);
      CHECK(got == want);
    }
  }
}

TEST_CASE("hand-checked decode values") {
  const LpfpFormat m4e3 = parse_format("M4E3");
  // S=0 M=0000 E=011: 1.0 * 2^(3-3)
  CHECK(decode(LpfpCode{m4e3, 0b0'0000'011}).to_double() == 1.0);
  // S=1 M=1000 E=100: -1.5 * 2^(4-3)
  CHECK(decode(LpfpCode{m4e3, 0b1'1000'100}).to_double() == -3.0);
  // S=0 M=0100 E=000: subnormal 0.25 * 2^(1-3)
  CHECK(decode(LpfpCode{m4e3, 0b0'0100'000}).to_double() == 0.0625);
  CHECK(decode(LpfpCode{m4e3, 0b0'0100'000}).to_decimal_string() == "0.0625");

  CHECK(max_value(m4e3).to_double() == 31.0);
  CHECK(min_value(m4e3).to_double() == -31.0);
  CHECK(max_value(parse_format("M5E2")).to_double() == 7.875);
  // Pure fraction format: 0.M, no hidden bit, max just below 1.
  CHECK(max_value(parse_format("M7E0")).to_double() == 127.0 / 128.0);
  CHECK(decode(LpfpCode{parse_format("M7E0"), 0b0'1000000}).to_double() == 0.5);
}

TEST_CASE("negative zero decodes as canonical zero and is never produced") {
  for (const auto& fmt : all_formats()) {
    const LpfpCode neg0 = make_code(fmt, 1, 0, 0);
    const LpfpCode pos0 = make_code(fmt, 0, 0, 0);
    CHECK(decode(neg0) == decode(pos0));
    CHECK(decode(neg0).is_zero());
    CHECK(encode(fmt, 0.0) == pos0);
    CHECK(encode(fmt, -0.0) == pos0);
  }
}

TEST_CASE("encode(decode(c)) round-trips every code of the full-width formats") {
  for (const auto& fmt : full_width_formats()) {
    const LpfpCode neg0 = make_code(fmt, 1, 0, 0);
    for (int bits = 0; bits < 256; ++bits) {
      const LpfpCode c{fmt, std::uint8_t(bits)};
      const LpfpCode back = encode(fmt, decode(c));
      if (c == neg0) {
        CHECK(back == make_code(fmt, 0, 0, 0));
      } else {
        CHECK(back == c);
      }
    }
  }
}

TEST_CASE("decoded magnitude is monotone in (E, M) per sign") {
  for (const auto& fmt : all_formats()) {
    for (int sign = 0; sign <= 1; ++sign) {
      ExactReal prev;
      bool first = true;
      for (int e = 0; e < (1 << fmt.exponent_bits); ++e) {
        for (int m = 0; m < (1 << fmt.mantissa_bits); ++m) {
          const ExactReal mag = decode(make_code(fmt, sign, m, e)).abs();
          if (!first) CHECK(prev <= mag);
          prev = mag;
          first = false;
        }
      }
    }
  }
  // Subnormal max sits strictly below normal min when an exponent field exists.
  for (const auto& fmt : all_formats()) {
    if (fmt.exponent_bits == 0) continue;
    const ExactReal sub_max = decode(make_code(fmt, 0, (1 << fmt.mantissa_bits) - 1, 0));
    const ExactReal norm_min = decode(make_code(fmt, 0, 0, 1));
    CHECK(sub_max < norm_min);
  }
}

TEST_CASE("encode picks the nearest representable value") {
  std::mt19937 rng(20260822);
  for (const auto& fmt : all_formats()) {
    const auto table = decode_table(fmt);
    const double top = max_value(fmt).to_double();
    std::uniform_real_distribution<double> dist(-2.0 * top, 2.0 * top);
    for (int i = 0; i < 2000; ++i) {
      const double x = dist(rng);
      const double clamped = std::min(std::max(x, -top), top);
      const double got = decode(encode(fmt, x)).to_double();
      double best = std::abs(table[0].to_double() - clamped);
      for (const auto& v : table) {
        best = std::min(best, std::abs(v.to_double() - clamped));
      }
      CHECK(std::abs(got - clamped) <= best);
    }
  }
}

TEST_CASE("saturation at both rails") {
  for (const auto& fmt : all_formats()) {
    const ExactReal top = max_value(fmt);
    const LpfpCode hi = encode(fmt, top * ExactReal::from_int(3));
    const LpfpCode lo = encode(fmt, -(top * ExactReal::from_int(3)));
    CHECK(decode(hi) == top);
    CHECK(decode(lo) == -top);
    CHECK(encode(fmt, top) == hi);          // x >= MAX -> MAX
    CHECK(encode(fmt, -top) == lo);         // x <= MIN -> MIN
  }
}

TEST_CASE("hand-checked encode values, round-half-even ties") {
  const LpfpFormat m4e3 = parse_format("M4E3");
  CHECK(decode(encode(m4e3, 3.1)).to_double() == 3.125);
  // 0.005 * 2^6 = 0.32; neighbors 0.3125 and 0.34375.
  CHECK(decode(encode(m4e3, 0.32)).to_double() == 0.3125);
  // Midway between 1.0 (k=16) and 1.0625 (k=17): even k wins.
  CHECK(decode(encode(m4e3, 1.03125)).to_double() == 1.0);
  // Midway between 1.0625 (k=17) and 1.125 (k=18): even k wins.
  CHECK(decode(encode(m4e3, 1.09375)).to_double() == 1.125);
  // Binade boundary midpoint 1.96875 rounds up to 2.0 (rollover to even).
  CHECK(decode(encode(m4e3, 1.96875)).to_double() == 2.0);
  // Half of the smallest subnormal rounds down to zero.
  const double tiny = decode(make_code(m4e3, 0, 1, 0)).to_double();
  CHECK(decode(encode(m4e3, tiny / 2)).to_double() == 0.0);
  CHECK(decode(encode(m4e3, tiny * 0.75)).to_double() == tiny);
}

TEST_CASE("code blob bytes round-trip and reject stray bits") {
  const LpfpFormat m5e2 = parse_format("M5E2");
  std::vector<LpfpCode> codes;
  for (int bits = 0; bits < 256; ++bits) codes.push_back(LpfpCode{m5e2, std::uint8_t(bits)});
  const auto bytes = codes_to_bytes(codes);
  const auto back = bytes_to_codes(m5e2, bytes);
  REQUIRE(back.size() == codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) CHECK(back[i] == codes[i]);

  const LpfpFormat m4e2 = parse_format("M4E2");  // 7-bit: byte 0x80 is invalid
  CHECK_THROWS_AS(bytes_to_codes(m4e2, {0x80}), ParseError);
  CHECK_NOTHROW(bytes_to_codes(m4e2, {0x7f}));
}

TEST_CASE("exact decimal strings") {
  CHECK(ExactReal::from_int(-3).to_decimal_string() == "-3");
  CHECK(ExactReal::from_int(31).to_decimal_string() == "31");
  CHECK(ExactReal::from_double(0.0625).to_decimal_string() == "0.0625");
  CHECK(ExactReal::from_double(-2.5).to_decimal_string() == "-2.5");
  CHECK(ExactReal::from_double(0.0).to_decimal_string() == "0");
  CHECK(ExactReal::make(false, 1, -12).to_decimal_string() == "0.000244140625");
}
