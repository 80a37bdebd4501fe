// Copyright (c) 2026 the lpfp authors
// SPDX-License-Identifier: Apache-2.0
#ifndef LPFP_EXACT_HPP
#define LPFP_EXACT_HPP

#include <cstdint>
#include <string>

#include <boost/multiprecision/cpp_int.hpp>

namespace lpfp {

// Exact dyadic rational: value = (-1)^neg * sig * 2^exp2 with sig >= 0.
// Every quantity in the datapath (decoded codes, products, aligned fixed-point
// sums) is dyadic, so this closes under +, -, * with no rounding anywhere.
// Normal form: sig odd, or the canonical zero (sig == 0, exp2 == 0, neg
// false); +0 and -0 are the same value.
class ExactReal {
 public:
  using BigInt = boost::multiprecision::cpp_int;

  ExactReal() = default;
  static ExactReal from_int(std::int64_t v);
  // sig * 2^exp2 with explicit sign; normalizes.
  static ExactReal make(bool neg, BigInt sig, int exp2);
  // Exact: every finite double is dyadic.
  static ExactReal from_double(double v);

  bool is_zero() const { return sig_ == 0; }
  bool negative() const { return neg_; }
  const BigInt& significand() const { return sig_; }
  int exponent2() const { return exp2_; }

  ExactReal operator-() const;
  ExactReal operator+(const ExactReal& o) const;
  ExactReal operator-(const ExactReal& o) const { return *this + (-o); }
  ExactReal operator*(const ExactReal& o) const;
  ExactReal& operator+=(const ExactReal& o) { return *this = *this + o; }

  // Exact scaling by 2^k.
  ExactReal ldexp2(int k) const;
  ExactReal abs() const;

  // <0, 0, >0 ordering of *this - o.
  int compare(const ExactReal& o) const;
  bool operator==(const ExactReal& o) const { return compare(o) == 0; }
  bool operator<(const ExactReal& o) const { return compare(o) < 0; }
  bool operator<=(const ExactReal& o) const { return compare(o) <= 0; }
  bool operator>(const ExactReal& o) const { return compare(o) > 0; }
  bool operator>=(const ExactReal& o) const { return compare(o) >= 0; }

  // Exact while |value| stays within double range; values here always do.
  double to_double() const;

  // Exact finite decimal expansion, e.g. "-3", "0.0625". No exponent form.
  std::string to_decimal_string() const;

 private:
  bool neg_ = false;
  BigInt sig_ = 0;
  int exp2_ = 0;

  void normalize();
};

}  // namespace lpfp

#endif
