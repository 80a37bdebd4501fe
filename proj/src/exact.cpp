// Copyright (c) 2026 the lpfp authors
// SPDX-License-Identifier: Apache-2.0
#include "lpfp/exact.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace lpfp {

void ExactReal::normalize() {
  if (sig_ == 0) {
    neg_ = false;
    exp2_ = 0;
    return;
  }
  while ((sig_ & 1) == 0) {
    sig_ >>= 1;
    ++exp2_;
  }
}

ExactReal ExactReal::from_int(std::int64_t v) {
  ExactReal r;
  r.neg_ = v < 0;
  r.sig_ = r.neg_ ? -BigInt(v) : BigInt(v);
  r.exp2_ = 0;
  r.normalize();
  return r;
}

ExactReal ExactReal::make(bool neg, BigInt sig, int exp2) {
  if (sig < 0) throw std::invalid_argument("ExactReal::make wants sig >= 0");
  ExactReal r;
  r.neg_ = neg;
  r.sig_ = std::move(sig);
  r.exp2_ = exp2;
  r.normalize();
  return r;
}

ExactReal ExactReal::from_double(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("non-finite double");
  if (v == 0.0) return ExactReal{};
  int e = 0;
  // 2^53 scaling makes the fraction integral.
  const double frac = std::frexp(v, &e);
  const auto scaled = static_cast<std::int64_t>(std::ldexp(frac, 53));
  ExactReal r;
  r.neg_ = scaled < 0;
  r.sig_ = r.neg_ ? -BigInt(scaled) : BigInt(scaled);
  r.exp2_ = e - 53;
  r.normalize();
  return r;
}

ExactReal ExactReal::operator-() const {
  ExactReal r = *this;
  if (!r.is_zero()) r.neg_ = !r.neg_;
  return r;
}

ExactReal ExactReal::operator+(const ExactReal& o) const {
  if (is_zero()) return o;
  if (o.is_zero()) return *this;
  const int e = std::min(exp2_, o.exp2_);
  BigInt a = sig_ << (exp2_ - e);
  BigInt b = o.sig_ << (o.exp2_ - e);
  if (neg_) a = -a;
  if (o.neg_) b = -b;
  BigInt s = a + b;
  ExactReal r;
  r.neg_ = s < 0;
  r.sig_ = r.neg_ ? -s : s;
  r.exp2_ = e;
  r.normalize();
  return r;
}

ExactReal ExactReal::operator*(const ExactReal& o) const {
  ExactReal r;
  r.neg_ = neg_ != o.neg_;
  r.sig_ = sig_ * o.sig_;
  r.exp2_ = exp2_ + o.exp2_;
  r.normalize();
  return r;
}

ExactReal ExactReal::ldexp2(int k) const {
  if (is_zero()) return *this;
  ExactReal r = *this;
  r.exp2_ += k;
  return r;
}

ExactReal ExactReal::abs() const {
  ExactReal r = *this;
  r.neg_ = false;
  return r;
}

int ExactReal::compare(const ExactReal& o) const {
  if (neg_ != o.neg_) return neg_ ? -1 : 1;
  // Same sign: compare magnitudes on a common grid.
  const int e = std::min(exp2_, o.exp2_);
  const BigInt a = sig_ << (exp2_ - e);
  const BigInt b = o.sig_ << (o.exp2_ - e);
  int mag = a < b ? -1 : (a > b ? 1 : 0);
  return neg_ ? -mag : mag;
}

double ExactReal::to_double() const {
  if (is_zero()) return 0.0;
  const double m = sig_.convert_to<double>();
  const double v = std::ldexp(m, exp2_);
  return neg_ ? -v : v;
}

std::string ExactReal::to_decimal_string() const {
  if (is_zero()) return "0";
  std::string out = neg_ ? "-" : "";
  if (exp2_ >= 0) {
    BigInt whole = sig_ << exp2_;
    out += whole.str();
    return out;
  }
  // sig / 2^f == sig * 5^f / 10^f: finite decimal with f fractional digits.
  const int f = -exp2_;
  BigInt five = 1;
  for (int i = 0; i < f; ++i) five *= 5;
  std::string digits = BigInt(sig_ * five).str();
  if (static_cast<int>(digits.size()) <= f) {
    digits.insert(digits.begin(), f + 1 - digits.size(), '0');
  }
  digits.insert(digits.size() - f, ".");
  while (digits.back() == '0') digits.pop_back();
  if (digits.back() == '.') digits.pop_back();
  return out + digits;
}

}  // namespace lpfp
