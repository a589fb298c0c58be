// Copyright 2026 The diagdiff Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace diagdiff {

/// Exact rational number. Term coefficients stay exact so that merging
/// equal terms (1 + 1 = 2 and the like) never drifts.
class Rational {
public:
  Rational() = default;
  Rational(std::int64_t n) : num_(n), den_(1) {}
  Rational(std::int64_t n, std::int64_t d) : num_(n), den_(d) { reduce(); }

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }

  bool is_zero() const { return num_ == 0; }
  bool negative() const { return num_ < 0; }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  Rational operator-() const { return Rational(-num_, den_); }
  Rational operator+(const Rational& o) const {
    return Rational(num_ * o.den_ + o.num_ * den_, den_ * o.den_);
  }
  Rational operator-(const Rational& o) const { return *this + (-o); }
  Rational operator*(const Rational& o) const { return Rational(num_ * o.num_, den_ * o.den_); }
  Rational operator/(const Rational& o) const {
    if (o.num_ == 0) throw std::domain_error("rational division by zero");
    return Rational(num_ * o.den_, den_ * o.num_);
  }
  Rational& operator+=(const Rational& o) { return *this = *this + o; }
  Rational& operator*=(const Rational& o) { return *this = *this * o; }

  Rational reciprocal() const {
    if (num_ == 0) throw std::domain_error("reciprocal of zero");
    return Rational(den_, num_);
  }

  Rational abs() const { return num_ < 0 ? -*this : *this; }

  /// Integer power; negative exponents go through the reciprocal.
  Rational pow(int k) const {
    if (k < 0) return reciprocal().pow(-k);
    Rational r(1), b = *this;
    while (k > 0) {
      if (k & 1) r = r * b;
      b = b * b;
      k >>= 1;
    }
    return r;
  }

  /// Exact square root when the value is a perfect square of a rational.
  bool sqrt_exact(Rational& out) const {
    if (num_ < 0) return false;
    auto isqrt = [](std::int64_t v, std::int64_t& r) {
      r = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(v))));
      for (std::int64_t c = r - 2; c <= r + 2; ++c)
        if (c >= 0 && c * c == v) { r = c; return true; }
      return false;
    };
    std::int64_t rn = 0, rd = 0;
    if (!isqrt(num_, rn) || !isqrt(den_, rd)) return false;
    out = Rational(rn, rd);
    return true;
  }

  bool operator==(const Rational& o) const { return num_ == o.num_ && den_ == o.den_; }
  bool operator!=(const Rational& o) const { return !(*this == o); }
  bool operator<(const Rational& o) const { return num_ * o.den_ < o.num_ * den_; }

  /// "3", "-3" or "3/2".
  std::string str() const {
    std::string s = std::to_string(num_);
    if (den_ != 1) s += "/" + std::to_string(den_);
    return s;
  }

private:
  void reduce() {
    if (den_ == 0) throw std::domain_error("rational with zero denominator");
    if (den_ < 0) { num_ = -num_; den_ = -den_; }
    std::int64_t g = std::gcd(num_ < 0 ? -num_ : num_, den_);
    if (g > 1) { num_ /= g; den_ /= g; }
    if (num_ == 0) den_ = 1;
  }

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

}  // namespace diagdiff
