#pragma once

#include <cmath>

namespace pcs {

/// Hyper-dual number a + b·ε₁ + c·ε₂ + d·ε₁ε₂ with ε₁² = ε₂² = 0. Seeding
/// ε₁ on θᵢ and ε₂ on θⱼ yields f, ∂f/∂θᵢ, ∂f/∂θⱼ and ∂²f/∂θᵢ∂θⱼ exactly.
struct HyperDual {
  double v = 0.0;
  double e1 = 0.0;
  double e2 = 0.0;
  double e12 = 0.0;

  constexpr HyperDual() = default;
  constexpr HyperDual(double value) : v(value) {}  // NOLINT(google-explicit-constructor)
  constexpr HyperDual(double value, double d1, double d2, double d12) : v(value), e1(d1), e2(d2), e12(d12) {}

  HyperDual& operator+=(const HyperDual& o) {
    v += o.v; e1 += o.e1; e2 += o.e2; e12 += o.e12;
    return *this;
  }
  HyperDual& operator-=(const HyperDual& o) {
    v -= o.v; e1 -= o.e1; e2 -= o.e2; e12 -= o.e12;
    return *this;
  }
  HyperDual& operator*=(const HyperDual& o) { return *this = *this * o; }
  HyperDual& operator/=(const HyperDual& o) { return *this = *this / o; }

  friend HyperDual operator+(HyperDual a, const HyperDual& b) { return a += b; }
  friend HyperDual operator-(HyperDual a, const HyperDual& b) { return a -= b; }
  friend HyperDual operator-(const HyperDual& a) { return {-a.v, -a.e1, -a.e2, -a.e12}; }
  friend HyperDual operator*(const HyperDual& a, const HyperDual& b) {
    return {a.v * b.v, a.v * b.e1 + a.e1 * b.v, a.v * b.e2 + a.e2 * b.v,
            a.v * b.e12 + a.e1 * b.e2 + a.e2 * b.e1 + a.e12 * b.v};
  }
  friend HyperDual operator/(const HyperDual& a, const HyperDual& b) { return a * inverse(b); }

  friend HyperDual inverse(const HyperDual& b) {
    const double inv = 1.0 / b.v;
    const double inv2 = inv * inv;
    return {inv, -b.e1 * inv2, -b.e2 * inv2, 2.0 * b.e1 * b.e2 * inv2 * inv - b.e12 * inv2};
  }
};

}  // namespace pcs
