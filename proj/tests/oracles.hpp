#pragma once

// Test-side reference computations. Deliberately naive and independent of
// the library's own differentiation code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>

#include "pcs/linalg.hpp"
#include "pcs/network.hpp"
#include "pcs/rng.hpp"

namespace pcs::testing {

using ScalarFn = std::function<double(const Vector&)>;

/// Central differences, h_i = scale·(1 + |x_i|).
inline Vector fd_gradient(const ScalarFn& f, const Vector& x, double scale = 1e-5) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = scale * (1.0 + std::abs(x(i)));
    Vector p = x;
    Vector m = x;
    p(i) += h;
    m(i) -= h;
    g(i) = (f(p) - f(m)) / (2.0 * h);
  }
  return g;
}

/// Central differences of a vector-valued gradient, symmetrized.
inline Matrix fd_jacobian_sym(const std::function<Vector(const Vector&)>& g, const Vector& x, double scale = 1e-5) {
  const Eigen::Index p = x.size();
  Matrix h(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double s = scale * (1.0 + std::abs(x(j)));
    Vector a = x;
    Vector b = x;
    a(j) += s;
    b(j) -= s;
    h.col(j) = (g(a) - g(b)) / (2.0 * s);
  }
  return 0.5 * (h + h.transpose());
}

/// Plain second differences of f for every (i, j), step h on all coordinates.
inline Matrix fd_hessian(const ScalarFn& f, const Vector& x, double h = 1e-3) {
  const Eigen::Index p = x.size();
  Matrix out(p, p);
  const double f0 = f(x);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = i; j < p; ++j) {
      double v;
      if (i == j) {
        Vector a = x;
        Vector b = x;
        a(i) += h;
        b(i) -= h;
        v = (f(a) - 2.0 * f0 + f(b)) / (h * h);
      } else {
        Vector pp = x, pm = x, mp = x, mm = x;
        pp(i) += h, pp(j) += h;
        pm(i) += h, pm(j) -= h;
        mp(i) -= h, mp(j) += h;
        mm(i) -= h, mm(j) -= h;
        v = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h * h);
      }
      out(i, j) = out(j, i) = v;
    }
  }
  return out;
}

inline double rel_err(const Vector& a, const Vector& b, double floor = 1e-8) {
  return (a - b).norm() / std::max(b.norm(), floor);
}

inline Matrix random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, scale);
  return m;
}

inline Batch random_batch(int dx, int dy, int n, std::uint64_t seed) {
  Rng rng(seed, 77);
  Batch b;
  b.x = random_matrix(dx, n, rng);
  b.y = random_matrix(dy, n, rng);
  return b;
}

inline Batch scalar_batch(double x, double y) {
  Batch b;
  b.x = Matrix::Constant(1, 1, x);
  b.y = Matrix::Constant(1, 1, y);
  return b;
}

/// Random architecture with H hidden layers and widths in [1, max_width].
inline ArchSpec random_arch(int hidden, int max_width, Rng& rng, Activation act = Activation::linear) {
  ArchSpec a;
  a.activation = act;
  for (int l = 0; l <= hidden + 1; ++l) a.widths.push_back(1 + static_cast<int>(rng.below(max_width)));
  return a;
}

inline Params chain_params(std::initializer_list<double> w) {
  Params p;
  for (double v : w) p.weights.push_back(Matrix::Constant(1, 1, v));
  return p;
}

}  // namespace pcs::testing
