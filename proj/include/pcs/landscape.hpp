#pragma once

// Numerical Hessians, critical-point classification and 2-D slices of an
// objective around a point. Objectives act on the flattened parameter vector
// and must be pure: the parallel kernels call them concurrently.

#include <cstdint>
#include <functional>
#include <string_view>

#include "pcs/linalg.hpp"
#include "pcs/network.hpp"

namespace pcs::landscape {

using Objective = std::function<double(const Vector&)>;
using GradientFn = std::function<Vector(const Vector&)>;

/// Per-coordinate step h_i = h_scale·(1 + |θ_i|). Entry (i, j) is
/// [f(+h_i+h_j) − f(+h_i−h_j) − f(−h_i+h_j) + f(−h_i−h_j)] / (4 h_i h_j).
/// The upper triangle is evaluated and mirrored. Parallel over rows.
Matrix numerical_hessian(const Objective& f, const Vector& at, double h_scale = 1e-3);

/// Single-threaded reference with identical arithmetic (bitwise equal output).
Matrix numerical_hessian_serial(const Objective& f, const Vector& at, double h_scale = 1e-3);

/// Every (i, j) evaluated independently, no mirroring. For symmetry checks.
Matrix numerical_hessian_full(const Objective& f, const Vector& at, double h_scale = 1e-3);

/// Central differences with h_i = h_scale·(1 + |θ_i|).
Vector numerical_gradient(const Objective& f, const Vector& at, double h_scale = 1e-5);

enum class PointKind { strict_saddle, nonstrict_candidate, local_min_candidate, not_critical };

std::string_view to_string(PointKind k);

struct Tolerances {
  double grad_rel = 1e-8;    // critical iff ‖g‖∞ ≤ grad_rel·(1 + |f|)
  double strict_rel = 1e-6;  // strict_tol = strict_rel·max(1, λ_max − λ_min)
  double h_scale = 1e-3;
};

struct SaddleReport {
  double value = 0.0;
  double grad_norm = 0.0;
  double grad_threshold = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double strict_tol = 0.0;
  PointKind classification = PointKind::not_critical;
  Vector eigenvalues;
};

SaddleReport classify_point(const Objective& f, const GradientFn& grad, const Vector& at, const Tolerances& tols = {});

/// All-zero parameters.
Params make_origin(const ArchSpec& arch);

/// W_{L−1} with i.i.d. N(0, 1) entries, every other layer zero. Needs L ≥ 3:
/// with L = 2 the random layer is W₁ itself and the point is not critical.
Params make_zero_rank_saddle(const ArchSpec& arch, std::uint64_t seed);

struct LandscapeGrid {
  Vector alphas;
  Vector betas;
  Matrix values;  // values(i, j) = f(center + alphas(i)·dir_a + betas(j)·dir_b)
  Vector dir_a;   // v̂_min, or e₁ when p ≤ 2
  Vector dir_b;   // v̂_max, or e₂ when p = 2 (zero when p = 1)
  Vector center;
};

/// Directions from the numerical Hessian at `center` (raw axes when p ≤ 2),
/// then a resolution × resolution grid over [−half_range, half_range]².
LandscapeGrid landscape_grid(const Objective& f, const Vector& center, int resolution, double half_range);

/// Grid along caller-supplied directions. Parallel over grid rows.
LandscapeGrid landscape_grid(const Objective& f, const Vector& center, const Vector& dir_a, const Vector& dir_b,
                             int resolution, double half_range);

LandscapeGrid landscape_grid_serial(const Objective& f, const Vector& center, const Vector& dir_a,
                                    const Vector& dir_b, int resolution, double half_range);

}  // namespace pcs::landscape
