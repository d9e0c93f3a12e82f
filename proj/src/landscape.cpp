#include "pcs/landscape.hpp"

#include <cmath>
#include <exception>
#include <stdexcept>
#include <string>

#include "pcs/parallel.hpp"
#include "pcs/rng.hpp"

namespace pcs::landscape {

namespace {

Vector steps(const Vector& at, double h_scale) {
  if (!(h_scale > 0.0)) throw ContractError("numerical differences: h must be > 0");
  return h_scale * (1.0 + at.array().abs()).matrix();
}

// One Hessian entry; `work` is a scratch copy of `at` owned by the caller and
// restored before returning.
double hessian_entry(const Objective& f, Vector& work, const Vector& h, Eigen::Index i, Eigen::Index j, double f0) {
  const double xi = work(i);
  if (i == j) {
    work(i) = xi + 2.0 * h(i);
    const double fp = f(work);
    work(i) = xi - 2.0 * h(i);
    const double fm = f(work);
    work(i) = xi;
    return (fp - 2.0 * f0 + fm) / (4.0 * h(i) * h(i));
  }
  const double xj = work(j);
  auto eval = [&](double si, double sj) {
    work(i) = xi + si * h(i);
    work(j) = xj + sj * h(j);
    return f(work);
  };
  const double fpp = eval(1, 1);
  const double fpm = eval(1, -1);
  const double fmp = eval(-1, 1);
  const double fmm = eval(-1, -1);
  work(i) = xi;
  work(j) = xj;
  return (fpp - fpm - fmp + fmm) / (4.0 * h(i) * h(j));
}

void hessian_row(const Objective& f, const Vector& at, const Vector& h, double f0, Eigen::Index i, Matrix& out,
                 bool upper_only) {
  Vector work = at;
  for (Eigen::Index j = upper_only ? i : 0; j < at.size(); ++j) out(i, j) = hessian_entry(f, work, h, i, j, f0);
}

void mirror_upper(Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < i; ++j) m(i, j) = m(j, i);
}

Vector axis(Eigen::Index p, Eigen::Index k) {
  Vector e = Vector::Zero(p);
  if (k < p) e(k) = 1.0;
  return e;
}

LandscapeGrid grid_frame(const Vector& center, const Vector& dir_a, const Vector& dir_b, int resolution,
                         double half_range) {
  if (resolution < 2) throw ContractError("landscape_grid: resolution must be >= 2");
  if (!(half_range > 0.0)) throw ContractError("landscape_grid: half_range must be > 0");
  if (dir_a.size() != center.size() || dir_b.size() != center.size()) {
    throw ShapeError("landscape_grid: direction length differs from center");
  }
  LandscapeGrid g;
  g.alphas = Vector::LinSpaced(resolution, -half_range, half_range);
  g.betas = g.alphas;
  g.values = Matrix::Zero(resolution, resolution);
  g.dir_a = dir_a;
  g.dir_b = dir_b;
  g.center = center;
  return g;
}

void grid_row(const Objective& f, LandscapeGrid& g, int i) {
  for (Eigen::Index j = 0; j < g.betas.size(); ++j) {
    const Vector theta = g.center + g.alphas(i) * g.dir_a + g.betas(j) * g.dir_b;
    const double v = f(theta);
    if (!std::isfinite(v)) throw std::runtime_error("landscape_grid: objective returned a non-finite value");
    g.values(i, j) = v;
  }
}

}  // namespace

Matrix numerical_hessian_serial(const Objective& f, const Vector& at, double h_scale) {
  const Vector h = steps(at, h_scale);
  const double f0 = f(at);
  Matrix out = Matrix::Zero(at.size(), at.size());
  for (Eigen::Index i = 0; i < at.size(); ++i) hessian_row(f, at, h, f0, i, out, true);
  mirror_upper(out);
  return out;
}

Matrix numerical_hessian(const Objective& f, const Vector& at, double h_scale) {
#ifdef PCS_HAVE_OPENMP
  const Vector h = steps(at, h_scale);
  const double f0 = f(at);
  const Eigen::Index p = at.size();
  Matrix out = Matrix::Zero(p, p);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) num_threads(worker_threads())
  for (Eigen::Index i = 0; i < p; ++i) {
    try {
      hessian_row(f, at, h, f0, i, out, true);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  mirror_upper(out);
  return out;
#else
  return numerical_hessian_serial(f, at, h_scale);
#endif
}

Matrix numerical_hessian_full(const Objective& f, const Vector& at, double h_scale) {
  const Vector h = steps(at, h_scale);
  const double f0 = f(at);
  Matrix out = Matrix::Zero(at.size(), at.size());
  for (Eigen::Index i = 0; i < at.size(); ++i) hessian_row(f, at, h, f0, i, out, false);
  return out;
}

Vector numerical_gradient(const Objective& f, const Vector& at, double h_scale) {
  const Vector h = steps(at, h_scale);
  Vector work = at;
  Vector g(at.size());
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    const double xi = work(i);
    work(i) = xi + h(i);
    const double fp = f(work);
    work(i) = xi - h(i);
    const double fm = f(work);
    work(i) = xi;
    g(i) = (fp - fm) / (2.0 * h(i));
  }
  return g;
}

std::string_view to_string(PointKind k) {
  switch (k) {
    case PointKind::strict_saddle: return "strict_saddle";
    case PointKind::nonstrict_candidate: return "nonstrict_candidate";
    case PointKind::local_min_candidate: return "local_min_candidate";
    case PointKind::not_critical: return "not_critical";
  }
  return "not_critical";
}

SaddleReport classify_point(const Objective& f, const GradientFn& grad, const Vector& at, const Tolerances& tols) {
  SaddleReport r;
  r.value = f(at);
  const Vector g = grad(at);
  r.grad_norm = g.size() > 0 ? g.cwiseAbs().maxCoeff() : 0.0;
  r.grad_threshold = tols.grad_rel * (1.0 + std::abs(r.value));

  const SymSpectrum spec = sym_eig(numerical_hessian(f, at, tols.h_scale));
  r.eigenvalues = spec.eigenvalues;
  r.lambda_min = spec.min();
  r.lambda_max = spec.max();
  r.strict_tol = tols.strict_rel * std::max(1.0, r.lambda_max - r.lambda_min);

  if (r.grad_norm > r.grad_threshold) {
    r.classification = PointKind::not_critical;
  } else if (r.lambda_min < -r.strict_tol) {
    r.classification = PointKind::strict_saddle;
  } else if (r.lambda_min <= r.strict_tol) {
    r.classification = PointKind::nonstrict_candidate;
  } else {
    r.classification = PointKind::local_min_candidate;
  }
  return r;
}

Params make_origin(const ArchSpec& arch) { return Params::zeros(arch); }

Params make_zero_rank_saddle(const ArchSpec& arch, std::uint64_t seed) {
  arch.validate();
  const int L = arch.num_layers();
  if (L < 3) {
    throw ContractError("make_zero_rank_saddle: needs L >= 3 (got L = " + std::to_string(L) +
                        "); with L = 2 a random W_1 makes the point non-critical");
  }
  Params p = Params::zeros(arch);
  Rng rng(seed, static_cast<std::uint64_t>(2 * (L - 1)));
  Matrix& w = p.w(L - 1);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  return p;
}

LandscapeGrid landscape_grid(const Objective& f, const Vector& center, int resolution, double half_range) {
  const Eigen::Index p = center.size();
  if (p <= 2) return landscape_grid(f, center, axis(p, 0), axis(p, 1), resolution, half_range);
  const SymSpectrum spec = sym_eig(numerical_hessian(f, center));
  return landscape_grid(f, center, spec.min_vector(), spec.max_vector(), resolution, half_range);
}

LandscapeGrid landscape_grid(const Objective& f, const Vector& center, const Vector& dir_a, const Vector& dir_b,
                             int resolution, double half_range) {
#ifdef PCS_HAVE_OPENMP
  LandscapeGrid g = grid_frame(center, dir_a, dir_b, resolution, half_range);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic) num_threads(worker_threads())
  for (int i = 0; i < resolution; ++i) {
    try {
      grid_row(f, g, i);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return g;
#else
  return landscape_grid_serial(f, center, dir_a, dir_b, resolution, half_range);
#endif
}

LandscapeGrid landscape_grid_serial(const Objective& f, const Vector& center, const Vector& dir_a,
                                    const Vector& dir_b, int resolution, double half_range) {
  LandscapeGrid g = grid_frame(center, dir_a, dir_b, resolution, half_range);
  for (int i = 0; i < resolution; ++i) grid_row(f, g, i);
  return g;
}

}  // namespace pcs::landscape
