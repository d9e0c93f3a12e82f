#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "pcs/dln.hpp"
#include "pcs/landscape.hpp"
#include "pcs/pcn.hpp"

using namespace pcs;
using namespace pcs::testing;

namespace {

std::vector<double> chain_weights(const Params& p) {
  std::vector<double> w;
  for (const auto& m : p.weights) w.push_back(m(0, 0));
  return w;
}

}  // namespace

TEST(Covariances, Examples) {
  auto c = dln::covariances(scalar_batch(1, -1));
  EXPECT_DOUBLE_EQ(c.sxx(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(c.sxy(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(c.syy(0, 0), 1.0);

  Batch b = random_batch(3, 3, 7, 1);
  b.y = b.x;
  c = dln::covariances(b);
  EXPECT_LT((c.syy - c.sxx).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((c.sxy - c.sxx).cwiseAbs().maxCoeff(), 1e-15);

  Batch z;
  z.x = Matrix::Zero(2, 3);
  z.y = Matrix::Zero(4, 3);
  c = dln::covariances(z);
  EXPECT_EQ(c.sxy.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Covariances, SymmetryAndPsd) {
  const Batch b = random_batch(4, 3, 9, 2);
  const auto c = dln::covariances(b);
  EXPECT_EQ(c.syx, Matrix(c.sxy.transpose()));
  EXPECT_GT(sym_eig(c.sxx).min(), -1e-10);
  EXPECT_GT(sym_eig(c.syy).min(), -1e-10);
  EXPECT_LT((c.sxx - c.sxx.transpose()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(LossGradientAnalytic, OriginCases) {
  const Batch b = random_batch(2, 3, 5, 3);
  const auto c = dln::covariances(b);
  const ArchSpec deep{{2, 4, 3}};
  EXPECT_EQ(max_abs(dln::loss_gradient_analytic(Params::zeros(deep), c)), 0.0);
  const ArchSpec shallow{{2, 3}};
  const Params g = dln::loss_gradient_analytic(Params::zeros(shallow), c);
  EXPECT_LT((g.w(1) + c.syx).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(LossGradientAnalytic, EqualsBackprop) {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const ArchSpec arch = random_arch(1 + t % 4, 5, rng);
    const Params p = init_fan_in(arch, 1.0, t);
    const Batch b = random_batch(arch.in_dim(), arch.out_dim(), 6, 50 + t);
    const Vector a = flatten(dln::loss_gradient_analytic(p, dln::covariances(b)));
    const Vector bp = flatten(bp_gradient(p, arch, b));
    EXPECT_LT((a - bp).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(LossHessian, OriginDeepIsZero) {
  const ArchSpec arch{{2, 3, 3, 2}};
  const auto c = dln::covariances(random_batch(2, 2, 4, 1));
  EXPECT_EQ(dln::loss_hessian(Params::zeros(arch), c, arch).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(dln::origin_hessian_loss(c, arch).cwiseAbs().maxCoeff(), 0.0);
}

TEST(LossHessian, OriginOneHiddenLayerBlocks) {
  const ArchSpec arch{{2, 3, 2}};
  const auto c = dln::covariances(random_batch(2, 2, 5, 6));
  const Matrix h = dln::loss_hessian(Params::zeros(arch), c, arch);
  const int n1 = 3, dx = 2, dy = 2, p1 = n1 * dx;
  EXPECT_EQ(h.topLeftCorner(p1, p1).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(h.bottomRightCorner(dy * n1, dy * n1).cwiseAbs().maxCoeff(), 0.0);
  // d²L / dW1[a,b] dW2[c,d] = −Σxy[b,c] δ(a,d)
  for (int a = 0; a < n1; ++a)
    for (int b = 0; b < dx; ++b)
      for (int cc = 0; cc < dy; ++cc)
        for (int d = 0; d < n1; ++d) {
          const double expect = a == d ? -c.sxy(b, cc) : 0.0;
          EXPECT_NEAR(h(a * dx + b, p1 + cc * n1 + d), expect, 1e-14);
        }
  EXPECT_LT((h - dln::origin_hessian_loss(c, arch)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(LossHessian, ScalarOneHiddenExample) {
  const auto c = dln::covariances(scalar_batch(1, 2));
  const Matrix h = dln::origin_hessian_loss(c, ArchSpec::chain(1));
  EXPECT_EQ(h, make_matrix({{0, -2}, {-2, 0}}));
}

TEST(LossHessian, MatchesFiniteDifferences) {
  for (int t = 0; t < 5; ++t) {
    const ArchSpec arch{{2, 3, 3, 2}};
    const Params p = init_fan_in(arch, 1.0, 10 + t);
    const Batch b = random_batch(2, 2, 4, 20 + t);
    const auto f = [&](const Vector& th) { return mse_loss(unflatten(arch, th), arch, b); };
    const Matrix fd = fd_hessian(f, flatten(p));
    EXPECT_LT((dln::loss_hessian(p, dln::covariances(b), arch) - fd).cwiseAbs().maxCoeff(), 1e-4);
  }
}

TEST(Rescaling, Examples) {
  const ArchSpec arch{{3, 4, 4, 2}};
  EXPECT_EQ(dln::rescaling(Params::zeros(arch)).s, Matrix(Matrix::Identity(2, 2)));
  EXPECT_DOUBLE_EQ(dln::rescaling(chain_params({1, 1, 1})).s(0, 0), 3.0);

  const ArchSpec h1{{3, 4, 2}};
  const Params p = init_fan_in(h1, 1.0, 1);
  const Matrix expect = Matrix::Identity(2, 2) + p.w(2) * p.w(2).transpose();
  EXPECT_LT((dln::rescaling(p).s - expect).cwiseAbs().maxCoeff(), 1e-14);

  const Params one = init_fan_in(ArchSpec{{3, 2}}, 1.0, 1);
  EXPECT_EQ(dln::rescaling(one).s, Matrix(Matrix::Identity(2, 2)));
}

TEST(Rescaling, EigenvaluesAtLeastOne) {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const ArchSpec arch = random_arch(1 + t % 5, 6, rng);
    Params p = init_fan_in(arch, 2.0, t);
    EXPECT_GE(sym_eig(dln::rescaling(p).s).min(), 1.0 - 1e-12);
    for (int l = 2; l <= arch.num_layers(); ++l) p.w(l).setZero();
    const Matrix s = dln::rescaling(p).s;
    EXPECT_EQ(s, Matrix(Matrix::Identity(s.rows(), s.cols())));
  }
}

TEST(EquilibratedEnergy, Examples) {
  const ArchSpec arch{{1, 2}};
  Batch b;
  b.x = Matrix::Ones(1, 1);
  b.y = Matrix::Ones(2, 1);
  EXPECT_DOUBLE_EQ(dln::equilibrated_energy(Params::zeros(arch), b), 1.0);
  EXPECT_DOUBLE_EQ(dln::equilibrated_energy(chain_params({3, 1}), scalar_batch(1, 3)), 0.0);
  EXPECT_NEAR(dln::equilibrated_energy(chain_params({1, 1, 1}), scalar_batch(1, -1)), 2.0 / 3.0, 1e-15);
}

TEST(EquilibratedEnergy, AgreesWithExactInferenceChain) {
  const Params p = chain_params({1, 1, 1});
  const Batch b = scalar_batch(1, -1);
  const auto acts = pc::infer_exact_linear(p, ArchSpec::chain(2), b);
  EXPECT_NEAR(pc::energy(p, ArchSpec::chain(2), acts), dln::equilibrated_energy(p, b), 1e-10);
}

TEST(EquilibratedEnergyGradient, CriticalPoints) {
  const ArchSpec arch{{3, 4, 4, 2}};
  const Batch b = random_batch(3, 2, 6, 2);
  EXPECT_EQ(max_abs(dln::equilibrated_energy_gradient(Params::zeros(arch), b)), 0.0);
  Params zr = Params::zeros(arch);
  Rng rng(3);
  zr.w(2) = random_matrix(4, 4, rng);
  EXPECT_LT(max_abs(dln::equilibrated_energy_gradient(zr, b)), 1e-12);
}

TEST(EquilibratedEnergyGradient, MatchesFiniteDifferences) {
  Rng rng(13);
  for (int t = 0; t < 10; ++t) {
    const ArchSpec arch = random_arch(1 + t % 3, 4, rng);
    const Params p = init_fan_in(arch, 1.0, t);
    const Batch b = random_batch(arch.in_dim(), arch.out_dim(), 5, 100 + t);
    const auto f = [&](const Vector& th) { return dln::equilibrated_energy(unflatten(arch, th), b); };
    EXPECT_LT(rel_err(flatten(dln::equilibrated_energy_gradient(p, b)), fd_gradient(f, flatten(p))), 1e-6);
  }
}

TEST(EquilibratedEnergyHessianAd, MatchesGradientJacobian) {
  const ArchSpec arch{{2, 3, 2, 2}};
  const Params p = init_fan_in(arch, 1.0, 4);
  const Batch b = random_batch(2, 2, 5, 5);
  const auto g = [&](const Vector& th) { return flatten(dln::equilibrated_energy_gradient(unflatten(arch, th), b)); };
  const Matrix fd = fd_jacobian_sym(g, flatten(p));
  EXPECT_LT((dln::equilibrated_energy_hessian_ad(p, b) - fd).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(OriginHessianEnergy, Examples) {
  auto c = dln::covariances(scalar_batch(1, -1));
  const Matrix h2 = dln::origin_hessian_energy(c, ArchSpec::chain(2));
  Matrix expect = Matrix::Zero(3, 3);
  expect(2, 2) = -1.0;
  EXPECT_EQ(h2, expect);

  c = dln::covariances(scalar_batch(1, 2));
  EXPECT_EQ(dln::origin_hessian_energy(c, ArchSpec::chain(1)), make_matrix({{0, -2}, {-2, -4}}));
}

TEST(OriginHessianEnergy, MatchesGradientJacobianAndIsIndefinite) {
  for (int hidden : {1, 2, 4}) {
    const ArchSpec arch = ArchSpec::uniform(3, 4, hidden, 2);
    const Batch b = random_batch(3, 2, 6, hidden);
    const auto g = [&](const Vector& th) {
      return flatten(dln::equilibrated_energy_gradient(unflatten(arch, th), b));
    };
    const Matrix fd = fd_jacobian_sym(g, Vector::Zero(arch.param_count()));
    const Matrix h = dln::origin_hessian_energy(dln::covariances(b), arch);
    EXPECT_LT((h - fd).cwiseAbs().maxCoeff(), 1e-8) << "H=" << hidden;
    EXPECT_LT(sym_eig(h).min(), 0.0);
    if (hidden > 1) {
      EXPECT_EQ(sym_eig(dln::origin_hessian_loss(dln::covariances(b), arch)).min(), 0.0);
    }
  }
}

TEST(ChainQuantities, CrossCheckAndErrors) {
  const auto q = dln::chain_quantities(std::vector<double>{1, 1, 1}, scalar_batch(1, -1));
  EXPECT_DOUBLE_EQ(q.s, 3.0);
  EXPECT_NEAR(q.energy, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(q.energy, dln::equilibrated_energy(chain_params({1, 1, 1}), scalar_batch(1, -1)), 1e-15);
  EXPECT_THROW(dln::chain_quantities(std::vector<double>{1, 1}, random_batch(2, 1, 3, 1)), ContractError);
}

TEST(ChainQuantities, OneHiddenOriginEigenvalues) {
  for (auto [x, y] : {std::pair{1.0, 2.0}, {0.5, -1.5}, {2.0, 0.3}}) {
    const auto q = dln::chain_quantities(std::vector<double>{0, 0}, scalar_batch(x, y));
    const Vector ev = sym_eig(q.energy_hessian).eigenvalues;
    const double r = std::abs(y) * std::sqrt(4 * x * x + y * y);
    EXPECT_NEAR(ev(0), (-y * y - r) / 2, 1e-12);
    EXPECT_NEAR(ev(1), (-y * y + r) / 2, 1e-12);
    // Sorted energy eigenvalues sit below the loss ones.
    const Vector lv = sym_eig(q.loss_hessian).eigenvalues;
    EXPECT_LT(ev(0), lv(0));
    EXPECT_LT(ev(1), lv(1));
  }
}

TEST(ChainQuantities, MatchWideImplementations) {
  Rng rng(31);
  for (int t = 0; t < 20; ++t) {
    const int hidden = 1 + t % 6;
    const ArchSpec arch = ArchSpec::chain(hidden);
    const Params p = init_near_point(arch, Params::zeros(arch), 0.8, t);
    Batch b;
    b.x = random_matrix(1, 3, rng);
    b.y = random_matrix(1, 3, rng);
    const auto q = dln::chain_quantities(chain_weights(p), b);
    EXPECT_NEAR(q.loss, mse_loss(p, arch, b), 1e-12);
    EXPECT_NEAR(q.energy, dln::equilibrated_energy(p, b), 1e-12);
    EXPECT_NEAR(q.s, dln::rescaling(p).s(0, 0), 1e-12);
    EXPECT_LT((q.loss_hessian - dln::loss_hessian(p, dln::covariances(b), arch)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((q.energy_hessian - dln::equilibrated_energy_hessian_ad(p, b)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(ChainMinima, Examples) {
  const auto m = dln::chain_minima_relation(std::vector<double>{3, 1}, scalar_batch(1, 3));
  EXPECT_DOUBLE_EQ(m.s, 2.0);
  EXPECT_LT((m.h_energy - m.h_loss / 2.0).cwiseAbs().maxCoeff(), 1e-12);
  const Vector le = sym_eig(m.h_loss).eigenvalues / 2.0;
  EXPECT_LT((sym_eig(m.h_energy).eigenvalues - le).cwiseAbs().maxCoeff(), 1e-12);

  const auto one = dln::chain_minima_relation(std::vector<double>{-2}, scalar_batch(1.5, -3));
  EXPECT_DOUBLE_EQ(one.s, 1.0);
  EXPECT_LT((one.h_energy - one.h_loss).cwiseAbs().maxCoeff(), 1e-14);

  EXPECT_THROW(dln::chain_minima_relation(std::vector<double>{1, 1}, scalar_batch(1, 3)), ContractError);
}

TEST(ZeroRankCurvature, Examples) {
  const ArchSpec arch{{3, 4, 4, 2}};
  const Batch b = random_batch(3, 2, 5, 1);
  const double sum_y2 = b.y.squaredNorm();
  EXPECT_NEAR(dln::zero_rank_curvature_constant(Params::zeros(arch), b), sum_y2, 1e-12);
  EXPECT_NEAR(dln::zero_rank_curvature_constant(chain_params({0, 2, 0}), scalar_batch(1, -1)), 5.0, 1e-14);
}

TEST(ZeroRankCurvature, QuadraticFitAlongDirection) {
  for (int hidden : {2, 3}) {
    const ArchSpec arch = ArchSpec::uniform(3, 3, hidden, 2);
    const Batch b = random_batch(3, 2, 4, 10 + hidden);
    const Params star = landscape::make_zero_rank_saddle(arch, 7);
    const Vector theta = flatten(star);
    const Vector dir = flatten(dln::zero_rank_direction(arch));
    const double f0 = dln::equilibrated_energy(star, b);
    // Least squares for Δf ≈ a δ².
    double num = 0.0, den = 0.0;
    for (int k = 1; k <= 10; ++k) {
      const double d = 1e-3 * k;
      const double df = dln::equilibrated_energy(unflatten(arch, theta + d * dir), b) - f0;
      num += df * d * d;
      den += d * d * d * d;
    }
    const double curvature = 2.0 * num / den;
    const double c = dln::zero_rank_curvature_constant(star, b);
    const double expect = -2.0 * c / (2.0 * b.size());
    EXPECT_NEAR(curvature / expect, 1.0, 0.05) << "H=" << hidden;
  }
}

TEST(LayerOffsets, MatchFlattenLayout) {
  const ArchSpec arch{{2, 3, 4}};
  const auto off = dln::layer_offsets(arch);
  ASSERT_EQ(off.size(), 3u);
  EXPECT_EQ(off[0], 0);
  EXPECT_EQ(off[1], 6);
  EXPECT_EQ(off[2], 18);
}
