#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "pcs/linalg.hpp"

using namespace pcs;
using pcs::testing::random_matrix;

TEST(Matmul, IdentityZeroAndHandExpansion) {
  const Matrix a = make_matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(Matrix::Identity(2, 2), a), a);
  EXPECT_EQ(matmul(Matrix::Zero(2, 2), a), Matrix::Zero(2, 2));
  EXPECT_EQ(matmul(a, make_matrix({{5}, {6}})), make_matrix({{17}, {39}}));
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Matrix::Zero(2, 3), Matrix::Zero(2, 3)), ShapeError);
}

TEST(MakeMatrix, RejectsBadInput) {
  const double v[] = {1, 2, 3};
  EXPECT_THROW(make_matrix(2, 2, v), ShapeError);
  const double bad[] = {1, NAN};
  EXPECT_THROW(make_matrix(1, 2, bad), std::invalid_argument);
  EXPECT_THROW(make_matrix({{1, 2}, {3}}), ShapeError);
}

TEST(Kron, Examples) {
  const Matrix a = make_matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(kron(Matrix::Identity(1, 1), a), a);
  EXPECT_EQ(kron(a, Matrix::Zero(2, 3)), Matrix::Zero(4, 6));
  EXPECT_EQ(kron(make_matrix({{2}}), Matrix::Identity(2, 2)), make_matrix({{2, 0}, {0, 2}}));
}

TEST(Kron, MixedProductProperty) {
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    const Matrix a = random_matrix(2, 3, rng), c = random_matrix(3, 2, rng);
    const Matrix b = random_matrix(3, 2, rng), d = random_matrix(2, 4, rng);
    const Matrix lhs = kron(a, b) * kron(c, d);
    const Matrix rhs = kron(a * c, b * d);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(SymEig, SmallExamples) {
  auto ev = sym_eig(make_matrix({{3, 0}, {0, 1}})).eigenvalues;
  EXPECT_NEAR(ev(0), 1.0, 1e-14);
  EXPECT_NEAR(ev(1), 3.0, 1e-14);

  ev = sym_eig(make_matrix({{0, -2}, {-2, 0}})).eigenvalues;
  EXPECT_NEAR(ev(0), -2.0, 1e-14);
  EXPECT_NEAR(ev(1), 2.0, 1e-14);

  ev = sym_eig(make_matrix({{0, -2}, {-2, -4}})).eigenvalues;
  EXPECT_NEAR(ev(0), -2.0 - 2.0 * std::sqrt(2.0), 1e-13);
  EXPECT_NEAR(ev(1), -2.0 + 2.0 * std::sqrt(2.0), 1e-13);
}

TEST(SymEig, NonSquareThrows) { EXPECT_THROW(sym_eig(Matrix::Zero(2, 3)), ShapeError); }

TEST(SymEig, ReconstructionOrthonormalityAndShift) {
  Rng rng(11);
  for (int n : {1, 2, 5, 13, 20}) {
    Matrix a = random_matrix(n, n, rng);
    a = 0.5 * (a + a.transpose()).eval();
    const SymSpectrum s = sym_eig(a);
    for (Eigen::Index i = 1; i < n; ++i) EXPECT_LE(s.eigenvalues(i - 1), s.eigenvalues(i));
    const Matrix v = s.eigenvectors;
    EXPECT_LT((v.transpose() * v - Matrix::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-10);
    const Matrix back = v * s.eigenvalues.asDiagonal() * v.transpose();
    EXPECT_LT((back - a).norm() / a.norm(), 1e-8);

    const double eps = 0.37;
    const Vector shifted = sym_eig(a + eps * Matrix::Identity(n, n)).eigenvalues;
    EXPECT_LT((shifted - (s.eigenvalues.array() + eps).matrix()).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(SymEig, SymmetrizesInput) {
  const auto ev = sym_eig(make_matrix({{1, 2}, {0, 1}})).eigenvalues;
  EXPECT_NEAR(ev(0), 0.0, 1e-14);
  EXPECT_NEAR(ev(1), 2.0, 1e-14);
}

TEST(Solve, Examples) {
  const Vector b = Vector::LinSpaced(3, 1, 3);
  EXPECT_EQ(solve(Matrix::Identity(3, 3), b), b);
  const Vector x = solve(make_matrix({{2, 0}, {0, 4}}), Vector::Map(std::vector<double>{2, 8}.data(), 2));
  EXPECT_DOUBLE_EQ(x(0), 1.0);
  EXPECT_DOUBLE_EQ(x(1), 2.0);
  EXPECT_THROW(solve(Matrix::Zero(2, 2), Vector::Ones(2)), SingularError);
  EXPECT_THROW(solve(Matrix::Zero(2, 3), Vector::Ones(2)), ShapeError);
}

TEST(Solve, RoundTrip) {
  Rng rng(5);
  for (int n : {1, 4, 12}) {
    const Matrix a = random_matrix(n, n, rng) + n * Matrix::Identity(n, n);
    Vector b(n);
    for (int i = 0; i < n; ++i) b(i) = rng.normal();
    const Vector x = solve(a, b);
    EXPECT_LT((a * x - b).norm() / b.norm(), 1e-9);
    EXPECT_LE((a * x - b).cwiseAbs().maxCoeff(), 1e-10 * (1.0 + b.cwiseAbs().maxCoeff()));
  }
}

TEST(SingularValues, Examples) {
  Vector s = singular_values(make_matrix({{3, 0}, {0, -2}}));
  EXPECT_NEAR(s(0), 3.0, 1e-14);
  EXPECT_NEAR(s(1), 2.0, 1e-14);
  EXPECT_EQ(singular_values(Matrix::Zero(2, 2)), Vector::Zero(2));

  Vector u(3), v(2);
  u << 1, 2, 2;
  v << 3, 4;
  s = singular_values(u * v.transpose());
  EXPECT_NEAR(s(0), u.norm() * v.norm(), 1e-12);
  EXPECT_NEAR(s(1), 0.0, 1e-12);
}

TEST(SingularValues, SquaresAreEigenvaluesOfGram) {
  Rng rng(9);
  const Matrix a = random_matrix(5, 3, rng);
  const Vector s = singular_values(a);
  const Vector ev = sym_eig(a.transpose() * a).eigenvalues.reverse();
  EXPECT_LT((s.array().square().matrix() - ev).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(NumericalRank, Examples) {
  EXPECT_EQ(numerical_rank(Matrix::Zero(3, 3)), 0);
  EXPECT_EQ(numerical_rank(Matrix::Identity(3, 3)), 3);
  Rng rng(21);
  for (int t = 0; t < 5; ++t) {
    EXPECT_EQ(numerical_rank(random_matrix(10, 3, rng) * random_matrix(3, 10, rng)), 3);
    for (int k : {1, 2, 4}) EXPECT_EQ(numerical_rank(random_matrix(8, k, rng) * random_matrix(k, 6, rng)), k);
  }
}

TEST(NumericalRank, ReferenceScale) {
  const Matrix tiny = 1e-6 * Matrix::Identity(3, 3);
  EXPECT_EQ(numerical_rank(tiny), 3);
  EXPECT_EQ(numerical_rank(tiny, 1e-3, 1.0), 0);
  EXPECT_EQ(numerical_rank(tiny, 1e-3, 1e-4), 3);
}
