#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pcs {

/// Dense row-major matrix of doubles. Weights, covariances and Hessians all
/// live in this type; row-major storage makes `flatten` a plain copy of the
/// row-vectorized layout.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SingularError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Precondition violated by the caller (wrong architecture kind, point not
/// where the operation is defined, ...).
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Eigenvalues ascending, eigenvectors as matching unit-norm columns.
struct SymSpectrum {
  Vector eigenvalues;
  Matrix eigenvectors;

  [[nodiscard]] double min() const { return eigenvalues(0); }
  [[nodiscard]] double max() const { return eigenvalues(eigenvalues.size() - 1); }
  [[nodiscard]] Vector min_vector() const { return eigenvectors.col(0); }
  [[nodiscard]] Vector max_vector() const { return eigenvectors.col(eigenvectors.cols() - 1); }
};

/// Builds a matrix from row-major values; throws ShapeError on a length
/// mismatch and std::invalid_argument on a non-finite entry.
Matrix make_matrix(std::size_t rows, std::size_t cols, std::span<const double> values);
Matrix make_matrix(std::initializer_list<std::initializer_list<double>> rows);

[[nodiscard]] bool all_finite(const Matrix& a);

Matrix matmul(const Matrix& a, const Matrix& b);

/// Kronecker product; block (i, j) of the result is a(i, j) * b.
Matrix kron(const Matrix& a, const Matrix& b);

/// Symmetric eigendecomposition of (a + aᵀ)/2.
SymSpectrum sym_eig(const Matrix& a);

/// Solves a·x = b with partial-pivot LU. Throws SingularError when a pivot
/// falls below 1e-12 times the largest absolute entry of `a`.
Vector solve(const Matrix& a, const Vector& b);

/// Singular values, descending.
Vector singular_values(const Matrix& a);

/// Number of singular values above rel_tol·σ_max (0 for the zero matrix).
int numerical_rank(const Matrix& a, double rel_tol = 1e-3);

/// Same count, but against rel_tol·reference_scale. Used when the matrix
/// itself is near zero and its own σ_max is noise (e.g. a network map close
/// to the origin measured against the scale of its target).
int numerical_rank(const Matrix& a, double rel_tol, double reference_scale);

}  // namespace pcs
