#include "pcs/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace pcs {

Matrix make_matrix(std::size_t rows, std::size_t cols, std::span<const double> values) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("make_matrix: dimensions must be positive");
  }
  if (values.size() != rows * cols) {
    throw ShapeError("make_matrix: expected " + std::to_string(rows * cols) + " values, got " +
                     std::to_string(values.size()));
  }
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw std::invalid_argument("make_matrix: non-finite entry at index " + std::to_string(i));
    }
    m.data()[i] = values[i];
  }
  return m;
}

Matrix make_matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) {
      throw ShapeError("make_matrix: ragged rows");
    }
    values.insert(values.end(), row.begin(), row.end());
  }
  return make_matrix(r, c, values);
}

bool all_finite(const Matrix& a) { return a.allFinite(); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  return a * b;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

SymSpectrum sym_eig(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw ShapeError("sym_eig: matrix is not square");
  }
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("sym_eig: eigensolver did not converge");
  }
  // Eigen already returns eigenvalues in increasing order.
  return SymSpectrum{solver.eigenvalues(), solver.eigenvectors()};
}

Vector solve(const Matrix& a, const Vector& b) {
  if (a.rows() != a.cols()) {
    throw ShapeError("solve: matrix is not square");
  }
  if (a.rows() != b.size()) {
    throw ShapeError("solve: right-hand side length mismatch");
  }
  const double scale = a.cwiseAbs().maxCoeff();
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  const Eigen::MatrixXd& packed = lu.matrixLU();
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    if (!(std::abs(packed(i, i)) > 1e-12 * scale)) {
      throw SingularError("solve: matrix is singular to working precision (pivot " +
                          std::to_string(i) + ")");
    }
  }
  return lu.solve(b);
}

Vector singular_values(const Matrix& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  return svd.singularValues();
}

int numerical_rank(const Matrix& a, double rel_tol) {
  const Vector s = singular_values(a);
  if (s.size() == 0 || s(0) == 0.0) {
    return 0;
  }
  return numerical_rank(a, rel_tol, s(0));
}

int numerical_rank(const Matrix& a, double rel_tol, double reference_scale) {
  if (!(rel_tol > 0.0 && rel_tol < 1.0)) {
    throw std::invalid_argument("numerical_rank: rel_tol must lie in (0, 1)");
  }
  const Vector s = singular_values(a);
  const double cut = rel_tol * reference_scale;
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cut) {
      ++rank;
    }
  }
  return rank;
}

}  // namespace pcs
