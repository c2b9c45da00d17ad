#pragma once

#include <Eigen/Dense>

#include "ensloss/error.hpp"

namespace ensloss::numerics {

struct SymEigen {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // orthonormal columns matching `values`
};

/// Eigendecomposition m = U diag(values) U^T of a symmetric matrix.
inline SymEigen sym_eigen(const Eigen::MatrixXd& m, double symmetry_tol = 1e-10) {
  ensloss::detail::require(m.rows() == m.cols(), "sym_eigen: matrix must be square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > symmetry_tol * scale) {
    throw DomainError("sym_eigen: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("sym_eigen: eigen solver did not converge");
  }
  SymEigen out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

}  // namespace ensloss::numerics
