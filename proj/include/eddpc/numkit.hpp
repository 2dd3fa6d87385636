#pragma once

// Dense linear-algebra kernels shared by every other module. Thin,
// contract-checked wrappers around Eigen decompositions.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

#include "eddpc/errors.hpp"

namespace eddpc::numkit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline bool is_finite(const Matrix& m) { return m.allFinite(); }

/// Symmetry to within 1e-12 * (1 + max|M|).
inline bool is_symmetric(const Matrix& m) {
  if (m.rows() != m.cols()) return false;
  const double scale = 1.0 + m.cwiseAbs().maxCoeff();
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
}

inline void require_symmetric(const Matrix& m, const char* who) {
  if (!is_symmetric(m))
    throw InvalidInputError(std::string(who) + ": matrix is not symmetric");
}

inline Matrix symmetrize(const Matrix& m) {
  return 0.5 * (m + m.transpose());
}

/// Moore-Penrose pseudo-inverse by SVD with relative truncation.
/// tol = 0 selects the usual machine-epsilon threshold scaled by the
/// largest singular value and matrix size.
inline Matrix pinv(const Matrix& m, double tol = 0.0) {
  if (!is_finite(m)) throw InvalidInputError("pinv: non-finite input");
  if (tol < 0.0) throw InvalidInputError("pinv: negative tolerance");
  if (m.size() == 0) return Matrix(m.cols(), m.rows());
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  const double cut =
      tol > 0.0 ? tol
                : std::numeric_limits<double>::epsilon() *
                      static_cast<double>(std::max(m.rows(), m.cols())) * smax;
  Vector inv_sv = Vector::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cut) inv_sv(i) = 1.0 / sv(i);
  return svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
}

/// Numerical rank: count of singular values above rel_tol * largest.
inline Eigen::Index numerical_rank(const Matrix& m, double rel_tol = 1e-10) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  const double cut = rel_tol * sv(0);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cut) ++r;
  return r;
}

/// True iff M - margin*I admits a Cholesky factorization.
inline bool is_positive_definite(const Matrix& m, double margin = 0.0) {
  require_symmetric(m, "is_positive_definite");
  Matrix shifted = m - margin * Matrix::Identity(m.rows(), m.cols());
  Eigen::LLT<Matrix> llt(shifted);
  return llt.info() == Eigen::Success;
}

inline double spectral_radius(const Matrix& a) {
  if (a.rows() != a.cols())
    throw InvalidInputError("spectral_radius: matrix must be square");
  if (a.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(a, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double smallest_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  return es.eigenvalues().minCoeff();
}

inline double largest_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  return es.eigenvalues().maxCoeff();
}

/// Solves A'PA - P + Q = 0 through the Kronecker-vectorized linear system
/// (I - A' (x) A') vec(P) = vec(Q). Requires spectral radius of A < 1.
inline Matrix solve_discrete_lyapunov(const Matrix& a, const Matrix& q) {
  if (a.rows() != a.cols())
    throw InvalidInputError("solve_discrete_lyapunov: A must be square");
  require_symmetric(q, "solve_discrete_lyapunov");
  if (a.rows() != q.rows())
    throw InvalidInputError("solve_discrete_lyapunov: dimension mismatch");
  if (spectral_radius(a) >= 1.0)
    throw UnstableMatrixError(
        "solve_discrete_lyapunov: spectral radius of A is >= 1");
  const Eigen::Index n = a.rows();
  const Matrix at = a.transpose();
  Matrix kron(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      kron.block(i * n, j * n, n, n) = at(i, j) * at;
  Matrix lhs = Matrix::Identity(n * n, n * n) - kron;
  Vector vec_q(n * n);
  for (Eigen::Index j = 0; j < n; ++j) vec_q.segment(j * n, n) = q.col(j);
  Vector vec_p = lhs.fullPivLu().solve(vec_q);
  Matrix p(n, n);
  for (Eigen::Index j = 0; j < n; ++j) p.col(j) = vec_p.segment(j * n, n);
  return symmetrize(p);
}

}  // namespace eddpc::numkit
