#pragma once

// Assembly of the regularized multi-parametric QP from data and the control
// specification, plus the per-state implicit solve used as an oracle and
// runtime fallback.

#include <Eigen/Dense>

#include "eddpc/data.hpp"
#include "eddpc/errors.hpp"
#include "eddpc/numkit.hpp"
#include "eddpc/optkit.hpp"
#include "eddpc/predictor.hpp"

namespace eddpc::mpqp {

using data::PredictorData;
using numkit::Matrix;
using numkit::Vector;

/// Control specification: horizon, stage/terminal weights, the polyhedral
/// stage constraint C_x x + C_u u <= d, and the regularization weight gamma.
struct MpcSpec {
  Eigen::Index L = 0;
  Matrix Q;    // n x n, >= 0
  Matrix R;    // m x m, > 0
  Matrix P;    // n x n, >= 0
  Matrix C_x;  // n_c x n (zero rows allowed)
  Matrix C_u;  // n_c x m
  Vector d;    // n_c
  double gamma = 0.0;

  Eigen::Index n_c() const { return C_x.rows(); }

  void validate(Eigen::Index n, Eigen::Index m) const {
    if (L < 1) throw InvalidInputError("MpcSpec: horizon must be >= 1");
    if (gamma <= 0.0) throw InvalidInputError("MpcSpec: gamma must be > 0");
    if (Q.rows() != n || Q.cols() != n || P.rows() != n || P.cols() != n ||
        R.rows() != m || R.cols() != m)
      throw InvalidInputError("MpcSpec: weight dimensions mismatch");
    numkit::require_symmetric(Q, "MpcSpec.Q");
    numkit::require_symmetric(R, "MpcSpec.R");
    numkit::require_symmetric(P, "MpcSpec.P");
    if (!numkit::is_positive_definite(R))
      throw InvalidInputError("MpcSpec: R must be positive definite");
    if (C_x.rows() != C_u.rows() || C_x.rows() != d.size() ||
        (C_x.rows() > 0 && (C_x.cols() != n || C_u.cols() != m)))
      throw InvalidInputError("MpcSpec: constraint dimensions mismatch");
  }
};

struct Dims {
  Eigen::Index n = 0, m = 0, L = 0, N = 0, n_c = 0;
};

/// All condensed matrices of the regularized mp-QP in the stacked decision
/// variable G of dimension 2N.
struct MpQp {
  Matrix H_gamma;  // 2N x 2N, = 1/2 (X'QX + V'RV + gamma I), > 0
  Matrix Xi;       // (n_c L) x 2N
  Matrix Psi;      // (n_c L) x n
  Matrix Theta;    // 2n x 2N, blockdiag(X_past, X_past)
  Vector D;        // n_c L
  Matrix Xmat;     // nL x 2N, [X_future X_future]
  Matrix Vmat;     // mL x 2N, [U_block U_block]
  Dims dims;
  MpcSpec spec;
  std::uint64_t dataset_digest = 0;

  Eigen::Index g_dim() const { return 2 * dims.N; }
  Eigen::Index n_ineq() const { return dims.n_c * dims.L; }
};

inline std::uint64_t spec_digest(const MpcSpec& s) {
  std::uint64_t h = 14695981039346656037ull;
  const auto mix_bytes = [&h](const double* p, Eigen::Index count) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p);
    for (Eigen::Index i = 0; i < count * static_cast<Eigen::Index>(sizeof(double)); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  const double lval = static_cast<double>(s.L);
  mix_bytes(&lval, 1);
  mix_bytes(&s.gamma, 1);
  for (const Matrix* m : {&s.Q, &s.R, &s.P, &s.C_x, &s.C_u})
    if (m->size() > 0) mix_bytes(m->data(), m->size());
  if (s.d.size() > 0) mix_bytes(s.d.data(), s.d.size());
  return h;
}

/// Builds the condensed mp-QP: stage constraints applied at k = 0..L-1
/// (k = 0 through Psi on the measured state, k >= 1 through the predicted
/// states; the terminal predicted state is unconstrained).
inline MpQp assemble(const PredictorData& pd, const MpcSpec& spec,
                     std::uint64_t dataset_digest = 0) {
  const Eigen::Index n = pd.n();
  const Eigen::Index m = pd.m();
  spec.validate(n, m);
  if (spec.L != pd.L)
    throw InvalidInputError("assemble: spec horizon differs from data horizon");
  predictor::require_rank(pd);

  const Eigen::Index L = spec.L;
  const Eigen::Index N = pd.N;
  const Eigen::Index nc = spec.n_c();
  MpQp q;
  q.dims = {n, m, L, N, nc};
  q.spec = spec;
  q.dataset_digest = dataset_digest;

  q.Xmat = Matrix(n * L, 2 * N);
  q.Xmat << pd.X_future, pd.X_future;
  q.Vmat = Matrix(m * L, 2 * N);
  q.Vmat << pd.U_block, pd.U_block;

  Matrix Qblk = Matrix::Zero(n * L, n * L);
  for (Eigen::Index k = 0; k + 1 < L; ++k)
    Qblk.block(k * n, k * n, n, n) = spec.Q;
  Qblk.block((L - 1) * n, (L - 1) * n, n, n) = spec.P;
  Matrix Rblk = Matrix::Zero(m * L, m * L);
  for (Eigen::Index k = 0; k < L; ++k)
    Rblk.block(k * m, k * m, m, m) = spec.R;

  q.H_gamma = 0.5 * (q.Xmat.transpose() * Qblk * q.Xmat +
                     q.Vmat.transpose() * Rblk * q.Vmat +
                     spec.gamma * Matrix::Identity(2 * N, 2 * N));
  q.H_gamma = numkit::symmetrize(q.H_gamma);

  // Inequalities: row block k enforces C_x x~(k) + C_u u~(k) <= d. Block 0
  // reads the parameter through Psi; blocks 1..L-1 read the first L-1
  // entries of X~ = Xmat G.
  q.Xi = Matrix::Zero(nc * L, 2 * N);
  q.Psi = Matrix::Zero(nc * L, n);
  q.D = Vector(nc * L);
  for (Eigen::Index k = 0; k < L; ++k) {
    if (nc > 0) {
      q.Xi.middleRows(k * nc, nc) = spec.C_u * q.Vmat.middleRows(k * m, m);
      if (k == 0)
        q.Psi.topRows(nc) = spec.C_x;
      else
        q.Xi.middleRows(k * nc, nc) +=
            spec.C_x * q.Xmat.middleRows((k - 1) * n, n);
      q.D.segment(k * nc, nc) = spec.d;
    }
  }

  q.Theta = Matrix::Zero(2 * n, 2 * N);
  q.Theta.block(0, 0, n, N) = pd.X_past;
  q.Theta.block(n, N, n, N) = pd.X_past;
  return q;
}

struct ImplicitSolveResult {
  Vector U;   // mL
  Vector u0;  // m, first input of the sequence
  optkit::QpSolution sol;
};

/// Solves the regularized mp-QP at a fixed state x via the active-set QP.
inline ImplicitSolveResult implicit_solve(const MpQp& q, const Vector& x) {
  if (x.size() != q.dims.n)
    throw InvalidInputError("implicit_solve: state dimension mismatch");
  optkit::QpProblem p;
  p.H = 2.0 * q.H_gamma;  // solver minimizes 1/2 z'Hz, objective is G'H_gamma G
  p.A_eq = q.Theta;
  p.b_eq = Vector::Zero(2 * q.dims.n);
  p.b_eq.head(q.dims.n) = x;
  p.A_in = q.Xi;
  p.b_in = q.D - q.Psi * x;
  optkit::QpSolution sol = optkit::solve_qp(p);
  if (sol.status == optkit::QpStatus::Infeasible)
    throw InfeasibleStateError(
        "implicit_solve: state lies outside the feasible set");
  ImplicitSolveResult out;
  out.U = q.Vmat * sol.z;
  out.u0 = out.U.head(q.dims.m);
  out.sol = std::move(sol);
  return out;
}

}  // namespace eddpc::mpqp
