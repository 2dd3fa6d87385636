#pragma once

// Feasibility and optimization oracles: dense LP (polyhedron interior),
// strictly convex QP via a primal active-set method, and LMI feasibility
// for the Lyapunov stability tests. All solvers are self-contained and
// sized for small dense problems.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "eddpc/errors.hpp"
#include "eddpc/numkit.hpp"

namespace eddpc::optkit {

using numkit::Matrix;
using numkit::Vector;

// ---------------------------------------------------------------------------
// Polyhedron {x : Fx <= g}
// ---------------------------------------------------------------------------

struct Polyhedron {
  Matrix F;
  Vector g;

  Polyhedron() = default;
  Polyhedron(Matrix f, Vector gg) : F(std::move(f)), g(std::move(gg)) {
    if (F.rows() != g.size())
      throw InvalidInputError("Polyhedron: F and g row counts disagree");
  }

  Eigen::Index rows() const { return F.rows(); }
  Eigen::Index dim() const { return F.cols(); }

  /// Rows rescaled to unit norm (zero rows left untouched).
  Polyhedron normalized() const {
    Polyhedron p = *this;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const double nrm = p.F.row(i).norm();
      if (nrm > 0.0) {
        p.F.row(i) /= nrm;
        p.g(i) /= nrm;
      }
    }
    return p;
  }

  bool contains(const Vector& x, double tol = 1e-9) const {
    return ((F * x - g).array() <= tol).all();
  }
};

// ---------------------------------------------------------------------------
// Dense two-phase tableau simplex:  min c'x  s.t.  Ax <= b,  x free
// ---------------------------------------------------------------------------

enum class LpStatus { Optimal, Infeasible, Unbounded, MaxIterations };

struct LpResult {
  LpStatus status = LpStatus::MaxIterations;
  Vector x;
  double objective = 0.0;
  int iterations = 0;
};

namespace detail {

// Bland's-rule pivoting on a canonical tableau. Rows 0..m-1 hold the
// constraints, row m the reduced costs; column nv holds the rhs.
// `allowed` masks columns that may enter the basis.
inline LpStatus simplex_pivot(Matrix& tab, std::vector<int>& basis,
                              const std::vector<bool>& allowed, int& iters,
                              int max_iters) {
  const Eigen::Index m = tab.rows() - 1;
  const Eigen::Index nv = tab.cols() - 1;
  const double tol = 1e-9;
  while (iters++ < max_iters) {
    // Entering column: smallest index with negative reduced cost.
    Eigen::Index enter = -1;
    for (Eigen::Index j = 0; j < nv; ++j) {
      if (allowed[static_cast<size_t>(j)] && tab(m, j) < -tol) {
        enter = j;
        break;
      }
    }
    if (enter < 0) return LpStatus::Optimal;
    // Ratio test; Bland tie-break on the leaving basis index.
    Eigen::Index leave = -1;
    double best = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (tab(i, enter) > tol) {
        const double ratio = tab(i, nv) / tab(i, enter);
        if (leave < 0 || ratio < best - tol ||
            (ratio < best + tol && basis[static_cast<size_t>(i)] <
                                       basis[static_cast<size_t>(leave)])) {
          best = ratio;
          leave = i;
        }
      }
    }
    if (leave < 0) return LpStatus::Unbounded;
    // Pivot.
    tab.row(leave) /= tab(leave, enter);
    for (Eigen::Index i = 0; i <= m; ++i) {
      if (i != leave && std::abs(tab(i, enter)) > 0.0)
        tab.row(i) -= tab(i, enter) * tab.row(leave);
    }
    basis[static_cast<size_t>(leave)] = static_cast<int>(enter);
  }
  return LpStatus::MaxIterations;
}

}  // namespace detail

inline LpResult solve_lp(const Vector& c, const Matrix& A, const Vector& b) {
  const Eigen::Index n = c.size();
  const Eigen::Index m = A.rows();
  if (A.cols() != n || b.size() != m)
    throw InvalidInputError("solve_lp: dimension mismatch");
  if (m == 0)
    return {c.isZero(0.0) ? LpStatus::Optimal : LpStatus::Unbounded,
            Vector::Zero(n), 0.0, 0};

  // Free x split as xp - xm; slack per row; artificials where the slack
  // cannot serve as the initial basis column (negated rows).
  std::vector<Eigen::Index> art_rows;
  for (Eigen::Index i = 0; i < m; ++i)
    if (b(i) < 0.0) art_rows.push_back(i);
  const Eigen::Index na = static_cast<Eigen::Index>(art_rows.size());
  const Eigen::Index nv = 2 * n + m + na;

  Matrix tab = Matrix::Zero(m + 1, nv + 1);
  std::vector<int> basis(static_cast<size_t>(m), -1);
  Eigen::Index art = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double sgn = b(i) < 0.0 ? -1.0 : 1.0;
    tab.block(i, 0, 1, n) = sgn * A.row(i);
    tab.block(i, n, 1, n) = -sgn * A.row(i);
    tab(i, 2 * n + i) = sgn;  // slack
    tab(i, nv) = sgn * b(i);
    if (b(i) < 0.0) {
      tab(i, 2 * n + m + art) = 1.0;
      basis[static_cast<size_t>(i)] = static_cast<int>(2 * n + m + art);
      ++art;
    } else {
      basis[static_cast<size_t>(i)] = static_cast<int>(2 * n + i);
    }
  }

  const int max_iters = 200 * static_cast<int>(m + nv);
  int iters = 0;
  std::vector<bool> allowed(static_cast<size_t>(nv), true);

  if (na > 0) {
    // Phase 1: minimize the sum of artificials.
    for (Eigen::Index j = 2 * n + m; j < nv; ++j) tab(m, j) = 1.0;
    for (Eigen::Index i = 0; i < m; ++i)
      if (basis[static_cast<size_t>(i)] >= 2 * n + m) tab.row(m) -= tab.row(i);
    const LpStatus ph1 = detail::simplex_pivot(tab, basis, allowed, iters, max_iters);
    if (ph1 == LpStatus::MaxIterations) return {ph1, Vector::Zero(n), 0.0, iters};
    if (-tab(m, nv) > 1e-7) return {LpStatus::Infeasible, Vector::Zero(n), 0.0, iters};
    // Drive remaining artificials out of the basis where possible.
    for (Eigen::Index i = 0; i < m; ++i) {
      if (basis[static_cast<size_t>(i)] >= 2 * n + m) {
        for (Eigen::Index j = 0; j < 2 * n + m; ++j) {
          if (std::abs(tab(i, j)) > 1e-9) {
            tab.row(i) /= tab(i, j);
            for (Eigen::Index k = 0; k <= m; ++k)
              if (k != i && std::abs(tab(k, j)) > 0.0)
                tab.row(k) -= tab(k, j) * tab.row(i);
            basis[static_cast<size_t>(i)] = static_cast<int>(j);
            break;
          }
        }
      }
    }
    for (Eigen::Index j = 2 * n + m; j < nv; ++j) allowed[static_cast<size_t>(j)] = false;
  }

  // Phase 2: restore the real objective priced over the current basis.
  tab.row(m).setZero();
  for (Eigen::Index j = 0; j < n; ++j) {
    tab(m, j) = c(j);
    tab(m, n + j) = -c(j);
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    const int bj = basis[static_cast<size_t>(i)];
    if (bj >= 0 && std::abs(tab(m, bj)) > 0.0) tab.row(m) -= tab(m, bj) * tab.row(i);
  }
  const LpStatus ph2 = detail::simplex_pivot(tab, basis, allowed, iters, max_iters);

  Vector x = Vector::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const int bj = basis[static_cast<size_t>(i)];
    if (bj < n)
      x(bj) += tab(i, tab.cols() - 1);
    else if (bj < 2 * n)
      x(bj - n) -= tab(i, tab.cols() - 1);
  }
  return {ph2, x, c.dot(x), iters};
}

// ---------------------------------------------------------------------------
// Chebyshev interior point
// ---------------------------------------------------------------------------

struct ChebyshevInterior {
  Vector center;
  double radius = 0.0;
  bool unbounded = false;  // radius was clamped at the configured box radius
};

inline constexpr double kRadiusEps = 1e-9;

/// Largest ball inside the polyhedron, via the LP
///   max r  s.t.  F_i x + r ||F_i|| <= g_i,  |x_j| <= R,  r <= R.
/// Returns nullopt when the polyhedron is (numerically) empty.
inline std::optional<ChebyshevInterior> chebyshev_interior(
    const Polyhedron& p, double box_radius = 1e6) {
  const Eigen::Index n = p.dim();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double nrm = p.F.row(i).norm();
    if (nrm <= 0.0) {
      if (p.g(i) < -kRadiusEps) return std::nullopt;  // 0 <= g_i violated
    } else {
      keep.push_back(i);
    }
  }
  const Eigen::Index q = static_cast<Eigen::Index>(keep.size());
  Matrix A(q + 2 * n + 1, n + 1);
  Vector b(q + 2 * n + 1);
  A.setZero();
  for (Eigen::Index k = 0; k < q; ++k) {
    A.block(k, 0, 1, n) = p.F.row(keep[static_cast<size_t>(k)]);
    A(k, n) = p.F.row(keep[static_cast<size_t>(k)]).norm();
    b(k) = p.g(keep[static_cast<size_t>(k)]);
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    A(q + 2 * j, j) = 1.0;
    b(q + 2 * j) = box_radius;
    A(q + 2 * j + 1, j) = -1.0;
    b(q + 2 * j + 1) = box_radius;
  }
  A(q + 2 * n, n) = 1.0;
  b(q + 2 * n) = box_radius;

  Vector c = Vector::Zero(n + 1);
  c(n) = -1.0;
  const LpResult lp = solve_lp(c, A, b);
  if (lp.status != LpStatus::Optimal)
    throw SolverFailureError("chebyshev_interior: LP did not converge after " +
                             std::to_string(lp.iterations) + " iterations");
  const double r = lp.x(n);
  if (r < kRadiusEps) return std::nullopt;
  ChebyshevInterior out;
  out.center = lp.x.head(n);
  out.unbounded = r >= box_radius * (1.0 - 1e-9);
  out.radius = std::min(r, box_radius);
  return out;
}

// ---------------------------------------------------------------------------
// Dense convex QP:  min 1/2 z'Hz + q'z  s.t.  A_eq z = b_eq,  A_in z <= b_in
// (q is optional and absent in the mp-QP instances; the oracle paths use it)
// ---------------------------------------------------------------------------

struct QpProblem {
  Matrix H;
  Vector q;  // empty means zero
  Matrix A_eq;
  Vector b_eq;
  Matrix A_in;
  Vector b_in;
};

enum class QpStatus { Optimal, Infeasible, MaxIterations };

struct QpSolution {
  QpStatus status = QpStatus::MaxIterations;
  Vector z;
  Vector lambda;  // inequality multipliers (full length, zero when inactive)
  Vector mu;      // equality multipliers
  std::vector<int> active_set;
  double kkt_residual = 0.0;
  int iterations = 0;
};

namespace detail {

struct QpCore {
  const Matrix& H;
  const Vector& q;
  const Matrix& Ae;
  const Vector& be;
  const Matrix& Ai;
  const Vector& bi;

  // Primal active-set loop from a feasible starting point. The working set
  // holds inequality row indices; equalities are always enforced.
  QpSolution run(Vector z, std::vector<int> working, int max_iters) const {
    const Eigen::Index n = H.rows();
    const Eigen::Index me = Ae.rows();
    const Eigen::Index mi = Ai.rows();
    QpSolution sol;
    Vector multipliers;  // (mu; lambda_working)
    int iters = 0;
    while (iters++ < max_iters) {
      const Eigen::Index mw = me + static_cast<Eigen::Index>(working.size());
      Matrix kkt = Matrix::Zero(n + mw, n + mw);
      Vector rhs(n + mw);
      kkt.topLeftCorner(n, n) = H;
      rhs.head(n) = -q;
      if (me > 0) {
        kkt.block(n, 0, me, n) = Ae;
        kkt.block(0, n, n, me) = Ae.transpose();
        rhs.segment(n, me) = be;
      }
      for (size_t k = 0; k < working.size(); ++k) {
        const Eigen::Index r = n + me + static_cast<Eigen::Index>(k);
        kkt.block(r, 0, 1, n) = Ai.row(working[k]);
        kkt.block(0, r, n, 1) = Ai.row(working[k]).transpose();
        rhs(r) = bi(working[k]);
      }
      Vector sol_vec = kkt.partialPivLu().solve(rhs);
      if (!sol_vec.allFinite() ||
          (kkt * sol_vec - rhs).cwiseAbs().maxCoeff() >
              1e-7 * (1.0 + rhs.cwiseAbs().maxCoeff())) {
        sol_vec = kkt.fullPivLu().solve(rhs);
      }
      const Vector z_star = sol_vec.head(n);
      multipliers = sol_vec.tail(mw);
      const Vector p = z_star - z;

      if (p.cwiseAbs().maxCoeff() <= 1e-11 * (1.0 + z.cwiseAbs().maxCoeff())) {
        // Stationary on the working set; check inequality multiplier signs.
        int drop = -1;
        double most_negative = -1e-9;
        for (size_t k = 0; k < working.size(); ++k) {
          const double lam = multipliers(me + static_cast<Eigen::Index>(k));
          if (lam < most_negative) {
            most_negative = lam;
            drop = static_cast<int>(k);
          }
        }
        if (drop < 0) {
          sol.status = QpStatus::Optimal;
          sol.z = z;
          break;
        }
        working.erase(working.begin() + drop);
        continue;
      }

      // Step toward z_star, stopping at the first blocking constraint.
      double alpha = 1.0;
      int blocker = -1;
      for (Eigen::Index i = 0; i < mi; ++i) {
        if (std::find(working.begin(), working.end(), static_cast<int>(i)) !=
            working.end())
          continue;
        const double d = Ai.row(i).dot(p);
        if (d > 1e-12 * (1.0 + p.cwiseAbs().maxCoeff())) {
          const double gap = bi(i) - Ai.row(i).dot(z);
          const double a = std::max(gap, 0.0) / d;
          if (a < alpha) {
            alpha = a;
            blocker = static_cast<int>(i);
          }
        }
      }
      z += alpha * p;
      if (blocker >= 0) working.push_back(blocker);
    }
    sol.iterations = iters;
    if (sol.status != QpStatus::Optimal) {
      sol.status = QpStatus::MaxIterations;
      sol.z = z;
    }
    sol.mu = multipliers.head(me);
    sol.lambda = Vector::Zero(mi);
    for (size_t k = 0; k < working.size(); ++k)
      sol.lambda(working[k]) = multipliers(me + static_cast<Eigen::Index>(k));
    sol.active_set.assign(working.begin(), working.end());
    std::sort(sol.active_set.begin(), sol.active_set.end());
    // Stationarity + complementarity residual.
    Vector grad = H * z + q + Ai.transpose() * sol.lambda;
    if (me > 0) grad += Ae.transpose() * sol.mu;
    double res = grad.cwiseAbs().maxCoeff();
    if (mi > 0)
      res = std::max(
          res, (sol.lambda.array() * (Ai * z - bi).array()).abs().maxCoeff());
    sol.kkt_residual = res;
    return sol;
  }
};

}  // namespace detail

inline QpSolution solve_qp(const QpProblem& p) {
  const Eigen::Index n = p.H.rows();
  if (p.H.cols() != n) throw InvalidInputError("solve_qp: H must be square");
  numkit::require_symmetric(p.H, "solve_qp");
  const Vector q = p.q.size() > 0 ? p.q : Vector::Zero(n);
  if (q.size() != n) throw InvalidInputError("solve_qp: bad linear term size");
  const Matrix& Ae = p.A_eq;
  const Matrix& Ai = p.A_in;
  if ((Ae.rows() > 0 && Ae.cols() != n) || (Ai.rows() > 0 && Ai.cols() != n) ||
      Ae.rows() != p.b_eq.size() || Ai.rows() != p.b_in.size())
    throw InvalidInputError("solve_qp: constraint dimension mismatch");

  const int max_iters =
      10 * static_cast<int>(Ae.rows() + Ai.rows() + n) + 20;
  const detail::QpCore core{p.H, q, Ae, p.b_eq, Ai, p.b_in};

  // Equality-constrained optimum as the candidate start.
  Vector z0;
  {
    const Eigen::Index me = Ae.rows();
    Matrix kkt = Matrix::Zero(n + me, n + me);
    Vector rhs(n + me);
    kkt.topLeftCorner(n, n) = p.H;
    rhs.head(n) = -q;
    if (me > 0) {
      kkt.block(n, 0, me, n) = Ae;
      kkt.block(0, n, n, me) = Ae.transpose();
      rhs.segment(n, me) = p.b_eq;
    }
    z0 = kkt.fullPivLu().solve(rhs).head(n);
  }
  const double feas_tol =
      1e-9 * (1.0 + (p.b_in.size() > 0 ? p.b_in.cwiseAbs().maxCoeff() : 0.0));
  const bool feasible0 =
      Ai.rows() == 0 || ((Ai * z0 - p.b_in).array() <= feas_tol).all();

  if (!feasible0) {
    // Phase 1: minimize slack magnitudes from a trivially feasible point of
    // the lifted problem. The proximal term sigma/2 ||z - z0||^2 keeps the
    // lifted Hessian positive definite but biases z away from feasibility, so
    // shrink sigma until the residual violation clears the tolerance (or
    // stops improving, which indicates genuine infeasibility).
    const Eigen::Index mi = Ai.rows();
    const Eigen::Index nn = n + mi;
    const double h_scale = 1.0 + p.H.cwiseAbs().maxCoeff();
    const double tol = 1e-7 * (1.0 + p.b_in.cwiseAbs().maxCoeff());
    Matrix Ae1 = Matrix::Zero(Ae.rows(), nn);
    Ae1.leftCols(n) = Ae;
    Matrix Ai1 = Matrix::Zero(2 * mi, nn);
    Vector bi1(2 * mi);
    Ai1.topLeftCorner(mi, n) = Ai;
    Ai1.topRightCorner(mi, mi) = -Matrix::Identity(mi, mi);
    bi1.head(mi) = p.b_in;
    Ai1.bottomRightCorner(mi, mi) = -Matrix::Identity(mi, mi);
    bi1.tail(mi).setZero();

    double worst = std::numeric_limits<double>::infinity();
    QpStatus last_status = QpStatus::MaxIterations;
    int iters_spent = 0;
    Vector z_ref = z0;
    for (const double rel_sigma : {1e-4, 1e-8, 1e-12}) {
      const double sigma = rel_sigma * h_scale;
      Matrix H1 = Matrix::Zero(nn, nn);
      H1.topLeftCorner(n, n) = sigma * Matrix::Identity(n, n);
      H1.bottomRightCorner(mi, mi) = Matrix::Identity(mi, mi);
      Vector q1 = Vector::Zero(nn);
      q1.head(n) = -sigma * z_ref;
      Vector start(nn);
      start.head(n) = z_ref;
      start.tail(mi) = (Ai * z_ref - p.b_in).cwiseMax(0.0).array() + 1.0;
      const detail::QpCore ph1{H1, q1, Ae1, p.b_eq, Ai1, bi1};
      const QpSolution s1 = ph1.run(
          start, {}, 10 * static_cast<int>(2 * mi + Ae.rows() + nn) + 20);
      iters_spent += s1.iterations;
      last_status = s1.status;
      z_ref = s1.z.head(n);
      worst = mi > 0 ? (Ai * z_ref - p.b_in).maxCoeff() : 0.0;
      if (s1.status == QpStatus::Optimal && worst <= tol) break;
    }
    z0 = z_ref;
    if (last_status != QpStatus::Optimal || worst > tol) {
      QpSolution out;
      out.status = QpStatus::Infeasible;
      out.z = z0;
      out.iterations = iters_spent;
      out.lambda = Vector::Zero(Ai.rows());
      out.mu = Vector::Zero(Ae.rows());
      return out;
    }
  }

  return core.run(z0, {}, max_iters);
}

// ---------------------------------------------------------------------------
// LMI feasibility for switched-linear Lyapunov certificates
// ---------------------------------------------------------------------------

enum class LmiMode { Common, Piecewise };

struct LmiCertificate {
  enum class Kind { Common, Piecewise, NotFound };
  Kind kind = Kind::NotFound;
  std::vector<Matrix> P;  // one matrix (common) or one per mode (piecewise)
  double delta = 0.0;
  double eps = 0.0;
  double best_violation = 0.0;  // smallest constraint violation encountered
  int iterations = 0;
};

/// Independent eigenvalue re-verification with halved margins:
/// lambda_min(P) >= delta/2 and lambda_max(A_i'P A_i - P) <= -eps/2.
inline bool lmi_verified(const Matrix& P, const std::vector<Matrix>& A_list,
                         double delta, double eps) {
  if (numkit::smallest_eigenvalue(P) < delta / 2.0) return false;
  for (const auto& A : A_list) {
    const Matrix dec = A.transpose() * P * A - P;
    if (numkit::largest_eigenvalue(dec) > -eps / 2.0) return false;
  }
  return true;
}

namespace detail {

inline double lmi_violation(const Matrix& P, const std::vector<Matrix>& A_list,
                            double delta, double eps) {
  double v = delta / 2.0 - numkit::smallest_eigenvalue(P);
  for (const auto& A : A_list)
    v = std::max(v, numkit::largest_eigenvalue(A.transpose() * P * A - P) +
                        eps / 2.0);
  return std::max(v, 0.0);
}

inline Matrix proj_psd(const Matrix& M, double floor_ev) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(numkit::symmetrize(M));
  Vector ev = es.eigenvalues().cwiseMax(floor_ev);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// Strictly feasible candidates can always be rescaled into the margins,
// since both LMIs are homogeneous in P.
inline bool try_rescaled(const Matrix& P, const std::vector<Matrix>& A_list,
                         double delta, double eps, Matrix& out) {
  const double pmin = numkit::smallest_eigenvalue(P);
  if (pmin <= 0.0) return false;
  double worst_dec = -std::numeric_limits<double>::infinity();
  for (const auto& A : A_list)
    worst_dec =
        std::max(worst_dec, numkit::largest_eigenvalue(A.transpose() * P * A - P));
  if (worst_dec >= 0.0) return false;
  const double scale =
      std::max({1.0, delta / pmin, eps / (-worst_dec)});
  out = scale * P;
  return lmi_verified(out, A_list, delta, eps);
}

}  // namespace detail

/// Searches for a common Lyapunov matrix P (mode Common) with
///   P >= delta I,  A_i' P A_i - P <= -eps I  for all i,
/// or a per-mode family (mode Piecewise) satisfying the cross-coupled
/// decrement for all (i, j). NotFound is not a proof of instability.
inline LmiCertificate lmi_feasibility(const std::vector<Matrix>& A_list,
                                      LmiMode mode, double delta = 1e-6,
                                      double eps = 1e-8, int budget = 5000) {
  if (A_list.empty()) throw InvalidInputError("lmi_feasibility: empty A list");
  if (delta <= 0.0 || eps <= 0.0)
    throw InvalidInputError("lmi_feasibility: margins must be positive");
  const Eigen::Index n = A_list.front().rows();
  for (const auto& A : A_list)
    if (A.rows() != n || A.cols() != n)
      throw InvalidInputError("lmi_feasibility: dimension mismatch in A list");

  LmiCertificate cert;
  cert.delta = delta;
  cert.eps = eps;
  cert.best_violation = std::numeric_limits<double>::infinity();

  const auto accept = [&](const Matrix& P, int iters) {
    cert.kind = mode == LmiMode::Common ? LmiCertificate::Kind::Common
                                        : LmiCertificate::Kind::Piecewise;
    const size_t copies = mode == LmiMode::Common ? 1 : A_list.size();
    cert.P.assign(copies, P);
    cert.best_violation = 0.0;
    cert.iterations = iters;
  };

  // Cheap deterministic candidates first: identity, then summed Lyapunov
  // solutions of the individual modes (exact for a single stable matrix).
  {
    Matrix scaled;
    if (detail::try_rescaled(Matrix::Identity(n, n), A_list, delta, eps, scaled)) {
      accept(scaled, 0);
      return cert;
    }
    bool all_stable = true;
    Matrix sum = Matrix::Zero(n, n);
    for (const auto& A : A_list) {
      if (numkit::spectral_radius(A) >= 1.0) {
        all_stable = false;
        break;
      }
      sum += numkit::solve_discrete_lyapunov(A, Matrix::Identity(n, n));
    }
    if (all_stable && detail::try_rescaled(sum, A_list, delta, eps, scaled)) {
      accept(scaled, 0);
      return cert;
    }
  }

  // Alternating projections on the lifted variable (P, S_i) with the affine
  // coupling S_i = P - A_i' P A_i - eps I and PSD cone constraints. The
  // affine step is a least-squares solve in vec(P).
  const Eigen::Index n2 = n * n;
  const size_t M = A_list.size();
  std::vector<Matrix> kron_ops(M);
  Matrix normal = Matrix::Identity(n2, n2);
  for (size_t k = 0; k < M; ++k) {
    const Matrix at = A_list[k].transpose();
    Matrix kr(n2, n2);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        kr.block(i * n, j * n, n, n) = at(i, j) * at;
    kron_ops[k] = Matrix::Identity(n2, n2) - kr;  // vec(P - A'PA)
    normal += kron_ops[k].transpose() * kron_ops[k];
  }
  const Eigen::LDLT<Matrix> normal_fact(normal);
  const auto vec = [n](const Matrix& m) {
    Vector v(m.size());
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      v.segment(j * n, n) = m.col(j);
    return v;
  };
  const auto unvec = [n](const Vector& v) {
    Matrix m(n, n);
    for (Eigen::Index j = 0; j < n; ++j) m.col(j) = v.segment(j * n, n);
    return m;
  };
  const Vector vec_eps_id = vec(eps * Matrix::Identity(n, n));

  Matrix P = Matrix::Identity(n, n);
  std::vector<Matrix> S(M);
  for (size_t k = 0; k < M; ++k)
    S[k] = detail::proj_psd(
        P - A_list[k].transpose() * P * A_list[k] -
            eps * Matrix::Identity(n, n),
        0.0);

  for (int it = 1; it <= budget; ++it) {
    // Affine projection.
    Vector rhs = vec(P);
    for (size_t k = 0; k < M; ++k)
      rhs += kron_ops[k].transpose() * (vec(S[k]) + vec_eps_id);
    const Matrix P_aff = numkit::symmetrize(unvec(normal_fact.solve(rhs)));

    Matrix scaled;
    if (detail::try_rescaled(P_aff, A_list, delta, eps, scaled)) {
      accept(scaled, it);
      return cert;
    }
    cert.best_violation = std::min(
        cert.best_violation, detail::lmi_violation(P_aff, A_list, delta, eps));
    cert.iterations = it;

    // Cone projections.
    P = detail::proj_psd(P_aff, delta);
    for (size_t k = 0; k < M; ++k)
      S[k] = detail::proj_psd(P_aff - A_list[k].transpose() * P_aff * A_list[k] -
                                  eps * Matrix::Identity(n, n),
                              0.0);
  }
  cert.kind = LmiCertificate::Kind::NotFound;
  return cert;
}

}  // namespace eddpc::optkit
