#pragma once

// Data-based multi-step predictors built from the cached pseudo-inverse of
// the stacked data matrix, plus the model-based prediction matrices used as
// a verification oracle.

#include <Eigen/Dense>

#include "eddpc/data.hpp"
#include "eddpc/errors.hpp"
#include "eddpc/numkit.hpp"

namespace eddpc::predictor {

using data::PredictorData;
using numkit::Matrix;
using numkit::Vector;

/// Gains of the closed-loop predictor. The defining equalities
/// [X_past; U_block] G_K = [I; K] and [X_past; U_block] G_f = [0; f]
/// hold exactly on noiseless data only; `residual` records how far off
/// they are on the data at hand.
struct ClosedLoopGains {
  Matrix G_K;  // N x n
  Vector G_f;  // N
  double residual = 0.0;
};

/// Exact prediction matrices from a known model: xi stacks A..A^L and Gamma
/// is the lower block-triangular impulse-response matrix.
struct ModelOracle {
  Matrix A;
  Matrix B;
  Matrix xi;     // nL x n
  Matrix Gamma;  // nL x mL
};

inline void require_rank(const PredictorData& pd) {
  const auto rc = data::check_rank_condition(pd, pd.n(), pd.m());
  if (!rc.satisfied)
    throw PredictorUndefinedError(
        "predictor: stacked data matrix has rank " + std::to_string(rc.rank) +
        ", required " + std::to_string(rc.required));
}

/// Open-loop multi-step prediction X~ = X_future pinv([X_past; U_block]) [x; U].
inline Vector openloop_predict(const PredictorData& pd, const Vector& x,
                               const Vector& U) {
  require_rank(pd);
  if (x.size() != pd.n() || U.size() != pd.m() * pd.L)
    throw InvalidInputError("openloop_predict: dimension mismatch");
  Vector v(x.size() + U.size());
  v << x, U;
  return pd.X_future * (pd.stacked_pinv * v);
}

inline ClosedLoopGains closedloop_gains(const PredictorData& pd,
                                        const Matrix& K, const Vector& f) {
  require_rank(pd);
  const Eigen::Index n = pd.n();
  const Eigen::Index mL = pd.m() * pd.L;
  if (K.rows() != mL || K.cols() != n || f.size() != mL)
    throw InvalidInputError("closedloop_gains: dimension mismatch");
  Matrix rhs_K(n + mL, n);
  rhs_K.topRows(n) = Matrix::Identity(n, n);
  rhs_K.bottomRows(mL) = K;
  Vector rhs_f = Vector::Zero(n + mL);
  rhs_f.tail(mL) = f;
  ClosedLoopGains g;
  g.G_K = pd.stacked_pinv * rhs_K;
  g.G_f = pd.stacked_pinv * rhs_f;
  const Matrix stacked = pd.stacked();
  const double scale = 1.0 + rhs_K.norm() + rhs_f.norm();
  g.residual = ((stacked * g.G_K - rhs_K).norm() +
                (stacked * g.G_f - rhs_f).norm()) /
               scale;
  return g;
}

struct ClosedLoopPrediction {
  Vector X_tilde;  // nL
  Vector U;        // mL
};

inline ClosedLoopPrediction closedloop_predict(const PredictorData& pd,
                                               const ClosedLoopGains& g,
                                               const Vector& x) {
  if (x.size() != pd.n())
    throw InvalidInputError("closedloop_predict: dimension mismatch");
  const Vector alpha = g.G_K * x + g.G_f;
  return {pd.X_future * alpha, pd.U_block * alpha};
}

/// Builds xi = [A; ...; A^L] and the block lower-triangular Gamma with
/// (i, j) block A^{i-j} B, so that X~ = xi x + Gamma U for the true model.
inline ModelOracle model_oracle(const Matrix& A, const Matrix& B,
                                Eigen::Index L) {
  if (A.rows() != A.cols() || B.rows() != A.rows() || L < 1)
    throw InvalidInputError("model_oracle: dimension mismatch");
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  ModelOracle o;
  o.A = A;
  o.B = B;
  o.xi = Matrix(n * L, n);
  o.Gamma = Matrix::Zero(n * L, m * L);
  Matrix Apow = Matrix::Identity(n, n);
  std::vector<Matrix> powers;  // A^0 .. A^{L-1}
  for (Eigen::Index k = 0; k < L; ++k) {
    powers.push_back(Apow);
    Apow = A * Apow;            // after loop body: A^{k+1}
    o.xi.block(k * n, 0, n, n) = Apow;
  }
  for (Eigen::Index i = 0; i < L; ++i)
    for (Eigen::Index j = 0; j <= i; ++j)
      o.Gamma.block(i * n, j * m, n, m) = powers[static_cast<size_t>(i - j)] * B;
  return o;
}

}  // namespace eddpc::predictor
