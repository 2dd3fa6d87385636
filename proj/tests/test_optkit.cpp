#include <doctest.h>

#include <random>
#include <vector>

#include "eddpc/numkit.hpp"
#include "eddpc/optkit.hpp"

using eddpc::numkit::Matrix;
using eddpc::numkit::Vector;
namespace ok = eddpc::optkit;

TEST_CASE("LP solves a box-corner problem") {
  // [DERIVED] min -x - y over the unit square: optimum (1, 1), objective -2.
  Matrix a(4, 2);
  a << 1, 0, -1, 0, 0, 1, 0, -1;
  Vector b(4);
  b << 1, 0, 1, 0;
  Vector c(2);
  c << -1, -1;
  const auto r = ok::solve_lp(c, a, b);
  REQUIRE(r.status == ok::LpStatus::Optimal);
  CHECK(r.objective == doctest::Approx(-2.0).epsilon(1e-10));
  CHECK((r.x - Vector::Ones(2)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("LP detects infeasibility and unboundedness") {
  Matrix a(2, 1);
  a << 1, -1;
  Vector b(2);
  b << 0, -1;  // x <= 0 and x >= 1
  Vector c = Vector::Ones(1);
  CHECK(ok::solve_lp(c, a, b).status == ok::LpStatus::Infeasible);

  Matrix a2(1, 1);
  a2 << 1;  // only x <= 1; minimizing x is unbounded below
  CHECK(ok::solve_lp(c, a2, Vector::Ones(1)).status == ok::LpStatus::Unbounded);
}

TEST_CASE("LP with free-variable optimum off the positive orthant") {
  // [DERIVED] min x s.t. -x <= 3 gives x = -3.
  Matrix a(1, 1);
  a << -1;
  Vector b(1);
  b << 3;
  const auto r = ok::solve_lp(Vector::Ones(1), a, b);
  REQUIRE(r.status == ok::LpStatus::Optimal);
  CHECK(r.x(0) == doctest::Approx(-3.0).epsilon(1e-10));
}

TEST_CASE("Chebyshev interior of a box and of shifted halfspaces") {
  Matrix a(4, 2);
  a << 1, 0, -1, 0, 0, 1, 0, -1;
  const auto ball = ok::chebyshev_interior({a, Vector::Ones(4)});
  REQUIRE(ball.has_value());
  CHECK(ball->radius == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(ball->center.cwiseAbs().maxCoeff() < 1e-9);
  CHECK_FALSE(ball->unbounded);

  // Empty: x <= 0 and x >= 1.
  Matrix e(2, 1);
  e << 1, -1;
  Vector ge(2);
  ge << 0, -1;
  CHECK_FALSE(ok::chebyshev_interior({e, ge}).has_value());

  // Single halfspace: interior ball grows until the safety box clamps it.
  Matrix h(1, 2);
  h << 1, 0;
  const auto half = ok::chebyshev_interior({h, Vector::Zero(1)});
  REQUIRE(half.has_value());
  CHECK(half->unbounded);
}

TEST_CASE("Chebyshev interior honours zero rows") {
  Matrix a(2, 1);
  a << 0, 1;  // first row reads 0 <= g_0
  Vector g(2);
  g << -1, 5;
  CHECK_FALSE(ok::chebyshev_interior({a, g}).has_value());
  g(0) = 1;
  CHECK(ok::chebyshev_interior({a, g}).has_value());
}

TEST_CASE("QP matches hand-solved instances") {
  // [DERIVED] min 1/2 z'z - 1'z: unconstrained optimum z = (1, 1).
  ok::QpProblem p;
  p.H = Matrix::Identity(2, 2);
  p.q = -Vector::Ones(2);
  auto s = ok::solve_qp(p);
  REQUIRE(s.status == ok::QpStatus::Optimal);
  CHECK((s.z - Vector::Ones(2)).cwiseAbs().maxCoeff() < 1e-10);

  // [DERIVED] adding z_1 <= 0 moves the optimum to (0, 1) with multiplier 1.
  p.A_in = Matrix::Zero(1, 2);
  p.A_in(0, 0) = 1.0;
  p.b_in = Vector::Zero(1);
  s = ok::solve_qp(p);
  REQUIRE(s.status == ok::QpStatus::Optimal);
  CHECK(s.z(0) == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(s.z(1) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(s.lambda(0) == doctest::Approx(1.0).epsilon(1e-8));

  // [DERIVED] equality z_1 + z_2 = 1 with H = I, q = 0: z = (1/2, 1/2).
  ok::QpProblem pe;
  pe.H = Matrix::Identity(2, 2);
  pe.A_eq = Matrix::Ones(1, 2);
  pe.b_eq = Vector::Ones(1);
  s = ok::solve_qp(pe);
  REQUIRE(s.status == ok::QpStatus::Optimal);
  CHECK((s.z - 0.5 * Vector::Ones(2)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("QP reports infeasible constraint systems") {
  ok::QpProblem p;
  p.H = Matrix::Identity(1, 1);
  p.A_in = Matrix(2, 1);
  p.A_in << 1, -1;
  p.b_in = Vector(2);
  p.b_in << 0, -1;
  CHECK(ok::solve_qp(p).status == ok::QpStatus::Infeasible);
}

namespace {

// Independent oracle: brute-force enumeration of active sets via KKT algebra.
std::optional<Vector> qp_oracle(const ok::QpProblem& p) {
  const Eigen::Index n = p.H.rows();
  const Eigen::Index mi = p.A_in.rows();
  std::optional<Vector> best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1u << mi); ++mask) {
    std::vector<Eigen::Index> act;
    for (Eigen::Index i = 0; i < mi; ++i)
      if (mask & (1u << i)) act.push_back(i);
    const Eigen::Index a = static_cast<Eigen::Index>(act.size());
    Matrix kkt(n + a, n + a);
    kkt.setZero();
    kkt.topLeftCorner(n, n) = p.H;
    Vector rhs(n + a);
    rhs.head(n) = -p.q;
    for (Eigen::Index k = 0; k < a; ++k) {
      kkt.block(n + k, 0, 1, n) = p.A_in.row(act[static_cast<size_t>(k)]);
      kkt.block(0, n + k, n, 1) =
          p.A_in.row(act[static_cast<size_t>(k)]).transpose();
      rhs(n + k) = p.b_in(act[static_cast<size_t>(k)]);
    }
    Eigen::FullPivLU<Matrix> lu(kkt);
    if (!lu.isInvertible()) continue;
    const Vector sol = lu.solve(rhs);
    const Vector z = sol.head(n);
    if (((p.A_in * z - p.b_in).array() > 1e-8).any()) continue;
    if ((sol.tail(a).array() < -1e-8).any()) continue;
    const double obj = 0.5 * z.dot(p.H * z) + p.q.dot(z);
    if (obj < best_obj) {
      best_obj = obj;
      best = z;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("QP agrees with a brute-force KKT enumeration oracle") {
  std::mt19937_64 gen(23);
  std::normal_distribution<double> g(0.0, 1.0);
  int solved = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(gen() % 2);
    Matrix raw(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) raw(i, j) = g(gen);
    ok::QpProblem p;
    p.H = raw * raw.transpose() + 0.1 * Matrix::Identity(n, n);
    p.q = Vector(n);
    for (Eigen::Index i = 0; i < n; ++i) p.q(i) = g(gen);
    p.A_in = Matrix(4, n);
    p.b_in = Vector(4);
    for (Eigen::Index i = 0; i < 4; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) p.A_in(i, j) = g(gen);
      p.b_in(i) = std::abs(g(gen)) + 0.1;  // z = 0 stays feasible
    }
    const auto oracle = qp_oracle(p);
    REQUIRE(oracle.has_value());
    const auto s = ok::solve_qp(p);
    REQUIRE(s.status == ok::QpStatus::Optimal);
    CHECK((s.z - *oracle).cwiseAbs().maxCoeff() < 1e-6);
    ++solved;
  }
  CHECK(solved == 200);
}

TEST_CASE("QP KKT residual is reported small at the optimum") {
  ok::QpProblem p;
  p.H = Matrix::Identity(3, 3);
  p.q = -Vector::Ones(3);
  p.A_in = Matrix::Identity(3, 3);
  p.b_in = 0.5 * Vector::Ones(3);
  const auto s = ok::solve_qp(p);
  REQUIRE(s.status == ok::QpStatus::Optimal);
  CHECK(s.kkt_residual < 1e-8);
  CHECK((s.z - 0.5 * Vector::Ones(3)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("LMI feasibility finds verified certificates for stable families") {
  const Matrix a1 = 0.5 * Matrix::Identity(2, 2);
  Matrix a2(2, 2);
  a2 << 0.8, 0.1, 0.0, 0.7;
  const auto cert = ok::lmi_feasibility({a1, a2}, ok::LmiMode::Common);
  REQUIRE(cert.kind == ok::LmiCertificate::Kind::Common);
  REQUIRE(cert.P.size() == 1);
  CHECK(ok::lmi_verified(cert.P[0], {a1, a2}, cert.delta, cert.eps));
}

TEST_CASE("LMI feasibility fails honestly on an unstable mode") {
  Matrix bad(2, 2);
  bad << 1.2, 0.0, 0.0, 0.3;
  const auto cert =
      ok::lmi_feasibility({0.5 * Matrix::Identity(2, 2), bad},
                          ok::LmiMode::Common, 1e-6, 1e-8, 500);
  CHECK(cert.kind == ok::LmiCertificate::Kind::NotFound);
}

TEST_CASE("piecewise LMI certificate carries one block per mode") {
  const Matrix a1 = 0.3 * Matrix::Identity(2, 2);
  Matrix a2(2, 2);
  a2 << 0.0, 0.9, 0.0, 0.0;
  const auto cert = ok::lmi_feasibility({a1, a2}, ok::LmiMode::Piecewise);
  REQUIRE(cert.kind == ok::LmiCertificate::Kind::Piecewise);
  REQUIRE(cert.P.size() == 2);
  for (const auto& p : cert.P)
    CHECK(eddpc::numkit::is_positive_definite(p));
}

TEST_CASE("verification margins reject a Lyapunov candidate that is too flat") {
  const Matrix a = 0.999999 * Matrix::Identity(2, 2);
  // Decrement is ~ -2e-6 P; with eps = 1e-2 the margin eps/2 must fail.
  CHECK_FALSE(ok::lmi_verified(Matrix::Identity(2, 2), {a}, 1e-6, 1e-2));
  CHECK(ok::lmi_verified(Matrix::Identity(2, 2), {a}, 1e-6, 1e-7));
}
