// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances are pinned here and never loosened to fit observations.

#include <algorithm>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "eddpc/data.hpp"
#include "eddpc/explicit_law.hpp"
#include "eddpc/mpqp.hpp"
#include "eddpc/numkit.hpp"
#include "eddpc/optkit.hpp"
#include "eddpc/predictor.hpp"
#include "eddpc/sim.hpp"
#include "eddpc/stability.hpp"

using eddpc::numkit::Matrix;
using eddpc::numkit::Vector;
namespace dt = eddpc::data;
namespace el = eddpc::explicit_law;
namespace mq = eddpc::mpqp;
namespace ok = eddpc::optkit;
namespace pr = eddpc::predictor;
namespace sm = eddpc::sim;
namespace st = eddpc::stability;

namespace {

int g_failures = 0;

void report(int id, const char* title, bool pass, const std::string& detail) {
  std::printf("criterion %2d [%s]: %s (%s)\n", id, title, pass ? "PASS" : "FAIL",
              detail.c_str());
  if (!pass) ++g_failures;
}

mq::MpcSpec benchmark_spec(double gamma, const Matrix& P) {
  mq::MpcSpec s;
  s.L = 2;
  s.Q = Matrix::Identity(2, 2);
  s.P = P;
  s.R = 0.01 * Matrix::Identity(1, 1);
  s.gamma = gamma;
  s.C_x = Matrix::Zero(2, 2);
  s.C_u = Matrix(2, 1);
  s.C_u << 1.0, -1.0;
  s.d = Vector(2);
  s.d << 2.0, 2.0;
  return s;
}

mq::MpQp benchmark_qp(double gamma, std::optional<double> snr,
                      std::uint64_t seed) {
  const auto ds = sm::collect_open_loop(sm::benchmark_system(), 100, -5.0, 5.0,
                                        {snr, seed});
  const Matrix P = st::terminal_weight(dt::build_predictor_data(ds, 1),
                                       Matrix::Identity(2, 2));
  return mq::assemble(dt::build_predictor_data(ds, 2), benchmark_spec(gamma, P),
                      dt::digest(ds));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : v[v.size() / 2];
}

// Model-based MPC oracle: condensed QP in the input sequence U built from the
// true system matrices, same weights and constraints as the benchmark spec.
Vector model_mpc_input(const pr::ModelOracle& mo, const mq::MpcSpec& s,
                       const Vector& x) {
  const Eigen::Index L = s.L, m = 1, n = 2;
  Matrix Qblk = Matrix::Zero(n * L, n * L);
  for (Eigen::Index k = 0; k + 1 < L; ++k)
    Qblk.block(n * k, n * k, n, n) = s.Q;
  Qblk.bottomRightCorner(n, n) = s.P;
  Matrix Rblk = Matrix::Zero(m * L, m * L);
  for (Eigen::Index k = 0; k < L; ++k) Rblk.block(m * k, m * k, m, m) = s.R;

  ok::QpProblem p;
  p.H = mo.Gamma.transpose() * Qblk * mo.Gamma + Rblk;
  p.q = mo.Gamma.transpose() * Qblk * (mo.xi * x);
  p.A_in = Matrix(2 * L, L);
  p.b_in = Vector(2 * L);
  p.A_in.setZero();
  for (Eigen::Index k = 0; k < L; ++k) {
    p.A_in(2 * k, k) = 1.0;
    p.b_in(2 * k) = s.d(0);
    p.A_in(2 * k + 1, k) = -1.0;
    p.b_in(2 * k + 1) = s.d(1);
  }
  const auto sol = ok::solve_qp(p);
  if (sol.status != ok::QpStatus::Optimal)
    throw eddpc::SolverFailureError("model MPC oracle failed");
  return sol.z.head(m);
}

}  // namespace

int main() {
  const auto sys = sm::benchmark_system();
  std::mt19937_64 gen(2026);
  std::uniform_real_distribution<double> ux(-3.0, 3.0), uu(-2.0, 2.0),
      ur(-1.0, 1.0);

  // --- 1: open-loop predictor exactness on noiseless data ------------------
  {
    const auto ds =
        sm::collect_open_loop(sys, 100, -5.0, 5.0, {std::nullopt, 101});
    const auto pd = dt::build_predictor_data(ds, 2);
    const auto mo = pr::model_oracle(sys.A, sys.B, 2);
    double worst = 0.0;
    bool pass = true;
    for (int t = 0; t < 200; ++t) {
      Vector x(2), U(2);
      x << ux(gen), ux(gen);
      U << uu(gen), uu(gen);
      const double err =
          (pr::openloop_predict(pd, x, U) - (mo.xi * x + mo.Gamma * U)).norm();
      const double tol = 1e-7 * (1.0 + x.norm() + U.norm());
      worst = std::max(worst, err);
      pass = pass && err <= tol;
    }
    report(1, "open-loop predictor exactness", pass,
           "max error " + std::to_string(worst) + " over 200 samples, tol 1e-7 scaled");
  }

  // --- 2: closed-loop predictor exactness -----------------------------------
  {
    const auto ds =
        sm::collect_open_loop(sys, 100, -5.0, 5.0, {std::nullopt, 102});
    const auto pd = dt::build_predictor_data(ds, 2);
    bool pass = true;
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      Matrix K(2, 2);  // sequence-level gain: U = K x + f
      K << ur(gen), ur(gen), ur(gen), ur(gen);
      Vector f(2);
      f << ur(gen), ur(gen);
      Vector x(2);
      x << ux(gen), ux(gen);
      const auto g = pr::closedloop_gains(pd, K, f);
      const auto cp = pr::closedloop_predict(pd, g, x);
      const Vector U = K * x + f;
      const double err =
          std::max((cp.X_tilde - pr::openloop_predict(pd, x, U)).norm(),
                   (cp.U - U).norm());
      worst = std::max(worst, err);
      pass = pass && err <= 1e-7;
    }
    report(2, "closed-loop predictor exactness", pass,
           "max mismatch " + std::to_string(worst) + ", tol 1e-7, 50 gain draws");
  }

  // --- 3: explicit law equals the implicit QP -------------------------------
  const auto q_bench = benchmark_qp(10.0, 20.0, 103);
  const auto law_bench = el::build_explicit_law(q_bench);
  {
    bool pass = true;
    int covered = 0;
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
      Vector x(2);
      x << ux(gen), ux(gen);
      const auto ev = el::evaluate(law_bench, x);
      if (!ev) continue;
      ++covered;
      const double err = (ev->u0 - mq::implicit_solve(q_bench, x).u0).norm();
      worst = std::max(worst, err);
      pass = pass && err <= 1e-6;
    }
    pass = pass && covered > 900;
    report(3, "explicit equals implicit", pass,
           std::to_string(covered) + "/1000 states covered, max gap " +
               std::to_string(worst) + ", tol 1e-6");
  }

  // --- 4: model-based limit at vanishing regularization ---------------------
  {
    const auto ds =
        sm::collect_open_loop(sys, 100, -5.0, 5.0, {std::nullopt, 104});
    const Matrix P_true =
        eddpc::numkit::solve_discrete_lyapunov(sys.A, Matrix::Identity(2, 2));
    const auto spec = benchmark_spec(1e-6, P_true);
    const auto q = mq::assemble(dt::build_predictor_data(ds, 2), spec);
    const auto law = el::build_explicit_law(q);
    const auto mo = pr::model_oracle(sys.A, sys.B, 2);
    double worst = 0.0;
    for (int i = 0; i <= 20; ++i) {
      for (int j = 0; j <= 20; ++j) {
        Vector x(2);
        x << -3.0 + 0.3 * i, -3.0 + 0.3 * j;
        const auto ev = el::evaluate(law, x);
        const Vector u_dd = ev ? ev->u0 : mq::implicit_solve(q, x).u0;
        worst = std::max(worst,
                         (u_dd - model_mpc_input(mo, spec, x)).cwiseAbs().maxCoeff());
      }
    }
    report(4, "model-based limit", worst <= 1e-3,
           "max |u_dd - u_mpc| = " + std::to_string(worst) + " on 21x21 grid, tol 1e-3");
  }

  // --- 5: stability certification success rate ------------------------------
  {
    int verified = 0;
    bool margins_ok = true;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto q = benchmark_qp(10.0, 20.0, 500 + seed);
      const auto law = el::build_explicit_law(q);
      const auto clm = st::extract_closed_loop(law);
      const auto cert = st::certify(clm, ok::LmiMode::Common);
      if (cert.kind == ok::LmiCertificate::Kind::Common) {
        ++verified;
        margins_ok = margins_ok &&
                     ok::lmi_verified(cert.P[0], clm.A_cl, cert.delta, cert.eps);
      }
    }
    report(5, "stability certification rate", verified >= 18 && margins_ok,
           std::to_string(verified) + "/20 certified (need >= 18), margins re-verified: " +
               (margins_ok ? "yes" : "no"));
  }

  // --- 6: closed-loop regulation ---------------------------------------------
  {
    Vector x0(2);
    x0 << 1.0, 1.0;
    const auto traj =
        sm::simulate_closed_loop(sys, law_bench, q_bench, x0, 50, {});
    bool inputs_ok = true;
    for (const auto& u : traj.inputs)
      inputs_ok = inputs_ok && u.cwiseAbs().maxCoeff() <= 2.0 + 1e-9;
    const double xf = traj.states.back().norm();
    report(6, "closed-loop regulation", inputs_ok && xf <= 1e-2,
           "inputs in [-2,2]: " + std::string(inputs_ok ? "yes" : "no") +
               ", ||x(50)|| = " + std::to_string(xf) + " (tol 1e-2)");
  }

  // --- 7 & 8: gamma sweep shape and degenerate-gamma flag --------------------
  auto cfg = sm::benchmark_sweep_config();
  cfg.gammas = {1e-6, 1e-4, 1e-2, 1.0, 10.0, 100.0, 1e4, 1e6};
  cfg.runs = 30;
  cfg.master_seed = 7;
  const auto rows = sm::gamma_sweep(cfg);
  {
    std::vector<double> med;
    for (const double g : cfg.gammas) {
      std::vector<double> js;
      for (const auto& r : rows)
        if (r.gamma == g && std::isfinite(r.J)) js.push_back(r.J);
      med.push_back(median(js));
    }
    const double best = *std::min_element(med.begin(), med.end());
    const bool ushape =
        med.front() >= 1.2 * best && med.back() >= 1.2 * best;
    report(7, "gamma sweep reproduction", best <= 18.0 && ushape,
           "best median J = " + std::to_string(best) +
               " (need <= 18); extremes " + std::to_string(med.front()) + " / " +
               std::to_string(med.back()) + " vs 1.2x best");
  }
  {
    bool pass = true;
    std::string counts;
    for (const double g : {1e-6, 1e-4}) {
      int flagged = 0;
      for (const auto& r : rows)
        if (r.gamma == g && r.flags.find("zero-input") != std::string::npos)
          ++flagged;
      pass = pass && flagged > cfg.runs / 2;
      counts += std::to_string(flagged) + "/" + std::to_string(cfg.runs) + " ";
    }
    report(8, "degenerate-gamma flag", pass,
           "zero-input flagged runs at gamma {1e-6, 1e-4}: " + counts +
               "(need majority)");
  }

  // --- 9: averaging shifts the optimal gamma downwards ------------------------
  {
    auto argmin_med = [&](int n_exp) {
      auto c = cfg;
      c.n_experiments = n_exp;
      c.master_seed = 9;
      const auto rs = sm::gamma_sweep(c);
      std::vector<double> arg;
      for (int run = 0; run < c.runs; ++run) {
        double best_j = std::numeric_limits<double>::infinity(), best_g = 0.0;
        for (const auto& r : rs)
          if (r.run == run && std::isfinite(r.J) && r.J < best_j) {
            best_j = r.J;
            best_g = r.gamma;
          }
        arg.push_back(best_g);
      }
      return median(arg);
    };
    const double g1 = argmin_med(1);
    const double g100 = argmin_med(100);
    report(9, "averaging effect", g100 <= g1,
           "median argmin gamma: N=1 -> " + std::to_string(g1) +
               ", N=100 -> " + std::to_string(g100) + " (need N=100 <= N=1)");
  }

  // --- 10: data-driven terminal weight ---------------------------------------
  {
    const auto ds =
        sm::collect_open_loop(sys, 100, -5.0, 5.0, {std::nullopt, 110});
    const Matrix Q = Matrix::Identity(2, 2);
    const Matrix P = st::terminal_weight(dt::build_predictor_data(ds, 1), Q);
    const Matrix P_true = eddpc::numkit::solve_discrete_lyapunov(sys.A, Q);
    const double gap = (P - P_true).cwiseAbs().maxCoeff();
    const double residual =
        (sys.A.transpose() * P * sys.A - P + Q).cwiseAbs().maxCoeff();
    report(10, "terminal weight from data", gap <= 1e-6 && residual <= 1e-8,
           "|P - P_true| = " + std::to_string(gap) + " (tol 1e-6), residual " +
               std::to_string(residual) + " (tol 1e-8)");
  }

  // --- 11: altitude demo ------------------------------------------------------
  {
    bool pass = true;
    std::string detail;
    for (const auto dir : {sm::Maneuver::Takeoff, sm::Maneuver::Landing}) {
      const bool takeoff = dir == sm::Maneuver::Takeoff;
      const auto res = sm::altitude_demo(dir, 2.0, {.seed = 11});
      double min_alt = std::numeric_limits<double>::infinity();
      for (size_t t = 0; t < res.traj.states.size(); ++t)
        min_alt = std::min(min_alt, res.altitude(t));
      bool u_ok = true;
      for (const auto& u : res.traj.inputs)
        u_ok = u_ok && u(0) >= sm::kAltitudeUmin - 1e-9 &&
               u(0) <= sm::kAltitudeUmax + 1e-9;
      const double target = takeoff ? 2.0 : 0.0;
      const double terminal_err =
          std::abs(res.altitude(res.traj.states.size() - 1) - target);
      pass = pass && min_alt >= -1e-9 && u_ok && terminal_err <= 0.05;
      detail += std::string(takeoff ? "takeoff" : "landing") + ": min alt " +
                std::to_string(min_alt) + ", terminal err " +
                std::to_string(terminal_err) + " (tol 0.05); ";
    }
    report(11, "altitude takeoff and landing", pass, detail);
  }

  // --- 12: property suites ----------------------------------------------------
  {
    bool pass = true;
    // Penrose conditions on random matrices.
    for (int t = 0; t < 20 && pass; ++t) {
      Matrix a(3, 2 + t % 3);
      for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = ux(gen);
      const Matrix p = eddpc::numkit::pinv(a);
      pass = (a * p * a - a).cwiseAbs().maxCoeff() < 1e-9 &&
             (p * a * p - p).cwiseAbs().maxCoeff() < 1e-9;
    }
    // Hankel sliding-window consistency.
    {
      std::vector<Vector> sig;
      for (int t = 0; t < 10; ++t) sig.push_back(Vector::Constant(2, t));
      const Matrix h = dt::build_hankel(sig, 3);
      for (Eigen::Index c = 0; c < h.cols() && pass; ++c)
        for (Eigen::Index b = 0; b < 3; ++b)
          pass = pass && h(2 * b, c) == static_cast<double>(c + b);
    }
    // Region continuity across facets of the benchmark law.
    {
      // Draw point pairs landing in different regions, bisect to the shared
      // facet, and compare the law just on either side of it.
      int crossings = 0;
      for (int t = 0; t < 400 && pass; ++t) {
        Vector xa(2), xb(2);
        xa << ux(gen), ux(gen);
        xb << ux(gen), ux(gen);
        auto a = el::evaluate(law_bench, xa);
        auto b = el::evaluate(law_bench, xb);
        if (!a || !b || a->region_id == b->region_id) continue;
        for (int it = 0; it < 60; ++it) {
          const Vector mid = 0.5 * (xa + xb);
          const auto m = el::evaluate(law_bench, mid);
          if (m && m->region_id == a->region_id)
            xa = mid;
          else
            xb = mid;
        }
        const auto fa = el::evaluate(law_bench, xa);
        const auto fb = el::evaluate(law_bench, xb);
        if (!fa || !fb || fa->region_id == fb->region_id) continue;
        ++crossings;
        pass = pass && (fa->u0 - fb->u0).norm() < 1e-4;
      }
      pass = pass && crossings >= 10;
    }
    // Certificate re-verification after a serialization round trip.
    {
      const auto clm = st::extract_closed_loop(law_bench);
      const auto cert = st::certify(clm, ok::LmiMode::Common);
      const auto back = st::certificate_from_json(st::certificate_to_json(cert));
      pass = pass && back.kind == ok::LmiCertificate::Kind::Common &&
             ok::lmi_verified(back.P[0], clm.A_cl, back.delta, back.eps);
    }
    // Determinism under seeds.
    {
      const auto a = sm::collect_open_loop(sys, 40, -5.0, 5.0, {20.0, 3});
      const auto b = sm::collect_open_loop(sys, 40, -5.0, 5.0, {20.0, 3});
      pass = pass && dt::digest(a) == dt::digest(b);
      const auto l2 = el::build_explicit_law(q_bench);
      pass = pass && l2.regions.size() == law_bench.regions.size();
    }
    report(12, "property suites", pass,
           "Penrose, Hankel windows, facet continuity, certificate round trip, determinism");
  }

  std::printf("%s: %d/12 criteria passed\n", g_failures == 0 ? "OK" : "FAILURES",
              12 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
