#pragma once

// Offline construction of the explicit PWA law: active-set enumeration,
// per-combination KKT algebra, region construction and pruning, simplified
// duplicate-law merging, serialization, and online evaluation.

#include <Eigen/Dense>
#include <algorithm>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eddpc/errors.hpp"
#include "eddpc/mpqp.hpp"
#include "eddpc/numkit.hpp"
#include "eddpc/optkit.hpp"

namespace eddpc::explicit_law {

using mpqp::MpQp;
using numkit::Matrix;
using numkit::Vector;

inline constexpr const char* kLawSchema = "eddpc.law/1";

/// One critical region: the polyhedron of states sharing an optimal active
/// set, with the affine input-sequence, multiplier, and predicted-state maps
/// valid on it.
struct CriticalRegion {
  std::vector<int> active_set;     // indices into the n_c*L inequality rows
  optkit::Polyhedron region;       // normalized rows
  Matrix gain_U;                   // mL x n
  Vector offset_U;                 // mL
  Matrix gain_lambda;              // (|act|+2n) x n, rows (lambda~; mu)
  Vector offset_lambda;
  Matrix gain_X;                   // nL x n, predicted-state map X~ = gain x + offset
  Vector offset_X;
  double chebyshev_radius = 0.0;
};

struct ExplicitLaw {
  std::vector<CriticalRegion> regions;  // deterministic enumeration order
  Eigen::Index n = 0, m = 0, L = 0;
  double gamma = 0.0;
  std::uint64_t dataset_digest = 0;
  std::uint64_t spec_digest = 0;
  int skipped_degenerate = 0;
  mpqp::MpcSpec spec;  // carried for certification and CLI round trips
};

enum class ActiveSetOutcome { Region, Degenerate, Empty };

struct ActiveSetResult {
  ActiveSetOutcome outcome = ActiveSetOutcome::Empty;
  std::optional<CriticalRegion> region;
};

/// Shared per-problem precomputation for the active-set algebra. Everything
/// an individual combination needs reduces to selections of the small
/// Gram-type products below, so enumeration never touches 2N-sized objects.
class ActiveSetSolver {
public:
  explicit ActiveSetSolver(const MpQp& q, double box_radius = 1e6)
      : q_(q), box_radius_(box_radius) {
    const Eigen::Index g = q.g_dim();
    const Eigen::Index nq = q.n_ineq();
    const Eigen::Index rows = nq + 2 * q.dims.n;
    Matrix C(rows, g);
    if (nq > 0) C.topRows(nq) = q.Xi;
    C.bottomRows(2 * q.dims.n) = q.Theta;
    Eigen::LLT<Matrix> llt(q.H_gamma);
    if (llt.info() != Eigen::Success)
      throw InvalidInputError("ActiveSetSolver: H_gamma is not positive definite");
    const Matrix HinvCt = llt.solve(C.transpose());  // g x rows
    gram_ = C * HinvCt;                              // rows x rows
    v_hc_ = q.Vmat * HinvCt;                         // mL x rows
    x_hc_ = q.Xmat * HinvCt;                         // nL x rows
    xi_hc_ = nq > 0 ? Matrix(q.Xi * HinvCt) : Matrix(0, rows);
  }

  /// KKT algebra for one combination of active inequality rows.
  ActiveSetResult solve(const std::vector<int>& act) const {
    const Eigen::Index n = q_.dims.n;
    const Eigen::Index nq = q_.n_ineq();
    const Eigen::Index a = static_cast<Eigen::Index>(act.size());
    for (int i : act)
      if (i < 0 || i >= nq)
        throw InvalidInputError("solve_active_set: active index out of range");

    // Selection: active inequality rows followed by all equality rows.
    std::vector<Eigen::Index> sel(act.begin(), act.end());
    for (Eigen::Index r = 0; r < 2 * n; ++r) sel.push_back(nq + r);
    const Eigen::Index s = a + 2 * n;

    Matrix phi_gram(s, s);  // Phi H^-1 Phi'
    for (Eigen::Index i = 0; i < s; ++i)
      for (Eigen::Index j = 0; j < s; ++j)
        phi_gram(i, j) = gram_(sel[static_cast<size_t>(i)], sel[static_cast<size_t>(j)]);
    phi_gram = numkit::symmetrize(phi_gram);

    // Row-rank deficiency of Phi shows up as a (near-)singular Gram matrix.
    Eigen::SelfAdjointEigenSolver<Matrix> es(phi_gram);
    const double ev_max = es.eigenvalues().maxCoeff();
    if (es.eigenvalues().minCoeff() <= 1e-10 * std::max(ev_max, 1e-300))
      return {ActiveSetOutcome::Degenerate, std::nullopt};
    const Matrix upsilon = es.eigenvectors() *
                           es.eigenvalues().cwiseInverse().asDiagonal() *
                           es.eigenvectors().transpose();
    if (!upsilon.allFinite())
      throw SolverFailureError("solve_active_set: Upsilon not finite");

    // S~ = [-Psi_act; I; 0], W~ = [D_act; 0].
    Matrix s_tilde = Matrix::Zero(s, n);
    Vector w_tilde = Vector::Zero(s);
    for (Eigen::Index k = 0; k < a; ++k) {
      s_tilde.row(k) = -q_.Psi.row(act[static_cast<size_t>(k)]);
      w_tilde(k) = q_.D(act[static_cast<size_t>(k)]);
    }
    s_tilde.block(a, 0, n, n) = Matrix::Identity(n, n);

    CriticalRegion cr;
    cr.active_set = act;
    std::sort(cr.active_set.begin(), cr.active_set.end());
    cr.gain_lambda = -(upsilon * s_tilde);
    cr.offset_lambda = -(upsilon * w_tilde);

    const auto select_cols = [&](const Matrix& full) {
      Matrix out(full.rows(), s);
      for (Eigen::Index j = 0; j < s; ++j)
        out.col(j) = full.col(sel[static_cast<size_t>(j)]);
      return out;
    };
    const Matrix vu = select_cols(v_hc_) * upsilon;
    cr.gain_U = vu * s_tilde;
    cr.offset_U = vu * w_tilde;
    const Matrix xu = select_cols(x_hc_) * upsilon;
    cr.gain_X = xu * s_tilde;
    cr.offset_X = xu * w_tilde;

    // Region of validity: multiplier non-negativity on the active rows plus
    // primal feasibility of the inactive rows (which see G_i(x) through the
    // same Upsilon map).
    std::vector<Eigen::Index> inact;
    for (Eigen::Index r = 0; r < nq; ++r)
      if (std::find(act.begin(), act.end(), static_cast<int>(r)) == act.end())
        inact.push_back(r);
    const Eigen::Index ni = static_cast<Eigen::Index>(inact.size());
    Matrix F(a + ni, n);
    Vector e(a + ni);
    F.topRows(a) = -cr.gain_lambda.topRows(a);
    e.head(a) = cr.offset_lambda.head(a);
    if (ni > 0) {
      Matrix psi_sel(ni, n);
      Vector d_sel(ni);
      for (Eigen::Index k = 0; k < ni; ++k) {
        psi_sel.row(k) = q_.Psi.row(inact[static_cast<size_t>(k)]);
        d_sel(k) = q_.D(inact[static_cast<size_t>(k)]);
      }
      Matrix b_map(ni, s);
      for (Eigen::Index k = 0; k < ni; ++k) {
        Matrix row(1, s);
        for (Eigen::Index j = 0; j < s; ++j)
          row(0, j) = xi_hc_(inact[static_cast<size_t>(k)], sel[static_cast<size_t>(j)]);
        b_map.row(k) = row * upsilon;
      }
      F.bottomRows(ni) = b_map * s_tilde + psi_sel;
      e.tail(ni) = d_sel - b_map * w_tilde;
    }

    // Drop trivial all-zero rows; a violated zero row means an empty region.
    std::vector<Eigen::Index> keep;
    for (Eigen::Index r = 0; r < F.rows(); ++r) {
      if (F.row(r).norm() <= 1e-14) {
        if (e(r) < -1e-12) return {ActiveSetOutcome::Empty, std::nullopt};
      } else {
        keep.push_back(r);
      }
    }
    Matrix Fk(static_cast<Eigen::Index>(keep.size()), n);
    Vector ek(static_cast<Eigen::Index>(keep.size()));
    for (size_t r = 0; r < keep.size(); ++r) {
      Fk.row(static_cast<Eigen::Index>(r)) = F.row(keep[r]);
      ek(static_cast<Eigen::Index>(r)) = e(keep[r]);
    }
    cr.region = optkit::Polyhedron(Fk, ek).normalized();

    const auto interior = optkit::chebyshev_interior(cr.region, box_radius_);
    if (!interior) return {ActiveSetOutcome::Empty, std::nullopt};
    cr.chebyshev_radius = interior->radius;
    return {ActiveSetOutcome::Region, std::move(cr)};
  }

private:
  const MpQp& q_;
  double box_radius_;
  Matrix gram_;   // [Xi; Theta] H^-1 [Xi; Theta]'
  Matrix v_hc_;   // Vmat H^-1 [Xi; Theta]'
  Matrix x_hc_;   // Xmat H^-1 [Xi; Theta]'
  Matrix xi_hc_;  // Xi   H^-1 [Xi; Theta]'
};

inline ActiveSetResult solve_active_set(const MpQp& q,
                                        const std::vector<int>& act) {
  return ActiveSetSolver(q).solve(act);
}

namespace detail {

// Subsets of {0..nq-1} in deterministic order: by size, then lexicographic.
template <typename Fn>
void for_each_subset(Eigen::Index nq, Eigen::Index cap, Fn&& fn) {
  std::vector<int> combo;
  const std::function<void(Eigen::Index, Eigen::Index)> rec =
      [&](Eigen::Index start, Eigen::Index want) {
        if (want == 0) {
          fn(combo);
          return;
        }
        for (Eigen::Index i = start; i <= nq - want; ++i) {
          combo.push_back(static_cast<int>(i));
          rec(i + 1, want - 1);
          combo.pop_back();
        }
      };
  for (Eigen::Index size = 0; size <= std::min(cap, nq); ++size) rec(0, size);
}

inline bool same_affine_map(const CriticalRegion& a, const CriticalRegion& b,
                            double tol = 1e-9) {
  return (a.gain_U - b.gain_U).cwiseAbs().maxCoeff() <= tol &&
         (a.offset_U - b.offset_U).cwiseAbs().maxCoeff() <= tol;
}

// max of c'x over {Ax <= b}.
struct LpMax {
  enum class Kind { Optimal, Unbounded, Empty } kind;
  double value = 0.0;
};

inline LpMax lp_max(const Vector& c, const Matrix& A, const Vector& b) {
  const auto r = optkit::solve_lp(-c, A, b);
  switch (r.status) {
    case optkit::LpStatus::Optimal:
      return {LpMax::Kind::Optimal, -r.objective};
    case optkit::LpStatus::Unbounded:
      return {LpMax::Kind::Unbounded, 0.0};
    case optkit::LpStatus::Infeasible:
      return {LpMax::Kind::Empty, 0.0};
    default:
      throw SolverFailureError("merge: LP failed");
  }
}

// True when every point of `inner` satisfies row (f, g); vacuously true for
// an empty `inner`.
inline bool row_valid_over(const optkit::Polyhedron& inner, const Vector& f,
                           double g, double tol) {
  const auto mx = lp_max(f, inner.F, inner.g);
  if (mx.kind == LpMax::Kind::Empty) return true;
  return mx.kind == LpMax::Kind::Optimal && mx.value <= g + tol;
}

}  // namespace detail

/// Algorithm-level merge simplification: fuses region pairs whose affine
/// input maps coincide and whose union is verifiably convex.
inline ExplicitLaw merge_duplicates(ExplicitLaw law) {
  const double tol = 1e-7;
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t i = 0; i < law.regions.size() && !changed; ++i) {
      for (size_t j = i + 1; j < law.regions.size() && !changed; ++j) {
        CriticalRegion& a = law.regions[i];
        CriticalRegion& b = law.regions[j];
        if (!detail::same_affine_map(a, b)) continue;

        // Union candidate: rows of each region that also hold on the other.
        Matrix F(a.region.rows() + b.region.rows(), a.region.dim());
        Vector e(F.rows());
        std::vector<std::pair<Vector, double>> dropped_a, dropped_b;
        Eigen::Index rows = 0;
        for (Eigen::Index r = 0; r < a.region.rows(); ++r) {
          if (detail::row_valid_over(b.region, a.region.F.row(r).transpose(),
                                     a.region.g(r), tol)) {
            F.row(rows) = a.region.F.row(r);
            e(rows++) = a.region.g(r);
          } else {
            dropped_a.emplace_back(a.region.F.row(r).transpose(), a.region.g(r));
          }
        }
        for (Eigen::Index r = 0; r < b.region.rows(); ++r) {
          if (detail::row_valid_over(a.region, b.region.F.row(r).transpose(),
                                     b.region.g(r), tol)) {
            F.row(rows) = b.region.F.row(r);
            e(rows++) = b.region.g(r);
          } else {
            dropped_b.emplace_back(b.region.F.row(r).transpose(), b.region.g(r));
          }
        }
        optkit::Polyhedron uni(F.topRows(rows), e.head(rows));

        // The union is convex iff the part of `uni` beyond each dropped row
        // stays inside the other region: check by LP on every dropped row.
        const auto covered = [&](const std::vector<std::pair<Vector, double>>& dropped,
                                 const optkit::Polyhedron& other) {
          for (const auto& [f, g] : dropped) {
            Matrix Fc(uni.rows() + 1, uni.dim());
            Vector ec(uni.rows() + 1);
            Fc.topRows(uni.rows()) = uni.F;
            ec.head(uni.rows()) = uni.g;
            Fc.bottomRows(1) = -f.transpose();
            ec(uni.rows()) = -g;  // f'x >= g
            for (Eigen::Index r = 0; r < other.rows(); ++r) {
              const auto mx = detail::lp_max(other.F.row(r).transpose(), Fc, ec);
              if (mx.kind == detail::LpMax::Kind::Empty) break;  // nothing beyond the cut
              if (mx.kind != detail::LpMax::Kind::Optimal ||
                  mx.value > other.g(r) + tol)
                return false;
            }
          }
          return true;
        };
        if (!covered(dropped_a, b.region) || !covered(dropped_b, a.region))
          continue;

        CriticalRegion merged = a;
        merged.region = uni.normalized();
        const auto interior = optkit::chebyshev_interior(merged.region);
        merged.chebyshev_radius = interior ? interior->radius : 0.0;
        law.regions[i] = std::move(merged);
        law.regions.erase(law.regions.begin() + static_cast<long>(j));
        changed = true;
      }
    }
  }
  return law;
}

/// Full enumeration pass: deterministic enumeration of active-constraint
/// combinations, region construction, degenerate-set skipping, and optional
/// duplicate merging.
inline ExplicitLaw build_explicit_law(const MpQp& q,
                                      std::optional<Eigen::Index> cap = {},
                                      bool merge = true) {
  const Eigen::Index nq = q.n_ineq();
  const Eigen::Index hard_cap = std::min(nq, q.g_dim() - 2 * q.dims.n);
  const Eigen::Index use_cap = cap.has_value() ? std::min(*cap, hard_cap) : hard_cap;
  ExplicitLaw law;
  law.n = q.dims.n;
  law.m = q.dims.m;
  law.L = q.dims.L;
  law.gamma = q.spec.gamma;
  law.dataset_digest = q.dataset_digest;
  law.spec_digest = mpqp::spec_digest(q.spec);
  law.spec = q.spec;

  const ActiveSetSolver solver(q);
  detail::for_each_subset(nq, use_cap, [&](const std::vector<int>& act) {
    ActiveSetResult r = solver.solve(act);
    if (r.outcome == ActiveSetOutcome::Region)
      law.regions.push_back(std::move(*r.region));
    else if (r.outcome == ActiveSetOutcome::Degenerate)
      ++law.skipped_degenerate;
  });
  return merge ? merge_duplicates(std::move(law)) : law;
}

struct Evaluation {
  Vector u0;
  Vector U;
  int region_id = -1;
};

/// First-match point location; nullopt when no region contains x.
inline std::optional<Evaluation> evaluate(const ExplicitLaw& law,
                                          const Vector& x, double tol = 1e-9) {
  if (x.size() != law.n)
    throw InvalidInputError("evaluate: state dimension mismatch");
  for (size_t i = 0; i < law.regions.size(); ++i) {
    const CriticalRegion& cr = law.regions[i];
    if (cr.region.contains(x, tol)) {
      Evaluation ev;
      ev.U = cr.gain_U * x + cr.offset_U;
      ev.u0 = ev.U.head(law.m);
      ev.region_id = static_cast<int>(i);
      return ev;
    }
  }
  return std::nullopt;
}

// --- serialization -----------------------------------------------------------

namespace detail {

inline nlohmann::json mat_to_json(const Matrix& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> flat;
  flat.reserve(static_cast<size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  j["data"] = flat;
  return j;
}

inline Matrix mat_from_json(const nlohmann::json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const auto flat = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols)
    throw SchemaError("matrix data length mismatch");
  Matrix m(rows, cols);
  size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[k++];
  return m;
}

inline nlohmann::json vec_to_json(const Vector& v) {
  return mat_to_json(Matrix(v));
}

inline Vector vec_from_json(const nlohmann::json& j) {
  const Matrix m = mat_from_json(j);
  if (m.cols() > 1) throw SchemaError("expected a vector");
  return m.col(0).eval();
}

}  // namespace detail

inline nlohmann::json law_to_json(const ExplicitLaw& law) {
  nlohmann::json j;
  j["schema"] = kLawSchema;
  j["n"] = law.n;
  j["m"] = law.m;
  j["L"] = law.L;
  j["gamma"] = law.gamma;
  j["dataset_digest"] = law.dataset_digest;
  j["spec_digest"] = law.spec_digest;
  j["skipped_degenerate"] = law.skipped_degenerate;
  j["spec"] = {{"L", law.spec.L},
               {"gamma", law.spec.gamma},
               {"Q", detail::mat_to_json(law.spec.Q)},
               {"R", detail::mat_to_json(law.spec.R)},
               {"P", detail::mat_to_json(law.spec.P)},
               {"C_x", detail::mat_to_json(law.spec.C_x)},
               {"C_u", detail::mat_to_json(law.spec.C_u)},
               {"d", detail::vec_to_json(law.spec.d)}};
  j["regions"] = nlohmann::json::array();
  for (const auto& cr : law.regions) {
    nlohmann::json r;
    r["active_set"] = cr.active_set;
    r["F"] = detail::mat_to_json(cr.region.F);
    r["e"] = detail::vec_to_json(cr.region.g);
    r["gain_U"] = detail::mat_to_json(cr.gain_U);
    r["offset_U"] = detail::vec_to_json(cr.offset_U);
    r["gain_lambda"] = detail::mat_to_json(cr.gain_lambda);
    r["offset_lambda"] = detail::vec_to_json(cr.offset_lambda);
    r["gain_X"] = detail::mat_to_json(cr.gain_X);
    r["offset_X"] = detail::vec_to_json(cr.offset_X);
    r["chebyshev_radius"] = cr.chebyshev_radius;
    j["regions"].push_back(std::move(r));
  }
  return j;
}

inline ExplicitLaw law_from_json(const nlohmann::json& j) {
  if (!j.contains("schema") || !j.at("schema").is_string())
    throw SchemaError("law file: missing schema tag");
  if (j.at("schema").get<std::string>() != kLawSchema)
    throw SchemaError("law file: unsupported schema version '" +
                      j.at("schema").get<std::string>() + "'");
  ExplicitLaw law;
  law.n = j.at("n").get<Eigen::Index>();
  law.m = j.at("m").get<Eigen::Index>();
  law.L = j.at("L").get<Eigen::Index>();
  law.gamma = j.at("gamma").get<double>();
  law.dataset_digest = j.at("dataset_digest").get<std::uint64_t>();
  law.spec_digest = j.at("spec_digest").get<std::uint64_t>();
  law.skipped_degenerate = j.at("skipped_degenerate").get<int>();
  const auto& s = j.at("spec");
  law.spec.L = s.at("L").get<Eigen::Index>();
  law.spec.gamma = s.at("gamma").get<double>();
  law.spec.Q = detail::mat_from_json(s.at("Q"));
  law.spec.R = detail::mat_from_json(s.at("R"));
  law.spec.P = detail::mat_from_json(s.at("P"));
  law.spec.C_x = detail::mat_from_json(s.at("C_x"));
  law.spec.C_u = detail::mat_from_json(s.at("C_u"));
  law.spec.d = detail::vec_from_json(s.at("d"));
  for (const auto& r : j.at("regions")) {
    CriticalRegion cr;
    cr.active_set = r.at("active_set").get<std::vector<int>>();
    cr.region = optkit::Polyhedron(detail::mat_from_json(r.at("F")),
                                   detail::vec_from_json(r.at("e")));
    cr.gain_U = detail::mat_from_json(r.at("gain_U"));
    cr.offset_U = detail::vec_from_json(r.at("offset_U"));
    cr.gain_lambda = detail::mat_from_json(r.at("gain_lambda"));
    cr.offset_lambda = detail::vec_from_json(r.at("offset_lambda"));
    cr.gain_X = detail::mat_from_json(r.at("gain_X"));
    cr.offset_X = detail::vec_from_json(r.at("offset_X"));
    cr.chebyshev_radius = r.at("chebyshev_radius").get<double>();
    law.regions.push_back(std::move(cr));
  }
  return law;
}

inline void write_law(const ExplicitLaw& law, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InvalidInputError("write_law: cannot open " + path);
  f << law_to_json(law).dump(1) << "\n";
}

inline ExplicitLaw read_law(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("read_law: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("read_law: ") + e.what());
  }
  try {
    return law_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("read_law: ") + e.what());
  }
}

}  // namespace eddpc::explicit_law
