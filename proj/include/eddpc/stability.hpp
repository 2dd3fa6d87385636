#pragma once

// Learned closed-loop transition matrices per region, the pre-deployment
// Lyapunov stability tests, and the data-driven terminal weight.

#include <Eigen/Dense>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eddpc/data.hpp"
#include "eddpc/errors.hpp"
#include "eddpc/explicit_law.hpp"
#include "eddpc/numkit.hpp"
#include "eddpc/optkit.hpp"

namespace eddpc::stability {

using explicit_law::ExplicitLaw;
using numkit::Matrix;
using numkit::Vector;

/// One-step-ahead closed-loop model per region: x+ = A_cl x + f_cl.
struct ClosedLoopModel {
  std::vector<Matrix> A_cl;
  std::vector<Vector> f_cl;
};

using StabilityCertificate = optkit::LmiCertificate;

/// Slices the learned one-step closed-loop model out of each region's
/// stored multi-step predicted-state map.
inline ClosedLoopModel extract_closed_loop(const ExplicitLaw& law) {
  ClosedLoopModel clm;
  const Eigen::Index n = law.n;
  for (const auto& cr : law.regions) {
    if (cr.gain_X.rows() < n || cr.offset_X.size() < n)
      throw InvalidInputError(
          "extract_closed_loop: region lacks the predicted-state map");
    clm.A_cl.push_back(cr.gain_X.topRows(n));
    clm.f_cl.push_back(cr.offset_X.head(n));
  }
  return clm;
}

/// Runs the Lyapunov LMI feasibility search over the learned transition
/// matrices. The affine offsets are reported by the model but not tested.
inline StabilityCertificate certify(const ClosedLoopModel& clm,
                                    optkit::LmiMode mode,
                                    double delta = 1e-6, double eps = 1e-8,
                                    int budget = 5000) {
  if (clm.A_cl.empty())
    throw InvalidInputError("certify: empty closed-loop model");
  return optkit::lmi_feasibility(clm.A_cl, mode, delta, eps, budget);
}

/// Data-driven terminal weight: A_d from the L = 1 predictor data, then the
/// discrete Lyapunov equation A_d' P A_d - P + Q = 0.
inline Matrix terminal_weight(const data::PredictorData& pd_1,
                              const Matrix& Q) {
  if (pd_1.L != 1)
    throw InvalidInputError("terminal_weight: predictor data must have L = 1");
  const Eigen::Index n = pd_1.n();
  const Eigen::Index m = pd_1.m();
  Matrix selector = Matrix::Zero(n + m, n);
  selector.topRows(n) = Matrix::Identity(n, n);
  const Matrix A_d = pd_1.X_future * (pd_1.stacked_pinv * selector);
  if (numkit::spectral_radius(A_d) >= 1.0)
    throw UnstableMatrixError(
        "terminal_weight: data-driven A_d has spectral radius >= 1");
  return numkit::solve_discrete_lyapunov(A_d, Q);
}

// --- certificate serialization ----------------------------------------------

inline constexpr const char* kCertSchema = "eddpc.certificate/1";

inline nlohmann::json certificate_to_json(const StabilityCertificate& c) {
  nlohmann::json j;
  j["schema"] = kCertSchema;
  switch (c.kind) {
    case StabilityCertificate::Kind::Common: j["kind"] = "common"; break;
    case StabilityCertificate::Kind::Piecewise: j["kind"] = "piecewise"; break;
    case StabilityCertificate::Kind::NotFound: j["kind"] = "not-found"; break;
  }
  j["delta"] = c.delta;
  j["eps"] = c.eps;
  j["best_violation"] = c.best_violation;
  j["iterations"] = c.iterations;
  j["P"] = nlohmann::json::array();
  for (const auto& p : c.P) j["P"].push_back(explicit_law::detail::mat_to_json(p));
  return j;
}

inline StabilityCertificate certificate_from_json(const nlohmann::json& j) {
  if (!j.contains("schema") ||
      j.at("schema").get<std::string>() != kCertSchema)
    throw SchemaError("certificate file: unsupported schema version");
  StabilityCertificate c;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "common")
    c.kind = StabilityCertificate::Kind::Common;
  else if (kind == "piecewise")
    c.kind = StabilityCertificate::Kind::Piecewise;
  else if (kind == "not-found")
    c.kind = StabilityCertificate::Kind::NotFound;
  else
    throw SchemaError("certificate file: unknown kind '" + kind + "'");
  c.delta = j.at("delta").get<double>();
  c.eps = j.at("eps").get<double>();
  c.best_violation = j.at("best_violation").get<double>();
  c.iterations = j.at("iterations").get<int>();
  for (const auto& p : j.at("P"))
    c.P.push_back(explicit_law::detail::mat_from_json(p));
  return c;
}

inline void write_certificate(const StabilityCertificate& c,
                              const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InvalidInputError("write_certificate: cannot open " + path);
  f << certificate_to_json(c).dump(1) << "\n";
}

inline StabilityCertificate read_certificate(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("read_certificate: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("read_certificate: ") + e.what());
  }
  return certificate_from_json(j);
}

}  // namespace eddpc::stability
