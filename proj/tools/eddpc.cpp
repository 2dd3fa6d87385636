// Command-line front end: data collection, explicit-law synthesis,
// certification, evaluation, simulation, sweep studies, and the altitude demo.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "eddpc/data.hpp"
#include "eddpc/errors.hpp"
#include "eddpc/explicit_law.hpp"
#include "eddpc/mpqp.hpp"
#include "eddpc/sim.hpp"
#include "eddpc/stability.hpp"

namespace {

using eddpc::numkit::Matrix;
using eddpc::numkit::Vector;
using nlohmann::json;

Vector parse_vector(const std::string& s) {
  std::vector<double> vals;
  size_t pos = 0;
  while (pos <= s.size()) {
    const size_t next = s.find(',', pos);
    const std::string tok =
        s.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    try {
      vals.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw eddpc::ParseError("bad numeric list element '" + tok + "'", 0);
    }
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  Vector v(static_cast<Eigen::Index>(vals.size()));
  for (size_t i = 0; i < vals.size(); ++i) v(static_cast<Eigen::Index>(i)) = vals[i];
  return v;
}

Matrix parse_matrix(const std::string& s, Eigen::Index rows, Eigen::Index cols) {
  const Vector flat = parse_vector(s);
  if (flat.size() != rows * cols)
    throw eddpc::InvalidInputError("expected " + std::to_string(rows * cols) +
                                   " entries, got " + std::to_string(flat.size()));
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat(r * cols + c);
  return m;
}

json vec_json(const Vector& v) {
  std::vector<double> out(v.data(), v.data() + v.size());
  return json(out);
}

json mat_json(const Matrix& m) { return eddpc::explicit_law::detail::mat_to_json(m); }

void echo_config(const json& cfg) { std::cout << "config: " << cfg.dump() << "\n"; }

eddpc::sim::LtiSystem system_for(const std::string& preset) {
  if (preset == "benchmark") return eddpc::sim::benchmark_system();
  if (preset == "altitude") return eddpc::sim::altitude_system();
  throw eddpc::InvalidInputError("unknown preset '" + preset + "'");
}

eddpc::mpqp::MpcSpec preset_spec(const std::string& preset, double setpoint) {
  eddpc::mpqp::MpcSpec spec;
  if (preset == "benchmark") {
    spec.L = 2;
    spec.Q = Matrix::Identity(2, 2);
    spec.R = 0.01 * Matrix::Identity(1, 1);
    spec.P = spec.Q;  // placeholder; the data-driven terminal weight replaces it
    spec.gamma = 10.0;
    spec.C_x = Matrix::Zero(2, 2);
    spec.C_u = Matrix(2, 1);
    spec.C_u << 1.0, -1.0;
    spec.d = Vector(2);
    spec.d << 2.0, 2.0;
  } else if (preset == "altitude") {
    spec.L = 5;
    spec.Q = Matrix::Zero(2, 2);
    spec.Q.diagonal() << 1.0, 0.1;
    spec.P = spec.Q;
    spec.R = 1e-5 * Matrix::Identity(1, 1);
    spec.gamma = 1.0;
    spec.C_x = Matrix::Zero(3, 2);
    spec.C_x(0, 0) = -1.0;
    spec.C_u = Matrix::Zero(3, 1);
    spec.C_u(1, 0) = 1.0;
    spec.C_u(2, 0) = -1.0;
    spec.d = Vector(3);
    spec.d << setpoint, eddpc::sim::kAltitudeUmax, -eddpc::sim::kAltitudeUmin;
  } else {
    throw eddpc::InvalidInputError("unknown preset '" + preset + "'");
  }
  return spec;
}

json spec_json(const eddpc::mpqp::MpcSpec& s) {
  return json{{"L", s.L},          {"gamma", s.gamma},
              {"Q", mat_json(s.Q)}, {"R", mat_json(s.R)},
              {"P", mat_json(s.P)}, {"C_x", mat_json(s.C_x)},
              {"C_u", mat_json(s.C_u)}, {"d", vec_json(s.d)}};
}

eddpc::mpqp::MpcSpec spec_from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw eddpc::InvalidInputError("cannot open spec file " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw eddpc::ParseError(std::string("spec file: ") + e.what(), 0);
  }
  namespace el = eddpc::explicit_law::detail;
  eddpc::mpqp::MpcSpec s;
  try {
    s.L = j.at("L").get<Eigen::Index>();
    s.gamma = j.at("gamma").get<double>();
    s.Q = el::mat_from_json(j.at("Q"));
    s.R = el::mat_from_json(j.at("R"));
    s.P = el::mat_from_json(j.at("P"));
    s.C_x = el::mat_from_json(j.at("C_x"));
    s.C_u = el::mat_from_json(j.at("C_u"));
    s.d = el::vec_from_json(j.at("d"));
  } catch (const json::exception& e) {
    throw eddpc::SchemaError(std::string("spec file: ") + e.what());
  }
  return s;
}

const char* cert_name(const eddpc::optkit::LmiCertificate& c) {
  using Kind = eddpc::optkit::LmiCertificate::Kind;
  switch (c.kind) {
    case Kind::Common: return "common";
    case Kind::Piecewise: return "piecewise";
    default: return "not-found";
  }
}

// ---------------------------------------------------------------------------

struct SynthFlags {
  std::string dataset;
  std::string preset = "benchmark";
  std::string spec_file;
  std::string out;
  std::string terminal = "auto";  // auto | data | spec
  std::string mode = "common";
  double setpoint = 2.0;
  std::optional<double> gamma;
  std::optional<Eigen::Index> horizon;
  std::string q_str, r_str, p_str, cx_str, cu_str, d_str;
  bool no_merge = false;
};

int run_synth(const SynthFlags& f) {
  const auto ds = eddpc::data::read_dataset(f.dataset);
  auto spec = f.spec_file.empty() ? preset_spec(f.preset, f.setpoint)
                                  : spec_from_file(f.spec_file);
  if (f.gamma) spec.gamma = *f.gamma;
  if (f.horizon) spec.L = *f.horizon;
  if (!f.d_str.empty()) spec.d = parse_vector(f.d_str);
  const Eigen::Index n_c = spec.d.size();
  if (!f.q_str.empty()) spec.Q = parse_matrix(f.q_str, ds.n, ds.n);
  if (!f.r_str.empty()) spec.R = parse_matrix(f.r_str, ds.m, ds.m);
  if (!f.p_str.empty()) spec.P = parse_matrix(f.p_str, ds.n, ds.n);
  if (!f.cx_str.empty()) spec.C_x = parse_matrix(f.cx_str, n_c, ds.n);
  if (!f.cu_str.empty()) spec.C_u = parse_matrix(f.cu_str, n_c, ds.m);

  const bool data_terminal =
      f.terminal == "data" ||
      (f.terminal == "auto" && f.spec_file.empty() && f.preset == "benchmark");
  if (data_terminal)
    spec.P = eddpc::stability::terminal_weight(
        eddpc::data::build_predictor_data(ds, 1), spec.Q);

  echo_config(json{{"subcommand", "synth"},
                   {"dataset", f.dataset},
                   {"out", f.out},
                   {"terminal", data_terminal ? "data" : "spec"},
                   {"mode", f.mode},
                   {"merge", !f.no_merge},
                   {"spec", spec_json(spec)}});

  const auto pd = eddpc::data::build_predictor_data(ds, spec.L);
  const auto qp = eddpc::mpqp::assemble(pd, spec, eddpc::data::digest(ds));
  const auto law =
      eddpc::explicit_law::build_explicit_law(qp, std::nullopt, !f.no_merge);
  eddpc::explicit_law::write_law(law, f.out);
  std::cout << "regions: " << law.regions.size() << "\n";
  std::cout << "skipped-degenerate: " << law.skipped_degenerate << "\n";
  const auto cert = eddpc::stability::certify(
      eddpc::stability::extract_closed_loop(law),
      f.mode == "piecewise" ? eddpc::optkit::LmiMode::Piecewise
                            : eddpc::optkit::LmiMode::Common);
  std::cout << "certificate: " << cert_name(cert) << "\n";
  return 0;
}

int run_collect(const std::string& preset, Eigen::Index samples,
                std::optional<double> snr_db, std::uint64_t seed,
                const std::string& out) {
  const auto sys = system_for(preset);
  eddpc::sim::NoiseConfig nc{snr_db, seed};
  eddpc::data::Dataset ds;
  if (preset == "benchmark") {
    ds = eddpc::sim::collect_open_loop(sys, samples, -5.0, 5.0, nc);
  } else {
    Matrix K(1, 2);
    K << -4.0, -3.6;
    ds = eddpc::sim::collect_closed_loop(sys, K, samples, -1.0, 1.0, nc);
  }
  echo_config(json{{"subcommand", "collect"},
                   {"preset", preset},
                   {"samples", samples},
                   {"snr_db", snr_db ? json(*snr_db) : json(nullptr)},
                   {"seed", seed},
                   {"out", out}});
  eddpc::data::write_dataset(ds, out);
  std::cout << "samples: " << ds.x.size() << "\n";
  std::cout << "digest: " << eddpc::data::digest(ds) << "\n";
  return 0;
}

int run_check(const std::string& law_path, const std::string& dataset,
              const std::string& mode, const std::string& out) {
  const auto law = eddpc::explicit_law::read_law(law_path);
  if (!dataset.empty()) {
    const auto ds = eddpc::data::read_dataset(dataset);
    if (eddpc::data::digest(ds) != law.dataset_digest)
      throw eddpc::InvalidInputError(
          "dataset digest does not match the digest stored in the law file");
  }
  echo_config(json{{"subcommand", "check"},
                   {"law", law_path},
                   {"dataset", dataset},
                   {"mode", mode},
                   {"out", out}});
  const auto cert = eddpc::stability::certify(
      eddpc::stability::extract_closed_loop(law),
      mode == "piecewise" ? eddpc::optkit::LmiMode::Piecewise
                          : eddpc::optkit::LmiMode::Common);
  if (!out.empty()) eddpc::stability::write_certificate(cert, out);
  std::cout << "certificate: " << cert_name(cert) << "\n";
  return 0;
}

int run_eval(const std::string& law_path, const std::string& state) {
  const auto law = eddpc::explicit_law::read_law(law_path);
  const Vector x = parse_vector(state);
  echo_config(json{{"subcommand", "eval"}, {"law", law_path}, {"state", vec_json(x)}});
  const auto ev = eddpc::explicit_law::evaluate(law, x);
  if (!ev) throw eddpc::InfeasibleStateError("state lies outside every region");
  std::cout << "region: " << ev->region_id << "\n";
  std::cout << "u:";
  for (Eigen::Index i = 0; i < ev->u0.size(); ++i) std::cout << " " << ev->u0(i);
  std::cout << "\n";
  return 0;
}

int run_simulate(const std::string& law_path, const std::string& dataset,
                 const std::string& preset, const std::string& x0_str,
                 int steps, std::optional<double> snr_db, std::uint64_t seed,
                 const std::string& out) {
  const auto law = eddpc::explicit_law::read_law(law_path);
  const auto sys = system_for(preset);
  const Vector x0 = parse_vector(x0_str);

  eddpc::mpqp::MpQp qp;
  auto policy = eddpc::sim::FallbackPolicy::ZeroInput;
  if (!dataset.empty()) {
    const auto ds = eddpc::data::read_dataset(dataset);
    if (eddpc::data::digest(ds) != law.dataset_digest)
      throw eddpc::InvalidInputError(
          "dataset digest does not match the digest stored in the law file");
    qp = eddpc::mpqp::assemble(eddpc::data::build_predictor_data(ds, law.spec.L),
                               law.spec, eddpc::data::digest(ds));
    policy = eddpc::sim::FallbackPolicy::ImplicitThenZero;
  }
  echo_config(json{{"subcommand", "simulate"},
                   {"law", law_path},
                   {"dataset", dataset},
                   {"preset", preset},
                   {"x0", vec_json(x0)},
                   {"steps", steps},
                   {"snr_db", snr_db ? json(*snr_db) : json(nullptr)},
                   {"seed", seed},
                   {"out", out}});
  const auto traj = eddpc::sim::simulate_closed_loop(
      sys, law, qp, x0, steps, {snr_db, seed}, policy);
  eddpc::sim::write_trajectory_csv(traj, out);
  int hits = 0, implicit = 0, zero = 0;
  for (const auto fl : traj.flags) {
    if (fl == eddpc::sim::StepFlag::RegionHit) ++hits;
    else if (fl == eddpc::sim::StepFlag::FallbackImplicit) ++implicit;
    else ++zero;
  }
  std::cout << "J: " << eddpc::sim::performance_index(traj, law.spec.Q, law.spec.R)
            << "\n";
  std::cout << "steps: " << steps << " region-hit: " << hits
            << " fallback-implicit: " << implicit << " fallback-zero: " << zero
            << "\n";
  return 0;
}

int run_sweep(const std::string& gammas_str, int runs, int experiments,
              std::optional<double> snr_db, Eigen::Index samples, int steps,
              std::uint64_t seed, const std::string& out) {
  auto cfg = eddpc::sim::benchmark_sweep_config();
  const Vector g = parse_vector(gammas_str);
  cfg.gammas.assign(g.data(), g.data() + g.size());
  cfg.runs = runs;
  cfg.n_experiments = experiments;
  cfg.snr_db = snr_db;
  cfg.T_s = samples;
  cfg.test_steps = steps;
  cfg.master_seed = seed;
  echo_config(json{{"subcommand", "sweep"},
                   {"preset", "benchmark"},
                   {"gammas", vec_json(g)},
                   {"runs", runs},
                   {"experiments", experiments},
                   {"snr_db", snr_db ? json(*snr_db) : json(nullptr)},
                   {"samples", samples},
                   {"steps", steps},
                   {"seed", seed},
                   {"out", out}});
  const auto rows = eddpc::sim::gamma_sweep(cfg);
  eddpc::sim::write_sweep_csv(rows, out);
  for (const double gamma : cfg.gammas) {
    std::vector<double> js;
    for (const auto& r : rows)
      if (r.gamma == gamma && std::isfinite(r.J)) js.push_back(r.J);
    std::sort(js.begin(), js.end());
    std::cout << "gamma " << gamma << ": ";
    if (js.empty())
      std::cout << "no successful runs\n";
    else
      std::cout << "median-J " << js[js.size() / 2] << " (" << js.size() << "/"
                << runs << " runs)\n";
  }
  return 0;
}

int run_demo_altitude(const std::string& maneuver, double setpoint,
                      Eigen::Index samples, int steps,
                      std::optional<double> data_snr, std::uint64_t seed,
                      const std::string& out) {
  eddpc::sim::AltitudeOptions opt;
  opt.seed = seed;
  opt.data_snr_db = data_snr;
  opt.T_s = samples;
  opt.steps = steps;
  const auto dir = maneuver == "landing" ? eddpc::sim::Maneuver::Landing
                                         : eddpc::sim::Maneuver::Takeoff;
  echo_config(json{{"subcommand", "demo-altitude"},
                   {"maneuver", maneuver},
                   {"setpoint", setpoint},
                   {"samples", samples},
                   {"steps", steps},
                   {"data_snr_db", data_snr ? json(*data_snr) : json(nullptr)},
                   {"seed", seed},
                   {"out", out}});
  const auto res = eddpc::sim::altitude_demo(dir, setpoint, opt);
  eddpc::sim::write_trajectory_csv(res.traj, out);
  double min_alt = std::numeric_limits<double>::infinity();
  for (const auto& x : res.traj.states) min_alt = std::min(min_alt, x(0) + res.z_bar);
  std::cout << "regions: " << res.law.regions.size() << "\n";
  std::cout << "z-frame-offset: " << res.z_bar << "\n";
  std::cout << "final-altitude: " << res.altitude(res.traj.states.size() - 1)
            << "\n";
  std::cout << "min-altitude: " << min_alt << "\n";
  return 0;
}

const char* error_code(const std::exception& e) {
  if (dynamic_cast<const eddpc::ParseError*>(&e)) return "parse-error";
  if (dynamic_cast<const eddpc::SchemaError*>(&e)) return "schema-error";
  if (dynamic_cast<const eddpc::InfeasibleStateError*>(&e)) return "infeasible-state";
  if (dynamic_cast<const eddpc::PredictorUndefinedError*>(&e))
    return "predictor-undefined";
  if (dynamic_cast<const eddpc::UnstableMatrixError*>(&e)) return "unstable-matrix";
  if (dynamic_cast<const eddpc::SolverFailureError*>(&e)) return "solver-failure";
  if (dynamic_cast<const eddpc::InvalidInputError*>(&e)) return "invalid-input";
  return "internal";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-driven explicit predictive control toolkit"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;

  // collect
  auto* collect = app.add_subcommand("collect", "Generate a dataset CSV");
  std::string c_preset = "benchmark", c_out;
  Eigen::Index c_samples = -1;
  double c_snr = -1.0;
  bool c_no_noise = false;
  collect->add_option("--preset", c_preset, "benchmark or altitude");
  collect->add_option("--samples", c_samples, "collection length");
  collect->add_option("--snr-db", c_snr, "measurement SNR in dB");
  collect->add_flag("--no-noise", c_no_noise, "noiseless collection");
  collect->add_option("--seed", seed, "master seed");
  collect->add_option("--out", c_out, "output dataset CSV")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Build an explicit law from data");
  SynthFlags sf;
  synth->add_option("--dataset", sf.dataset, "input dataset CSV")->required();
  synth->add_option("--preset", sf.preset, "spec preset: benchmark or altitude");
  synth->add_option("--spec-file", sf.spec_file, "JSON spec file");
  synth->add_option("--gamma", sf.gamma, "regularization weight");
  synth->add_option("--horizon", sf.horizon, "prediction horizon L");
  synth->add_option("--Q", sf.q_str, "state weight, row-major");
  synth->add_option("--R", sf.r_str, "input weight, row-major");
  synth->add_option("--P", sf.p_str, "terminal weight, row-major");
  synth->add_option("--Cx", sf.cx_str, "state constraint matrix, row-major");
  synth->add_option("--Cu", sf.cu_str, "input constraint matrix, row-major");
  synth->add_option("--d", sf.d_str, "constraint bound vector");
  synth->add_option("--setpoint", sf.setpoint, "altitude setpoint (altitude preset)");
  synth->add_option("--terminal", sf.terminal,
                    "terminal weight source: auto, data, or spec");
  synth->add_option("--mode", sf.mode, "certificate mode: common or piecewise");
  synth->add_flag("--no-merge", sf.no_merge, "skip duplicate-region merging");
  synth->add_option("--out", sf.out, "output law JSON")->required();

  // check
  auto* check = app.add_subcommand("check", "Certify closed-loop stability");
  std::string k_law, k_dataset, k_mode = "common", k_out;
  check->add_option("--law", k_law, "law JSON")->required();
  check->add_option("--dataset", k_dataset, "dataset CSV for digest verification");
  check->add_option("--mode", k_mode, "common or piecewise");
  check->add_option("--out", k_out, "output certificate JSON");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate the law at a state");
  std::string e_law, e_state;
  eval->add_option("--law", e_law, "law JSON")->required();
  eval->add_option("--state", e_state, "comma-separated state")->required();

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Closed-loop trajectory CSV");
  std::string s_law, s_dataset, s_preset = "benchmark", s_x0 = "1,1", s_out;
  int s_steps = 50;
  double s_snr = -1.0;
  simulate->add_option("--law", s_law, "law JSON")->required();
  simulate->add_option("--dataset", s_dataset,
                       "dataset CSV (enables the implicit fallback)");
  simulate->add_option("--preset", s_preset, "plant: benchmark or altitude");
  simulate->add_option("--x0", s_x0, "initial state");
  simulate->add_option("--steps", s_steps, "simulation length");
  simulate->add_option("--snr-db", s_snr, "measurement SNR during the test");
  simulate->add_option("--seed", seed, "master seed");
  simulate->add_option("--out", s_out, "output trajectory CSV")->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Monte-Carlo gamma/averaging study");
  std::string w_gammas = "1e-6,1e-4,1e-2,1,10,100", w_out;
  int w_runs = 30, w_experiments = 1, w_steps = 50;
  Eigen::Index w_samples = 100;
  double w_snr = 20.0;
  bool w_no_noise = false;
  sweep->add_option("--gammas", w_gammas, "comma-separated gamma grid");
  sweep->add_option("--runs", w_runs, "Monte-Carlo runs");
  sweep->add_option("--experiments", w_experiments, "datasets averaged per run");
  sweep->add_option("--snr-db", w_snr, "collection SNR in dB");
  sweep->add_flag("--no-noise", w_no_noise, "noiseless collection");
  sweep->add_option("--samples", w_samples, "collection length per dataset");
  sweep->add_option("--steps", w_steps, "validation horizon");
  sweep->add_option("--seed", seed, "master seed");
  sweep->add_option("--out", w_out, "output table CSV")->required();

  // demo-altitude
  auto* demo = app.add_subcommand("demo-altitude", "Vertical maneuver demo");
  std::string d_maneuver = "takeoff", d_out;
  double d_setpoint = 2.0, d_snr = 30.0;
  Eigen::Index d_samples = 800;
  int d_steps = 400;
  bool d_no_noise = false;
  demo->add_option("--maneuver", d_maneuver, "takeoff or landing");
  demo->add_option("--setpoint", d_setpoint, "altitude setpoint in meters");
  demo->add_option("--samples", d_samples, "collection length");
  demo->add_option("--steps", d_steps, "flight length in samples");
  demo->add_option("--data-snr-db", d_snr, "collection SNR in dB");
  demo->add_flag("--no-noise", d_no_noise, "noiseless collection");
  demo->add_option("--seed", seed, "master seed");
  demo->add_option("--out", d_out, "output trajectory CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*collect) {
      if (c_samples < 0) c_samples = c_preset == "altitude" ? 800 : 100;
      std::optional<double> snr;
      if (!c_no_noise) snr = c_snr >= 0.0 ? c_snr : (c_preset == "altitude" ? 30.0 : 20.0);
      return run_collect(c_preset, c_samples, snr, seed, c_out);
    }
    if (*synth) return run_synth(sf);
    if (*check) return run_check(k_law, k_dataset, k_mode, k_out);
    if (*eval) return run_eval(e_law, e_state);
    if (*simulate) {
      std::optional<double> snr;
      if (s_snr >= 0.0) snr = s_snr;
      return run_simulate(s_law, s_dataset, s_preset, s_x0, s_steps, snr, seed,
                          s_out);
    }
    if (*sweep) {
      std::optional<double> snr;
      if (!w_no_noise) snr = w_snr;
      return run_sweep(w_gammas, w_runs, w_experiments, snr, w_samples, w_steps,
                       seed, w_out);
    }
    if (*demo) {
      std::optional<double> snr;
      if (!d_no_noise) snr = d_snr;
      return run_demo_altitude(d_maneuver, d_setpoint, d_samples, d_steps, snr,
                               seed, d_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << error_code(e) << " " << e.what() << "\n";
    return 1;
  }
  return 2;
}
