#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#ifndef EDDPC_CLI_PATH
#error "EDDPC_CLI_PATH must be defined by the build"
#endif

namespace {

struct CliRun {
  int exit_code = -1;
  std::string stdout_text;
  std::string stderr_text;
};

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

CliRun run_cli(const std::string& args) {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string out = (dir / "eddpc_cli_stdout.txt").string();
  const std::string err = (dir / "eddpc_cli_stderr.txt").string();
  const std::string cmd =
      std::string(EDDPC_CLI_PATH) + " " + args + " >" + out + " 2>" + err;
  const int raw = std::system(cmd.c_str());
  CliRun r;
  r.exit_code = raw == -1 ? -1 : WEXITSTATUS(raw);
  r.stdout_text = slurp(out);
  r.stderr_text = slurp(err);
  std::remove(out.c_str());
  std::remove(err.c_str());
  return r;
}

std::string tmp(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("sweep is byte-identical under the same master seed") {
  const auto a = tmp("eddpc_sweep_a.csv");
  const auto b = tmp("eddpc_sweep_b.csv");
  const std::string args = "sweep --gammas 1e-6,10 --runs 2 --seed 9 --out ";
  CHECK(run_cli(args + a).exit_code == 0);
  CHECK(run_cli(args + b).exit_code == 0);
  const auto ca = slurp(a);
  CHECK(!ca.empty());
  CHECK(ca == slurp(b));
  std::remove(a.c_str());
  std::remove(b.c_str());
}

TEST_CASE("full pipeline: collect, synth, check, eval, simulate") {
  const auto ds = tmp("eddpc_cli_ds.csv");
  const auto law = tmp("eddpc_cli_law.json");
  const auto cert = tmp("eddpc_cli_cert.json");
  const auto traj = tmp("eddpc_cli_traj.csv");

  auto r = run_cli("collect --preset benchmark --seed 4 --out " + ds);
  REQUIRE(r.exit_code == 0);
  CHECK(r.stdout_text.find("config: ") != std::string::npos);

  r = run_cli("synth --dataset " + ds + " --preset benchmark --out " + law);
  REQUIRE(r.exit_code == 0);
  CHECK(r.stdout_text.find("regions: ") != std::string::npos);
  CHECK(r.stdout_text.find("skipped-degenerate: ") != std::string::npos);
  CHECK(r.stdout_text.find("certificate: common") != std::string::npos);

  r = run_cli("check --law " + law + " --dataset " + ds + " --out " + cert);
  REQUIRE(r.exit_code == 0);
  CHECK(r.stdout_text.find("certificate: common") != std::string::npos);

  // Regulation law at the origin keeps the input at zero.
  r = run_cli("eval --law " + law + " --state 0,0");
  REQUIRE(r.exit_code == 0);
  {
    const auto pos = r.stdout_text.find("u: ");
    REQUIRE(pos != std::string::npos);
    const double u = std::stod(r.stdout_text.substr(pos + 3));
    CHECK(std::abs(u) < 1e-9);
  }

  r = run_cli("simulate --law " + law + " --dataset " + ds +
              " --preset benchmark --x0 1,1 --steps 50 --out " + traj);
  REQUIRE(r.exit_code == 0);
  CHECK(r.stdout_text.find("J: ") != std::string::npos);

  for (const auto& p : {ds, law, cert, traj}) std::remove(p.c_str());
}

TEST_CASE("resolved config echo re-parses to the same JSON") {
  const auto ds = tmp("eddpc_cli_cfg.csv");
  const auto r =
      run_cli("collect --preset benchmark --samples 20 --seed 2 --out " + ds);
  REQUIRE(r.exit_code == 0);
  const auto pos = r.stdout_text.find("config: ");
  REQUIRE(pos != std::string::npos);
  const auto line_end = r.stdout_text.find('\n', pos);
  const std::string payload =
      r.stdout_text.substr(pos + 8, line_end - pos - 8);
  const auto parsed = nlohmann::json::parse(payload);
  CHECK(parsed.dump() == payload);
  CHECK(parsed.at("samples").get<int>() == 20);
  CHECK(parsed.at("seed").get<std::uint64_t>() == 2);
  std::remove(ds.c_str());
}

TEST_CASE("failures exit nonzero with a one-line machine-readable code") {
  auto r = run_cli("synth --dataset /nonexistent.csv --out " + tmp("x.json"));
  CHECK(r.exit_code != 0);
  CHECK(r.stderr_text.rfind("error: ", 0) == 0);
  CHECK(r.stderr_text.find('\n') == r.stderr_text.size() - 1);

  r = run_cli("eval --law /nonexistent.json --state 0,0");
  CHECK(r.exit_code != 0);
  CHECK(r.stderr_text.rfind("error: ", 0) == 0);

  r = run_cli("collect --preset bogus --out " + tmp("y.csv"));
  CHECK(r.exit_code != 0);
  CHECK(r.stderr_text.find("invalid-input") != std::string::npos);
}
