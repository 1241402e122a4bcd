// Drives the installed command-line binary end to end: each subcommand runs
// on a small configuration and must emit the documented CSV schema plus the
// effective config and a summary, honor --seed and --threads determinism, and
// reject bad configurations with a nonzero exit and a diagnostic on stderr.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "ehmg/io.hpp"

namespace fs = std::filesystem;
using ehmg::Json;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("ehmg_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string quoted(const fs::path& p) { return "\"" + p.string() + "\""; }

// Returns the process exit code; stdout is discarded, stderr lands in
// err.txt next to the output directory when capture is requested.
int run_cli(const std::string& args, const fs::path* err_file = nullptr) {
  std::string cmd = std::string(EHMG_CLI_PATH) + " " + args + " > /dev/null";
  if (err_file) cmd += " 2> " + quoted(*err_file);
  int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -2;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) lines.push_back(line);
  return lines;
}

std::string read_all(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

fs::path write_config(const fs::path& dir, const Json& j) {
  fs::path p = dir / "config.json";
  ehmg::save_json(p, j);
  return p;
}

}  // namespace

TEST_CASE("lfa subcommand emits the documented schema and echoes its config") {
  fs::path dir = fresh_dir("lfa_schema");
  fs::path cfg = write_config(dir, Json{{"mode", "beta"},
                                        {"values", {0.8}},
                                        {"step", 0.3},
                                        {"spacing", 1.0 / 64},
                                        {"ppw", 8.0},
                                        {"alpha", 0.2},
                                        {"w", 0.7}});
  fs::path out = dir / "out";
  REQUIRE(run_cli("lfa --config " + quoted(cfg) + " --out " + quoted(out)) == 0);

  auto lines = read_lines(out / "lfa_beta.csv");
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] == "param,mu_loc,rho_loc,skipped_thetas");
  auto row = split_csv(lines[1]);
  REQUIRE(row.size() == 4);
  CHECK(row[0] == "0.8");
  double mu_loc = std::stod(row[1]), rho_loc = std::stod(row[2]);
  CHECK(mu_loc > 0.0);
  CHECK(mu_loc < 3.0);
  CHECK(rho_loc > 0.0);
  CHECK(rho_loc < 3.0);
  CHECK(std::stol(row[3]) >= 0);

  Json eff = ehmg::load_json(out / "config_used.json");
  CHECK(eff.at("step").get<double>() == Catch::Approx(0.3));
  CHECK(eff.at("mode").get<std::string>() == "beta");
  Json summary = ehmg::load_json(out / "summary.json");
  CHECK(summary.at("rows").size() == 1);
}

TEST_CASE("lfa output is independent of the worker thread count") {
  fs::path dir = fresh_dir("lfa_threads");
  fs::path cfg = write_config(dir, Json{{"mode", "beta"},
                                        {"values", {0.6, 0.8, 1.0}},
                                        {"step", 0.35},
                                        {"spacing", 1.0 / 64},
                                        {"ppw", 8.0}});
  fs::path out1 = dir / "t1", out3 = dir / "t3";
  REQUIRE(run_cli("lfa --config " + quoted(cfg) + " --out " + quoted(out1) + " --threads 1") == 0);
  REQUIRE(run_cli("lfa --config " + quoted(cfg) + " --out " + quoted(out3) + " --threads 3") == 0);
  CHECK(read_all(out1 / "lfa_beta.csv") == read_all(out3 / "lfa_beta.csv"));
}

TEST_CASE("solve converges on a layered slice and repeats exactly under one seed") {
  fs::path dir = fresh_dir("solve_seed");
  fs::path cfg = write_config(dir, Json{{"dims", {32, 16}},
                                        {"problem", "layered"},
                                        {"g_s", 10.0},
                                        {"levels", 2},
                                        {"sponge_cells", 4},
                                        {"max_iterations", 300}});
  fs::path out1 = dir / "r1", out2 = dir / "r2";
  REQUIRE(run_cli("solve --config " + quoted(cfg) + " --out " + quoted(out1) + " --seed 7") == 0);
  REQUIRE(run_cli("solve --config " + quoted(cfg) + " --out " + quoted(out2) + " --seed 7") == 0);

  auto lines = read_lines(out1 / "solve.csv");
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] ==
        "grid,beta,g_s,levels,alpha,w,iterations,final_relres,wall_time_s,status");
  auto row = split_csv(lines[1]);
  REQUIRE(row.size() == 10);
  CHECK(row[0] == "32x16");
  CHECK(row[9] == "converged");
  int iters = std::stoi(row[6]);
  CHECK(iters > 0);
  CHECK(std::stod(row[7]) <= 1e-6);

  // Same seed, same media draw, same arithmetic: everything but the wall
  // clock must match digit for digit.
  auto row2 = split_csv(read_lines(out2 / "solve.csv")[1]);
  CHECK(row2[6] == row[6]);
  CHECK(row2[7] == row[7]);

  Json eff = ehmg::load_json(out1 / "config_used.json");
  CHECK(eff.at("seed").get<std::uint64_t>() == 7);
  CHECK(eff.at("omega").get<double>() > 0.0);
}

TEST_CASE("solve writes a raw field dump with a self-describing sidecar") {
  fs::path dir = fresh_dir("solve_dump");
  fs::path cfg = write_config(dir, Json{{"dims", {16, 8}},
                                        {"g_s", 10.0},
                                        {"sponge_cells", 2},
                                        {"dump_fields", true}});
  fs::path out = dir / "out";
  REQUIRE(run_cli("solve --config " + quoted(cfg) + " --out " + quoted(out)) == 0);

  Json hdr = ehmg::load_json(out / "solution.json");
  CHECK(hdr.at("dtype").get<std::string>() == "complex128");
  CHECK(hdr.at("byte_order").get<std::string>() == "little");
  CHECK(hdr.at("data_file").get<std::string>() == "solution.bin");
  const Json& comps = hdr.at("components");
  REQUIRE(comps.size() == 3);
  CHECK(comps[0].at("name").get<std::string>() == "u0");
  CHECK(comps[1].at("name").get<std::string>() == "u1");
  CHECK(comps[2].at("name").get<std::string>() == "p");

  // The last component's offset plus its payload must close the file exactly.
  std::int64_t end = comps[2].at("offset_bytes").get<std::int64_t>() +
                     comps[2].at("count").get<std::int64_t>() * 16;
  CHECK(std::int64_t(fs::file_size(out / "solution.bin")) == end);
}

TEST_CASE("measure-cf pairs a prediction with a measured factor on a torus") {
  fs::path dir = fresh_dir("measure_cf");
  fs::path cfg = write_config(dir, Json{{"measure_n", 32},
                                        {"step", 0.3},
                                        {"betas", {2.0 / 3.0}},
                                        {"columns", {{10.0, 0.3}}},
                                        {"warmup", 2},
                                        {"max_cycles", 200}});
  fs::path out = dir / "out";
  REQUIRE(run_cli("measure-cf --config " + quoted(cfg) + " --out " + quoted(out) + " --seed 5") ==
          0);

  auto lines = read_lines(out / "measure_cf.csv");
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] == "beta,omega,alpha,rho_loc,c_f");
  auto row = split_csv(lines[1]);
  REQUIRE(row.size() == 5);
  double rho_loc = std::stod(row[3]), c_f = std::stod(row[4]);
  CHECK(rho_loc > 0.01);
  CHECK(rho_loc < 1.0);
  CHECK(c_f > 0.01);
  CHECK(c_f < 0.9);

  Json eff = ehmg::load_json(out / "config_used.json");
  CHECK(eff.at("periodic").get<bool>() == true);
}

TEST_CASE("dispersion reports a finite mismatch per beta and angle") {
  fs::path dir = fresh_dir("dispersion");
  fs::path cfg = write_config(dir, Json{{"dims_real", {64, 32}},
                                        {"dims_coarse", {32, 16}},
                                        {"omega", 4 * 3.14159265358979323846},
                                        {"betas", {1.0, 2.0 / 3.0}},
                                        {"angles", {0.0, 26.0}},
                                        {"gamma", 0.05},
                                        {"sponge_cells", 4}});
  fs::path out = dir / "out";
  REQUIRE(run_cli("dispersion --config " + quoted(cfg) + " --out " + quoted(out)) == 0);

  auto lines = read_lines(out / "dispersion.csv");
  REQUIRE(lines.size() == 5);  // header + 2 betas x 2 angles
  CHECK(lines[0] == "beta,angle_deg,mismatch");
  for (size_t i = 1; i < lines.size(); ++i) {
    auto row = split_csv(lines[i]);
    REQUIRE(row.size() == 3);
    double m = std::stod(row[2]);
    CHECK(std::isfinite(m));
    CHECK(m >= 0.0);
  }

  auto sec = read_lines(out / "sections_beta1.csv");
  CHECK(sec[0] == "angle_deg,s,p_ref_re,p_run_re");
  CHECK(sec.size() > 2);
  CHECK(fs::exists(out / "sections_beta0.666667.csv"));
}

TEST_CASE("bench reports positive throughput for every kernel") {
  fs::path dir = fresh_dir("bench");
  fs::path cfg = write_config(dir, Json{{"dims", {32, 32}}, {"reps", 2}});
  fs::path out = dir / "out";
  REQUIRE(run_cli("bench --config " + quoted(cfg) + " --out " + quoted(out)) == 0);

  auto lines = read_lines(out / "bench.csv");
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "kernel,grid,reps,wall_time_s,mdofs_per_s");
  std::vector<std::string> kernels;
  for (size_t i = 1; i < lines.size(); ++i) {
    auto row = split_csv(lines[i]);
    REQUIRE(row.size() == 5);
    kernels.push_back(row[0]);
    CHECK(row[1] == "32x32");
    CHECK(std::stod(row[4]) > 0.0);
  }
  CHECK(kernels == std::vector<std::string>{"operator_apply", "vanka_economic_lex",
                                            "vanka_full_rb", "v_cycle_2level"});
}

TEST_CASE("invalid requests exit nonzero with a diagnostic") {
  fs::path dir = fresh_dir("errors");

  SECTION("a subcommand is required") { CHECK(run_cli("--out " + quoted(dir / "none")) != 0); }

  SECTION("frequencies at or beyond Nyquist are refused") {
    fs::path cfg = write_config(dir, Json{{"dims", {16, 8}}, {"g_s", 2.0}, {"sponge_cells", 2}});
    fs::path err = dir / "err_nyquist.txt";
    CHECK(run_cli("solve --config " + quoted(cfg) + " --out " + quoted(dir / "o1"), &err) == 1);
    CHECK(read_all(err).find("Nyquist") != std::string::npos);
  }

  SECTION("unknown problem kinds are refused") {
    fs::path cfg = write_config(dir, Json{{"dims", {16, 8}}, {"problem", "marble"}});
    fs::path err = dir / "err_problem.txt";
    CHECK(run_cli("solve --config " + quoted(cfg) + " --out " + quoted(dir / "o2"), &err) == 1);
    CHECK(read_all(err).find("marble") != std::string::npos);
  }

  SECTION("unknown sweep modes are refused") {
    fs::path cfg = write_config(dir, Json{{"mode", "zeta"}});
    CHECK(run_cli("lfa --config " + quoted(cfg) + " --out " + quoted(dir / "o3")) == 1);
  }

  SECTION("rank-4 grids are refused") {
    fs::path cfg = write_config(dir, Json{{"dims", {8, 8, 8, 8}}});
    CHECK(run_cli("solve --config " + quoted(cfg) + " --out " + quoted(dir / "o4")) == 1);
  }
}
