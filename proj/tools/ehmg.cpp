// Command-line front end. Every subcommand reads one JSON config, writes CSV
// files plus the effective config and a summary into --out, and prints the
// summary to stdout.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "ehmg/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Staggered-grid multigrid solver for the elastic Helmholtz equation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir = "out";
  int threads = 1;
  std::uint64_t seed = 1;
  app.add_option("--config", config_path, "JSON config file (defaults apply when omitted)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--threads", threads, "cap on worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "seed for all randomness");

  auto* s_solve = app.add_subcommand("solve", "FGMRES solve with a multigrid preconditioner");
  auto* s_lfa = app.add_subcommand("lfa", "smoothing/two-grid factor sweeps");
  auto* s_disp = app.add_subcommand("dispersion", "fine vs coarse section mismatch per beta");
  auto* s_cf = app.add_subcommand("measure-cf", "predicted vs measured convergence factors");
  auto* s_bench = app.add_subcommand("bench", "kernel micro-benchmarks");

  CLI11_PARSE(app, argc, argv);

  try {
    ehmg::Json cfg =
        config_path.empty() ? ehmg::Json::object() : ehmg::load_json(config_path);
    std::filesystem::path out(out_dir);
    ehmg::Json summary;
    if (s_solve->parsed()) summary = ehmg::run_solve(cfg, out, threads, seed);
    else if (s_lfa->parsed()) summary = ehmg::run_lfa(cfg, out, threads, seed);
    else if (s_disp->parsed()) summary = ehmg::run_dispersion(cfg, out, threads, seed);
    else if (s_cf->parsed()) summary = ehmg::run_measure_cf(cfg, out, threads, seed);
    else if (s_bench->parsed()) summary = ehmg::run_bench(cfg, out, threads, seed);
    ehmg::save_json(out / "summary.json", summary);
    std::printf("%s\n", summary.dump(2).c_str());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
