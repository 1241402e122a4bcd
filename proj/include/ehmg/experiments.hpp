#pragma once

// Experiment drivers behind the command-line front end: media builders,
// frequency selection from points-per-wavelength, the preconditioned solve
// loop, LFA parameter sweeps, paired prediction/measurement runs, the
// dispersion comparison, and micro-benchmarks. Every driver consumes a JSON
// config (missing keys fall back to defaults), writes CSV files plus the
// effective config into the output directory, and returns a JSON summary.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/SparseLU>

#include "ehmg/assemble.hpp"
#include "ehmg/grid.hpp"
#include "ehmg/io.hpp"
#include "ehmg/krylov.hpp"
#include "ehmg/lfa.hpp"
#include "ehmg/media.hpp"
#include "ehmg/multigrid.hpp"
#include "ehmg/operator.hpp"

namespace ehmg {

// Deterministic work sharing: index i always runs on thread i % nthreads and
// callers write results into per-index slots, so the thread count never
// changes the output.
inline void parallel_for_index(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(size_t(threads));
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&fn, t, n, threads] {
      for (int i = t; i < n; i += threads) fn(i);
    });
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Media builders

// rho in [2,3], lambda in [4,20], mu in [1,15], each linear in depth (the last
// axis, index 0 at the top).
template <int Dim>
MediaModel<Dim> linear_media(const StaggeredGrid<Dim>& g, double gamma_phys) {
  MediaModel<Dim> m = MediaModel<Dim>::homogeneous(g, 4, 1, 2, gamma_phys);
  Box<Dim> cb = g.cell_box();
  const double nd = g.dims[Dim - 1];
  for_each(cb, [&](const Idx<Dim>& c) {
    double t = (c[Dim - 1] + 0.5) / nd;
    size_t i = size_t(cb.lin(c));
    m.rho[i] = 2 + t;
    m.lambda[i] = 4 + 16 * t;
    m.mu[i] = 1 + 14 * t;
  });
  return m;
}

// Seeded horizontal-layer model: 5..10 layers with per-layer shear velocity
// inside a 4x contrast band, density and lambda/mu ratio drawn per layer.
template <int Dim>
MediaModel<Dim> layered_media(const StaggeredGrid<Dim>& g, double gamma_phys,
                              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int nd = g.dims[Dim - 1];
  int nl = std::min(std::uniform_int_distribution<int>(5, 10)(rng), nd);
  std::vector<int> tops{0};
  std::uniform_int_distribution<int> depth(1, nd - 1);
  while (int(tops.size()) < nl) {
    int d = depth(rng);
    if (std::find(tops.begin(), tops.end(), d) == tops.end()) tops.push_back(d);
  }
  std::sort(tops.begin(), tops.end());
  std::uniform_real_distribution<double> vs(0.5, 2.0), rho(1.5, 3.0), ratio(2.0, 20.0);
  struct Layer {
    double rho, lambda, mu;
  };
  std::vector<Layer> layers;
  for (int l = 0; l < nl; ++l) {
    double v = vs(rng), r = rho(rng), q = ratio(rng);
    double mu = r * v * v;
    layers.push_back({r, q * mu, mu});
  }
  MediaModel<Dim> m = MediaModel<Dim>::homogeneous(g, 1, 1, 1, gamma_phys);
  Box<Dim> cb = g.cell_box();
  for_each(cb, [&](const Idx<Dim>& c) {
    int j = int(std::upper_bound(tops.begin(), tops.end(), c[Dim - 1]) - tops.begin()) - 1;
    const Layer& L = layers[size_t(j)];
    size_t i = size_t(cb.lin(c));
    m.rho[i] = L.rho;
    m.lambda[i] = L.lambda;
    m.mu[i] = L.mu;
  });
  return m;
}

// Smallest shear velocity over cells outside the absorbing layer. Falls back
// to the global minimum when the sponge covers everything.
template <int Dim>
double min_interior_vs(const StaggeredGrid<Dim>& g, const MediaModel<Dim>& m,
                       const SpongeConfig& sponge) {
  Box<Dim> cb = g.cell_box();
  const int L = sponge.layer_width;
  double vmin = std::numeric_limits<double>::infinity();
  double vmin_all = vmin;
  for_each(cb, [&](const Idx<Dim>& c) {
    double v = m.vs(size_t(cb.lin(c)));
    vmin_all = std::min(vmin_all, v);
    for (int a = 0; a < Dim; ++a) {
      bool top_free = !sponge.absorb_top && a == Dim - 1;
      if ((!top_free && c[a] < L) || g.dims[a] - 1 - c[a] < L) return;
    }
    vmin = std::min(vmin, v);
  });
  return std::isfinite(vmin) ? vmin : vmin_all;
}

// omega such that the slowest interior shear wave is resolved by g_s grid
// points per wavelength: omega = 2*pi*Vs_min/(g_s*h).
template <int Dim>
double omega_from_gs(const StaggeredGrid<Dim>& g, const MediaModel<Dim>& m, double g_s,
                     const SpongeConfig& sponge) {
  if (!(g_s > 2)) throw std::invalid_argument("g_s must exceed 2 (Nyquist limit)");
  return 2 * kPi * min_interior_vs(g, m, sponge) / (g_s * g.h);
}

// ---------------------------------------------------------------------------
// Config plumbing

namespace detail {

template <int Dim> Idx<Dim> dims_from_json(const Json& cfg, const Idx<Dim>& dflt) {
  if (!cfg.contains("dims")) return dflt;
  auto v = cfg.at("dims").get<std::vector<int>>();
  if (int(v.size()) != Dim) throw std::invalid_argument("config: dims has wrong rank");
  Idx<Dim> d{};
  for (int a = 0; a < Dim; ++a) d[a] = v[size_t(a)];
  return d;
}

template <std::size_t N> std::string dims_label(const std::array<int, N>& d) {
  std::string s;
  for (std::size_t a = 0; a < N; ++a) {
    if (a) s += 'x';
    s += std::to_string(d[a]);
  }
  return s;
}

inline SpongeConfig sponge_from_json(const Json& cfg, int default_width) {
  SpongeConfig s;
  s.layer_width = cfg.value("sponge_cells", default_width);
  s.gamma_max = cfg.value("sponge_gamma_max", 1.0);
  s.absorb_top = cfg.value("absorb_top", false);
  return s;
}

template <int Dim>
MediaModel<Dim> media_from_json(const Json& cfg, const StaggeredGrid<Dim>& g,
                                double gamma_phys, std::uint64_t seed) {
  std::string problem = cfg.value("problem", std::string("homogeneous"));
  if (problem == "homogeneous")
    return MediaModel<Dim>::homogeneous(g, cfg.value("lambda", 20.0), cfg.value("mu", 1.0),
                                        cfg.value("rho", 1.0), gamma_phys);
  if (problem == "linear") return linear_media(g, gamma_phys);
  if (problem == "layered") return layered_media(g, gamma_phys, seed);
  throw std::invalid_argument("config: unknown problem kind '" + problem + "'");
}

inline CycleType cycle_from_json(const Json& cfg, const std::string& dflt) {
  std::string c = cfg.value("cycle", dflt);
  if (c == "two_grid") return CycleType::two_grid;
  if (c == "v") return CycleType::v;
  if (c == "w") return CycleType::w;
  if (c == "k") return CycleType::k;
  throw std::invalid_argument("config: unknown cycle '" + c + "'");
}

inline VankaMode vanka_from_json(const Json& cfg, const std::string& dflt) {
  std::string v = cfg.value("vanka", dflt);
  if (v == "full") return VankaMode::full;
  if (v == "economic") return VankaMode::economic;
  throw std::invalid_argument("config: unknown vanka mode '" + v + "'");
}

inline SweepOrder order_from_json(const Json& cfg, const std::string& dflt) {
  std::string o = cfg.value("order", dflt);
  if (o == "lexicographic") return SweepOrder::lexicographic;
  if (o == "red_black") return SweepOrder::red_black;
  throw std::invalid_argument("config: unknown sweep order '" + o + "'");
}

inline CoarseSolverKind coarse_from_json(const Json& cfg, const std::string& dflt) {
  std::string c = cfg.value("coarse", dflt);
  if (c == "automatic") return CoarseSolverKind::automatic;
  if (c == "lu") return CoarseSolverKind::lu;
  if (c == "kaczmarz") return CoarseSolverKind::kaczmarz;
  throw std::invalid_argument("config: unknown coarse solver '" + c + "'");
}

}  // namespace detail

// Damping for the preconditioning cycle, by cycle depth; tighter spatial
// sampling (smaller g_s) wants slightly less damping at two levels.
inline double default_solve_damping(double g_s, int levels) {
  if (levels <= 2) return g_s >= 9 ? 0.55 : 0.5;
  if (levels == 3) return 0.35;
  return 0.25;
}

// Damping used for smoother tuning sweeps: the per-stencil optima.
inline double default_lfa_damping(double beta) {
  if (std::abs(beta - 1.0) < 0.05) return 0.75;
  if (std::abs(beta - 2.0 / 3.0) < 0.05) return 0.65;
  return 0.7;
}

// ---------------------------------------------------------------------------
// solve: FGMRES on the attenuated operator, preconditioned by one multigrid
// cycle on its alpha-shifted counterpart.

namespace detail {

// Double-precision outer iteration around a single-precision hierarchy.
template <int Dim> struct MixedPrecondition {
  Multigrid<float, Dim> mg;
  FieldVector<float, Dim> rf, zf;

  MixedPrecondition(const StaggeredGrid<Dim>& g, const MediaModel<Dim>& media,
                    const OperatorParams& par, const MgOptions& opt)
      : mg(g, media, par, opt), rf(g), zf(g) {}

  void operator()(const FieldVector<double, Dim>& r, FieldVector<double, Dim>& z) {
    convert_field(r, rf);
    mg.precondition(rf, zf);
    convert_field(zf, z);
  }
};

}  // namespace detail

template <int Dim>
Json run_solve_dim(const Json& cfg, const std::filesystem::path& outdir, int threads,
                   std::uint64_t seed) {
  (void)threads;  // the outer iteration is sequential by contract
  namespace fs = std::filesystem;
  fs::create_directories(outdir);

  Idx<Dim> default_dims{};
  if constexpr (Dim == 2) default_dims = {512, 128};
  else default_dims = {64, 64, 32};
  const Idx<Dim> dims = detail::dims_from_json<Dim>(cfg, default_dims);
  const double h = cfg.value("spacing", 1.0 / dims[Dim - 1]);
  StaggeredGrid<Dim> g(dims, h);

  const SpongeConfig sponge = detail::sponge_from_json(cfg, Dim == 2 ? 20 : 8);
  const double gamma_phys = cfg.value("gamma", 0.01);
  MediaModel<Dim> media = detail::media_from_json(cfg, g, gamma_phys, seed);
  media.gamma = build_attenuation_profile(g, gamma_phys, sponge);
  media.validate(g);

  const double g_s = cfg.value("g_s", 10.0);
  double omega = cfg.value("omega", 0.0);
  if (omega <= 0) omega = omega_from_gs(g, media, g_s, sponge);
  const double ppw_min = 2 * kPi * min_interior_vs(g, media, sponge) / (omega * h);

  const double beta = cfg.value("beta", 2.0 / 3.0);
  const double alpha = cfg.value("alpha", 0.1);
  const int levels = cfg.value("levels", 2);
  const double w = cfg.value("w", default_solve_damping(g_s, levels));

  MgOptions mg;
  mg.n_levels = levels;
  mg.cycle = detail::cycle_from_json(cfg, "w");
  mg.nu1 = cfg.value("nu1", 1);
  mg.nu2 = cfg.value("nu2", 1);
  mg.damping = w;
  mg.vanka_mode = detail::vanka_from_json(cfg, "full");
  mg.sweep = detail::order_from_json(cfg, "red_black");
  mg.coarse = detail::coarse_from_json(cfg, "automatic");
  mg.lu_dof_budget = cfg.value("lu_dof_budget", std::int64_t(4'000'000));

  OperatorParams shifted{beta, omega, alpha, false};
  OperatorParams unshifted{beta, omega, 0.0, false};
  OpData<double, Dim> D0 = make_opdata<double>(g, media, unshifted);

  using Field = FieldVector<double, Dim>;
  const int source_comp = cfg.value("source_component", Dim);  // pressure row
  Field b = make_point_source<double>(g, source_comp, middle_of_top_row(g));
  Field x(g);

  KrylovOptions ko;
  ko.restart = cfg.value("restart", 5);
  ko.max_iterations = cfg.value("max_iterations", 600);
  ko.rtol = cfg.value("rtol", 1e-6);

  auto A = [&](const Field& in, Field& out) { apply_mixed_operator(D0, in, out); };
  const std::string precision = cfg.value("precision", std::string("double"));

  auto t0 = std::chrono::steady_clock::now();
  KrylovResult res;
  if (precision == "mixed") {
    detail::MixedPrecondition<Dim> M(g, media, shifted, mg);
    res = fgmres(A, M, b, x, ko);
  } else if (precision == "double") {
    Multigrid<double, Dim> pre(g, media, shifted, mg);
    auto M = [&](const Field& r, Field& z) { pre.precondition(r, z); };
    res = fgmres(A, M, b, x, ko);
  } else {
    throw std::invalid_argument("config: unknown precision '" + precision + "'");
  }
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Json eff = cfg;
  eff["dims"] = std::vector<int>(dims.begin(), dims.end());
  eff["spacing"] = h;
  eff["omega"] = omega;
  eff["beta"] = beta;
  eff["alpha"] = alpha;
  eff["levels"] = levels;
  eff["w"] = w;
  eff["precision"] = precision;
  eff["seed"] = seed;
  save_json(outdir / "config_used.json", eff);

  CsvWriter csv(outdir / "solve.csv",
                {"grid", "beta", "g_s", "levels", "alpha", "w", "iterations", "final_relres",
                 "wall_time_s", "status"});
  csv.row(detail::dims_label(dims), beta, ppw_min, levels, alpha, w, res.iterations, res.relres,
          seconds, to_string(res.status));

  if (cfg.value("dump_fields", false)) dump_field(outdir, "solution", g, x);

  return Json{{"grid", detail::dims_label(dims)}, {"beta", beta},
              {"g_s", ppw_min},                   {"levels", levels},
              {"alpha", alpha},                   {"w", w},
              {"omega", omega},                   {"iterations", res.iterations},
              {"final_relres", res.relres},       {"wall_time_s", seconds},
              {"status", to_string(res.status)}};
}

inline Json run_solve(const Json& cfg, const std::filesystem::path& outdir, int threads,
                      std::uint64_t seed) {
  size_t rank = cfg.contains("dims") ? cfg.at("dims").size() : 2;
  if (rank == 2) return run_solve_dim<2>(cfg, outdir, threads, seed);
  if (rank == 3) return run_solve_dim<3>(cfg, outdir, threads, seed);
  throw std::invalid_argument("config: dims must have rank 2 or 3");
}

// ---------------------------------------------------------------------------
// lfa: parameter sweeps of the smoothing and two-grid factors.

namespace detail {

struct LfaRow {
  std::string param;
  double mu_loc = 0, rho_loc = 0;
  long skipped = 0;
};

inline std::string trim_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace detail

inline Json run_lfa(const Json& cfg, const std::filesystem::path& outdir, int threads,
                    std::uint64_t seed) {
  (void)seed;  // the analysis is deterministic
  namespace fs = std::filesystem;
  fs::create_directories(outdir);

  const std::string mode = cfg.value("mode", std::string("beta"));
  const double h = cfg.value("spacing", 1.0 / 1024);
  const double lambda = cfg.value("lambda", 500.0), mu = cfg.value("mu", 1.0),
               rho = cfg.value("rho", 1.0);
  const double vs = std::sqrt(mu / rho);
  const double step = cfg.value("step", 0.02);
  const VankaMode vmode = detail::vanka_from_json(cfg, "economic");

  // Each entry: (label, LfaParams, damping).
  struct Item {
    std::string label;
    LfaParams par;
    double w;
  };
  std::vector<Item> items;
  LfaParams base;
  base.h = h;
  base.lambda = lambda;
  base.mu = mu;
  base.rho = rho;
  base.gamma = cfg.value("gamma", 0.0);

  auto omega_ppw = [&](double ppw) { return 2 * kPi * vs / (ppw * h); };

  if (mode == "beta") {
    const double alpha = cfg.value("alpha", 0.1);
    const double w = cfg.value("w", 0.7);
    const double ppw = cfg.value("ppw", 10.0);
    std::vector<double> betas;
    if (cfg.contains("values")) betas = cfg.at("values").get<std::vector<double>>();
    else
      for (double b = 0.5; b <= 1.0 + 1e-9; b += 0.02) betas.push_back(b);
    for (double b : betas) {
      LfaParams p = base;
      p.beta = b;
      p.omega = omega_ppw(ppw);
      p.alpha = alpha;
      items.push_back({detail::trim_num(b), p, w});
    }
  } else if (mode == "alpha") {
    const double beta = cfg.value("beta", 2.0 / 3.0);
    const double w = cfg.value("w", default_lfa_damping(beta));
    const double ppw = cfg.value("ppw", 10.0);
    std::vector<double> alphas;
    if (cfg.contains("values")) alphas = cfg.at("values").get<std::vector<double>>();
    else
      for (double a = 0.0; a <= 0.5 + 1e-9; a += 0.01) alphas.push_back(a);
    for (double a : alphas) {
      LfaParams p = base;
      p.beta = beta;
      p.omega = omega_ppw(ppw);
      p.alpha = a;
      items.push_back({detail::trim_num(a), p, w});
    }
  } else if (mode == "omega") {
    const double beta = cfg.value("beta", 2.0 / 3.0);
    const double w = cfg.value("w", default_lfa_damping(beta));
    const double alpha = cfg.value("alpha", 0.1);
    std::vector<double> ppws;
    if (cfg.contains("values")) ppws = cfg.at("values").get<std::vector<double>>();
    else ppws = {14, 12, 11, 10, 9, 8, 7, 6, 5};
    for (double q : ppws) {
      LfaParams p = base;
      p.beta = beta;
      p.omega = omega_ppw(q);
      p.alpha = alpha;
      items.push_back({detail::trim_num(q), p, w});
    }
  } else if (mode == "table1") {
    const double cols[3][2] = {{10.0, 0.15}, {8.0, 0.2}, {6.6, 0.3}};
    for (double beta : {1.0, 2.0 / 3.0})
      for (auto& c : cols) {
        LfaParams p = base;
        p.beta = beta;
        p.omega = omega_ppw(c[0]);
        p.alpha = c[1];
        std::string label = "beta=" + detail::trim_num(beta) + ";ppw=" + detail::trim_num(c[0]) +
                            ";alpha=" + detail::trim_num(c[1]);
        items.push_back({label, p, default_lfa_damping(beta)});
      }
  } else {
    throw std::invalid_argument("config: unknown lfa mode '" + mode + "'");
  }

  std::vector<detail::LfaRow> rows(items.size());
  parallel_for_index(int(items.size()), threads, [&](int i) {
    const Item& it = items[size_t(i)];
    LfaEngine eng(it.par);
    detail::LfaRow r;
    r.param = it.label;
    r.mu_loc = eng.smoothing_factor(it.w, vmode, step);
    LfaSample s = eng.two_grid_factor(1, 1, it.w, vmode, step);
    r.rho_loc = s.factor;
    r.skipped = s.skipped;
    rows[size_t(i)] = r;
  });

  Json eff = cfg;
  eff["mode"] = mode;
  eff["spacing"] = h;
  eff["step"] = step;
  save_json(outdir / "config_used.json", eff);

  CsvWriter csv(outdir / ("lfa_" + mode + ".csv"),
                {"param", "mu_loc", "rho_loc", "skipped_thetas"});
  Json out = Json::array();
  for (auto& r : rows) {
    csv.row(r.param, r.mu_loc, r.rho_loc, r.skipped);
    out.push_back({{"param", r.param}, {"mu_loc", r.mu_loc}, {"rho_loc", r.rho_loc}});
  }
  return Json{{"mode", mode}, {"rows", out}};
}

// ---------------------------------------------------------------------------
// measure-cf: LFA prediction next to the measured two-grid convergence factor.

inline Json run_measure_cf(const Json& cfg, const std::filesystem::path& outdir, int threads,
                           std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(outdir);

  const double lambda = cfg.value("lambda", 500.0), mu = cfg.value("mu", 1.0),
               rho = cfg.value("rho", 1.0);
  const double vs = std::sqrt(mu / rho);
  const double lfa_h = cfg.value("lfa_spacing", 1.0 / 1024);
  const int n = cfg.value("measure_n", 512);  // measurement grid is n x n, h = 1/n
  const double step = cfg.value("step", 0.02);
  const VankaMode vmode = detail::vanka_from_json(cfg, "economic");

  std::vector<double> betas = cfg.contains("betas")
                                  ? cfg.at("betas").get<std::vector<double>>()
                                  : std::vector<double>{1.0, 2.0 / 3.0};
  // Columns as (ppw, alpha) pairs.
  std::vector<std::pair<double, double>> cols;
  if (cfg.contains("columns"))
    for (auto& c : cfg.at("columns")) cols.emplace_back(c.at(0).get<double>(), c.at(1).get<double>());
  else cols = {{10.0, 0.15}, {8.0, 0.2}, {6.6, 0.3}};

  struct Row {
    double beta, omega, alpha, rho_loc, c_f;
    long cycles;
    bool diverged;
  };
  std::vector<Row> rows(betas.size() * cols.size());

  // LFA predictions are cheap and thread-safe; fan them out first.
  parallel_for_index(int(rows.size()), threads, [&](int i) {
    const double beta = betas[size_t(i) / cols.size()];
    const auto& col = cols[size_t(i) % cols.size()];
    LfaParams p;
    p.h = lfa_h;
    p.beta = beta;
    p.omega = 2 * kPi * vs / (col.first * lfa_h);
    p.alpha = col.second;
    p.lambda = lambda;
    p.mu = mu;
    p.rho = rho;
    LfaEngine eng(p);
    double w = cfg.value("w", default_lfa_damping(beta));
    Row r{};
    r.beta = beta;
    r.alpha = col.second;
    r.rho_loc = eng.two_grid_factor(1, 1, w, vmode, step).factor;
    rows[size_t(i)] = r;
  });

  // Measurements run sequentially; each one already owns the machine. The
  // grid is periodic so the measured factor compares against the Fourier
  // prediction without boundary contamination.
  const bool periodic = cfg.value("periodic", true);
  StaggeredGrid<2> g({n, n}, 1.0 / n);
  MediaModel<2> media = MediaModel<2>::homogeneous(g, lambda, mu, rho, 0.0);
  MeasureOptions mo;
  mo.warmup = cfg.value("warmup", 5);
  mo.max_cycles = cfg.value("max_cycles", 500);
  for (size_t i = 0; i < rows.size(); ++i) {
    Row& r = rows[i];
    const auto& col = cols[i % cols.size()];
    r.omega = 2 * kPi * vs / (col.first * g.h);
    MgOptions mg;
    mg.n_levels = 2;
    mg.cycle = CycleType::two_grid;
    mg.damping = cfg.value("w", default_lfa_damping(r.beta));
    mg.vanka_mode = vmode;
    mg.sweep = SweepOrder::lexicographic;
    OperatorParams par{r.beta, r.omega, r.alpha, periodic};
    Multigrid<double, 2> solver(g, media, par, mg);
    MeasureResult m = solver.measure_convergence_factor(seed, mo);
    r.c_f = m.factor;
    r.cycles = m.cycles;
    r.diverged = m.diverged;
  }

  Json eff = cfg;
  eff["measure_n"] = n;
  eff["lfa_spacing"] = lfa_h;
  eff["step"] = step;
  eff["seed"] = seed;
  eff["periodic"] = periodic;
  save_json(outdir / "config_used.json", eff);

  CsvWriter csv(outdir / "measure_cf.csv", {"beta", "omega", "alpha", "rho_loc", "c_f"});
  Json out = Json::array();
  for (auto& r : rows) {
    csv.row(r.beta, r.omega, r.alpha, r.rho_loc, r.c_f);
    out.push_back({{"beta", r.beta},
                   {"omega", r.omega},
                   {"alpha", r.alpha},
                   {"rho_loc", r.rho_loc},
                   {"c_f", r.c_f},
                   {"cycles", r.cycles},
                   {"diverged", r.diverged}});
  }
  return Json{{"rows", out}};
}

// ---------------------------------------------------------------------------
// dispersion: direct solves on a fine reference grid and a coarse grid, then
// relative section mismatch per beta and section angle.

namespace detail {

template <class Real>
FieldVector<Real, 2> direct_solve_mixed(const OpData<Real, 2>& D, const FieldVector<Real, 2>& b,
                                        std::int64_t budget) {
  try {
    SpMat<Real> A = assemble_sparse(D, budget);
    Eigen::SparseLU<SpMat<Real>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success)
      throw std::runtime_error("direct solve: sparse factorization failed");
    auto bb = flatten(D, b);
    Eigen::Vector<std::complex<Real>, Eigen::Dynamic> xx = lu.solve(bb);
    FieldVector<Real, 2> out = make_field(D);
    unflatten(D, xx, out);
    return out;
  } catch (const std::bad_alloc&) {
    throw std::runtime_error("direct solve: out of memory; reduce the grid or raise the budget");
  }
}

// Bilinear sample of a cell-centered field at a physical point.
template <class Real>
std::complex<Real> sample_cell_field(const StaggeredGrid<2>& g, const std::vector<std::complex<Real>>& f,
                                     double x, double y) {
  Box<2> cb = g.cell_box();
  auto pick = [&](double v, int n) {
    double u = v / g.h - 0.5;
    int i = int(std::floor(u));
    i = std::clamp(i, 0, n - 2);
    return std::pair<int, double>(i, std::clamp(u - i, 0.0, 1.0));
  };
  auto [i, fx] = pick(x, g.dims[0]);
  auto [j, fy] = pick(y, g.dims[1]);
  auto at = [&](int a, int b) { return f[size_t(cb.lin(Idx<2>{a, b}))]; };
  return (at(i, j) * (1 - fx) + at(i + 1, j) * fx) * Real(1 - fy) +
         (at(i, j + 1) * (1 - fx) + at(i + 1, j + 1) * fx) * Real(fy);
}

}  // namespace detail

inline Json run_dispersion(const Json& cfg, const std::filesystem::path& outdir, int threads,
                           std::uint64_t seed) {
  (void)threads;
  (void)seed;
  namespace fs = std::filesystem;
  fs::create_directories(outdir);

  auto dims_of = [&](const char* key, Idx<2> dflt) {
    if (!cfg.contains(key)) return dflt;
    auto v = cfg.at(key).get<std::vector<int>>();
    if (v.size() != 2) throw std::invalid_argument("config: dims must have rank 2");
    return Idx<2>{v[0], v[1]};
  };
  const Idx<2> dr = dims_of("dims_real", {1024, 512});
  const Idx<2> dc = dims_of("dims_coarse", {256, 128});
  const double hr = 1.0 / dr[1], hc = 1.0 / dc[1];
  if (std::abs(dr[0] * hr - dc[0] * hc) > 1e-9)
    throw std::invalid_argument("config: reference and coarse grids span different domains");
  StaggeredGrid<2> gr(dr, hr), gc(dc, hc);

  const double lambda = cfg.value("lambda", 16.0), mu = cfg.value("mu", 1.0),
               rho = cfg.value("rho", 16.0);
  const double omega = cfg.value("omega", 50 * kPi);
  const double gamma_phys = cfg.value("gamma", 0.01);
  const SpongeConfig sponge = detail::sponge_from_json(cfg, 20);
  const std::int64_t budget = cfg.value("lu_dof_budget", std::int64_t(4'000'000));

  const double beta_ref = cfg.value("reference_beta", 2.0 / 3.0);
  std::vector<double> betas = cfg.contains("betas")
                                  ? cfg.at("betas").get<std::vector<double>>()
                                  : std::vector<double>{1.0, 0.8, 2.0 / 3.0, 0.5};
  std::vector<double> angles = cfg.contains("angles")
                                   ? cfg.at("angles").get<std::vector<double>>()
                                   : std::vector<double>{0.0, 26.0, 45.0};

  auto solve_on = [&](const StaggeredGrid<2>& g, double beta) {
    MediaModel<2> media = MediaModel<2>::homogeneous(g, lambda, mu, rho, gamma_phys);
    media.gamma = build_attenuation_profile(g, gamma_phys, sponge);
    OpData<double, 2> D = make_opdata<double>(g, media, {beta, omega, 0.0, false});
    FieldVector<double, 2> b = make_point_source<double>(g, 2, middle_of_top_row(g));
    return detail::direct_solve_mixed(D, b, budget);
  };

  FieldVector<double, 2> ref = solve_on(gr, beta_ref);

  // Section rays start at the source and lean away from vertical; samples are
  // spaced by the coarse grid and shared between both solutions.
  const double W = dr[0] * hr, H = dr[1] * hr;
  const double sx = (dr[0] / 2 + 0.5) * hr, sy = 0.5 * hr;
  auto section_points = [&](double angle_deg) {
    std::vector<std::pair<double, double>> pts;
    double a = angle_deg * kPi / 180;
    double dx = std::sin(a), dy = std::cos(a);
    // The source sits half a fine cell off the wall, inside the coarse
    // interpolation margin; skip samples there and march until the ray
    // leaves the domain.
    const int j_max = int(2 * (W + H) / hc);
    for (int j = 0; j <= j_max; ++j) {
      double x = sx + j * hc * dx, y = sy + j * hc * dy;
      bool inside = x >= hc / 2 && x <= W - hc / 2 && y >= hc / 2 && y <= H - hc / 2;
      if (!inside) {
        if (!pts.empty()) break;
        continue;
      }
      pts.emplace_back(x, y);
    }
    return pts;
  };

  Json eff = cfg;
  eff["dims_real"] = std::vector<int>{dr[0], dr[1]};
  eff["dims_coarse"] = std::vector<int>{dc[0], dc[1]};
  eff["omega"] = omega;
  eff["reference_beta"] = beta_ref;
  save_json(outdir / "config_used.json", eff);

  CsvWriter csv(outdir / "dispersion.csv", {"beta", "angle_deg", "mismatch"});
  Json out = Json::array();
  for (double beta : betas) {
    FieldVector<double, 2> sol = solve_on(gc, beta);
    CsvWriter sec(outdir / ("sections_beta" + detail::trim_num(beta) + ".csv"),
                  {"angle_deg", "s", "p_ref_re", "p_run_re"});
    for (double ang : angles) {
      auto pts = section_points(ang);
      double num = 0, den = 0;
      for (size_t j = 0; j < pts.size(); ++j) {
        double vr = detail::sample_cell_field(gr, ref.p(), pts[j].first, pts[j].second).real();
        double vc = detail::sample_cell_field(gc, sol.p(), pts[j].first, pts[j].second).real();
        num += (vc - vr) * (vc - vr);
        den += vr * vr;
        sec.row(ang, double(j) * hc, vr, vc);
      }
      double m = den > 0 ? std::sqrt(num / den) : 0.0;
      csv.row(beta, ang, m);
      out.push_back({{"beta", beta}, {"angle_deg", ang}, {"mismatch", m}});
    }
  }
  return Json{{"rows", out}};
}

// ---------------------------------------------------------------------------
// bench: wall-clock micro-benchmarks of the hot kernels.

inline Json run_bench(const Json& cfg, const std::filesystem::path& outdir, int threads,
                      std::uint64_t seed) {
  (void)threads;
  (void)seed;
  namespace fs = std::filesystem;
  fs::create_directories(outdir);

  const Idx<2> dims = detail::dims_from_json<2>(cfg, {256, 256});
  const int reps = cfg.value("reps", 5);
  StaggeredGrid<2> g(dims, 1.0 / dims[1]);
  MediaModel<2> media = MediaModel<2>::homogeneous(g, 20, 1, 1, 0.0);
  OperatorParams par{2.0 / 3.0, 2 * kPi / (10 * g.h), 0.3, false};
  OpData<double, 2> D = make_opdata<double>(g, media, par);

  FieldVector<double, 2> x(g), y(g);
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k <= 2; ++k) {
    auto& v = k < 2 ? x.u(k) : x.p();
    for (auto& c : v) c = {u(rng), u(rng)};
  }
  const double ndofs = double(g.n_dofs());

  CsvWriter csv(outdir / "bench.csv", {"kernel", "grid", "reps", "wall_time_s", "mdofs_per_s"});
  Json out = Json::array();
  auto timeit = [&](const std::string& name, const std::function<void()>& fn) {
    fn();  // warm caches and lazy builds before timing
    auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) fn();
    double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double rate = ndofs * reps / dt / 1e6;
    csv.row(name, detail::dims_label(dims), reps, dt, rate);
    out.push_back({{"kernel", name}, {"wall_time_s", dt}, {"mdofs_per_s", rate}});
  };

  timeit("operator_apply", [&] { apply_mixed_operator(D, x, y); });

  VankaSmoother<double, 2> lex(VankaMode::economic);
  timeit("vanka_economic_lex", [&] { lex.sweep(D, y, x, 0.65, SweepOrder::lexicographic); });
  VankaSmoother<double, 2> rb(VankaMode::full);
  timeit("vanka_full_rb", [&] { rb.sweep(D, y, x, 0.55, SweepOrder::red_black); });

  MgOptions mg;
  mg.n_levels = 2;
  mg.cycle = CycleType::v;
  mg.damping = 0.55;
  Multigrid<double, 2> solver(g, media, par, mg);
  timeit("v_cycle_2level", [&] { solver.cycle(x, y); });

  return Json{{"rows", out}};
}

}  // namespace ehmg
