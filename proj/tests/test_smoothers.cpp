// Box-relaxation correctness. The smoother under test computes cached local
// factorizations from matrix-free operator rows; the reference here extracts
// every local system from the independently assembled sparse matrix, solves
// it densely, and replays the exact sweep schedule. Agreement is required to
// near machine precision for both modes, both orderings, both boundary
// treatments, and both dimensions.

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/SparseLU>
#include <random>

#include "ehmg/kaczmarz.hpp"
#include "ehmg/vanka.hpp"

using namespace ehmg;

namespace {

template <int Dim>
MediaModel<Dim> random_media(const StaggeredGrid<Dim>& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.5, 2.0);
  MediaModel<Dim> m = MediaModel<Dim>::homogeneous(g, 1, 1, 1, 0);
  for (auto& v : m.lambda) v = 3.0 * U(rng);
  for (auto& v : m.mu) v = U(rng);
  for (auto& v : m.rho) v = U(rng);
  return m;
}

template <class Real, int Dim>
void randomize(FieldVector<Real, Dim>& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> V(-1, 1);
  for (auto& c : x.comp)
    for (auto& z : c) z = {Real(V(rng)), Real(V(rng))};
}

int wrap_idx(int i, int n) { return ((i % n) + n) % n; }

// Global DOF indices of the local system owned by cell c: for each component
// the two bracketing faces, then the cell pressure.
template <int Dim>
std::array<std::int64_t, 2 * Dim + 1> local_dofs(const OpData<double, Dim>& D,
                                                 const DofLayout<Dim>& L, const Idx<Dim>& c) {
  std::array<std::int64_t, 2 * Dim + 1> g{};
  for (int k = 0; k < Dim; ++k) {
    for (int i = 0; i < 2; ++i) {
      Idx<Dim> f = c;
      f[k] += i;
      if (D.par.periodic)
        for (int a = 0; a < Dim; ++a) f[a] = wrap_idx(f[a], D.grid.dims[a]);
      g[size_t(2 * k + i)] = L.off[size_t(k)] + D.faceb[size_t(k)].lin(f);
    }
  }
  g[size_t(2 * Dim)] = L.off[Dim] + D.cellb.lin(c);
  return g;
}

// Replays one smoother sweep from the assembled matrix with dense local
// solves, following the same cell schedule as the implementation.
template <int Dim>
void reference_sweep(const OpData<double, Dim>& D, const SpMatR<double>& A,
                     const Eigen::VectorXcd& b, Eigen::VectorXcd& x, double w, VankaMode mode,
                     SweepOrder order) {
  DofLayout<Dim> L(D);
  constexpr int nl = 2 * Dim + 1;

  auto residual_at = [&](std::int64_t row) {
    std::complex<double> ax(0);
    for (SpMatR<double>::InnerIterator it(A, row); it; ++it) ax += it.value() * x[it.col()];
    return b[row] - ax;
  };
  auto correction = [&](const Idx<Dim>& c) {
    auto gd = local_dofs(D, L, c);
    Eigen::MatrixXcd Lc(nl, nl);
    for (int i = 0; i < nl; ++i) {
      for (int j = 0; j < nl; ++j) {
        std::complex<double> v(0);
        for (SpMatR<double>::InnerIterator it(A, gd[size_t(i)]); it; ++it)
          if (it.col() == gd[size_t(j)]) v = it.value();
        Lc(i, j) = v;
      }
    }
    if (mode == VankaMode::economic)
      for (int k = 0; k < Dim; ++k) Lc(2 * k, 2 * k + 1) = Lc(2 * k + 1, 2 * k) = 0;
    Eigen::VectorXcd r(nl);
    for (int i = 0; i < nl; ++i) r[i] = residual_at(gd[size_t(i)]);
    return std::pair{gd, Eigen::VectorXcd(Lc.partialPivLu().solve(r))};
  };
  auto apply = [&](const std::array<std::int64_t, size_t(nl)>& gd, const Eigen::VectorXcd& d) {
    for (int i = 0; i < nl; ++i) x[gd[size_t(i)]] += w * d[i];
  };

  if (order == SweepOrder::lexicographic) {
    for_each(D.cellb, [&](const Idx<Dim>& c) {
      auto [gd, d] = correction(c);
      apply(gd, d);
    });
    return;
  }
  for (int color = 0; color < 2; ++color) {
    std::vector<std::pair<std::array<std::int64_t, size_t(nl)>, Eigen::VectorXcd>> batch;
    for_each(D.cellb, [&](const Idx<Dim>& c) {
      int par = 0;
      for (int a = 0; a < Dim; ++a) par += c[a];
      if ((par & 1) == color) batch.push_back(correction(c));
    });
    for (auto& [gd, d] : batch) apply(gd, d);
  }
}

template <int Dim>
double sweep_vs_reference(Idx<Dim> dims, bool periodic, VankaMode mode, SweepOrder order,
                          double w) {
  StaggeredGrid<Dim> g(dims, 1.0 / dims[0]);
  auto m = random_media(g, 41);
  OperatorParams par{2.0 / 3.0, 4.5, 0.15, periodic};
  auto D = make_opdata<double, Dim>(g, m, par);

  auto b = make_field(D), x = make_field(D);
  randomize(b, 5);
  randomize(x, 6);
  Eigen::VectorXcd xr = flatten(D, x);
  Eigen::VectorXcd br = flatten(D, b);

  VankaSmoother<double, Dim> sm(mode);
  sm.sweep(D, b, x, w, order);

  SpMatR<double> A(assemble_sparse(D));
  reference_sweep(D, A, br, xr, w, mode, order);

  return (flatten(D, x) - xr).cwiseAbs().maxCoeff() / xr.cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("cache footprint per cell matches the documented layout") {
  CHECK(VankaSmoother<double, 2>(VankaMode::full).per_cell_complex_count() == 17);
  CHECK(VankaSmoother<double, 2>(VankaMode::economic).per_cell_complex_count() == 13);
  CHECK(VankaSmoother<double, 3>(VankaMode::full).per_cell_complex_count() == 25);
  CHECK(VankaSmoother<double, 3>(VankaMode::economic).per_cell_complex_count() == 19);
}

TEST_CASE("one sweep reproduces the dense local-solve reference") {
  for (bool periodic : {false, true})
    for (VankaMode mode : {VankaMode::full, VankaMode::economic})
      for (SweepOrder order : {SweepOrder::lexicographic, SweepOrder::red_black}) {
        CAPTURE(periodic, int(mode), int(order));
        Idx<2> dims = periodic ? Idx<2>{6, 4} : Idx<2>{6, 5};
        CHECK(sweep_vs_reference<2>(dims, periodic, mode, order, 0.8) < 1e-12);
      }
  CHECK(sweep_vs_reference<3>({4, 4, 4}, false, VankaMode::full, SweepOrder::lexicographic,
                              0.7) < 1e-12);
  CHECK(sweep_vs_reference<3>({4, 4, 4}, false, VankaMode::economic, SweepOrder::red_black,
                              0.7) < 1e-12);
}

TEST_CASE("the exact solution is a fixed point of the sweep") {
  StaggeredGrid<2> g({6, 5}, 1.0 / 6);
  auto m = random_media(g, 13);
  OperatorParams par{2.0 / 3.0, 5.0, 0.2, false};
  auto D = make_opdata<double, 2>(g, m, par);
  auto b = make_field(D);
  randomize(b, 14);

  SpMat<double> A = assemble_sparse(D);
  Eigen::SparseLU<SpMat<double>> lu;
  lu.compute(A);
  REQUIRE(lu.info() == Eigen::Success);
  Eigen::VectorXcd xs = lu.solve(flatten(D, b));

  for (VankaMode mode : {VankaMode::full, VankaMode::economic})
    for (SweepOrder order : {SweepOrder::lexicographic, SweepOrder::red_black}) {
      CAPTURE(int(mode), int(order));
      auto x = make_field(D);
      unflatten(D, xs, x);
      VankaSmoother<double, 2> sm(mode);
      sm.sweep(D, b, x, 1.0, order);
      double drift = (flatten(D, x) - xs).cwiseAbs().maxCoeff() / xs.cwiseAbs().maxCoeff();
      CHECK(drift < 1e-11);
    }
}

TEST_CASE("factorization cache is reused until the operator changes") {
  StaggeredGrid<2> g({6, 4}, 1.0 / 6);
  auto m = random_media(g, 20);
  OperatorParams par{2.0 / 3.0, 4.0, 0.1, false};
  auto D = make_opdata<double, 2>(g, m, par);
  auto b = make_field(D), x = make_field(D);
  randomize(b, 21);

  VankaSmoother<double, 2> sm(VankaMode::full);
  sm.sweep(D, b, x, 0.8, SweepOrder::lexicographic);
  sm.sweep(D, b, x, 0.6, SweepOrder::red_black);  // damping change: same cache
  CHECK(sm.builds() == 1);

  OperatorParams par2{2.0 / 3.0, 4.0, 0.3, false};
  auto D2 = make_opdata<double, 2>(g, m, par2);
  sm.sweep(D2, b, x, 0.8, SweepOrder::lexicographic);
  CHECK(sm.builds() == 2);
}

TEST_CASE("kaczmarz sweep solves a diagonal system in one undamped pass") {
  std::vector<Trip<double>> t;
  const std::complex<double> d[3] = {{2, 1}, {-1, 3}, {0.5, -0.2}};
  for (int i = 0; i < 3; ++i) t.push_back({i, i, d[i]});
  SpMatR<double> A(3, 3);
  A.setFromTriplets(t.begin(), t.end());

  KaczmarzSweeper<double> kz(A, 1.0);
  EigenCVec<double> b(3), x = EigenCVec<double>::Zero(3);
  b << std::complex<double>(1, 2), std::complex<double>(3, -1), std::complex<double>(0, 1);
  kz.sweep(b, x);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(x[i] - b[i] / d[i]) < 1e-15);
}

TEST_CASE("kaczmarz error norm is monotone on a consistent system") {
  StaggeredGrid<2> g({6, 5}, 1.0 / 6);
  auto m = random_media(g, 31);
  OperatorParams par{2.0 / 3.0, 4.0, 0.3, false};
  auto D = make_opdata<double, 2>(g, m, par);
  SpMatR<double> S = assemble_schur(D);

  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> V(-1, 1);
  EigenCVec<double> xs(S.cols());
  for (std::int64_t i = 0; i < xs.size(); ++i) xs[i] = {V(rng), V(rng)};
  EigenCVec<double> b = S * xs;

  KaczmarzSweeper<double> kz(S, 0.8);
  EigenCVec<double> x = EigenCVec<double>::Zero(S.cols());
  double prev = (x - xs).norm();
  const double e0 = prev;
  for (int s = 0; s < 30; ++s) {
    kz.sweep(b, x);
    double e = (x - xs).norm();
    CHECK(e <= prev * (1 + 1e-12));
    prev = e;
  }
  CHECK(prev < 0.9 * e0);
}

TEST_CASE("kaczmarz rejects a matrix with an empty row") {
  std::vector<Trip<double>> t = {{0, 0, {1, 0}}};
  SpMatR<double> A(2, 2);
  A.setFromTriplets(t.begin(), t.end());
  CHECK_THROWS_AS(KaczmarzSweeper<double>(A), std::runtime_error);
}
