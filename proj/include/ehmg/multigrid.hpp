#pragma once

// Geometric multigrid on the mixed system. Every level rediscretizes the
// shifted operator on coarsened media (cell averaging), smooths with the
// overlapping cell-wise relaxation, and transfers with the staggered
// tensor-product stencils. The coarsest level is solved either directly
// (sparse LU of the mixed matrix) or inexactly by a few Krylov iterations
// with Kaczmarz relaxation on the materialized displacement Schur rows. One
// damping factor serves the whole hierarchy.

#include <memory>
#include <optional>
#include <random>

#include "ehmg/kaczmarz.hpp"
#include "ehmg/krylov.hpp"
#include "ehmg/transfer.hpp"
#include "ehmg/vanka.hpp"

namespace ehmg {

enum class CycleType { two_grid, v, w, k };
enum class CoarseSolverKind { automatic, lu, kaczmarz };

inline const char* to_string(CycleType c) {
  switch (c) {
    case CycleType::two_grid: return "two_grid";
    case CycleType::v: return "v";
    case CycleType::w: return "w";
    default: return "k";
  }
}

struct MgOptions {
  int n_levels = 2;
  CycleType cycle = CycleType::v;
  int nu1 = 1, nu2 = 1;
  double damping = 0.75;
  VankaMode vanka_mode = VankaMode::economic;
  SweepOrder sweep = SweepOrder::lexicographic;
  CoarseSolverKind coarse = CoarseSolverKind::automatic;
  std::int64_t lu_dof_budget = 4'000'000;
  // coarsest-level Krylov/Kaczmarz solve. The indefinite coarse operator
  // turns residual slack into error along near-null modes, so the solve has
  // to be driven fairly tight before the cycle contracts.
  int kz_sweeps_per_apply = 5;  // forward+backward pairs per preconditioner call
  double kz_damping = 0.8;
  double kz_rtol = 0.01;
  int kz_max_iterations = 150;
  int kz_restart = 40;
  // inner acceleration of the recursive cycle
  int k_inner_iterations = 2;
  double k_inner_rtol = 0.25;
};

struct MeasureOptions {
  int warmup = 5;
  double tol = 1e-9;
  int max_cycles = 500;
  int growth_limit = 20;  // consecutive residual growths before flagging divergence
};

struct MeasureResult {
  double factor = 0.0;  // geometric-mean residual reduction per cycle
  int cycles = 0;
  bool diverged = false;
  std::vector<double> history;
};

template <class Real, int Dim> class Multigrid {
 public:
  using Field = FieldVector<Real, Dim>;
  using C = std::complex<Real>;

  Multigrid(const StaggeredGrid<Dim>& grid, const MediaModel<Dim>& media,
            const OperatorParams& par, const MgOptions& opt)
      : opt_(opt) {
    if (opt_.n_levels < 2) throw std::invalid_argument("multigrid: need at least 2 levels");
    if (opt_.cycle == CycleType::two_grid && opt_.n_levels != 2)
      throw std::invalid_argument("multigrid: two_grid cycle requires exactly 2 levels");
    StaggeredGrid<Dim> g = grid;
    MediaModel<Dim> m = media;
    for (int l = 0; l < opt_.n_levels; ++l) {
      levels_.push_back(std::make_unique<Lev>(g, m, par, opt_.vanka_mode));
      if (l + 1 < opt_.n_levels) {
        if (!can_coarsen(g))
          throw std::invalid_argument("multigrid: grid cannot support requested levels");
        m = coarsen_media(g, m);
        g = coarsen_grid(g);
      }
    }
    auto kind = opt_.coarse;
    if (kind == CoarseSolverKind::automatic)
      kind = (Dim == 2) ? CoarseSolverKind::lu : CoarseSolverKind::kaczmarz;
    coarse_kind_ = kind;
    Lev& cl = *levels_.back();
    if (kind == CoarseSolverKind::lu) {
      SpMat<Real> A = assemble_sparse(cl.D, opt_.lu_dof_budget);
      lu_ = std::make_unique<Eigen::SparseLU<SpMat<Real>>>();
      lu_->compute(A);
      if (lu_->info() != Eigen::Success)
        throw std::runtime_error("multigrid: coarsest LU factorization failed");
    } else {
      kz_ = std::make_unique<KaczmarzSweeper<Real>>(assemble_schur(cl.D), opt_.kz_damping);
      DofLayout<Dim> L(cl.D);
      std::vector<Trip<Real>> tb, tc;
      for (int k = 0; k < Dim; ++k) {
        SpMat<Real> B = mat_grad(cl.D, k);
        for (std::int64_t o = 0; o < B.outerSize(); ++o)
          for (typename SpMat<Real>::InnerIterator it(B, o); it; ++it)
            tb.push_back({it.row() + L.off[k], it.col(), it.value()});
        SpMat<Real> Ck = mat_derivative(cl.D, k, k, cl.D.par.beta);
        for (std::int64_t o = 0; o < Ck.outerSize(); ++o)
          for (typename SpMat<Real>::InnerIterator it(Ck, o); it; ++it)
            tc.push_back({it.row(), it.col() + L.off[k], it.value()});
      }
      const std::int64_t nu = L.n_u(), nc = cl.D.cellb.size();
      SpMat<Real> B(nu, nc);
      B.setFromTriplets(tb.begin(), tb.end());
      kz_blam_ = SpMat<Real>(B * sparse_diag(cl.D.lamu_cell));
      kz_c_ = SpMat<Real>(nc, nu);
      kz_c_.setFromTriplets(tc.begin(), tc.end());
    }
  }

  int n_levels() const { return int(levels_.size()); }
  const MgOptions& options() const { return opt_; }
  CoarseSolverKind coarse_kind() const { return coarse_kind_; }
  const OpData<Real, Dim>& level_data(int l) const { return levels_[size_t(l)]->D; }
  bool coarse_exact() const { return coarse_kind_ == CoarseSolverKind::lu; }

  // One cycle applied to A x = b, improving x in place.
  void cycle(const Field& b, Field& x) { cycle_at(0, b, x); }

  // z = (one cycle from zero) applied to r; the usual preconditioner shape.
  void precondition(const Field& r, Field& z) {
    z.set_zero();
    cycle_at(0, r, z);
  }

  // Stationary-iteration convergence factor on the homogeneous problem with
  // a seeded random start.
  MeasureResult measure_convergence_factor(std::uint64_t seed, const MeasureOptions& mo = {}) {
    Lev& fl = *levels_.front();
    Field x = make_field(fl.D), zero = make_field(fl.D);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& comp : x.comp)
      for (auto& v : comp) v = C(Real(dist(rng)), Real(dist(rng)));
    for (int i = 0; i < mo.warmup; ++i) cycle_at(0, zero, x);
    double r0 = residual_norm_homogeneous(x);
    if (r0 == 0.0) return {0.0, 0, false, {}};
    scal(C(Real(1.0 / r0)), x);
    MeasureResult out;
    double prev = 1.0;
    int growths = 0;
    while (out.cycles < mo.max_cycles) {
      cycle_at(0, zero, x);
      ++out.cycles;
      double rn = residual_norm_homogeneous(x);
      out.history.push_back(rn);
      if (rn > prev) {
        if (++growths >= mo.growth_limit) {
          out.diverged = true;
          break;
        }
      } else {
        growths = 0;
      }
      prev = rn;
      if (rn < mo.tol) break;
      if (!std::isfinite(rn) || rn > 1e12) {
        out.diverged = true;
        break;
      }
    }
    out.factor = std::pow(out.history.empty() ? 1.0 : out.history.back(),
                          1.0 / std::max(1, out.cycles));
    return out;
  }

 private:
  struct Lev {
    OpData<Real, Dim> D;
    MediaModel<Dim> media;
    VankaSmoother<Real, Dim> sm;
    Field r, t, bc, ec;  // bc/ec are the rhs/correction OF this level when it acts as coarse

    Lev(const StaggeredGrid<Dim>& g, const MediaModel<Dim>& m, const OperatorParams& par,
        VankaMode mode)
        : D(make_opdata<Real>(g, m, par)), media(m), sm(mode) {
      r = make_field(D);
      t = make_field(D);
      bc = make_field(D);
      ec = make_field(D);
    }
  };

  double residual_norm_homogeneous(const Field& x) {
    Lev& fl = *levels_.front();
    apply_mixed_operator(fl.D, x, fl.t);
    return norm(fl.t);
  }

  void smooth(int l, const Field& b, Field& x, int sweeps) {
    Lev& lev = *levels_[size_t(l)];
    for (int s = 0; s < sweeps; ++s) lev.sm.sweep(lev.D, b, x, opt_.damping, opt_.sweep);
  }

  void residual(int l, const Field& b, const Field& x, Field& r) {
    Lev& lev = *levels_[size_t(l)];
    apply_mixed_operator(lev.D, x, lev.t);
    r = b;
    axpy(C(-1), lev.t, r);
  }

  void cycle_at(int l, const Field& b, Field& x) {
    if (l + 1 == n_levels()) {
      coarse_solve(b, x);
      return;
    }
    Lev& lev = *levels_[size_t(l)];
    Lev& nxt = *levels_[size_t(l) + 1];
    smooth(l, b, x, opt_.nu1);
    residual(l, b, x, lev.r);
    nxt.bc = restrict_field(lev.D.grid, nxt.D.grid, lev.r, lev.D.par.periodic);
    nxt.ec.set_zero();
    const bool next_coarsest = (l + 2 == n_levels());
    switch (opt_.cycle) {
      case CycleType::two_grid:
      case CycleType::v:
        cycle_at(l + 1, nxt.bc, nxt.ec);
        break;
      case CycleType::w:
        cycle_at(l + 1, nxt.bc, nxt.ec);
        if (!next_coarsest) cycle_at(l + 1, nxt.bc, nxt.ec);
        break;
      case CycleType::k:
        if (next_coarsest) {
          cycle_at(l + 1, nxt.bc, nxt.ec);
        } else {
          KrylovOptions ko;
          ko.restart = opt_.k_inner_iterations;
          ko.max_iterations = opt_.k_inner_iterations;
          ko.rtol = opt_.k_inner_rtol;
          auto A = [&](const Field& in, Field& out) { apply_mixed_operator(nxt.D, in, out); };
          auto M = [&](const Field& in, Field& out) {
            out.set_zero();
            cycle_at(l + 1, in, out);
          };
          fgmres(A, M, nxt.bc, nxt.ec, ko);
        }
        break;
    }
    Field corr = prolong_field(lev.D.grid, nxt.D.grid, nxt.ec, lev.D.par.periodic);
    axpy(C(1), corr, x);
    smooth(l, b, x, opt_.nu2);
  }

  void coarse_solve(const Field& b, Field& x) {
    Lev& cl = *levels_.back();
    if (coarse_kind_ == CoarseSolverKind::lu) {
      auto v = flatten(cl.D, b);
      EigenCVec<Real> sol = lu_->solve(v);
      if (lu_->info() != Eigen::Success)
        throw std::runtime_error("multigrid: coarsest LU solve failed");
      unflatten(cl.D, sol, x);
      return;
    }
    DofLayout<Dim> L(cl.D);
    const std::int64_t nu = L.n_u(), nc = cl.D.cellb.size();
    EigenCVec<Real> bu(nu), bp(nc);
    {
      std::int64_t o = 0;
      for (int k = 0; k < Dim; ++k)
        for (auto& z : b.comp[size_t(k)]) bu[o++] = z;
      o = 0;
      for (auto& z : b.comp[Dim]) bp[o++] = z;
    }
    EigenCVec<Real> rhs = bu - kz_blam_ * bp;
    EigenCVec<Real> u = EigenCVec<Real>::Zero(nu);
    const auto& S = kz_->matrix();
    auto A = [&](const EigenCVec<Real>& in, EigenCVec<Real>& out) { out = S * in; };
    auto M = [&](const EigenCVec<Real>& in, EigenCVec<Real>& out) {
      out = EigenCVec<Real>::Zero(in.size());
      for (int s = 0; s < opt_.kz_sweeps_per_apply; ++s) kz_->double_sweep(in, out);
    };
    KrylovOptions ko;
    ko.restart = opt_.kz_restart;
    ko.rtol = opt_.kz_rtol;
    ko.max_iterations = opt_.kz_max_iterations;
    fgmres(A, M, rhs, u, ko);
    EigenCVec<Real> p = bp - kz_c_ * u;
    for (std::int64_t i = 0; i < nc; ++i) p[i] *= Real(cl.D.lamu_cell[size_t(i)]);
    std::int64_t o = 0;
    for (int k = 0; k < Dim; ++k)
      for (auto& z : x.comp[size_t(k)]) z = u[o++];
    o = 0;
    for (auto& z : x.comp[Dim]) z = p[o++];
  }

  MgOptions opt_;
  CoarseSolverKind coarse_kind_ = CoarseSolverKind::lu;
  std::vector<std::unique_ptr<Lev>> levels_;
  std::unique_ptr<Eigen::SparseLU<SpMat<Real>>> lu_;
  std::unique_ptr<KaczmarzSweeper<Real>> kz_;
  SpMat<Real> kz_blam_, kz_c_;
};

// Copy a field across precisions (double outer solve around a float cycle).
template <class To, class From, int Dim>
void convert_field(const FieldVector<From, Dim>& in, FieldVector<To, Dim>& out) {
  for (int c = 0; c <= Dim; ++c) {
    out.comp[size_t(c)].resize(in.comp[size_t(c)].size());
    for (size_t i = 0; i < in.comp[size_t(c)].size(); ++i)
      out.comp[size_t(c)][i] =
          std::complex<To>(To(in.comp[size_t(c)][i].real()), To(in.comp[size_t(c)][i].imag()));
  }
}

}  // namespace ehmg
