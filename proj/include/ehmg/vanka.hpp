#pragma once

// Cell-wise overlapping box relaxation for the mixed system. Each cell owns
// its pressure and the 2*Dim surrounding displacement faces; the local
// (2*Dim+1)-square system is the exact extraction of the global operator
// rows at those DOFs. Because displacement components couple only through
// pressure, the local u-block is block-diagonal with one 2x2 block per
// component, and the local solve reduces to a scalar pressure Schur
// complement. The factorization cache stores, per cell and component,
// U_k^{-1}, g_k = U_k^{-1} b_k, h_k^T = c_k^T U_k^{-1}, and 1/s with
// s = d - sum_k c_k^T g_k.
//
// economic mode keeps only diag(U_k) in the solve; residuals are always
// evaluated with the true operator. The damping factor scales the update at
// sweep time, so one cache serves any damping.

#include <cstdint>
#include <vector>

#include "ehmg/operator.hpp"

namespace ehmg {

enum class VankaMode { full, economic };
enum class SweepOrder { lexicographic, red_black };

template <class Real, int Dim> class VankaSmoother {
 public:
  using C = std::complex<Real>;
  static constexpr int n_local = 2 * Dim + 1;

  explicit VankaSmoother(VankaMode mode = VankaMode::full) : mode_(mode) {}

  VankaMode mode() const { return mode_; }
  int per_cell_complex_count() const {
    return Dim * ((mode_ == VankaMode::full ? 4 : 2) + 4) + 1;
  }
  std::size_t builds() const { return builds_; }

  void ensure_cache(const OpData<Real, Dim>& D) {
    std::uint64_t fp = fingerprint(D);
    if (fp == fingerprint_ && !cache_.empty()) return;
    build(D);
    fingerprint_ = fp;
    ++builds_;
  }

  // One full pass over all cells: x <- x + w * (local corrections).
  void sweep(const OpData<Real, Dim>& D, const FieldVector<Real, Dim>& b,
             FieldVector<Real, Dim>& x, double w, SweepOrder order) {
    ensure_cache(D);
    if (D.par.periodic) {
      PeriodicAcc<Real, Dim> acc{D, x};
      sweep_impl(D, acc, b, x, Real(w), order);
    } else {
      GhostAcc<Real, Dim> acc{D, x};
      sweep_impl(D, acc, b, x, Real(w), order);
    }
  }

 private:
  std::uint64_t fingerprint(const OpData<Real, Dim>& D) const {
    std::uint64_t fp = D.media_hash;
    const double pars[3] = {D.par.beta, D.par.omega, D.par.alpha};
    fp = detail::fnv1a(pars, sizeof(pars), fp);
    fp = detail::fnv1a(D.grid.dims.data(), sizeof(int) * Dim, fp);
    const int flags[2] = {int(D.par.periodic), int(mode_)};
    fp = detail::fnv1a(flags, sizeof(flags), fp);
    return fp;
  }

  // Cache layout per cell: for each component k the block
  //   full:      Uinv00 Uinv01 Uinv10 Uinv11 g0 g1 h0 h1
  //   economic:  Uinv0 Uinv1 g0 g1 h0 h1
  // followed by one sinv entry.
  void build(const OpData<Real, Dim>& D) {
    stride_ = per_cell_complex_count();
    cache_.assign(size_t(D.cellb.size()) * size_t(stride_), C(0));
    if (D.par.periodic)
      for_each(D.cellb, [&](const Idx<Dim>& c) { build_cell<PeriodicUnitAcc<Real, Dim>>(D, c); });
    else
      for_each(D.cellb, [&](const Idx<Dim>& c) { build_cell<UnitAcc<Real, Dim>>(D, c); });
  }

  template <class UnitT> void build_cell(const OpData<Real, Dim>& D, const Idx<Dim>& c) {
    auto canon = [&](Idx<Dim> i) {
      if (D.par.periodic)
        for (int a = 0; a < Dim; ++a) i[a] = detail::wrap<Dim>(i[a], D.grid.dims[a]);
      return i;
    };
    C* q = &cache_[size_t(D.cellb.lin(c)) * size_t(stride_)];
    const bool full = mode_ == VankaMode::full;
    C sum_cg(0);
    for (int k = 0; k < Dim; ++k) {
      const Idx<Dim> f[2] = {c, detail::shifted(c, k, 1)};
      C U[2][2] = {{C(0), C(0)}, {C(0), C(0)}}, bk[2], ck[2];
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
          if (!full && i != j) continue;
          U[i][j] = row_u(D, k, f[i], UnitT{D, k, canon(f[j])});
        }
        bk[i] = row_u(D, k, f[i], UnitT{D, Dim, canon(c)});
        ck[i] = row_p(D, c, UnitT{D, k, canon(f[i])});
      }
      C Uinv[2][2];
      if (full) {
        const C det = U[0][0] * U[1][1] - U[0][1] * U[1][0];
        if (!(std::abs(det) > Real(0))) throw std::runtime_error("vanka: singular local u-block");
        const C idet = C(1) / det;
        Uinv[0][0] = U[1][1] * idet;
        Uinv[0][1] = -U[0][1] * idet;
        Uinv[1][0] = -U[1][0] * idet;
        Uinv[1][1] = U[0][0] * idet;
      } else {
        for (int i = 0; i < 2; ++i) {
          if (!(std::abs(U[i][i]) > Real(0)))
            throw std::runtime_error("vanka: zero local diagonal");
          Uinv[i][i] = C(1) / U[i][i];
        }
        Uinv[0][1] = Uinv[1][0] = C(0);
      }
      const C g[2] = {Uinv[0][0] * bk[0] + Uinv[0][1] * bk[1],
                      Uinv[1][0] * bk[0] + Uinv[1][1] * bk[1]};
      const C h[2] = {ck[0] * Uinv[0][0] + ck[1] * Uinv[1][0],
                      ck[0] * Uinv[0][1] + ck[1] * Uinv[1][1]};
      sum_cg += ck[0] * g[0] + ck[1] * g[1];
      if (full) {
        *q++ = Uinv[0][0];
        *q++ = Uinv[0][1];
        *q++ = Uinv[1][0];
        *q++ = Uinv[1][1];
      } else {
        *q++ = Uinv[0][0];
        *q++ = Uinv[1][1];
      }
      *q++ = g[0];
      *q++ = g[1];
      *q++ = h[0];
      *q++ = h[1];
    }
    const C d = row_p(D, c, UnitT{D, Dim, canon(c)});
    const C s = d - sum_cg;
    if (!(std::abs(s) > Real(0))) throw std::runtime_error("vanka: singular pressure schur");
    *q = C(1) / s;
  }

  template <class Acc>
  void sweep_impl(const OpData<Real, Dim>& D, const Acc& acc, const FieldVector<Real, Dim>& b,
                  FieldVector<Real, Dim>& x, Real w, SweepOrder order) {
    auto canon_lin = [&](int k, Idx<Dim> f) -> std::int64_t {
      if (D.par.periodic)
        for (int a = 0; a < Dim; ++a) f[a] = detail::wrap<Dim>(f[a], D.grid.dims[a]);
      return D.faceb[size_t(k)].lin(f);
    };

    // Correction of one cell from the current accessor state.
    auto corrections = [&](const Idx<Dim>& c, C* du, C& dp) {
      const C* q = &cache_[size_t(D.cellb.lin(c)) * size_t(stride_)];
      const bool full = mode_ == VankaMode::full;
      const int blk_w = full ? 8 : 6;
      C r[Dim][2];
      C dp_acc = b.comp[Dim][size_t(D.cellb.lin(c))] - row_p(D, c, acc);
      for (int k = 0; k < Dim; ++k) {
        const Idx<Dim> f[2] = {c, detail::shifted(c, k, 1)};
        for (int i = 0; i < 2; ++i)
          r[k][i] = b.comp[size_t(k)][size_t(canon_lin(k, f[i]))] - row_u(D, k, f[i], acc);
        const C* hk = q + k * blk_w + (full ? 6 : 4);
        dp_acc -= hk[0] * r[k][0] + hk[1] * r[k][1];
      }
      dp = q[stride_ - 1] * dp_acc;
      for (int k = 0; k < Dim; ++k) {
        const C* blk = q + k * blk_w;
        const C* gk = blk + (full ? 4 : 2);
        if (full) {
          du[2 * k + 0] = blk[0] * r[k][0] + blk[1] * r[k][1] - gk[0] * dp;
          du[2 * k + 1] = blk[2] * r[k][0] + blk[3] * r[k][1] - gk[1] * dp;
        } else {
          du[2 * k + 0] = blk[0] * r[k][0] - gk[0] * dp;
          du[2 * k + 1] = blk[1] * r[k][1] - gk[1] * dp;
        }
      }
    };

    auto apply_cell = [&](const Idx<Dim>& c, const C* du, C dp) {
      for (int k = 0; k < Dim; ++k) {
        x.comp[size_t(k)][size_t(canon_lin(k, c))] += w * du[2 * k + 0];
        x.comp[size_t(k)][size_t(canon_lin(k, detail::shifted(c, k, 1)))] += w * du[2 * k + 1];
      }
      x.comp[Dim][size_t(D.cellb.lin(c))] += w * dp;
    };

    if (order == SweepOrder::lexicographic) {
      C du[2 * Dim];
      C dp;
      for_each(D.cellb, [&](const Idx<Dim>& c) {
        corrections(c, du, dp);
        apply_cell(c, du, dp);
      });
      return;
    }

    // Red-black: corrections of one color are computed from the state at the
    // start of that color and applied afterwards. Cells of equal parity share
    // no DOFs, so the deferred writes commute.
    std::vector<C> defer(size_t(D.cellb.size()) * size_t(n_local));
    for (int color = 0; color < 2; ++color) {
      for_each(D.cellb, [&](const Idx<Dim>& c) {
        int par = 0;
        for (int a = 0; a < Dim; ++a) par += c[a];
        if ((par & 1) != color) return;
        C* slot = &defer[size_t(D.cellb.lin(c)) * size_t(n_local)];
        corrections(c, slot, slot[2 * Dim]);
      });
      for_each(D.cellb, [&](const Idx<Dim>& c) {
        int par = 0;
        for (int a = 0; a < Dim; ++a) par += c[a];
        if ((par & 1) != color) return;
        const C* slot = &defer[size_t(D.cellb.lin(c)) * size_t(n_local)];
        apply_cell(c, slot, slot[2 * Dim]);
      });
    }
  }

  VankaMode mode_;
  std::uint64_t fingerprint_ = 0;
  std::size_t builds_ = 0;
  int stride_ = 0;
  std::vector<C> cache_;
};

}  // namespace ehmg
