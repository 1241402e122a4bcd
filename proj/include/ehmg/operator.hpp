#pragma once

// Matrix-free application of the mixed-form operator on the staggered grid.
//
// Unknowns are the displacement components u_k (faces) and the auxiliary
// pressure p (cells). Row conventions, for mesh width h and mixing weight
// beta (see stencils.hpp):
//
//   u_k row:  sum_j d_j^T( mu * d_j^beta u_k )  -  Mass_beta( w * u_k )  +  (grad_k p)
//   p row:    div_beta u  +  p/(lambda+mu)
//
// with w = omega^2 (1 - i(gamma + alpha)) rho averaged onto faces, mu taken
// at cells for the aligned derivative and averaged onto edges for transverse
// ones, and alpha the spectral shift folded into the attenuation. Stencil
// reads outside the grid use zero ghosts; the convex mass spreading instead
// truncates and renormalizes so its coefficient sum stays 1. A periodic
// variant (all index reads wrapped, every field cell-sized) backs the Fourier
// probes in the tests.

#include "ehmg/media.hpp"
#include "ehmg/stencils.hpp"

namespace ehmg {

enum class Precision { dp, sp };

struct OperatorParams {
  double beta = 1.0;
  double omega = 0.0;
  double alpha = 0.0;   // added to gamma inside the mass term only
  bool periodic = false;
};

inline int edge_pair_id(int a, int b) {
  if (a > b) std::swap(a, b);
  // 2D: (0,1)->0.  3D: (0,1)->0, (0,2)->1, (1,2)->2.
  return a + b - 1;
}

template <class Real, int Dim> struct OpData {
  using C = std::complex<Real>;

  StaggeredGrid<Dim> grid;
  OperatorParams par;
  Real inv_h = 0;

  Box<Dim> cellb;
  std::array<Box<Dim>, Dim> faceb;
  std::array<Box<Dim>, Dim == 2 ? 1 : 3> edgeb;

  std::vector<Real> mu_cell, lamu_cell, inv_lamu;
  std::array<std::vector<Real>, Dim == 2 ? 1 : 3> mu_edge;
  std::array<std::vector<C>, Dim> massdiag;  // omega^2 (1 - i(gamma+alpha)) rho, on faces

  std::uint64_t media_hash = 0;
};

namespace detail {

inline std::uint64_t fnv1a(const void* data, size_t n, std::uint64_t h = 1469598103934665603ull) {
  const unsigned char* b = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 1099511628211ull;
  }
  return h;
}

template <int Dim> int wrap(int i, int n) {
  int r = i % n;
  return r < 0 ? r + n : r;
}

}  // namespace detail

template <class Real, int Dim>
OpData<Real, Dim> make_opdata(const StaggeredGrid<Dim>& grid, const MediaModel<Dim>& media,
                              const OperatorParams& par) {
  media.validate(grid);
  OpData<Real, Dim> D;
  D.grid = grid;
  D.par = par;
  D.inv_h = Real(1.0 / grid.h);
  const bool per = par.periodic;
  D.cellb = grid.cell_box();
  for (int k = 0; k < Dim; ++k) D.faceb[k] = per ? grid.cell_box() : grid.face_box(k);

  const Box<Dim> cb = grid.cell_box();
  auto cell_at = [&](Idx<Dim> c, const std::vector<double>& f, bool& ok) -> double {
    if (per)
      for (int a = 0; a < Dim; ++a) c[a] = detail::wrap<Dim>(c[a], grid.dims[a]);
    ok = cb.contains(c);
    return ok ? f[size_t(cb.lin(c))] : 0.0;
  };

  D.mu_cell.resize(size_t(cb.size()));
  D.lamu_cell.resize(size_t(cb.size()));
  D.inv_lamu.resize(size_t(cb.size()));
  for_each(cb, [&](const Idx<Dim>& c) {
    size_t i = size_t(cb.lin(c));
    D.mu_cell[i] = Real(media.mu[i]);
    double lm = media.lambda[i] + media.mu[i];
    D.lamu_cell[i] = Real(lm);
    D.inv_lamu[i] = Real(1.0 / lm);
  });

  // mu on edges: mean of adjacent cells, dropping out-of-range ones.
  for (int a = 0; a < Dim; ++a)
    for (int b = a + 1; b < Dim; ++b) {
      int pid = edge_pair_id(a, b);
      Box<Dim> eb = per ? grid.cell_box() : grid.edge_box(a, b);
      D.edgeb[size_t(pid)] = eb;
      auto& out = D.mu_edge[size_t(pid)];
      out.resize(size_t(eb.size()));
      for_each(eb, [&](const Idx<Dim>& e) {
        double s = 0;
        int n = 0;
        for (int da = -1; da <= 0; ++da)
          for (int db = -1; db <= 0; ++db) {
            Idx<Dim> c = e;
            c[a] += da;
            c[b] += db;
            bool ok;
            double v = cell_at(c, media.mu, ok);
            if (ok) { s += v; ++n; }
          }
        out[size_t(eb.lin(e))] = Real(s / n);
      });
    }

  // Face mass diagonal: averaged rho and gamma, shift alpha added to gamma.
  const double w2 = par.omega * par.omega;
  for (int k = 0; k < Dim; ++k) {
    const Box<Dim>& fb = D.faceb[k];
    auto& out = D.massdiag[k];
    out.resize(size_t(fb.size()));
    for_each(fb, [&](const Idx<Dim>& f) {
      double sr = 0, sg = 0;
      int n = 0;
      for (int d = -1; d <= 0; ++d) {
        Idx<Dim> c = f;
        c[k] += d;
        bool ok;
        double r = cell_at(c, media.rho, ok);
        if (ok) {
          sr += r;
          bool ok2;
          sg += cell_at(c, media.gamma, ok2);
          ++n;
        }
      }
      double rho_f = sr / n, gam_f = sg / n + par.alpha;
      out[size_t(fb.lin(f))] =
          std::complex<Real>(Real(w2 * rho_f), Real(-w2 * gam_f * rho_f));
    });
  }

  std::uint64_t h = detail::fnv1a(media.lambda.data(), media.lambda.size() * sizeof(double));
  h = detail::fnv1a(media.mu.data(), media.mu.size() * sizeof(double), h);
  h = detail::fnv1a(media.rho.data(), media.rho.size() * sizeof(double), h);
  h = detail::fnv1a(media.gamma.data(), media.gamma.size() * sizeof(double), h);
  D.media_hash = h;
  return D;
}

// --- accessors -------------------------------------------------------------
//
// An accessor canonicalizes indices and supplies field values; the same row
// kernels then serve the zero-ghost grid, the periodic probe grid, and the
// unit-vector probes used to extract matrix entries.

template <class Real, int Dim> struct GhostAcc {
  using C = std::complex<Real>;
  const OpData<Real, Dim>& D;
  const FieldVector<Real, Dim>& x;

  bool face_valid(int k, const Idx<Dim>& f) const { return D.faceb[k].contains(f); }
  bool tap_valid(int k, int axis, int coord) const {
    return coord >= 0 && coord < D.faceb[k].dims[axis];
  }
  C u(int k, const Idx<Dim>& f) const {
    return D.faceb[k].contains(f) ? x.comp[k][size_t(D.faceb[k].lin(f))] : C(0);
  }
  C p(const Idx<Dim>& c) const {
    return D.cellb.contains(c) ? x.comp[Dim][size_t(D.cellb.lin(c))] : C(0);
  }
  bool cell_valid(Idx<Dim>& c) const { return D.cellb.contains(c); }
  void edge_canon(Idx<Dim>&) const {}
};

template <class Real, int Dim> struct PeriodicAcc {
  using C = std::complex<Real>;
  const OpData<Real, Dim>& D;
  const FieldVector<Real, Dim>& x;

  Idx<Dim> wrap(Idx<Dim> i) const {
    for (int a = 0; a < Dim; ++a) i[a] = detail::wrap<Dim>(i[a], D.grid.dims[a]);
    return i;
  }
  bool face_valid(int, const Idx<Dim>&) const { return true; }
  bool tap_valid(int, int, int) const { return true; }
  C u(int k, const Idx<Dim>& f) const { return x.comp[k][size_t(D.cellb.lin(wrap(f)))]; }
  C p(const Idx<Dim>& c) const { return x.comp[Dim][size_t(D.cellb.lin(wrap(c)))]; }
  bool cell_valid(Idx<Dim>& c) const {
    c = wrap(c);
    return true;
  }
  void edge_canon(Idx<Dim>& e) const { e = wrap(e); }
};

// Unit basis vector on the zero-ghost grid; component Dim selects pressure.
template <class Real, int Dim> struct UnitAcc {
  using C = std::complex<Real>;
  const OpData<Real, Dim>& D;
  int comp;
  Idx<Dim> at;

  bool face_valid(int k, const Idx<Dim>& f) const { return D.faceb[k].contains(f); }
  bool tap_valid(int k, int axis, int coord) const {
    return coord >= 0 && coord < D.faceb[k].dims[axis];
  }
  C u(int k, const Idx<Dim>& f) const {
    return (k == comp && f == at && D.faceb[k].contains(f)) ? C(1) : C(0);
  }
  C p(const Idx<Dim>& c) const {
    return (comp == Dim && c == at && D.cellb.contains(c)) ? C(1) : C(0);
  }
  bool cell_valid(Idx<Dim>& c) const { return D.cellb.contains(c); }
  void edge_canon(Idx<Dim>&) const {}
};

// Unit basis vector on the periodic grid; `at` must already be canonical.
template <class Real, int Dim> struct PeriodicUnitAcc {
  using C = std::complex<Real>;
  const OpData<Real, Dim>& D;
  int comp;
  Idx<Dim> at;

  Idx<Dim> wrap(Idx<Dim> i) const {
    for (int a = 0; a < Dim; ++a) i[a] = detail::wrap<Dim>(i[a], D.grid.dims[a]);
    return i;
  }
  bool face_valid(int, const Idx<Dim>&) const { return true; }
  bool tap_valid(int, int, int) const { return true; }
  C u(int k, const Idx<Dim>& f) const { return (k == comp && wrap(f) == at) ? C(1) : C(0); }
  C p(const Idx<Dim>& c) const { return (comp == Dim && wrap(c) == at) ? C(1) : C(0); }
  bool cell_valid(Idx<Dim>& c) const {
    c = wrap(c);
    return true;
  }
  void edge_canon(Idx<Dim>& e) const { e = wrap(e); }
};

// --- row kernels -----------------------------------------------------------

namespace detail {

template <std::size_t N> std::array<int, N> shifted(std::array<int, N> i, int axis, int d) {
  i[std::size_t(axis)] += d;
  return i;
}

// (d_k^beta u_k) at cell c: aligned first derivative with transverse spread.
// Taps whose transverse position leaves the grid are dropped and the weights
// renormalized, keeping the sample a convex average of 2-point derivatives.
template <class Real, int Dim, class Acc>
std::complex<Real> dspread_cell(const OpData<Real, Dim>& D, int k, const Idx<Dim>& c,
                                const Acc& acc) {
  using C = std::complex<Real>;
  const double beta = D.par.beta;
  auto pairval = [&](const Idx<Dim>& b) -> C {
    return acc.u(k, shifted(b, k, 1)) - acc.u(k, b);
  };
  C v = Real(beta) * pairval(c);
  if (beta != 1.0) {
    Real wsum = Real(beta);
    if constexpr (Dim == 2) {
      const int t = 1 - k;
      const Real w = Real((1.0 - beta) / 4.0);
      for (int st = -1; st <= 1; ++st) {
        if (!acc.tap_valid(k, t, c[t] + st)) continue;
        const Real wt = w * Real(st == 0 ? 2 : 1);
        v += wt * pairval(shifted(c, t, st));
        wsum += wt;
      }
    } else {
      const int t1 = (k + 1) % 3, t2 = (k + 2) % 3;
      const Real w = Real((1.0 - beta) / 16.0);
      for (int s1 = -1; s1 <= 1; ++s1)
        for (int s2 = -1; s2 <= 1; ++s2) {
          if (!acc.tap_valid(k, t1, c[t1] + s1) || !acc.tap_valid(k, t2, c[t2] + s2)) continue;
          Idx<Dim> b = shifted(shifted(c, t1, s1), t2, s2);
          const Real wt = w * Real((s1 == 0 ? 2 : 1) * (s2 == 0 ? 2 : 1));
          v += wt * pairval(b);
          wsum += wt;
        }
    }
    v *= Real(1) / wsum;
  }
  return v * D.inv_h;
}

// (d_j^beta u_k) at the edge staggered in (k,j), j != k. Same tap dropping
// and weight renormalization as the cell-aligned version.
template <class Real, int Dim, class Acc>
std::complex<Real> dspread_edge(const OpData<Real, Dim>& D, int k, int j, const Idx<Dim>& e,
                                const Acc& acc) {
  using C = std::complex<Real>;
  const double beta = D.par.beta;
  auto pairval = [&](const Idx<Dim>& b) -> C {
    return acc.u(k, b) - acc.u(k, shifted(b, j, -1));
  };
  C v = Real(beta) * pairval(e);
  if (beta != 1.0) {
    Real wsum = Real(beta);
    if constexpr (Dim == 2) {
      const int t = k;  // the only transverse axis
      const Real w = Real((1.0 - beta) / 4.0);
      for (int st = -1; st <= 1; ++st) {
        if (!acc.tap_valid(k, t, e[t] + st)) continue;
        const Real wt = w * Real(st == 0 ? 2 : 1);
        v += wt * pairval(shifted(e, t, st));
        wsum += wt;
      }
    } else {
      const int t1 = 3 - k - j;  // third axis
      const int t2 = k;
      const Real w = Real((1.0 - beta) / 16.0);
      for (int s1 = -1; s1 <= 1; ++s1)
        for (int s2 = -1; s2 <= 1; ++s2) {
          if (!acc.tap_valid(k, t1, e[t1] + s1) || !acc.tap_valid(k, t2, e[t2] + s2)) continue;
          Idx<Dim> b = shifted(shifted(e, t1, s1), t2, s2);
          const Real wt = w * Real((s1 == 0 ? 2 : 1) * (s2 == 0 ? 2 : 1));
          v += wt * pairval(b);
          wsum += wt;
        }
    }
    v *= Real(1) / wsum;
  }
  return v * D.inv_h;
}

template <class Real, int Dim, class Acc>
std::complex<Real> flux_cell(const OpData<Real, Dim>& D, int k, Idx<Dim> c, const Acc& acc) {
  if (!acc.cell_valid(c)) return std::complex<Real>(0);
  return D.mu_cell[size_t(D.cellb.lin(c))] * dspread_cell(D, k, c, acc);
}

template <class Real, int Dim, class Acc>
std::complex<Real> flux_edge(const OpData<Real, Dim>& D, int k, int j, Idx<Dim> e,
                             const Acc& acc) {
  acc.edge_canon(e);
  const auto& eb = D.edgeb[size_t(edge_pair_id(k, j))];
  return D.mu_edge[size_t(edge_pair_id(k, j))][size_t(eb.lin(e))] * dspread_edge(D, k, j, e, acc);
}

// Convex mass spreading with boundary renormalization.
template <class Real, int Dim, class Acc>
std::complex<Real> mass_eval(const OpData<Real, Dim>& D, int k, const Idx<Dim>& f,
                             const Acc& acc) {
  using C = std::complex<Real>;
  const double beta = D.par.beta;
  const auto& md = D.massdiag[k];
  const auto& fb = D.faceb[k];
  auto val = [&](Idx<Dim> ff) -> C {
    Idx<Dim> cf = ff;
    if constexpr (requires { acc.wrap(cf); }) cf = acc.wrap(cf);
    return md[size_t(fb.lin(cf))] * acc.u(k, ff);
  };
  C v = Real(beta) * val(f);
  if (beta == 1.0) return v;
  const double wn = (1.0 - beta) / (2 * Dim);
  double wsum = beta;
  for (int a = 0; a < Dim; ++a)
    for (int sg = -1; sg <= 1; sg += 2) {
      Idx<Dim> fn = shifted(f, a, sg);
      if (acc.face_valid(k, fn)) {
        v += Real(wn) * val(fn);
        wsum += wn;
      }
    }
  return v * Real(1.0 / wsum);
}

}  // namespace detail

// Displacement row without the pressure coupling (the acoustic block).
template <class Real, int Dim, class Acc>
std::complex<Real> row_u_acoustic(const OpData<Real, Dim>& D, int k, const Idx<Dim>& f,
                                  const Acc& acc) {
  using namespace detail;
  std::complex<Real> out(0);
  for (int j = 0; j < Dim; ++j) {
    if (j == k) {
      auto wm = flux_cell(D, k, shifted(f, k, -1), acc);
      auto wp = flux_cell(D, k, f, acc);
      out += (wm - wp) * D.inv_h;
    } else {
      auto wm = flux_edge(D, k, j, f, acc);
      auto wp = flux_edge(D, k, j, shifted(f, j, 1), acc);
      out += (wm - wp) * D.inv_h;
    }
  }
  out -= mass_eval(D, k, f, acc);
  return out;
}

template <class Real, int Dim, class Acc>
std::complex<Real> row_u(const OpData<Real, Dim>& D, int k, const Idx<Dim>& f, const Acc& acc) {
  auto out = row_u_acoustic(D, k, f, acc);
  out += (acc.p(f) - acc.p(detail::shifted(f, k, -1))) * D.inv_h;
  return out;
}

template <class Real, int Dim, class Acc>
std::complex<Real> row_p(const OpData<Real, Dim>& D, const Idx<Dim>& c, const Acc& acc) {
  std::complex<Real> out(0);
  for (int k = 0; k < Dim; ++k) out += detail::dspread_cell(D, k, c, acc);
  out += D.inv_lamu[size_t(D.cellb.lin(c))] * acc.p(c);
  return out;
}

template <class Real, int Dim, class Acc>
void apply_mixed_impl(const OpData<Real, Dim>& D, const Acc& acc, FieldVector<Real, Dim>& y) {
  for (int k = 0; k < Dim; ++k) {
    const Box<Dim>& fb = D.faceb[k];
    auto& out = y.comp[k];
    for_each(fb, [&](const Idx<Dim>& f) { out[size_t(fb.lin(f))] = row_u(D, k, f, acc); });
  }
  auto& outp = y.comp[Dim];
  for_each(D.cellb, [&](const Idx<Dim>& c) { outp[size_t(D.cellb.lin(c))] = row_p(D, c, acc); });
}

// y = H x. With par.alpha = 0 this is the physical operator; alpha > 0 gives
// the shifted operator used throughout the preconditioner hierarchy.
template <class Real, int Dim>
void apply_mixed_operator(const OpData<Real, Dim>& D, const FieldVector<Real, Dim>& x,
                          FieldVector<Real, Dim>& y) {
  if (D.par.periodic) {
    PeriodicAcc<Real, Dim> acc{D, x};
    apply_mixed_impl(D, acc, y);
  } else {
    GhostAcc<Real, Dim> acc{D, x};
    apply_mixed_impl(D, acc, y);
  }
}

template <class Real, int Dim>
void apply_shifted_operator(const OpData<Real, Dim>& D, const FieldVector<Real, Dim>& x,
                            FieldVector<Real, Dim>& y) {
  apply_mixed_operator(D, x, y);
}

/// Displacement Schur complement after eliminating p:
//   u -> A_uu u - grad( (lambda+mu) div_beta u ).
// Pressure entries of x are ignored; y.p is set to zero.
template <class Real, int Dim>
void schur_eliminate_pressure(const OpData<Real, Dim>& D, const FieldVector<Real, Dim>& x,
                              FieldVector<Real, Dim>& y) {
  using namespace detail;
  GhostAcc<Real, Dim> acc{D, x};
  auto wval = [&](Idx<Dim> c) -> std::complex<Real> {
    if (!acc.cell_valid(c)) return std::complex<Real>(0);
    std::complex<Real> dv(0);
    for (int k = 0; k < Dim; ++k) dv += dspread_cell(D, k, c, acc);
    return D.lamu_cell[size_t(D.cellb.lin(c))] * dv;
  };
  for (int k = 0; k < Dim; ++k) {
    const Box<Dim>& fb = D.faceb[k];
    auto& out = y.comp[k];
    for_each(fb, [&](const Idx<Dim>& f) {
      auto v = row_u_acoustic(D, k, f, acc);
      v -= (wval(f) - wval(shifted(f, k, -1))) * D.inv_h;
      out[size_t(fb.lin(f))] = v;
    });
  }
  std::fill(y.comp[Dim].begin(), y.comp[Dim].end(), std::complex<Real>(0));
}

template <class Real, int Dim>
FieldVector<Real, Dim> make_field(const OpData<Real, Dim>& D) {
  FieldVector<Real, Dim> f;
  for (int k = 0; k < Dim; ++k) f.comp[k].assign(size_t(D.faceb[k].size()), std::complex<Real>(0));
  f.comp[Dim].assign(size_t(D.cellb.size()), std::complex<Real>(0));
  return f;
}

}  // namespace ehmg
