#pragma once

// Intergrid transfers on the staggered layout. Each component is handled as
// a tensor product of 1D rules chosen per axis:
//
//   displacement u_k, axis k (face-aligned): R = [1/4, 1/2, 1/4] on the
//     coincident lattice, P places (1, 1/2) / (1/2, 1/2) on even/odd faces;
//   displacement u_k, transverse axes, and pressure, all axes (cell-type):
//     R = [1/2, 1/2] over the two children, P spreads ]1 3 3 1[/4.
//
// Stencils falling off the boundary are truncated and renormalized so every
// row keeps unit sum (constants are transferred exactly). Restriction is
// deliberately not a scalar multiple of the prolongation transpose. On the
// periodic lattice (faces coincident with cells) indices wrap instead.

#include <utility>
#include <vector>

#include "ehmg/assemble.hpp"
#include "ehmg/grid.hpp"
#include "ehmg/media.hpp"

namespace ehmg {

template <int Dim> bool can_coarsen(const StaggeredGrid<Dim>& g) {
  for (int a = 0; a < Dim; ++a)
    if (g.dims[a] % 2 != 0 || g.dims[a] / 2 < 2) return false;
  return true;
}

template <int Dim> StaggeredGrid<Dim> coarsen_grid(const StaggeredGrid<Dim>& g) {
  if (!can_coarsen(g)) throw std::invalid_argument("coarsen_grid: dims must be even and >= 4");
  Idx<Dim> d{};
  for (int a = 0; a < Dim; ++a) d[a] = g.dims[a] / 2;
  return StaggeredGrid<Dim>(d, 2.0 * g.h);
}

// Coarse cell value = mean over its 2^Dim fine children.
template <int Dim>
MediaModel<Dim> coarsen_media(const StaggeredGrid<Dim>& gf, const MediaModel<Dim>& m) {
  StaggeredGrid<Dim> gc = coarsen_grid(gf);
  Box<Dim> fb = gf.cell_box(), cb = gc.cell_box();
  MediaModel<Dim> out;
  auto down = [&](const std::vector<double>& v) {
    std::vector<double> w(size_t(cb.size()));
    for_each(cb, [&](const Idx<Dim>& c) {
      double s = 0;
      int n = 1 << Dim;
      for (int bits = 0; bits < n; ++bits) {
        Idx<Dim> f;
        for (int a = 0; a < Dim; ++a) f[a] = 2 * c[a] + ((bits >> a) & 1);
        s += v[size_t(fb.lin(f))];
      }
      w[size_t(cb.lin(c))] = s / n;
    });
    return w;
  };
  out.lambda = down(m.lambda);
  out.mu = down(m.mu);
  out.rho = down(m.rho);
  out.gamma = down(m.gamma);
  return out;
}

namespace detail {

using Table1D = std::vector<std::vector<std::pair<int, double>>>;

inline void renorm_row(std::vector<std::pair<int, double>>& row) {
  double s = 0;
  for (auto& [i, w] : row) s += w;
  for (auto& [i, w] : row) w /= s;
}

// n_fine = number of fine points along the axis (cells, or faces = cells+1;
// on the periodic lattice faces coincide with cells and indices wrap).
inline Table1D restrict_1d(int n_fine, bool face_type, bool periodic = false) {
  Table1D t;
  if (periodic) {
    const int nc = n_fine / 2;
    t.resize(size_t(nc));
    if (face_type) {
      for (int i = 0; i < nc; ++i)
        for (auto [off, w] : {std::pair{-1, 0.25}, {0, 0.5}, {1, 0.25}})
          t[size_t(i)].push_back({(2 * i + off + n_fine) % n_fine, w});
    } else {
      for (int i = 0; i < nc; ++i) t[size_t(i)] = {{2 * i, 0.5}, {2 * i + 1, 0.5}};
    }
    return t;
  }
  if (face_type) {
    const int nc = (n_fine - 1) / 2;
    t.resize(size_t(nc) + 1);
    for (int i = 0; i <= nc; ++i) {
      for (auto [off, w] : {std::pair{-1, 0.25}, {0, 0.5}, {1, 0.25}}) {
        int f = 2 * i + off;
        if (f >= 0 && f < n_fine) t[size_t(i)].push_back({f, w});
      }
      renorm_row(t[size_t(i)]);
    }
  } else {
    const int nc = n_fine / 2;
    t.resize(size_t(nc));
    for (int i = 0; i < nc; ++i) t[size_t(i)] = {{2 * i, 0.5}, {2 * i + 1, 0.5}};
  }
  return t;
}

inline Table1D prolong_1d(int n_fine, bool face_type, bool periodic = false) {
  Table1D t(static_cast<std::size_t>(n_fine));
  if (periodic) {
    const int nc = n_fine / 2;
    for (int f = 0; f < n_fine; ++f) {
      const int c = f / 2;
      if (face_type)
        t[size_t(f)] = (f % 2 == 0) ? Table1D::value_type{{c, 1.0}}
                                    : Table1D::value_type{{c, 0.5}, {(c + 1) % nc, 0.5}};
      else
        t[size_t(f)] = {{c, 0.75}, {((f % 2 == 0 ? c - 1 : c + 1) + nc) % nc, 0.25}};
    }
    return t;
  }
  if (face_type) {
    for (int f = 0; f < n_fine; ++f) {
      if (f % 2 == 0) t[size_t(f)] = {{f / 2, 1.0}};
      else t[size_t(f)] = {{f / 2, 0.5}, {f / 2 + 1, 0.5}};
    }
  } else {
    const int nc = n_fine / 2;
    for (int f = 0; f < n_fine; ++f) {
      const int c = f / 2, far = (f % 2 == 0) ? c - 1 : c + 1;
      t[size_t(f)] = {{c, 0.75}};
      if (far >= 0 && far < nc) t[size_t(f)].push_back({far, 0.25});
      renorm_row(t[size_t(f)]);
    }
  }
  return t;
}

// Contract one axis of a multi-dimensional array against a 1D table.
template <class Real, int Dim>
void apply_axis(const std::vector<std::complex<Real>>& in, const Box<Dim>& inb,
                std::vector<std::complex<Real>>& out, const Box<Dim>& outb, int axis,
                const Table1D& table) {
  out.assign(size_t(outb.size()), std::complex<Real>(0));
  for_each(outb, [&](const Idx<Dim>& o) {
    std::complex<Real> s(0);
    Idx<Dim> i = o;
    for (auto& [src, w] : table[size_t(o[axis])]) {
      i[axis] = src;
      s += Real(w) * in[size_t(inb.lin(i))];
    }
    out[size_t(outb.lin(o))] = s;
  });
}

// Per-component box on a grid: comp in [0, Dim) are faces, Dim is cells.
// On the periodic lattice every component lives on the cell box.
template <int Dim> Box<Dim> comp_box(const StaggeredGrid<Dim>& g, int comp, bool periodic) {
  return (comp < Dim && !periodic) ? g.face_box(comp) : g.cell_box();
}

template <class Real, int Dim>
void transfer_component(const StaggeredGrid<Dim>& gf, const StaggeredGrid<Dim>& gc, int comp,
                        bool restricting, bool periodic,
                        const std::vector<std::complex<Real>>& in,
                        std::vector<std::complex<Real>>& out) {
  Box<Dim> from = comp_box(restricting ? gf : gc, comp, periodic);
  Box<Dim> to = comp_box(restricting ? gc : gf, comp, periodic);
  std::vector<std::complex<Real>> buf = in, next;
  Box<Dim> cur = from;
  for (int a = 0; a < Dim; ++a) {
    const bool face_type = (comp == a);
    const int n_fine = (comp == a && !periodic) ? gf.dims[a] + 1 : gf.dims[a];
    Table1D tab = restricting ? restrict_1d(n_fine, face_type, periodic)
                              : prolong_1d(n_fine, face_type, periodic);
    Box<Dim> nb = cur;
    nb.dims[a] = to.dims[a];
    apply_axis<Real, Dim>(buf, cur, next, nb, a, tab);
    buf.swap(next);
    cur = nb;
  }
  out = std::move(buf);
}

}  // namespace detail

template <class Real, int Dim>
FieldVector<Real, Dim> restrict_field(const StaggeredGrid<Dim>& gf, const StaggeredGrid<Dim>& gc,
                                      const FieldVector<Real, Dim>& xf, bool periodic = false) {
  FieldVector<Real, Dim> xc;
  for (int c = 0; c <= Dim; ++c)
    detail::transfer_component(gf, gc, c, true, periodic, xf.comp[size_t(c)], xc.comp[size_t(c)]);
  return xc;
}

template <class Real, int Dim>
FieldVector<Real, Dim> prolong_field(const StaggeredGrid<Dim>& gf, const StaggeredGrid<Dim>& gc,
                                     const FieldVector<Real, Dim>& xc, bool periodic = false) {
  FieldVector<Real, Dim> xf;
  for (int c = 0; c <= Dim; ++c)
    detail::transfer_component(gf, gc, c, false, periodic, xc.comp[size_t(c)], xf.comp[size_t(c)]);
  return xf;
}

// Explicit single-component transfer matrix (tensor product of the 1D rules),
// rows = destination DOFs. Used as the reference the matrix-free path is
// checked against, and by the Galerkin coarse-operator tests.
template <class Real, int Dim>
SpMat<Real> transfer_matrix(const StaggeredGrid<Dim>& gf, const StaggeredGrid<Dim>& gc, int comp,
                            bool restricting, bool periodic = false) {
  Box<Dim> from = detail::comp_box(restricting ? gf : gc, comp, periodic);
  Box<Dim> to = detail::comp_box(restricting ? gc : gf, comp, periodic);
  std::array<detail::Table1D, Dim> tabs;
  for (int a = 0; a < Dim; ++a) {
    const int n_fine = (comp == a && !periodic) ? gf.dims[a] + 1 : gf.dims[a];
    tabs[size_t(a)] = restricting ? detail::restrict_1d(n_fine, comp == a, periodic)
                                  : detail::prolong_1d(n_fine, comp == a, periodic);
  }
  std::vector<Trip<Real>> t;
  for_each(to, [&](const Idx<Dim>& o) {
    std::int64_t row = to.lin(o);
    // Cross product of the per-axis entries.
    std::vector<std::pair<Idx<Dim>, double>> acc = {{Idx<Dim>{}, 1.0}};
    for (int a = 0; a < Dim; ++a) {
      std::vector<std::pair<Idx<Dim>, double>> nxt;
      for (auto& [idx, w] : acc)
        for (auto& [src, w1] : tabs[size_t(a)][size_t(o[a])]) {
          Idx<Dim> i2 = idx;
          i2[a] = src;
          nxt.push_back({i2, w * w1});
        }
      acc.swap(nxt);
    }
    for (auto& [idx, w] : acc) t.push_back({row, from.lin(idx), std::complex<Real>(Real(w))});
  });
  SpMat<Real> M(to.size(), from.size());
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

// Block-diagonal transfer over all components in the global DOF layout.
template <class Real, int Dim>
SpMat<Real> transfer_matrix_mixed(const StaggeredGrid<Dim>& gf, const StaggeredGrid<Dim>& gc,
                                  bool restricting, bool periodic = false) {
  std::array<std::int64_t, Dim + 2> off_to{}, off_from{};
  const StaggeredGrid<Dim>& gto = restricting ? gc : gf;
  const StaggeredGrid<Dim>& gfrom = restricting ? gf : gc;
  for (int c = 0; c <= Dim; ++c) {
    off_to[size_t(c) + 1] = off_to[size_t(c)] + detail::comp_box(gto, c, periodic).size();
    off_from[size_t(c) + 1] = off_from[size_t(c)] + detail::comp_box(gfrom, c, periodic).size();
  }
  std::vector<Trip<Real>> t;
  for (int c = 0; c <= Dim; ++c) {
    SpMat<Real> B = transfer_matrix<Real, Dim>(gf, gc, c, restricting, periodic);
    for (std::int64_t o = 0; o < B.outerSize(); ++o)
      for (typename SpMat<Real>::InnerIterator it(B, o); it; ++it)
        t.push_back({it.row() + off_to[size_t(c)], it.col() + off_from[size_t(c)], it.value()});
  }
  SpMat<Real> M(off_to[Dim + 1], off_from[Dim + 1]);
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

}  // namespace ehmg
