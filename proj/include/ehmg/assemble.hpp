#pragma once

// Explicit sparse assembly of the mixed operator by composing primitive
// matrices (derivatives, media diagonals, mass spreading). This path shares
// no code with the matrix-free row kernels; agreement between the two is an
// invariant checked by the tests. It also backs the coarsest-level direct
// solver, the direct solves of the dispersion demo, and the explicit row
// storage used by the Kaczmarz relaxation.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "ehmg/operator.hpp"

namespace ehmg {

template <class Real> using SpMat = Eigen::SparseMatrix<std::complex<Real>, Eigen::ColMajor,
                                                        std::int64_t>;
template <class Real> using SpMatR = Eigen::SparseMatrix<std::complex<Real>, Eigen::RowMajor,
                                                         std::int64_t>;
template <class Real> using Trip = Eigen::Triplet<std::complex<Real>, std::int64_t>;

// Global DOF layout: displacement components in axis order, then pressure,
// each block axis-0-fastest.
template <int Dim> struct DofLayout {
  std::array<std::int64_t, Dim + 1> off{};
  std::int64_t n = 0;

  template <class Real> explicit DofLayout(const OpData<Real, Dim>& D) {
    std::int64_t o = 0;
    for (int k = 0; k < Dim; ++k) {
      off[k] = o;
      o += D.faceb[k].size();
    }
    off[Dim] = o;
    n = o + D.cellb.size();
  }
  std::int64_t n_u() const { return off[Dim]; }
};

namespace detail {

// Transverse spread offsets and weights for a first derivative along j:
// list of (offset multi-index, weight), weight summing to 1.
template <int Dim>
std::vector<std::pair<Idx<Dim>, double>> spread_pattern(int j, double beta) {
  std::vector<std::pair<Idx<Dim>, double>> out;
  Idx<Dim> zero{};
  out.push_back({zero, beta});
  if (beta == 1.0) return out;
  if constexpr (Dim == 2) {
    const int t = 1 - j;
    for (int st = -1; st <= 1; ++st) {
      Idx<2> o{};
      o[t] = st;
      out.push_back({o, (1.0 - beta) * (st == 0 ? 2 : 1) / 4.0});
    }
  } else {
    const int t1 = (j + 1) % 3, t2 = (j + 2) % 3;
    for (int s1 = -1; s1 <= 1; ++s1)
      for (int s2 = -1; s2 <= 1; ++s2) {
        Idx<3> o{};
        o[t1] = s1;
        o[t2] = s2;
        out.push_back({o, (1.0 - beta) * (s1 == 0 ? 2 : 1) * (s2 == 0 ? 2 : 1) / 16.0});
      }
  }
  return out;
}

}  // namespace detail

// First derivative of u_k along axis j, faces(k) -> flux grid (cells if j==k,
// edges staggered in (k,j) otherwise). beta = 1 gives the plain 2-point form.
// Transverse taps falling outside the grid are dropped and the remaining
// weights renormalized, matching the matrix-free boundary rule.
template <class Real, int Dim>
SpMat<Real> mat_derivative(const OpData<Real, Dim>& D, int k, int j, double beta) {
  const Box<Dim>& fb = D.faceb[k];
  const Box<Dim> outb = (j == k) ? D.cellb : D.edgeb[size_t(edge_pair_id(k, j))];
  const bool per = D.par.periodic;
  std::vector<Trip<Real>> t;
  const Real ih = D.inv_h;
  auto pattern = detail::spread_pattern<Dim>(j, beta);
  auto wrapped_lin = [&](Idx<Dim> f) {
    for (int a = 0; a < Dim; ++a) f[a] = detail::wrap<Dim>(f[a], fb.dims[a]);
    return fb.lin(f);
  };
  for_each(outb, [&](const Idx<Dim>& b) {
    std::int64_t row = outb.lin(b);
    double wsum = 0;
    if (!per)
      for (auto& [offT, w] : pattern) {
        bool ok = true;
        for (int a = 0; a < Dim; ++a)
          if (offT[a] != 0 && (b[a] + offT[a] < 0 || b[a] + offT[a] >= fb.dims[a])) ok = false;
        if (ok) wsum += w;
      }
    else
      wsum = 1.0;
    for (auto& [offT, w] : pattern) {
      Idx<Dim> fp = b, fm = b;
      if (j == k) fp[k] += 1;     // cell b: faces b and b+e_k
      else fm[j] -= 1;            // edge b: faces with f[j] = b[j], b[j]-1
      bool ok = true;
      for (int a = 0; a < Dim; ++a) {
        fp[a] += offT[a];
        fm[a] += offT[a];
        if (!per && offT[a] != 0 && (b[a] + offT[a] < 0 || b[a] + offT[a] >= fb.dims[a]))
          ok = false;
      }
      if (!ok) continue;
      const Real wr = Real(w / wsum);
      if (per) {
        t.push_back({row, wrapped_lin(fp), std::complex<Real>(wr * ih)});
        t.push_back({row, wrapped_lin(fm), std::complex<Real>(-wr * ih)});
      } else {
        if (fb.contains(fp)) t.push_back({row, fb.lin(fp), std::complex<Real>(wr * ih)});
        if (fb.contains(fm)) t.push_back({row, fb.lin(fm), std::complex<Real>(-wr * ih)});
      }
    }
  });
  SpMat<Real> M(outb.size(), fb.size());
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

// Pressure gradient coupling, cells -> faces(k).
template <class Real, int Dim> SpMat<Real> mat_grad(const OpData<Real, Dim>& D, int k) {
  const Box<Dim>& fb = D.faceb[k];
  std::vector<Trip<Real>> t;
  const Real ih = D.inv_h;
  for_each(fb, [&](const Idx<Dim>& f) {
    std::int64_t row = fb.lin(f);
    Idx<Dim> cr = f, cl = f;
    cl[k] -= 1;
    if (D.par.periodic) cl[k] = detail::wrap<Dim>(cl[k], D.cellb.dims[k]);
    if (D.cellb.contains(cr)) t.push_back({row, D.cellb.lin(cr), std::complex<Real>(ih)});
    if (D.cellb.contains(cl)) t.push_back({row, D.cellb.lin(cl), std::complex<Real>(-ih)});
  });
  SpMat<Real> M(fb.size(), D.cellb.size());
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

// Convex mass spreading with boundary renormalization, faces(k) -> faces(k),
// including the omega^2 (1 - i(gamma+alpha)) rho diagonal.
template <class Real, int Dim> SpMat<Real> mat_mass(const OpData<Real, Dim>& D, int k) {
  const Box<Dim>& fb = D.faceb[k];
  const double beta = D.par.beta;
  const double wn = (1.0 - beta) / (2 * Dim);
  std::vector<Trip<Real>> t;
  for_each(fb, [&](const Idx<Dim>& f) {
    std::int64_t row = fb.lin(f);
    std::vector<std::pair<std::int64_t, double>> cols;
    cols.push_back({row, beta});
    double wsum = beta;
    if (beta != 1.0)
      for (int a = 0; a < Dim; ++a)
        for (int sg = -1; sg <= 1; sg += 2) {
          Idx<Dim> fn = f;
          fn[a] += sg;
          if (D.par.periodic) fn[a] = detail::wrap<Dim>(fn[a], fb.dims[a]);
          if (fb.contains(fn)) {
            cols.push_back({fb.lin(fn), wn});
            wsum += wn;
          }
        }
    for (auto& [col, w] : cols)
      t.push_back({row, col, std::complex<Real>(Real(w / wsum)) * D.massdiag[k][size_t(col)]});
  });
  SpMat<Real> M(fb.size(), fb.size());
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

template <class Real>
SpMat<Real> sparse_diag(const std::vector<Real>& d) {
  std::vector<Trip<Real>> t;
  t.reserve(d.size());
  for (std::int64_t i = 0; i < std::int64_t(d.size()); ++i)
    t.push_back({i, i, std::complex<Real>(d[size_t(i)])});
  SpMat<Real> M(d.size(), d.size());
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

// Displacement diagonal block: sum_j d_j^T diag(mu) d_j^beta - Mass.
template <class Real, int Dim>
SpMat<Real> assemble_uu_block(const OpData<Real, Dim>& D, int k) {
  SpMat<Real> A(D.faceb[k].size(), D.faceb[k].size());
  for (int j = 0; j < Dim; ++j) {
    SpMat<Real> Dstd = mat_derivative(D, k, j, 1.0);
    SpMat<Real> Dbeta = mat_derivative(D, k, j, D.par.beta);
    const auto& mu = (j == k) ? D.mu_cell : D.mu_edge[size_t(edge_pair_id(k, j))];
    SpMat<Real> term = Dstd.transpose() * sparse_diag(mu) * Dbeta;
    A = A + term;
  }
  A = A - mat_mass(D, k);
  return A;
}

// Full mixed matrix in the global DOF layout.
template <class Real, int Dim>
SpMat<Real> assemble_sparse(const OpData<Real, Dim>& D,
                            std::int64_t dof_budget = 1'000'000) {
  DofLayout<Dim> L(D);
  if (L.n > dof_budget)
    throw std::length_error("assemble_sparse: grid exceeds DOF budget of " +
                            std::to_string(dof_budget));
  std::vector<Trip<Real>> t;
  auto insert_block = [&](const SpMat<Real>& B, std::int64_t r0, std::int64_t c0) {
    for (std::int64_t o = 0; o < B.outerSize(); ++o)
      for (typename SpMat<Real>::InnerIterator it(B, o); it; ++it)
        t.push_back({it.row() + r0, it.col() + c0, it.value()});
  };
  for (int k = 0; k < Dim; ++k) {
    insert_block(assemble_uu_block(D, k), L.off[k], L.off[k]);
    insert_block(mat_grad(D, k), L.off[k], L.off[Dim]);
    SpMat<Real> Ck = mat_derivative(D, k, k, D.par.beta);
    insert_block(Ck, L.off[Dim], L.off[k]);
  }
  insert_block(sparse_diag(D.inv_lamu), L.off[Dim], L.off[Dim]);
  SpMat<Real> M(L.n, L.n);
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

// Displacement Schur complement A_uu - B diag(lambda+mu) C as one sparse
// matrix over the displacement DOFs only.
template <class Real, int Dim>
SpMatR<Real> assemble_schur(const OpData<Real, Dim>& D) {
  DofLayout<Dim> L(D);
  std::vector<Trip<Real>> tb, tc, ta;
  auto insert = [&](std::vector<Trip<Real>>& t, const SpMat<Real>& B, std::int64_t r0,
                    std::int64_t c0) {
    for (std::int64_t o = 0; o < B.outerSize(); ++o)
      for (typename SpMat<Real>::InnerIterator it(B, o); it; ++it)
        t.push_back({it.row() + r0, it.col() + c0, it.value()});
  };
  const std::int64_t nu = L.n_u(), nc = D.cellb.size();
  for (int k = 0; k < Dim; ++k) {
    insert(ta, assemble_uu_block(D, k), L.off[k], L.off[k]);
    insert(tb, mat_grad(D, k), L.off[k], 0);
    insert(tc, mat_derivative(D, k, k, D.par.beta), 0, L.off[k]);
  }
  SpMat<Real> A(nu, nu), B(nu, nc), C(nc, nu);
  A.setFromTriplets(ta.begin(), ta.end());
  B.setFromTriplets(tb.begin(), tb.end());
  C.setFromTriplets(tc.begin(), tc.end());
  SpMat<Real> S = A - SpMat<Real>(B * sparse_diag(D.lamu_cell) * C);
  return SpMatR<Real>(S);
}

// Flatten/unflatten between FieldVector storage and the global DOF layout.
template <class Real, int Dim>
Eigen::Vector<std::complex<Real>, Eigen::Dynamic> flatten(const OpData<Real, Dim>& D,
                                                          const FieldVector<Real, Dim>& x) {
  DofLayout<Dim> L(D);
  Eigen::Vector<std::complex<Real>, Eigen::Dynamic> v(L.n);
  std::int64_t o = 0;
  for (int c = 0; c <= Dim; ++c)
    for (auto& z : x.comp[c]) v[o++] = z;
  return v;
}

template <class Real, int Dim>
void unflatten(const OpData<Real, Dim>& D, const Eigen::Vector<std::complex<Real>, Eigen::Dynamic>& v,
               FieldVector<Real, Dim>& x) {
  (void)D;
  std::int64_t o = 0;
  for (int c = 0; c <= Dim; ++c)
    for (auto& z : x.comp[c]) z = v[o++];
}

}  // namespace ehmg
