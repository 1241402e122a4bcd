#pragma once

// Cell-centered material model (Lame parameters, density, attenuation) and
// the averaging rules that move it onto faces and edges of the staggered grid.

#include <algorithm>
#include <cmath>

#include "ehmg/grid.hpp"

namespace ehmg {

template <int Dim> struct MediaModel {
  std::vector<double> lambda, mu, rho, gamma;  // one value per cell

  static MediaModel homogeneous(const StaggeredGrid<Dim>& g, double lambda_, double mu_,
                                double rho_, double gamma_ = 0) {
    MediaModel m;
    size_t n = size_t(g.n_cells());
    m.lambda.assign(n, lambda_);
    m.mu.assign(n, mu_);
    m.rho.assign(n, rho_);
    m.gamma.assign(n, gamma_);
    return m;
  }

  void validate(const StaggeredGrid<Dim>& g) const {
    size_t n = size_t(g.n_cells());
    if (lambda.size() != n || mu.size() != n || rho.size() != n || gamma.size() != n)
      throw std::invalid_argument("media: field sizes do not match grid");
    for (size_t i = 0; i < n; ++i) {
      if (!(rho[i] > 0)) throw std::invalid_argument("media: rho must be positive");
      if (!(mu[i] > 0)) throw std::invalid_argument("media: mu must be positive");
      if (!(lambda[i] + mu[i] > 0)) throw std::invalid_argument("media: lambda+mu must be positive");
      if (!(gamma[i] >= 0)) throw std::invalid_argument("media: gamma must be nonnegative");
    }
  }

  double vp(size_t i) const { return std::sqrt((lambda[i] + 2 * mu[i]) / rho[i]); }
  double vs(size_t i) const { return std::sqrt(mu[i] / rho[i]); }
  double poisson(size_t i) const { return lambda[i] / (2 * (lambda[i] + mu[i])); }
};

// Face value = mean of the two adjacent cells; boundary faces replicate the
// single interior neighbor. Preserves constants everywhere.
template <int Dim>
std::vector<double> average_cell_to_face(const StaggeredGrid<Dim>& g,
                                         const std::vector<double>& cell, int axis) {
  Box<Dim> cb = g.cell_box(), fb = g.face_box(axis);
  std::vector<double> out(size_t(fb.size()));
  for_each(fb, [&](const Idx<Dim>& f) {
    Idx<Dim> cl = f, cr = f;
    cl[axis] -= 1;
    double s = 0;
    int n = 0;
    if (cb.contains(cl)) { s += cell[size_t(cb.lin(cl))]; ++n; }
    if (cb.contains(cr)) { s += cell[size_t(cb.lin(cr))]; ++n; }
    out[size_t(fb.lin(f))] = s / n;
  });
  return out;
}

// Edge value (staggered in axes a and b) = mean of the up-to-4 cells sharing
// the edge; out-of-range neighbors are dropped, so boundary edges replicate.
template <int Dim>
std::vector<double> average_cell_to_edge(const StaggeredGrid<Dim>& g,
                                         const std::vector<double>& cell, int a, int b) {
  Box<Dim> cb = g.cell_box(), eb = g.edge_box(a, b);
  std::vector<double> out(size_t(eb.size()));
  for_each(eb, [&](const Idx<Dim>& e) {
    double s = 0;
    int n = 0;
    for (int da = -1; da <= 0; ++da)
      for (int db = -1; db <= 0; ++db) {
        Idx<Dim> c = e;
        c[a] += da;
        c[b] += db;
        if (cb.contains(c)) { s += cell[size_t(cb.lin(c))]; ++n; }
      }
    out[size_t(eb.lin(e))] = s / n;
  });
  return out;
}

struct SpongeConfig {
  int layer_width = 20;       // cells, per absorbing boundary
  double gamma_max = 1.0;     // added attenuation at the outermost cell
  bool absorb_top = false;    // include the shallow side of the last axis
};

// Physical attenuation plus a quadratic sponge ramp: a cell whose distance to
// an absorbing boundary is `dist` cells (0 at the wall) gets an extra
// gamma_max*((L-dist)/L)^2; overlapping corners take the max ramp.
template <int Dim>
std::vector<double> build_attenuation_profile(const StaggeredGrid<Dim>& g, double gamma_phys,
                                              const SpongeConfig& sponge) {
  const int L = sponge.layer_width;
  if (L < 0) throw std::invalid_argument("sponge: negative layer width");
  if (L > 0)
    for (int a = 0; a < Dim; ++a)
      if (2 * L >= g.dims[a])
        throw std::invalid_argument("sponge: 2*layer_width must be < dims on every axis");
  Box<Dim> cb = g.cell_box();
  std::vector<double> out(size_t(cb.size()), gamma_phys);
  if (L == 0) return out;
  for_each(cb, [&](const Idx<Dim>& c) {
    double ramp = 0;
    for (int a = 0; a < Dim; ++a) {
      int dist_lo = c[a];
      int dist_hi = g.dims[a] - 1 - c[a];
      bool skip_lo = sponge.absorb_top ? false : (a == Dim - 1);
      if (!skip_lo && dist_lo < L) {
        double d = double(L - dist_lo) / L;
        ramp = std::max(ramp, d * d);
      }
      if (dist_hi < L) {
        double d = double(L - dist_hi) / L;
        ramp = std::max(ramp, d * d);
      }
    }
    out[size_t(cb.lin(c))] = gamma_phys + sponge.gamma_max * ramp;
  });
  return out;
}

}  // namespace ehmg
