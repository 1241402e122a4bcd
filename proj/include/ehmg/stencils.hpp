#pragma once

// Constant-coefficient stencil tables for the parametrized discretization.
//
// Offsets are stored in half-step units (doubled integers) because first
// derivatives live between staggered positions. The mixing weight beta blends
// the standard 2-point derivative with a transversally spread 6-point
// (2D) / 18-point (3D) derivative; beta=1 recovers the standard scheme.

#include <cmath>
#include <map>

#include "ehmg/grid.hpp"

namespace ehmg {

template <int Dim> struct StencilEntry {
  Idx<Dim> off2{};  // offset in units of h/2
  double c = 0;
};

template <int Dim> struct Stencil {
  std::vector<StencilEntry<Dim>> e;

  void add(const Idx<Dim>& off2, double c) {
    if (c == 0) return;
    e.push_back({off2, c});
  }
  // Merge duplicate offsets, drop tiny residue from cancellation.
  void normalize(double drop = 1e-15) {
    std::map<Idx<Dim>, double> m;
    double scale = 0;
    for (auto& s : e) {
      m[s.off2] += s.c;
      scale = std::max(scale, std::abs(s.c));
    }
    e.clear();
    for (auto& [k, v] : m)
      if (std::abs(v) > drop * scale) e.push_back({k, v});
  }
  double coeff_sum() const {
    double s = 0;
    for (auto& t : e) s += t.c;
    return s;
  }
};

// Adjoint of a constant-coefficient stencil: reversed offsets.
template <int Dim> Stencil<Dim> transpose(const Stencil<Dim>& s) {
  Stencil<Dim> t;
  for (auto& x : s.e) {
    Idx<Dim> o = x.off2;
    for (auto& v : o) v = -v;
    t.add(o, x.c);
  }
  t.normalize();
  return t;
}

// a∘b: apply b, then a. Valid for constant coefficients.
template <int Dim> Stencil<Dim> compose(const Stencil<Dim>& a, const Stencil<Dim>& b) {
  Stencil<Dim> r;
  for (auto& x : a.e)
    for (auto& y : b.e) {
      Idx<Dim> o;
      for (int d = 0; d < Dim; ++d) o[d] = x.off2[d] + y.off2[d];
      r.add(o, x.c * y.c);
    }
  r.normalize();
  return r;
}

template <int Dim> Stencil<Dim> operator+(const Stencil<Dim>& a, const Stencil<Dim>& b) {
  Stencil<Dim> r = a;
  for (auto& y : b.e) r.add(y.off2, y.c);
  r.normalize();
  return r;
}

template <int Dim> Stencil<Dim> scaled(const Stencil<Dim>& a, double f) {
  Stencil<Dim> r;
  for (auto& x : a.e) r.add(x.off2, x.c * f);
  return r;
}

// Standard 2-point first derivative along `axis` between staggered positions.
template <int Dim> Stencil<Dim> d_std(int axis, double h) {
  Stencil<Dim> s;
  Idx<Dim> o{};
  o[axis] = 1;
  s.add(o, 1.0 / h);
  o[axis] = -1;
  s.add(o, -1.0 / h);
  return s;
}

// Transverse spread weights: 1-2-1 per transverse axis, total 4 (2D) / 16 (3D).
template <int Dim> Stencil<Dim> d_spread(int axis, double beta, double h) {
  Stencil<Dim> s;
  const double wspread = (1.0 - beta) / (Dim == 2 ? 4.0 : 16.0);
  auto add_pair = [&](const Idx<Dim>& t, double w) {
    Idx<Dim> o = t;
    o[axis] = 1;
    s.add(o, w / h);
    o[axis] = -1;
    s.add(o, -w / h);
  };
  Idx<Dim> zero{};
  add_pair(zero, beta);  // the 2-point part
  if (beta != 1.0) {
    if constexpr (Dim == 2) {
      int t = 1 - axis;
      for (int st = -1; st <= 1; ++st) {
        Idx<2> o{};
        o[t] = 2 * st;  // full-step transverse offsets
        add_pair(o, wspread * (st == 0 ? 2.0 : 1.0));
      }
    } else {
      int t1 = (axis + 1) % 3, t2 = (axis + 2) % 3;
      for (int s1 = -1; s1 <= 1; ++s1)
        for (int s2 = -1; s2 <= 1; ++s2) {
          Idx<3> o{};
          o[t1] = 2 * s1;
          o[t2] = 2 * s2;
          add_pair(o, wspread * (s1 == 0 ? 2.0 : 1.0) * (s2 == 0 ? 2.0 : 1.0));
        }
    }
  }
  s.normalize();
  return s;
}

// Convex mass spreading: center beta, face neighbors share 1-beta equally.
// Coefficients sum to 1; the omega^2(1-i gamma) factor is applied separately.
template <int Dim> Stencil<Dim> mass_spread(double beta) {
  Stencil<Dim> s;
  Idx<Dim> zero{};
  s.add(zero, beta);
  if (beta != 1.0) {
    const double wn = (1.0 - beta) / (2 * Dim);
    for (int a = 0; a < Dim; ++a)
      for (int sg = -1; sg <= 1; sg += 2) {
        Idx<Dim> o{};
        o[a] = 2 * sg;
        s.add(o, wn);
      }
  }
  return s;
}

// Composite second-order term: sum_j d_std(j)^T (d_spread(j)); equals the
// negative spread Laplacian. 9-point in 2D, 27-point in 3D.
template <int Dim> Stencil<Dim> laplacian_beta(double beta, double h) {
  Stencil<Dim> r;
  for (int j = 0; j < Dim; ++j)
    r = r + compose(transpose(d_std<Dim>(j, h)), d_spread<Dim>(j, beta, h));
  r.normalize();
  return r;
}

}  // namespace ehmg
