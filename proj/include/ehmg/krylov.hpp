#pragma once

// Restarted flexible GMRES, right-preconditioned. The preconditioner may
// change between iterations (multigrid cycles with inexact coarse solves,
// single-precision cycles around a double-precision operator), so the
// update is formed from the stored preconditioned vectors. Works on any
// vector type providing axpy/scal/dot/norm overloads; FieldVector and Eigen
// column vectors both qualify.

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "ehmg/grid.hpp"

namespace ehmg {

template <class Real>
using EigenCVec = Eigen::Vector<std::complex<Real>, Eigen::Dynamic>;

template <class Real>
void axpy(std::complex<Real> a, const EigenCVec<Real>& x, EigenCVec<Real>& y) {
  y += a * x;
}
template <class Real> void scal(std::complex<Real> a, EigenCVec<Real>& x) { x *= a; }
template <class Real>
std::complex<Real> dot(const EigenCVec<Real>& x, const EigenCVec<Real>& y) {
  return x.dot(y);  // conjugates the first argument
}
template <class Real> double norm(const EigenCVec<Real>& x) { return double(x.norm()); }

enum class KrylovStatus { converged, max_iterations, breakdown, stalled };

inline const char* to_string(KrylovStatus s) {
  switch (s) {
    case KrylovStatus::converged: return "converged";
    case KrylovStatus::max_iterations: return "max_iterations";
    case KrylovStatus::breakdown: return "breakdown";
    default: return "stalled";
  }
}

struct KrylovOptions {
  int restart = 5;
  int max_iterations = 600;
  double rtol = 1e-6;
  // A restart cycle shrinking the residual by less than this factor counts
  // toward the stall limit.
  double stall_factor = 0.99;
  int stall_cycles = 2;
};

struct KrylovResult {
  KrylovStatus status = KrylovStatus::max_iterations;
  int iterations = 0;  // inner steps = preconditioner applications
  double relres = 1.0;
  std::vector<double> history;  // per-iteration relative residual estimates
};

// Solves A x = b starting from the given x. A(in, out) and M(in, out) must
// fully overwrite `out` (same shape as `in`); M approximates A^{-1}.
template <class Vec, class ApplyA, class ApplyM>
KrylovResult fgmres(ApplyA&& A, ApplyM&& M, const Vec& b, Vec& x, const KrylovOptions& opt = {}) {
  using C = decltype(dot(b, b));
  using R = typename C::value_type;

  KrylovResult res;
  const double bnorm = norm(b);
  if (bnorm == 0.0) {
    scal(C(0), x);
    res.status = KrylovStatus::converged;
    res.relres = 0.0;
    return res;
  }
  const double target = opt.rtol * bnorm;
  const int m = opt.restart;

  Vec r = b, w = b;
  A(x, w);
  axpy(C(-1), w, r);
  double beta = norm(r);
  res.history.push_back(beta / bnorm);
  res.relres = beta / bnorm;
  if (beta <= target) {
    res.status = KrylovStatus::converged;
    return res;
  }

  std::vector<std::vector<C>> H(size_t(m) + 1, std::vector<C>(size_t(m), C(0)));
  std::vector<double> gc(size_t(m), 0.0);
  std::vector<C> gs(size_t(m), C(0)), g(size_t(m) + 1, C(0));
  std::vector<Vec> V, Z;
  double prev_cycle = beta;
  int stall = 0;

  while (res.iterations < opt.max_iterations) {
    V.clear();
    Z.clear();
    {
      Vec v0 = r;
      scal(C(1.0 / beta), v0);
      V.push_back(std::move(v0));
    }
    std::fill(g.begin(), g.end(), C(0));
    g[0] = C(beta);
    bool broke = false;
    int j = 0;
    while (j < m && res.iterations < opt.max_iterations) {
      Z.push_back(V[size_t(j)]);
      M(V[size_t(j)], Z.back());
      A(Z.back(), w);
      const double wpre = norm(w);
      for (int i = 0; i <= j; ++i) {
        C hij = dot(V[size_t(i)], w);
        axpy(-hij, V[size_t(i)], w);
        H[size_t(i)][size_t(j)] = hij;
      }
      double wn = norm(w);
      if (wn < 0.70710678 * wpre) {  // one re-orthogonalization pass
        for (int i = 0; i <= j; ++i) {
          C corr = dot(V[size_t(i)], w);
          axpy(-corr, V[size_t(i)], w);
          H[size_t(i)][size_t(j)] += corr;
        }
        wn = norm(w);
      }
      H[size_t(j) + 1][size_t(j)] = C(wn);
      ++res.iterations;
      if (!(wn > 1e-14 * (wpre > 0 ? wpre : 1.0))) {
        broke = true;
      } else {
        Vec vn = w;
        scal(C(1.0 / wn), vn);
        V.push_back(std::move(vn));
      }
      for (int i = 0; i < j; ++i) {
        const C a = H[size_t(i)][size_t(j)], bb = H[size_t(i) + 1][size_t(j)];
        H[size_t(i)][size_t(j)] = R(gc[size_t(i)]) * a + gs[size_t(i)] * bb;
        H[size_t(i) + 1][size_t(j)] = -std::conj(gs[size_t(i)]) * a + R(gc[size_t(i)]) * bb;
      }
      const C h1 = H[size_t(j)][size_t(j)], h2 = H[size_t(j) + 1][size_t(j)];
      const R t = std::sqrt(std::norm(h1) + std::norm(h2));
      if (t == 0.0) {
        gc[size_t(j)] = 1.0;
        gs[size_t(j)] = C(0);
      } else if (std::abs(h1) == 0.0) {
        gc[size_t(j)] = 0.0;
        gs[size_t(j)] = C(1);
      } else {
        gc[size_t(j)] = std::abs(h1) / t;
        gs[size_t(j)] = (h1 / std::abs(h1)) * std::conj(h2) / t;
      }
      H[size_t(j)][size_t(j)] = R(gc[size_t(j)]) * h1 + gs[size_t(j)] * h2;
      H[size_t(j) + 1][size_t(j)] = C(0);
      const C gj = g[size_t(j)];
      g[size_t(j)] = R(gc[size_t(j)]) * gj;
      g[size_t(j) + 1] = -std::conj(gs[size_t(j)]) * gj;
      const double est = std::abs(g[size_t(j) + 1]);
      res.history.push_back(est / bnorm);
      ++j;
      if (broke || est <= target) break;
    }

    std::vector<C> y(static_cast<std::size_t>(j));
    for (int i = j - 1; i >= 0; --i) {
      C v = g[size_t(i)];
      for (int l = i + 1; l < j; ++l) v -= H[size_t(i)][size_t(l)] * y[size_t(l)];
      if (std::abs(H[size_t(i)][size_t(i)]) == 0.0) {
        res.status = KrylovStatus::breakdown;
        return res;
      }
      y[size_t(i)] = v / H[size_t(i)][size_t(i)];
    }
    for (int i = 0; i < j; ++i) axpy(y[size_t(i)], Z[size_t(i)], x);

    r = b;
    A(x, w);
    axpy(C(-1), w, r);
    beta = norm(r);
    res.relres = beta / bnorm;
    if (beta <= target) {
      res.status = KrylovStatus::converged;
      return res;
    }
    if (broke) {
      res.status = KrylovStatus::breakdown;
      return res;
    }
    if (beta > opt.stall_factor * prev_cycle) {
      if (++stall >= opt.stall_cycles) {
        res.status = KrylovStatus::stalled;
        return res;
      }
    } else {
      stall = 0;
    }
    prev_cycle = beta;
  }
  res.status = KrylovStatus::max_iterations;
  return res;
}

}  // namespace ehmg
