#pragma once

// Damped Kaczmarz row projections over an explicitly stored sparse matrix.
// One sweep visits every row once and moves the iterate toward the row's
// hyperplane:
//   x <- x + damping * (b_r - a_r . x) / ||a_r||^2 * conj(a_r)
// A forward sweep followed by a backward sweep is SSOR on the normal
// equations, which preconditions far better than forward passes alone.
// Used as the relaxation inside the coarsest-level Krylov solver, where the
// displacement Schur complement rows are materialized once.

#include <stdexcept>
#include <vector>

#include "ehmg/assemble.hpp"
#include "ehmg/krylov.hpp"

namespace ehmg {

template <class Real> class KaczmarzSweeper {
 public:
  using C = std::complex<Real>;

  explicit KaczmarzSweeper(SpMatR<Real> A, double damping = 0.8)
      : A_(std::move(A)), damping_(damping) {
    inv_n2_.resize(size_t(A_.rows()));
    for (std::int64_t r = 0; r < A_.rows(); ++r) {
      double n2 = 0;
      for (typename SpMatR<Real>::InnerIterator it(A_, r); it; ++it) n2 += std::norm(it.value());
      if (n2 == 0.0) throw std::runtime_error("kaczmarz: zero row " + std::to_string(r));
      inv_n2_[size_t(r)] = 1.0 / n2;
    }
  }

  void sweep(const EigenCVec<Real>& b, EigenCVec<Real>& x, bool reverse = false) const {
    const std::int64_t n = A_.rows();
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int64_t r = reverse ? n - 1 - i : i;
      C ax(0);
      for (typename SpMatR<Real>::InnerIterator it(A_, r); it; ++it)
        ax += it.value() * x[it.col()];
      const C corr = Real(damping_ * inv_n2_[size_t(r)]) * (b[r] - ax);
      for (typename SpMatR<Real>::InnerIterator it(A_, r); it; ++it)
        x[it.col()] += corr * std::conj(it.value());
    }
  }

  // Forward then backward pass; the symmetric variant used as preconditioner.
  void double_sweep(const EigenCVec<Real>& b, EigenCVec<Real>& x) const {
    sweep(b, x, false);
    sweep(b, x, true);
  }

  const SpMatR<Real>& matrix() const { return A_; }
  double damping() const { return damping_; }

 private:
  SpMatR<Real> A_;
  double damping_;
  std::vector<double> inv_n2_;
};

}  // namespace ehmg
