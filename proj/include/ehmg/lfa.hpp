#pragma once

// Two-grid Fourier analysis of the mixed discretization (2D, homogeneous
// media, infinite grid). Provides closed-form symbols of the operator and
// the staggered transfers, a staged-amplitude symbol of the lexicographic
// overlapping cell relaxation, and the sampled smoothing / two-grid factors.
//
// The smoother symbol: during a raster sweep each displacement face is
// touched twice (by the two cells sharing it) and each pressure once, so a
// Fourier mode carries stage amplitudes A0->A1->A2 per displacement
// component and P0->P1 for pressure. When a cell is processed, the state of
// any value it reads is decided by whether that value's updating cells
// precede the current cell in raster order; this turns one sweep into a
// small linear system relating the intermediate amplitudes.
//
// The two-grid operator couples the four harmonics of a low frequency into
// a 12x12 block (component-major layout: index = component*4 + harmonic).
// Coarse symbols that are numerically singular are skipped and counted.

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "ehmg/operator.hpp"
#include "ehmg/vanka.hpp"

namespace ehmg {

inline constexpr double kPi = std::numbers::pi;

struct LfaParams {
  double h = 1.0 / 64;
  double beta = 1.0;
  double omega = 0.0;
  double alpha = 0.0;
  double gamma = 0.0;
  double lambda = 1.0, mu = 1.0, rho = 1.0;
};

struct LfaSample {
  double factor = 0.0;
  double theta0 = 0.0, theta1 = 0.0;  // where the max was attained
  int skipped = 0;                    // singular coarse symbols dropped
};

class LfaEngine {
 public:
  using Cd = std::complex<double>;
  using M3 = Eigen::Matrix3cd;
  using M5 = Eigen::Matrix<Cd, 5, 5>;
  using M12 = Eigen::Matrix<Cd, 12, 12>;

  explicit LfaEngine(const LfaParams& p)
      : p_(p), probe_grid_({8, 8}, p.h), probe_data_(make_probe(p, probe_grid_)) {
    c0_ = {4, 4};
    build_local_matrices();
  }

  const LfaParams& params() const { return p_; }

  // --- closed-form symbols --------------------------------------------------

  // Transverse spread factor of a first derivative and the mass spread.
  static double spread_factor(double theta_t, double beta) {
    return beta + (1.0 - beta) * (1.0 + std::cos(theta_t)) / 2.0;
  }
  double mass_factor(double t0, double t1) const {
    return p_.beta + (1.0 - p_.beta) * (std::cos(t0) + std::cos(t1)) / 2.0;
  }

  // Mixed operator symbol at frequency (t0, t1) on the given spacing.
  M3 op_symbol(double t0, double t1, double spacing) const {
    const double b = p_.beta;
    const Cd I(0, 1);
    const double ih = 1.0 / spacing;
    const double sx = 4.0 * std::pow(std::sin(t0 / 2), 2) * ih * ih;
    const double sy = 4.0 * std::pow(std::sin(t1 / 2), 2) * ih * ih;
    const Cd mass = mass_factor(t0, t1) * p_.omega * p_.omega *
                    Cd(1.0, -(p_.gamma + p_.alpha)) * p_.rho;
    M3 A = M3::Zero();
    A(0, 0) = p_.mu * (sx * spread_factor(t1, b) + sy * spread_factor(t0, b)) - mass;
    A(1, 1) = p_.mu * (sy * spread_factor(t0, b) + sx * spread_factor(t1, b)) - mass;
    A(0, 2) = (1.0 - std::exp(-I * t0)) * ih;
    A(1, 2) = (1.0 - std::exp(-I * t1)) * ih;
    A(2, 0) = (std::exp(I * t0) - 1.0) * spread_factor(t1, b) * ih;
    A(2, 1) = (std::exp(I * t1) - 1.0) * spread_factor(t0, b) * ih;
    A(2, 2) = 1.0 / (p_.lambda + p_.mu);
    return A;
  }

  // Per-component restriction symbol (amplitude of the coarse mode 2*theta
  // produced from a fine mode at theta).
  static Cd restrict_symbol(int comp, double t0, double t1) {
    auto face = [](double t) { return Cd((1.0 + std::cos(t)) / 2.0); };
    auto cell = [](double t) { return (1.0 + std::exp(Cd(0, 1) * t)) / 2.0; };
    if (comp == 0) return face(t0) * cell(t1);
    if (comp == 1) return cell(t0) * face(t1);
    return cell(t0) * cell(t1);
  }

  // Per-component prolongation symbol: amplitude injected into the fine
  // harmonic at theta from a coarse mode at 2*theta (includes the 1/2 per
  // axis from the harmonic split).
  static Cd prolong_symbol(int comp, double t0, double t1) {
    auto face = [](double t) { return Cd((1.0 + std::cos(t)) / 2.0); };
    auto cell = [](double t) {
      const Cd e = std::exp(Cd(0, -1) * t);
      return (0.75 + 0.75 * e + 0.25 / e + 0.25 * e * e) / 2.0;
    };
    if (comp == 0) return face(t0) * cell(t1);
    if (comp == 1) return cell(t0) * face(t1);
    return cell(t0) * cell(t1);
  }

  // --- smoother symbol --------------------------------------------------------

  // Symbol of one lexicographic sweep at damping w.
  M3 smoother_symbol(double t0, double t1, double w, VankaMode mode) const {
    // Q: the five local residual rows as linear functions of the eight stage
    // amplitudes (A0 A1 A2 B0 B1 B2 P0 P1).
    Eigen::Matrix<Cd, 5, 8> Q;
    std::array<std::array<Cd, 3>, 3> amps{};
    for (int slot = 0; slot < 8; ++slot) {
      for (auto& row : amps) row = {Cd(0), Cd(0), Cd(0)};
      if (slot < 6) amps[size_t(slot / 3)][size_t(slot % 3)] = Cd(1);
      else amps[2][size_t(slot - 6)] = Cd(1);
      StagedAcc acc{probe_data_, c0_, t0, t1, amps};
      Q(0, slot) = row_u(probe_data_, 0, c0_, acc);
      Q(1, slot) = row_u(probe_data_, 0, detail::shifted(c0_, 0, 1), acc);
      Q(2, slot) = row_u(probe_data_, 1, c0_, acc);
      Q(3, slot) = row_u(probe_data_, 1, detail::shifted(c0_, 1, 1), acc);
      Q(4, slot) = row_p(probe_data_, c0_, acc);
    }
    // Stage amplitude -> unknown/input mapping. Unknown x = (A1 A2 B1 B2 P1)
    // lives at slots (1 2 4 5 7); input e = (A0 B0 P0) at slots (0 3 6).
    static constexpr int xslot[5] = {1, 2, 4, 5, 7};
    static constexpr int eslot[3] = {0, 3, 6};
    Eigen::Matrix<Cd, 5, 5> Qx;
    Eigen::Matrix<Cd, 5, 3> Qe;
    for (int i = 0; i < 5; ++i) Qx.col(i) = Q.col(xslot[i]);
    for (int i = 0; i < 3; ++i) Qe.col(i) = Q.col(eslot[i]);

    const M5& Ainv = (mode == VankaMode::full) ? aloc_inv_full_ : aloc_inv_econ_;
    // Local DOF order (u0@c, u0@c+e0, u1@c, u1@c+e1, p@c) with phases.
    const Cd ph[5] = {Cd(1), std::exp(Cd(0, 1) * t0), Cd(1), std::exp(Cd(0, 1) * t1), Cd(1)};
    // After the update the local DOFs hold (A2 A1 B2 B1 P1); before it they
    // held (A1 A0 B1 B0 P0).
    static constexpr int new_x[5] = {1, 0, 3, 2, 4};  // index into x
    static constexpr int old_x[5] = {0, -1, 2, -1, -1};
    static constexpr int old_e[5] = {-1, 0, -1, 1, 2};
    M5 Mx = Cd(w) * (Ainv * Qx);
    Eigen::Matrix<Cd, 5, 3> Me = Cd(-w) * (Ainv * Qe);
    for (int i = 0; i < 5; ++i) {
      Mx(i, new_x[i]) += ph[i];
      if (old_x[i] >= 0) Mx(i, old_x[i]) -= ph[i];
      if (old_e[i] >= 0) Me(i, old_e[i]) += ph[i];
    }
    Eigen::FullPivLU<M5> lu(Mx);
    Eigen::Matrix<Cd, 5, 3> X = lu.solve(Me);
    M3 S;
    S.row(0) = X.row(1);  // A2
    S.row(1) = X.row(3);  // B2
    S.row(2) = X.row(4);  // P1
    return S;
  }

  // --- sampled factors --------------------------------------------------------

  double smoothing_factor(double w, VankaMode mode, double step) const {
    double mu = 0.0;
    const int n = int(std::floor(2 * kPi / step));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double t0 = -kPi + i * step, t1 = -kPi + j * step;
        if (std::abs(t0) < kPi / 2 && std::abs(t1) < kPi / 2) continue;
        mu = std::max(mu, spectral_radius(smoother_symbol(t0, t1, w, mode)));
      }
    return mu;
  }

  M12 two_grid_symbol(double t0, double t1, int nu1, int nu2, double w, VankaMode mode,
                      bool& singular) const {
    singular = false;
    const double th[4][2] = {{t0, t1}, {t0 + kPi, t1}, {t0, t1 + kPi}, {t0 + kPi, t1 + kPi}};
    M3 Ac = op_symbol(2 * t0, 2 * t1, 2 * p_.h);
    const double scale = Ac.cwiseAbs().maxCoeff();
    Eigen::FullPivLU<M3> lu(Ac);
    if (!lu.isInvertible() || std::abs(lu.determinant()) < 1e-12 * std::pow(scale, 3)) {
      singular = true;
      return M12::Zero();
    }
    M3 Acinv = lu.inverse();
    M12 Af = M12::Zero(), S = M12::Zero();
    Eigen::Matrix<Cd, 3, 12> R = Eigen::Matrix<Cd, 3, 12>::Zero();
    Eigen::Matrix<Cd, 12, 3> P = Eigen::Matrix<Cd, 12, 3>::Zero();
    for (int k = 0; k < 4; ++k) {
      const M3 A = op_symbol(th[k][0], th[k][1], p_.h);
      const M3 Sm = smoother_symbol(th[k][0], th[k][1], w, mode);
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
          Af(a * 4 + k, b * 4 + k) = A(a, b);
          S(a * 4 + k, b * 4 + k) = Sm(a, b);
        }
        R(a, a * 4 + k) = restrict_symbol(a, th[k][0], th[k][1]);
        P(a * 4 + k, a) = prolong_symbol(a, th[k][0], th[k][1]);
      }
    }
    M12 cgc = M12::Identity() - P * (Acinv * (R * Af));
    M12 TG = cgc;
    for (int s = 0; s < nu1; ++s) TG = TG * S;
    for (int s = 0; s < nu2; ++s) TG = S * TG;
    return TG;
  }

  LfaSample two_grid_factor(int nu1, int nu2, double w, VankaMode mode, double step) const {
    LfaSample out;
    const int n = int(std::floor(kPi / step));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double t0 = -kPi / 2 + i * step, t1 = -kPi / 2 + j * step;
        bool sing = false;
        M12 TG = two_grid_symbol(t0, t1, nu1, nu2, w, mode, sing);
        if (sing) {
          ++out.skipped;
          continue;
        }
        const double r = spectral_radius(TG);
        if (r > out.factor) {
          out.factor = r;
          out.theta0 = t0;
          out.theta1 = t1;
        }
      }
    return out;
  }

  template <class M> static double spectral_radius(const M& A) {
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(Eigen::MatrixXcd(A), false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }

  const M5& local_matrix() const { return aloc_; }

 private:
  static OpData<double, 2> make_probe(const LfaParams& p, const StaggeredGrid<2>& g) {
    MediaModel<2> m = MediaModel<2>::homogeneous(g, p.lambda, p.mu, p.rho, p.gamma);
    OperatorParams par;
    par.beta = p.beta;
    par.omega = p.omega;
    par.alpha = p.alpha;
    par.periodic = true;
    return make_opdata<double>(g, m, par);
  }

  // Infinite-grid Fourier state with per-stage amplitudes, centered at c0.
  struct StagedAcc {
    const OpData<double, 2>& D;
    Idx<2> c0;
    double t0, t1;
    const std::array<std::array<Cd, 3>, 3>& amps;

    static bool raster_before(const Idx<2>& d) {
      return d[1] < 0 || (d[1] == 0 && d[0] < 0);
    }
    Cd phase(const Idx<2>& d) const { return std::exp(Cd(0, 1) * (t0 * d[0] + t1 * d[1])); }
    bool face_valid(int, const Idx<2>&) const { return true; }
    bool tap_valid(int, int, int) const { return true; }
    Cd u(int k, const Idx<2>& f) const {
      Idx<2> d = {f[0] - c0[0], f[1] - c0[1]};
      int stage = 0;
      if (raster_before(d)) stage = 2;
      else {
        Idx<2> dk = d;
        dk[k] -= 1;
        if (raster_before(dk)) stage = 1;
      }
      return amps[size_t(k)][size_t(stage)] * phase(d);
    }
    Cd p(const Idx<2>& c) const {
      Idx<2> d = {c[0] - c0[0], c[1] - c0[1]};
      return amps[2][raster_before(d) ? 1 : 0] * phase(d);
    }
    bool cell_valid(Idx<2>&) const { return true; }
    void edge_canon(Idx<2>&) const {}
  };

  void build_local_matrices() {
    auto canon = [&](Idx<2> i) { return i; };  // center probes never wrap
    const Idx<2> c = c0_;
    const Idx<2> dofs[5] = {c, detail::shifted(c, 0, 1), c, detail::shifted(c, 1, 1), c};
    const int comp[5] = {0, 0, 1, 1, 2};
    aloc_ = M5::Zero();
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        PeriodicUnitAcc<double, 2> uacc{probe_data_, comp[j], canon(dofs[j])};
        if (comp[i] == 2) aloc_(i, j) = row_p(probe_data_, c, uacc);
        else aloc_(i, j) = row_u(probe_data_, comp[i], dofs[i], uacc);
      }
    aloc_inv_full_ = aloc_.fullPivLu().inverse();
    M5 econ = aloc_;
    econ(0, 1) = econ(1, 0) = econ(2, 3) = econ(3, 2) = Cd(0);
    aloc_inv_econ_ = econ.fullPivLu().inverse();
  }

  LfaParams p_;
  StaggeredGrid<2> probe_grid_;
  OpData<double, 2> probe_data_;
  Idx<2> c0_{};
  M5 aloc_, aloc_inv_full_, aloc_inv_econ_;
};

}  // namespace ehmg
