#pragma once

#include "decoh/core.hpp"
#include "decoh/quadrature.hpp"

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace decoh {

using Radial = std::function<double(double)>;

struct DeclaredConstants {
  double C_disp = 10.0;    // |grad^l e|, |grad^l omega| <= C (1 + <k>^{2-l})
  double C_ff = 1e12;      // |grad^l F| <= C <k>^{-2d-12}
  double C1 = 0.5;         // Hessian lower bound
  double C2 = 2.0;         // Hessian upper bound
  double C_trace = 1e-3;   // inf omega - mu/beta
};

struct DispersionModel {
  std::string name = "custom";
  int d = 3;
  Radial e, omega, F;
  Radial de, domega;  // optional radial derivatives; finite differences otherwise
  double beta = 1.0, mu = -1.0;
  bool omega_constant = false;
  bool quadratic_e = false;  // e(r) = r^2/2 exactly, enables closed-form shortcuts
  double ff_width = 1.0;     // only meaningful for the Gaussian preset
  DeclaredConstants declared;

  double e_r(double r) const { return e(r); }
  double omega_r(double r) const { return omega(r); }
  double F_r(double r) const { return F ? F(r) : 0.0; }

  double de_r(double r) const {
    if (de) return de(r);
    const double h = 1e-6 * std::max(1.0, r);
    return (e(r + h) - e(r - h)) / (2 * h);
  }
  double domega_r(double r) const {
    if (omega_constant) return 0.0;
    if (domega) return domega(r);
    const double h = 1e-6 * std::max(1.0, r);
    return (omega(r + h) - omega(r - h)) / (2 * h);
  }

  // Bose factor as a function of |k|.
  double occupancy_r(double r) const {
    const double x = beta * omega(r) - mu;
    if (!(x > 0.0)) throw ValidationError("dispersion", "beta*omega(k) - mu <= 0, occupancy diverges");
    return 1.0 / std::expm1(x);
  }

  double L_r(double r, int sigma) const {
    const double f = F_r(r);
    if (f == 0.0) return 0.0;
    return f * f * (occupancy_r(r) + 0.5 * (sigma + 1));
  }

  bool zero_coupling() const { return !F; }
};

// e(q)=|q|^2/2, omega = const, F(k) = exp(-|k|^2/(2 w^2)).
inline DispersionModel quadratic_einstein(double beta = 1.0, double mu = -1.0, double omega0 = 1.0,
                                          double ff_width = 1.0, int d = 3) {
  DispersionModel m;
  m.name = "quadratic-einstein";
  m.d = d;
  m.beta = beta;
  m.mu = mu;
  m.e = [](double r) { return 0.5 * r * r; };
  m.de = [](double r) { return r; };
  m.omega = [omega0](double) { return omega0; };
  m.domega = [](double) { return 0.0; };
  m.omega_constant = true;
  m.quadratic_e = true;
  m.ff_width = ff_width;
  m.F = [ff_width](double r) { return std::exp(-0.5 * r * r / (ff_width * ff_width)); };
  return m;
}

inline DispersionModel without_coupling(DispersionModel m) {
  m.F = nullptr;
  m.name += "+F0";
  return m;
}

// Inverse of the radial dispersion, assuming e increasing in r.
inline double radius_of_energy(const DispersionModel& m, double e) {
  if (m.quadratic_e) return std::sqrt(2.0 * e);
  double lo = 0.0, hi = 1.0;
  while (m.e(hi) < e) {
    hi *= 2.0;
    if (hi > 1e8) throw Error("boltzmann", "energy not reached by e(r)");
  }
  for (int k = 0; k < 200 && hi - lo > 1e-15 * hi; ++k) {
    const double mid = 0.5 * (lo + hi);
    (m.e(mid) < e ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double thermal_occupancy(const DispersionModel& m, const Vec& k) { return m.occupancy_r(norm(k)); }

inline double coupling_weight(const DispersionModel& m, const Vec& k, int sigma) {
  if (sigma != 1 && sigma != -1) throw std::invalid_argument("sigma must be +1 or -1");
  return m.L_r(norm(k), sigma);
}

inline double phi_sigma(const DispersionModel& m, const Vec& p, const Vec& k, int sigma) {
  return m.e(norm(add(k, p))) + sigma * m.omega(norm(k));
}

// Integral of L(.,sigma) over R^d (radial quadrature).
inline double coupling_mass(const DispersionModel& m, int sigma) {
  if (m.zero_coupling()) return 0.0;
  const double area = m.d == 1 ? 2.0 : (m.d == 2 ? 2 * pi : (m.d == 3 ? 4 * pi : 2 * std::pow(pi, 0.5 * m.d) / std::tgamma(0.5 * m.d)));
  auto r = integrate([&](double r) { return area * std::pow(r, m.d - 1) * m.L_r(r, sigma); },
                     std::vector<double>{0, 2, 4, 8, 16, 40}, 1e-15, 1e-13, 400);
  return r.value;
}

// --- validation -----------------------------------------------------------

struct LatticeSpec {
  std::vector<double> radii;   // |k| values
  int n_dirs = 26;             // directions per radius
  double h = 1e-3;             // finite-difference step
  int max_order = 4;
  std::vector<double> p_radii = {0.0, 0.5, 1.0, 2.0, 3.0};  // p values for the Hessian check
};

inline LatticeSpec default_lattice() {
  LatticeSpec s;
  for (double r = 0.0; r <= 12.0 + 1e-12; r += 0.25) s.radii.push_back(r);
  return s;
}

struct CheckResult {
  std::string name;
  double fitted = 0.0;    // fitted constant or statistic
  double declared = 0.0;  // declared bound it is compared to
  bool pass = true;
  Vec worst_point;        // sample point where the fitted constant is attained
  std::string detail;
};

struct ValidationReport {
  std::vector<CheckResult> checks;
  bool pass() const {
    for (auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
  const CheckResult* find(const std::string& n) const {
    for (auto& c : checks)
      if (c.name == n) return &c;
    return nullptr;
  }
};

namespace detail {

inline std::vector<Vec> unit_dirs(int d, int n) {
  std::vector<Vec> out;
  if (d == 1) return {Vec{1.0}};
  // deterministic spread: coordinate axes, diagonals, then a golden spiral
  for (int i = 0; i < d; ++i) {
    Vec u(d, 0.0);
    u[i] = 1.0;
    out.push_back(u);
  }
  Vec diag(d, 1.0 / std::sqrt(double(d)));
  out.push_back(diag);
  const double ga = pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; static_cast<int>(out.size()) < n; ++i) {
    Vec u(d, 0.0);
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double rr = std::sqrt(1 - z * z);
    u[0] = rr * std::cos(ga * i);
    if (d > 1) u[1] = rr * std::sin(ga * i);
    if (d > 2) u[2] = z;
    const double nn = norm(u);
    for (auto& x : u) x /= nn;
    out.push_back(u);
  }
  return out;
}

// l-th directional derivative of g(|x|) at x along u, central stencils.
inline double directional_fd(const Radial& g, const Vec& x, const Vec& u, int l, double h) {
  auto at = [&](double s) { return g(norm(add(x, u, s))); };
  switch (l) {
    case 0: return at(0);
    case 1: return (at(h) - at(-h)) / (2 * h);
    case 2: return (at(h) - 2 * at(0) + at(-h)) / (h * h);
    case 3: return (at(2 * h) - 2 * at(h) + 2 * at(-h) - at(-2 * h)) / (2 * h * h * h);
    case 4: return (at(2 * h) - 4 * at(h) + 6 * at(0) - 4 * at(-h) + at(-2 * h)) / (h * h * h * h);
  }
  throw std::invalid_argument("derivative order > 4 not supported");
}

template <class Bound>
CheckResult sup_ratio(const std::string& name, const Radial& g, const DispersionModel& m, const LatticeSpec& lat,
                      int l, Bound bound, double declared) {
  CheckResult c;
  c.name = name;
  c.declared = declared;
  auto dirs = unit_dirs(m.d, lat.n_dirs);
  for (double r : lat.radii) {
    for (auto& u0 : dirs) {
      Vec x = scale(u0, r);
      for (auto& u : dirs) {
        const double v = std::abs(directional_fd(g, x, u, l, lat.h)) / bound(r);
        if (v > c.fitted) {
          c.fitted = v;
          c.worst_point = x;
        }
      }
    }
  }
  c.pass = c.fitted <= declared;
  return c;
}

inline Eigen::MatrixXd fd_hessian(const std::function<double(const Vec&)>& g, const Vec& x, double h) {
  const int d = static_cast<int>(x.size());
  Eigen::MatrixXd H(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      auto at = [&](double si, double sj) {
        Vec y = x;
        y[i] += si;
        y[j] += sj;
        return g(y);
      };
      double v;
      if (i == j) v = (at(h, 0) - 2 * g(x) + at(-h, 0)) / (h * h);
      else v = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4 * h * h);
      H(i, j) = H(j, i) = v;
    }
  }
  return H;
}

}  // namespace detail

inline ValidationReport validate_assumptions(const DispersionModel& m, const LatticeSpec& lat = default_lattice()) {
  ValidationReport rep;
  const int d = m.d;

  // trace-class condition first: everything else needs a finite occupancy
  {
    CheckResult c;
    c.name = "trace_class";
    c.declared = m.declared.C_trace;
    c.fitted = 1e300;
    for (double r : lat.radii) {
      const double v = m.omega(r) - m.mu / m.beta;
      if (v < c.fitted) {
        c.fitted = v;
        c.worst_point = Vec{r};
      }
    }
    c.pass = c.fitted >= c.declared;
    rep.checks.push_back(c);
    if (!c.pass) return rep;
  }

  const int lmax = std::min(lat.max_order, 2 * d);
  for (int l = 0; l <= lmax; ++l) {
    auto bound = [l](double r) { return 1.0 + std::pow(japanese(r), 2.0 - l); };
    rep.checks.push_back(detail::sup_ratio("e_derivative_" + std::to_string(l), m.e, m, lat, l, bound, m.declared.C_disp));
    rep.checks.push_back(detail::sup_ratio("omega_derivative_" + std::to_string(l), m.omega, m, lat, l, bound, m.declared.C_disp));
  }
  if (!m.zero_coupling()) {
    const double expo = -2.0 * d - 12.0;
    for (int l = 0; l <= lmax; ++l) {
      auto bound = [expo](double r) { return std::pow(japanese(r), expo); };
      rep.checks.push_back(detail::sup_ratio("F_derivative_" + std::to_string(l), m.F, m, lat, l, bound, m.declared.C_ff));
    }
    // tail slope of |F| against <k> on the outer third of the lattice
    std::vector<double> x, y;
    const std::size_t n = lat.radii.size();
    for (std::size_t i = 2 * n / 3; i < n; ++i) {
      const double f = std::abs(m.F(lat.radii[i]));
      if (f > 1e-300) {
        x.push_back(japanese(lat.radii[i]));
        y.push_back(f);
      }
    }
    CheckResult c;
    c.name = "F_tail_slope";
    c.declared = expo;
    if (x.size() >= 2) {
      c.fitted = fit_loglog(x, y).slope;
      c.pass = c.fitted <= expo;
    } else {
      c.fitted = -std::numeric_limits<double>::infinity();
      c.detail = "F underflows on the outer lattice";
    }
    rep.checks.push_back(c);

    CheckResult cl;
    cl.name = "L_ordering";
    cl.declared = 0.0;
    for (double r : lat.radii) {
      const double lm = m.L_r(r, -1), lp = m.L_r(r, +1);
      if (lm < 0 || lm > lp) {
        cl.pass = false;
        cl.worst_point = Vec{r};
        cl.fitted = lm - lp;
      }
    }
    rep.checks.push_back(cl);
  }

  if (d >= 2) {
    CheckResult lo, hi;
    lo.name = "hessian_min";
    hi.name = "hessian_max";
    lo.declared = m.declared.C1;
    hi.declared = m.declared.C2;
    lo.fitted = 1e300;
    hi.fitted = -1e300;
    auto dirs = detail::unit_dirs(d, 6);
    for (int sg : {+1, -1}) {
      for (double pr : lat.p_radii) {
        Vec p = scale(dirs[0], pr);
        auto phi = [&](const Vec& k) { return m.e(norm(add(k, p))) + sg * m.omega(norm(k)); };
        for (double r : lat.radii) {
          if (r > 6.0) continue;
          for (auto& u : dirs) {
            Vec k = scale(u, r);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(detail::fd_hessian(phi, k, lat.h));
            const double a = es.eigenvalues().minCoeff(), b = es.eigenvalues().maxCoeff();
            if (a < lo.fitted) {
              lo.fitted = a;
              lo.worst_point = k;
            }
            if (b > hi.fitted) {
              hi.fitted = b;
              hi.worst_point = k;
            }
          }
        }
      }
    }
    lo.pass = lo.fitted >= lo.declared && lo.fitted > 0;
    hi.pass = hi.fitted <= hi.declared;
    lo.detail = "margin " + std::to_string(lo.fitted - lo.declared);
    hi.detail = "margin " + std::to_string(hi.declared - hi.fitted);
    rep.checks.push_back(lo);
    rep.checks.push_back(hi);
  }

  {
    CheckResult c;
    c.name = "large_k_growth";
    const double rmax = lat.radii.back();
    c.fitted = std::min(m.e(rmax) + m.omega(rmax), m.e(rmax) - m.omega(rmax)) - std::max(m.e(0) + m.omega(0), m.e(0) - m.omega(0));
    c.pass = c.fitted > 0;
    rep.checks.push_back(c);
  }
  return rep;
}

}  // namespace decoh
