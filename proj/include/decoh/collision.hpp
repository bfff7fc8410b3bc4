#pragma once

#include "decoh/core.hpp"
#include "decoh/dispersion.hpp"
#include "decoh/quadrature.hpp"

#include <boost/math/tools/roots.hpp>

#include <string>
#include <vector>

namespace decoh {

struct UpsilonOptions {
  double inner_abs = 1e-13, inner_rel = 1e-10;
  double outer_abs = 1e-12, outer_rel = 1e-9;
  int max_intervals = 4000;
};

namespace detail {

// Radius beyond which r^{d-1} L(r,+1) is negligible (< 1e-17 of its peak).
inline double coupling_radius(const DispersionModel& m) {
  double peak = 0.0;
  for (double r = 0.0; r <= 200.0; r += 0.05) peak = std::max(peak, std::pow(r, m.d - 1) * m.L_r(r, +1) + m.L_r(r, +1));
  double R = 200.0;
  for (double r = 200.0; r > 0.0; r -= 0.05) {
    if (std::pow(r, m.d - 1) * m.L_r(r, +1) + m.L_r(r, +1) > 1e-17 * peak) {
      R = r + 0.5;
      break;
    }
  }
  return R;
}

inline double sphere_area(int d) { return 2.0 * std::pow(pi, 0.5 * d) / std::tgamma(0.5 * d); }

// All roots of f on (a,b) found by a uniform scan and TOMS 748 refinement.
template <class F>
std::vector<double> scan_roots(F&& f, double a, double b, int n) {
  std::vector<double> roots;
  double x0 = a, f0 = f(a);
  for (int i = 1; i <= n; ++i) {
    const double x1 = a + (b - a) * i / n, f1 = f(x1);
    if (f0 == 0.0) roots.push_back(x0);
    else if (f0 * f1 < 0.0) {
      boost::uintmax_t it = 100;
      auto br = boost::math::tools::toms748_solve(f, x0, x1, f0, f1, boost::math::tools::eps_tolerance<double>(52), it);
      roots.push_back(0.5 * (br.first + br.second));
    }
    x0 = x1;
    f0 = f1;
  }
  return roots;
}

}  // namespace detail

// Upsilon_eta(alpha, v) = sum_sigma int L(k,sigma) / (alpha - e(v+k) - sigma omega(k) + i eta) dk.
// Integration variable q = v + k in spherical coordinates around the axis v,
// so e(|q|) depends on the radius only.
inline cplx upsilon(const DispersionModel& m, double alpha, const Vec& v, double eta, const UpsilonOptions& opt = {}) {
  if (!(eta > 0.0)) throw std::invalid_argument("upsilon: eta must be > 0");
  if (m.zero_coupling()) return 0.0;
  const int d = static_cast<int>(v.size());
  const double vm = norm(v);
  const double R = vm + detail::coupling_radius(m);
  const double wsph = d >= 2 ? detail::sphere_area(d - 1) : 1.0;

  auto radial = [&](double r) -> cplx {
    if (d == 1) {
      cplx s = 0.0;
      for (double sgn : {1.0, -1.0}) {
        const double k = std::abs(sgn * r - vm);
        for (int sg : {+1, -1}) s += m.L_r(k, sg) / cplx(alpha - m.e(r) - sg * m.omega(k), eta);
      }
      return s;
    }
    auto inner = [&](double th) -> cplx {
      const double c = std::cos(th), sn = std::sin(th);
      const double k = std::sqrt(std::max(0.0, r * r + vm * vm - 2.0 * r * vm * c));
      cplx s = 0.0;
      for (int sg : {+1, -1}) s += m.L_r(k, sg) / cplx(alpha - m.e(r) - sg * m.omega(k), eta);
      return s * std::pow(sn, d - 2);
    };
    auto res = integrate<cplx>(inner, 0.0, pi, opt.inner_abs, opt.inner_rel, opt.max_intervals);
    if (!res.converged) throw Error("collision", "upsilon: angular quadrature exceeded budget");
    return wsph * std::pow(r, d - 1) * res.value;
  };

  std::vector<double> breaks{0.0};
  for (int sg : {+1, -1}) {
    for (double sgn : {1.0, -1.0}) {
      auto g = [&](double r) { return alpha - m.e(r) - sg * m.omega(std::abs(r - sgn * vm)); };
      for (double x : detail::scan_roots(g, 0.0, R, 400)) breaks.push_back(x);
    }
  }
  breaks.push_back(R);
  std::sort(breaks.begin(), breaks.end());
  auto res = integrate<cplx>(radial, breaks, opt.outer_abs, opt.outer_rel, opt.max_intervals);
  if (!res.converged) throw Error("collision", "upsilon: radial quadrature exceeded budget");
  return res.value;
}

struct PhiResult {
  cplx value;
  double residual = 0.0;
  bool cauchy_ok = true;
  std::vector<double> eta_seq;
  std::vector<cplx> raw;
};

inline const std::vector<double>& default_eta_seq() {
  static const std::vector<double> s{0.1, 0.05, 0.025, 0.0125};
  return s;
}

// eta -> 0+ limit of upsilon(e(P), P, eta) by Richardson extrapolation.
inline PhiResult phi_P(const DispersionModel& m, const Vec& P, const std::vector<double>& eta_seq = default_eta_seq(),
                       int stages = 2, double cauchy_tol = 1e-3, const UpsilonOptions& opt = {}) {
  if (eta_seq.empty()) throw std::invalid_argument("phi_P: empty eta sequence");
  for (std::size_t i = 0; i < eta_seq.size(); ++i) {
    if (eta_seq[i] < 1e-4) throw std::invalid_argument("phi_P: eta below 1e-4");
    if (i > 0 && !(eta_seq[i] < eta_seq[i - 1])) throw std::invalid_argument("phi_P: eta sequence must decrease strictly");
  }
  PhiResult out;
  out.eta_seq = eta_seq;
  if (m.zero_coupling()) {
    out.value = 0.0;
    out.raw.assign(eta_seq.size(), 0.0);
    return out;
  }
  const double alpha = m.e(norm(P));
  out.raw.resize(eta_seq.size());
  parallel_for(eta_seq.size(), [&](std::size_t i) { out.raw[i] = upsilon(m, alpha, P, eta_seq[i], opt); });
  auto r = richardson(eta_seq, out.raw, stages);
  out.value = r.value;
  out.residual = r.residual;
  out.cauchy_ok = r.residual <= cauchy_tol * std::max(1e-300, std::abs(r.value));
  return out;
}

// --- energy shell -----------------------------------------------------------

struct ShellPoint {
  double r;        // root radius |U|
  double density;  // 2 pi L(P-U,sigma) r^{d-1} / |d_r g|, per unit solid angle
};

struct ShellOptions {
  int n_theta = 64;   // Gauss-Legendre nodes in the polar angle
  int scan = 256;     // radial scan points for generic models
  double tangency = 1e-6;
};

// Roots of g(r) = e(|P|) + E - e(r) - sigma omega(|P - r n|) along a direction with n.P = |P| c.
// E = 0 is the energy shell; E != 0 gives the level sets used by the loop spectral density.
inline std::vector<ShellPoint> shell_points(const DispersionModel& m, double Pm, double c, int sigma,
                                            const ShellOptions& opt, int* excluded = nullptr, double E = 0.0) {
  std::vector<ShellPoint> out;
  if (m.zero_coupling()) return out;
  const int d = m.d;
  const double eP = m.e(Pm) + E;
  auto kdist = [&](double r) { return std::sqrt(std::max(0.0, Pm * Pm + r * r - 2.0 * Pm * r * c)); };
  std::vector<double> roots;
  if (m.quadratic_e && m.omega_constant) {
    const double r2 = Pm * Pm + 2.0 * E - 2.0 * sigma * m.omega(0.0);
    if (r2 > 0.0) roots.push_back(std::sqrt(r2));
  } else {
    auto g = [&](double r) { return eP - m.e(r) - sigma * m.omega(kdist(r)); };
    double R = std::max(2.0 * Pm, 1.0);
    while (g(R) > 0.0 && R < 1e6) R *= 2.0;
    roots = detail::scan_roots(g, 1e-12, R, opt.scan);
  }
  for (double r : roots) {
    const double k = kdist(r);
    const double dk = k > 0.0 ? (r - Pm * c) / k : 0.0;
    const double dg = -m.de_r(r) - sigma * m.domega_r(k) * dk;
    if (std::abs(dg) < opt.tangency) {
      if (excluded) ++*excluded;
      continue;
    }
    out.push_back({r, 2.0 * pi * m.L_r(k, sigma) * std::pow(r, d - 1) / std::abs(dg)});
  }
  return out;
}

struct ShellReport {
  double sigma = 0.0;
  double branch[2] = {0.0, 0.0};  // [0] sigma=+1 (emission), [1] sigma=-1 (absorption)
  double excluded_fraction = 0.0;
  bool tangency_error = false;
};

// Co-area evaluation of sigma_P.  The sphere rule has its pole along P, so for a
// spherically symmetric model the azimuthal factor is exact.
inline ShellReport sigma_shell_report(const DispersionModel& m, const Vec& P, const ShellOptions& opt = {}) {
  ShellReport rep;
  if (m.zero_coupling()) return rep;
  const int d = static_cast<int>(P.size());
  if (d < 2) throw std::invalid_argument("sigma_shell: needs d >= 2");
  const double Pm = norm(P);
  auto gl = gauss_legendre(opt.n_theta, 0.0, pi);
  const double wsph = detail::sphere_area(d - 1);
  int excluded = 0, total = 0;
  for (int b = 0; b < 2; ++b) {
    const int sg = b == 0 ? +1 : -1;
    double acc = 0.0;
    for (std::size_t i = 0; i < gl.x.size(); ++i) {
      const double th = gl.x[i];
      ++total;
      for (auto& sp : shell_points(m, Pm, std::cos(th), sg, opt, &excluded))
        acc += gl.w[i] * wsph * std::pow(std::sin(th), d - 2) * sp.density;
    }
    rep.branch[b] = acc;
  }
  rep.sigma = rep.branch[0] + rep.branch[1];
  rep.excluded_fraction = total ? double(excluded) / total : 0.0;
  rep.tangency_error = rep.excluded_fraction > 0.01;
  if (rep.tangency_error) throw Error("collision", "sigma_shell: shell tangency on more than 1% of directions");
  return rep;
}

inline double sigma_shell(const DispersionModel& m, const Vec& P, const ShellOptions& opt = {}) {
  return sigma_shell_report(m, P, opt).sigma;
}

struct CrossSectionReport {
  Vec P;
  cplx phi_P;
  double sigma_shell = 0.0;
  double sigma_resolvent = 0.0;
  std::vector<double> eta_sequence;
  std::vector<cplx> raw;
  double extrapolation_residual = 0.0;
  bool cauchy_ok = true;
  double rel_gap = 0.0;
  double tolerance = 1e-3;
  bool pass = true;
};

inline CrossSectionReport cross_section(const DispersionModel& m, const Vec& P,
                                        const std::vector<double>& eta_seq = default_eta_seq(), double tol = 1e-3) {
  CrossSectionReport r;
  r.P = P;
  r.tolerance = tol;
  auto ph = phi_P(m, P, eta_seq, 2, tol);
  r.phi_P = ph.value;
  r.raw = ph.raw;
  r.eta_sequence = eta_seq;
  r.extrapolation_residual = ph.residual;
  r.cauchy_ok = ph.cauchy_ok;
  r.sigma_shell = sigma_shell(m, P);
  r.sigma_resolvent = -2.0 * ph.value.imag();
  if (r.sigma_shell > 0.0) r.rel_gap = std::abs(r.sigma_resolvent - r.sigma_shell) / r.sigma_shell;
  else r.rel_gap = std::abs(r.sigma_resolvent);
  r.pass = r.rel_gap < tol && r.sigma_shell >= 0.0 && r.sigma_resolvent >= -tol;
  return r;
}

// --- oscillatory decay --------------------------------------------------------

struct DecayTable {
  std::vector<double> s;
  std::vector<cplx> g;
  std::vector<double> weighted;  // <s>^{d/2} |g(s)|
  double sup_weighted = 0.0;
};

// g(s) = sum_sigma int exp(-i s Phi_sigma(p,k)) L(k,sigma) dk
inline cplx oscillatory_g(const DispersionModel& m, const Vec& p, double s, double s_max = 200.0) {
  if (s > s_max) throw Error("collision", "oscillatory_g: s beyond declared s_max");
  if (m.zero_coupling()) return 0.0;
  const int d = static_cast<int>(p.size());
  const double pm = norm(p);
  const double R = pm + detail::coupling_radius(m);
  const double wsph = d >= 2 ? detail::sphere_area(d - 1) : 1.0;
  auto radial = [&](double r) -> cplx {
    const cplx ph = std::exp(cplx(0.0, -s * m.e(r)));
    if (d == 1) {
      cplx acc = 0.0;
      for (double sgn : {1.0, -1.0}) {
        const double k = std::abs(sgn * r - pm);
        for (int sg : {+1, -1}) acc += m.L_r(k, sg) * std::exp(cplx(0.0, -s * sg * m.omega(k)));
      }
      return ph * acc;
    }
    auto inner = [&](double th) -> cplx {
      const double c = std::cos(th);
      const double k = std::sqrt(std::max(0.0, r * r + pm * pm - 2.0 * r * pm * c));
      cplx acc = 0.0;
      for (int sg : {+1, -1}) acc += m.L_r(k, sg) * std::exp(cplx(0.0, -s * sg * m.omega(k)));
      return acc * std::pow(std::sin(th), d - 2);
    };
    auto res = integrate<cplx>(inner, 0.0, pi, 1e-14, 1e-11, 2000);
    if (!res.converged) throw Error("collision", "oscillatory_g: angular quadrature failed");
    return ph * wsph * std::pow(r, d - 1) * res.value;
  };
  // split the radial range so each piece holds a bounded number of phase turns
  std::vector<double> breaks{0.0};
  const int pieces = 16 + static_cast<int>(s * (m.e(R) - m.e(0.0)) / (2.0 * pi) / 2.0);
  for (int i = 1; i <= pieces; ++i) breaks.push_back(R * i / pieces);
  auto res = integrate<cplx>(radial, breaks, 1e-12, 1e-10, std::max(4000, 4 * pieces));
  if (!res.converged) throw Error("collision", "oscillatory_g: oscillation not resolved");
  return res.value;
}

inline DecayTable oscillatory_decay(const DispersionModel& m, const Vec& p, const std::vector<double>& s_grid,
                                    double s_max = 200.0) {
  DecayTable t;
  t.s = s_grid;
  t.g.resize(s_grid.size());
  t.weighted.resize(s_grid.size());
  const double dd = 0.5 * static_cast<double>(p.size());
  parallel_for(s_grid.size(), [&](std::size_t i) {
    t.g[i] = oscillatory_g(m, p, s_grid[i], s_max);
    t.weighted[i] = std::pow(japanese(s_grid[i]), dd) * std::abs(t.g[i]);
  });
  for (double w : t.weighted) t.sup_weighted = std::max(t.sup_weighted, w);
  return t;
}

}  // namespace decoh
