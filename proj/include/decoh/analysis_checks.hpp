#pragma once

#include "decoh/collision.hpp"

#include <limits>
#include <string>

namespace decoh {

namespace detail {

inline void require_probe_model(const DispersionModel& m) {
  if (m.d != 3) throw Error("analysis_checks", "estimate probes are implemented for d = 3");
  if (!m.omega_constant) throw Error("analysis_checks", "estimate probes need a constant phonon dispersion");
}

inline double calL(const DispersionModel& m, double k) { return m.L_r(k, 1); }

inline double log_star(double eta) { return std::max(1.0, std::abs(std::log(eta))); }

// Radii where e(q) = level, empty when the level lies below e(0).
inline std::vector<double> level_radius(const DispersionModel& m, double level) {
  if (level <= m.e(0.0)) return {};
  return {radius_of_energy(m, level)};
}

inline std::vector<double> sorted_breaks(std::vector<double> b, double lo, double hi) {
  std::vector<double> out{lo, hi};
  for (double x : b)
    if (x > lo && x < hi) out.push_back(x);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace detail

struct ProbeQuadrature {
  double abs_tol = 1e-12, rel_tol = 1e-8;
  int max_intervals = 4000;
  int n_c = 64;    // Gauss-Legendre nodes for smooth angular averages
  int n_psi = 48;  // trapezoid nodes in the azimuth
};

// int calL(k) dk / |theta - Phi_sigma(p,k) + i eta|^{m+1}, with Phi_sigma(p,k) = e(k+p) + sigma omega.
// Shifting k' = k + p turns the denominator into a function of |k'| alone.
inline double uno_integral(const DispersionModel& m, double p, double theta, double eta, int order, int sigma,
                           const ProbeQuadrature& qo = {}) {
  detail::require_probe_model(m);
  if (!(eta > 0.0)) throw Error("analysis_checks", "eta must be positive");
  if (m.zero_coupling()) return 0.0;
  const double w = m.omega(0.0);
  const double R = p + detail::coupling_radius(m);
  auto gl = gauss_legendre(qo.n_c);
  auto shell = [&](double q) {
    double s = 0.0;
    for (std::size_t i = 0; i < gl.x.size(); ++i)
      s += gl.w[i] * detail::calL(m, std::sqrt(std::max(0.0, q * q + p * p - 2.0 * q * p * gl.x[i])));
    return 2.0 * pi * q * q * s;
  };
  auto f = [&](double q) {
    const double x = theta - m.e(q) - sigma * w;
    return shell(q) * std::pow(x * x + eta * eta, -0.5 * (order + 1));
  };
  auto br = detail::sorted_breaks(detail::level_radius(m, theta - sigma * w), 0.0, R);
  auto res = integrate(f, br, qo.abs_tol * std::pow(eta, -order), qo.rel_tol, qo.max_intervals);
  if (!res.converged) throw Error("analysis_checks", "uno quadrature exceeded budget");
  return res.value;
}

// int calL(k) dk / (|theta - Phi(p,k) + i eta| |theta~ - Phi(u,k) - i eta| <p><u>), same branch in both.
// With k' = k + p and polar axis along u - p, the first factor depends on |k'| and the second on
// (|k'|, cos angle); the weight is averaged over the azimuth.
inline double due_integral(const DispersionModel& m, const Vec& p, const Vec& u, double theta, double theta_t,
                           double eta, int sigma, const ProbeQuadrature& qo = {}) {
  detail::require_probe_model(m);
  if (!(eta > 0.0)) throw Error("analysis_checks", "eta must be positive");
  if (m.zero_coupling()) return 0.0;
  const double w = m.omega(0.0);
  const Vec dv = add(u, p, -1.0);
  const double D = norm(dv);
  Vec e1 = D > 0.0 ? scale(dv, 1.0 / D) : (norm(p) > 0.0 ? scale(p, 1.0 / norm(p)) : Vec{0, 0, 1});
  const double p1 = dot(p, e1), p2 = norm(add(p, e1, -p1));
  const double R = norm(p) + detail::coupling_radius(m);
  const double norm_pu = japanese(norm(p)) * japanese(norm(u));
  std::vector<double> cpsi(qo.n_psi);
  for (int j = 0; j < qo.n_psi; ++j) cpsi[j] = std::cos(2.0 * pi * (j + 0.5) / qo.n_psi);

  auto avg_weight = [&](double q, double c) {
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    const double base = q * q + p1 * p1 + p2 * p2 - 2.0 * q * c * p1;
    if (p2 * q * s == 0.0) return 2.0 * pi * detail::calL(m, std::sqrt(std::max(0.0, base)));
    double acc = 0.0;
    for (double cp : cpsi) acc += detail::calL(m, std::sqrt(std::max(0.0, base - 2.0 * q * s * p2 * cp)));
    return 2.0 * pi * acc / qo.n_psi;
  };
  const auto wstar = detail::level_radius(m, theta_t - sigma * w);
  auto inner = [&](double q) {
    const double x = theta - m.e(q) - sigma * w;
    auto g = [&](double c) {
      const double y = theta_t - m.e(std::sqrt(std::max(0.0, q * q + D * D + 2.0 * q * D * c))) - sigma * w;
      return avg_weight(q, c) / std::sqrt(y * y + eta * eta);
    };
    std::vector<double> b;
    if (!wstar.empty() && q > 0.0 && D > 0.0) b.push_back((wstar[0] * wstar[0] - q * q - D * D) / (2.0 * q * D));
    auto res = integrate(g, detail::sorted_breaks(b, -1.0, 1.0), qo.abs_tol, qo.rel_tol * 0.1, qo.max_intervals);
    if (!res.converged) throw Error("analysis_checks", "due inner quadrature exceeded budget");
    return q * q * res.value / std::sqrt(x * x + eta * eta);
  };
  std::vector<double> b = detail::level_radius(m, theta - sigma * w);
  if (!wstar.empty()) {
    b.push_back(std::abs(wstar[0] - D));
    b.push_back(wstar[0] + D);
  }
  auto res = integrate(inner, detail::sorted_breaks(b, 0.0, R), qo.abs_tol, qo.rel_tol, qo.max_intervals);
  if (!res.converged) throw Error("analysis_checks", "due outer quadrature exceeded budget");
  return res.value / norm_pu;
}

// int d alpha / (|alpha - E + i eta| <alpha>), E = e(v_2 + xi/2).
inline double tre_integral(double E, double eta) {
  if (!(eta > 0.0)) throw Error("analysis_checks", "eta must be positive");
  auto f = [&](double a) { return 1.0 / (std::sqrt((a - E) * (a - E) + eta * eta) * japanese(a)); };
  // substitution a = E + sinh(t) keeps the algebraic tails finite
  auto g = [&](double t) {
    const double a = E + std::sinh(t);
    return f(a) * std::cosh(t);
  };
  const double t0 = std::asinh(-E);
  std::vector<double> br{-60.0, -1.0, -eta, 0.0, eta, 1.0, t0 - 1.0, t0, t0 + 1.0, 60.0};
  for (auto& x : br) x = std::clamp(x, -60.0, 60.0);
  std::sort(br.begin(), br.end());
  br.erase(std::unique(br.begin(), br.end()), br.end());
  auto res = integrate(g, br, 1e-13, 1e-11, 4000);
  if (!res.converged) throw Error("analysis_checks", "tre quadrature exceeded budget");
  return res.value;
}

// --- probes ---------------------------------------------------------------------

struct EstimateProbe {
  std::string id;
  std::string lattice;
  double fitted_constant = 0.0;
  double refined_constant = 0.0;
  bool refinement_stable = false;
  double slope = std::numeric_limits<double>::quiet_NaN();
  double slope_target = std::numeric_limits<double>::quiet_NaN();
  double slope_tolerance = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<std::string, double>> worst;  // worst-case lattice point
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::pair<std::string, bool>> checks;
  bool pass = false;

  void finish() {
    pass = true;
    for (auto& c : checks) pass = pass && c.second;
  }
};

inline std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return v;
}

struct ProbeLattice {
  std::vector<double> p = {0.5, 1.0, 2.0, 3.0};
  std::vector<double> theta = linspace(-1.5, 6.0, 16);
  std::vector<double> eta = {1.0, 0.1, 0.01, 0.001};
  std::vector<double> pu = {0.1, 0.2, 0.4, 0.8, 1.6, 3.0};
  std::vector<double> theta_decades = {1.0, 10.0, 100.0, 1000.0};
  std::vector<double> alpha = linspace(-2.0, 4.0, 7);
  std::vector<double> v = {0.5, 1.0, 2.0, 3.0};
  double rho_tilde = 0.5;
  std::vector<double> delta = {0.1, 0.05, 0.025, 0.0125};
  std::vector<double> rho = {0.125, 0.25, 0.5};
  long samples = 200000;
  std::uint64_t seed = 1;
  double stability = 0.10;
  double tol_scale = 1.0;  // multiplies every slope tolerance
  ProbeQuadrature quad{1e-12, 1e-7, 4000, 64, 48};

  // 2x refinement: midpoints inserted (geometric for |p - u|), samples doubled
  ProbeLattice refined() const {
    ProbeLattice r = *this;
    auto mid = [](const std::vector<double>& x, bool geometric) {
      std::vector<double> out;
      for (std::size_t i = 0; i < x.size(); ++i) {
        out.push_back(x[i]);
        if (i + 1 < x.size()) out.push_back(geometric ? std::sqrt(x[i] * x[i + 1]) : 0.5 * (x[i] + x[i + 1]));
      }
      return out;
    };
    r.p = mid(p, false);
    r.theta = mid(theta, false);
    r.pu = mid(pu, true);
    r.alpha = mid(alpha, false);
    r.v = mid(v, false);
    r.samples = 2 * samples;
    return r;
  }
};

namespace detail {

inline bool stable(double a, double b, double tol) { return std::abs(b - a) <= tol * std::max(std::abs(a), 1e-300); }

inline std::string fmt_list(const std::vector<double>& v) {
  std::string s = "{";
  for (std::size_t i = 0; i < v.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v[i]);
    s += (i ? "," : "") + std::string(buf);
  }
  return s + "}";
}

struct UnoSweep {
  std::vector<double> sup;
  double C = 0.0;
  std::vector<std::array<double, 3>> arg;  // (p, theta, sigma) per eta
};

inline UnoSweep uno_sweep(const DispersionModel& m, int order, const ProbeLattice& lat) {
  UnoSweep s;
  for (double eta : lat.eta) {
    std::vector<std::array<double, 4>> vals;
    for (double p : lat.p)
      for (double th : lat.theta)
        for (int sg : {1, -1}) vals.push_back({p, th, double(sg), 0.0});
    parallel_for(vals.size(), [&](std::size_t i) {
      vals[i][3] = uno_integral(m, vals[i][0], vals[i][1], eta, order, static_cast<int>(vals[i][2]), lat.quad);
    });
    std::size_t best = 0;
    for (std::size_t i = 1; i < vals.size(); ++i)
      if (vals[i][3] > vals[best][3]) best = i;
    s.sup.push_back(vals[best][3]);
    s.arg.push_back({vals[best][0], vals[best][1], vals[best][2]});
    s.C = std::max(s.C, vals[best][3] * std::pow(eta, order));
  }
  return s;
}

}  // namespace detail

// sup_{p,theta} int calL / |theta - Phi + i eta|^{m+1} against C eta^{-m}.
inline EstimateProbe check_uno(const DispersionModel& m, int order, const ProbeLattice& lat = {}) {
  if (order != 1 && order != 2) throw Error("analysis_checks", "check_uno: m must be 1 or 2");
  EstimateProbe pr;
  pr.id = "uno_m" + std::to_string(order);
  pr.lattice = "p=" + detail::fmt_list(lat.p) + " theta=linspace(" + std::to_string(lat.theta.front()) + "," +
               std::to_string(lat.theta.back()) + "," + std::to_string(lat.theta.size()) + ") eta=" + detail::fmt_list(lat.eta);
  pr.columns = {"eta", "sup", "sup_times_eta_m", "p", "theta", "sigma"};
  pr.slope_target = -order;
  pr.slope_tolerance = 0.15 * lat.tol_scale;
  if (m.zero_coupling()) {
    pr.checks = {{"zero_coupling", true}};
    pr.refinement_stable = true;
    pr.finish();
    return pr;
  }
  auto s = detail::uno_sweep(m, order, lat);
  for (std::size_t k = 0; k < lat.eta.size(); ++k)
    pr.rows.push_back({lat.eta[k], s.sup[k], s.sup[k] * std::pow(lat.eta[k], order), s.arg[k][0], s.arg[k][1], s.arg[k][2]});
  pr.slope = fit_loglog(lat.eta, s.sup).slope;
  pr.fitted_constant = s.C;
  pr.refined_constant = detail::uno_sweep(m, order, lat.refined()).C;
  pr.refinement_stable = detail::stable(pr.fitted_constant, pr.refined_constant, lat.stability);
  const std::size_t last = lat.eta.size() - 1;
  pr.worst = {{"eta", lat.eta[last]}, {"p", s.arg[last][0]}, {"theta", s.arg[last][1]}, {"sigma", s.arg[last][2]}};
  pr.checks.push_back({"slope", std::abs(pr.slope - pr.slope_target) <= pr.slope_tolerance});
  pr.checks.push_back({"refinement_stable", pr.refinement_stable});
  // at eta = 1 the denominator is at least 1, so the integral is at most int calL
  const double mass = coupling_mass(m, 1);
  for (std::size_t k = 0; k < lat.eta.size(); ++k)
    if (lat.eta[k] == 1.0) pr.checks.push_back({"eta1_below_mass", s.sup[k] <= mass * (1.0 + 1e-9)});
  pr.metrics.push_back({"calL_mass", mass});
  pr.finish();
  return pr;
}

namespace detail {

inline double due_bound_factor(double D, double eta, double th, double tht) {
  const double pu_star = std::min(1.0, D + eta);
  return log_star(eta) * log_star(eta) / (pu_star * std::sqrt(japanese(th) * japanese(tht)));
}

struct DueSweep {
  std::vector<std::array<double, 3>> rows;  // D, I(+), I(-)
  double C = 0.0;
  std::array<double, 2> argmax{0.0, 0.0};  // D, sigma
};

// Both shells pass through k = 0, where calL peaks: theta = Phi(p,0), theta~ = Phi(u,0).
inline DueSweep due_transversal(const DispersionModel& m, const std::vector<double>& Ds, double eta, const ProbeLattice& lat) {
  const Vec p{0.0, 0.0, 2.0};
  const double w = m.omega(0.0);
  DueSweep s;
  s.rows.resize(Ds.size());
  std::vector<std::array<double, 2>> val(Ds.size());
  parallel_for(Ds.size() * 2, [&](std::size_t i) {
    const double D = Ds[i / 2];
    const int sg = i % 2 == 0 ? 1 : -1;
    const Vec u{D, 0.0, 2.0};
    val[i / 2][i % 2] = due_integral(m, p, u, m.e(norm(p)) + sg * w, m.e(norm(u)) + sg * w, eta, sg, lat.quad);
  });
  for (std::size_t k = 0; k < Ds.size(); ++k) {
    s.rows[k] = {Ds[k], val[k][0], val[k][1]};
    for (int b = 0; b < 2; ++b) {
      const int sg = b == 0 ? 1 : -1;
      const double th = m.e(2.0) + sg * w, tht = m.e(std::sqrt(4.0 + Ds[k] * Ds[k])) + sg * w;
      const double c = val[k][b] / due_bound_factor(Ds[k], eta, th, tht);
      if (c > s.C) {
        s.C = c;
        s.argmax = {Ds[k], double(sg)};
      }
    }
  }
  return s;
}

}  // namespace detail

// Two-resolvent estimate: transversality gain in |p - u|, <theta>^{-1/2} suppression, (log* eta)^2 growth.
inline EstimateProbe check_due(const DispersionModel& m, const ProbeLattice& lat = {}) {
  EstimateProbe pr;
  pr.id = "due";
  pr.lattice = "p=(0,0,2) u=p+D e_x D=" + detail::fmt_list(lat.pu) + " eta=" + detail::fmt_list(lat.eta) +
               " theta=" + detail::fmt_list(lat.theta_decades);
  pr.columns = {"eta", "D", "I_plus", "I_minus"};
  pr.slope_target = -1.0;
  pr.slope_tolerance = 0.2 * lat.tol_scale;
  if (m.zero_coupling()) {
    pr.checks = {{"zero_coupling", due_integral(m, {0, 0, 2}, {1, 0, 2}, 1.0, 1.0, 0.1, 1) == 0.0}};
    pr.refinement_stable = true;
    pr.finish();
    return pr;
  }
  const double eta_min = *std::min_element(lat.eta.begin(), lat.eta.end());
  const double w = m.omega(0.0);

  // transversality gain at the smallest eta
  auto tr = detail::due_transversal(m, lat.pu, eta_min, lat);
  std::vector<double> Ds, Ip, Im;
  for (auto& r : tr.rows) {
    pr.rows.push_back({eta_min, r[0], r[1], r[2]});
    Ds.push_back(r[0]);
    Ip.push_back(r[1]);
    Im.push_back(r[2]);
  }
  const double sp = fit_loglog(Ds, Ip).slope, sm = fit_loglog(Ds, Im).slope;
  pr.slope = sp;
  pr.metrics.push_back({"pu_exponent_plus", sp});
  pr.metrics.push_back({"pu_exponent_minus", sm});
  pr.checks.push_back({"pu_exponent", std::abs(sp + 1.0) <= pr.slope_tolerance && std::abs(sm + 1.0) <= pr.slope_tolerance});

  // <theta>^{-1/2} suppression: theta = theta~ over decades, |p - u| = 0.5, eta = 0.01
  {
    const Vec p{0, 0, 2}, u{0.5, 0, 2};
    std::vector<double> I(lat.theta_decades.size());
    parallel_for(I.size(), [&](std::size_t k) {
      I[k] = due_integral(m, p, u, lat.theta_decades[k], lat.theta_decades[k], 0.01, 1, lat.quad);
    });
    bool mono = true;
    for (std::size_t k = 0; k < I.size(); ++k) {
      pr.metrics.push_back({"theta_" + std::to_string(static_cast<long>(lat.theta_decades[k])) + "_I", I[k]});
      pr.metrics.push_back({"theta_" + std::to_string(static_cast<long>(lat.theta_decades[k])) + "_I_times_theta",
                            I[k] * japanese(lat.theta_decades[k])});
      if (k > 0) mono = mono && I[k] < I[k - 1];
    }
    pr.checks.push_back({"theta_suppression_monotone", mono});
  }

  // (log* eta)^2 growth at |p - u| = 1
  {
    const Vec p{0, 0, 2}, u{1, 0, 2};
    std::vector<double> I(lat.eta.size()), L(lat.eta.size());
    parallel_for(lat.eta.size(), [&](std::size_t k) {
      double best = 0.0;
      for (int sg : {1, -1})
        best = std::max(best, due_integral(m, p, u, m.e(2.0) + sg * w, m.e(std::sqrt(5.0)) + sg * w, lat.eta[k], sg, lat.quad));
      I[k] = best;
    });
    for (std::size_t k = 0; k < I.size(); ++k) {
      L[k] = detail::log_star(lat.eta[k]);
      pr.rows.push_back({lat.eta[k], 1.0, I[k], std::numeric_limits<double>::quiet_NaN()});
    }
    const double g = fit_loglog(L, I).slope;
    pr.metrics.push_back({"log_growth_exponent", g});
    pr.checks.push_back({"log_growth", g <= 2.3});
  }

  // small |p - u|: the bound switches to the |p - u|_* = |p - u| + eta branch
  {
    const std::vector<double> small{0.0, 0.1 * eta_min, eta_min, 10.0 * eta_min};
    auto br = detail::due_transversal(m, small, eta_min, lat);
    for (auto& r : br.rows) {
      pr.rows.push_back({eta_min, r[0], r[1], r[2]});
      const double I = std::max(r[1], r[2]);
      const double L2 = detail::log_star(eta_min) * detail::log_star(eta_min);
      pr.metrics.push_back({"D_" + std::to_string(r[0]) + "_transversal_branch", r[0] > 0 ? I * r[0] / L2 : std::numeric_limits<double>::infinity()});
      pr.metrics.push_back({"D_" + std::to_string(r[0]) + "_eta_branch", I * (r[0] + eta_min) / L2});
    }
    pr.checks.push_back({"small_pu_within_bound", br.C <= tr.C});
    pr.metrics.push_back({"C_small_pu", br.C});
  }

  pr.fitted_constant = tr.C;
  pr.worst = {{"eta", eta_min}, {"D", tr.argmax[0]}, {"sigma", tr.argmax[1]}};
  pr.refined_constant = detail::due_transversal(m, lat.refined().pu, eta_min, lat).C;
  pr.refinement_stable = detail::stable(pr.fitted_constant, pr.refined_constant, lat.stability);
  pr.checks.push_back({"refinement_stable", pr.refinement_stable});
  pr.finish();
  return pr;
}

namespace detail {

struct TreSweep {
  std::vector<double> sup, argE;
  double C = 0.0;
};

inline TreSweep tre_sweep(const DispersionModel& m, const ProbeLattice& lat) {
  TreSweep s;
  std::vector<double> Es{m.e(0.0)};
  for (double v : lat.v) Es.push_back(m.e(v));
  for (double eta : lat.eta) {
    double best = -1.0, arg = 0.0;
    for (double E : Es) {
      const double I = tre_integral(E, eta);
      if (I > best) {
        best = I;
        arg = E;
      }
    }
    s.sup.push_back(best);
    s.argE.push_back(arg);
    s.C = std::max(s.C, best / log_star(eta));
  }
  return s;
}

}  // namespace detail

// sup_v int d alpha / (|alpha - e + i eta| <alpha>) against C log* eta.  For small eta the integral
// grows like 2 log(1/eta) / <e>, so the fitted slope in log(1/eta) is compared with 2 / <e*>.
inline EstimateProbe check_tre(const DispersionModel& m, const ProbeLattice& lat = {}) {
  EstimateProbe pr;
  pr.id = "tre";
  pr.lattice = "|v|=" + detail::fmt_list(lat.v) + " plus v=0, eta=" + detail::fmt_list(lat.eta);
  pr.columns = {"eta", "sup", "sup_over_logstar", "e_star"};
  auto s = detail::tre_sweep(m, lat);
  std::vector<double> x, y;
  for (std::size_t k = 0; k < lat.eta.size(); ++k) {
    pr.rows.push_back({lat.eta[k], s.sup[k], s.sup[k] / detail::log_star(lat.eta[k]), s.argE[k]});
    if (lat.eta[k] <= 0.1) {
      x.push_back(-std::log(lat.eta[k]));
      y.push_back(s.sup[k]);
    }
  }
  if (x.size() < 2) throw Error("analysis_checks", "check_tre needs two eta values below 0.1");
  const std::size_t last = lat.eta.size() - 1;
  pr.slope = fit_line(x, y).slope;
  pr.slope_target = 2.0 / japanese(s.argE[last]);
  pr.slope_tolerance = 0.15 * lat.tol_scale * pr.slope_target;
  pr.fitted_constant = s.C;
  pr.refined_constant = detail::tre_sweep(m, lat.refined()).C;
  pr.refinement_stable = detail::stable(pr.fitted_constant, pr.refined_constant, lat.stability);
  pr.worst = {{"eta", lat.eta[last]}, {"e", s.argE[last]}};
  pr.checks.push_back({"log_slope", std::abs(pr.slope - pr.slope_target) <= pr.slope_tolerance});
  pr.checks.push_back({"refinement_stable", pr.refinement_stable});
  pr.finish();
  return pr;
}

namespace detail {

struct UpsSweep {
  double C = 0.0, sup_abs = 0.0;
  std::array<double, 3> arg{0, 0, 0};
  std::vector<double> per_eta;
};

inline UpsSweep upsilon_sweep(const DispersionModel& m, const ProbeLattice& lat) {
  UpsSweep s;
  for (double eta : lat.eta) {
    std::vector<std::array<double, 4>> pts;
    for (double a : lat.alpha)
      for (double v : lat.v) pts.push_back({a, v, 0.0, 0.0});
    const double h = 0.1 * eta;
    parallel_for(pts.size(), [&](std::size_t i) {
      const double a = pts[i][0], v = pts[i][1];
      const cplx da = (upsilon(m, a + h, {0, 0, v}, eta) - upsilon(m, a - h, {0, 0, v}, eta)) / (2.0 * h);
      const cplx dv = (upsilon(m, a, {0, 0, v + h}, eta) - upsilon(m, a, {0, 0, v - h}, eta)) / (2.0 * h);
      pts[i][2] = std::sqrt(eta) * (std::abs(da) + std::abs(dv));
      pts[i][3] = std::abs(upsilon(m, a, {0, 0, v}, eta));
    });
    double best = 0.0;
    for (auto& q : pts) {
      s.sup_abs = std::max(s.sup_abs, q[3]);
      best = std::max(best, q[2]);
      if (q[2] > s.C) {
        s.C = q[2];
        s.arg = {eta, q[0], q[1]};
      }
    }
    s.per_eta.push_back(best);
  }
  return s;
}

}  // namespace detail

// eta^{1/2} (|d_alpha Upsilon| + |grad_v Upsilon|), central differences with step eta/10.
inline EstimateProbe check_upsilon_derivative(const DispersionModel& m, const ProbeLattice& lat = {}) {
  EstimateProbe pr;
  pr.id = "upsilon_derivative";
  pr.lattice = "alpha=" + detail::fmt_list(lat.alpha) + " |v|=" + detail::fmt_list(lat.v) + " eta=" + detail::fmt_list(lat.eta);
  pr.columns = {"eta", "max_scaled_derivative"};
  if (m.zero_coupling()) {
    pr.checks = {{"zero_coupling", true}};
    pr.refinement_stable = true;
    pr.finish();
    return pr;
  }
  auto s = detail::upsilon_sweep(m, lat);
  for (std::size_t k = 0; k < lat.eta.size(); ++k) pr.rows.push_back({lat.eta[k], s.per_eta[k]});
  pr.fitted_constant = s.C;
  pr.refined_constant = detail::upsilon_sweep(m, lat.refined()).C;
  pr.refinement_stable = detail::stable(pr.fitted_constant, pr.refined_constant, lat.stability);
  pr.worst = {{"eta", s.arg[0]}, {"alpha", s.arg[1]}, {"v", s.arg[2]}};
  pr.metrics.push_back({"sup_abs_upsilon", s.sup_abs});
  pr.checks.push_back({"refinement_stable", pr.refinement_stable});
  pr.finish();
  return pr;
}

// --- level sets ---------------------------------------------------------------------

struct LevelSet {
  Vec p;
  double theta = 0.0, delta = 0.0;
  int sigma = 1;
};

struct VolumeEstimate {
  double volume = 0.0, stderr_ = 0.0, ci = 0.0;
  long samples = 0;
};

// |E_sigma(p, theta, delta) (cap second set) cap B(q, rho)| by Monte Carlo stratified over
// equal-volume radial shells of the ball.
inline VolumeEstimate level_set_volume(const DispersionModel& m, const std::vector<LevelSet>& sets, const Vec& q, double rho,
                                       long samples, std::uint64_t seed, int shells = 32, double rho_tilde = 0.5) {
  if (sets.empty() || sets.size() > 2) throw Error("analysis_checks", "level_set_volume takes one or two sets");
  if (!(rho > 0.0) || rho > rho_tilde) throw Error("analysis_checks", "rho must lie in (0, rho_tilde]");
  for (auto& s : sets)
    if (!(s.delta > 0.0) || s.delta > rho_tilde) throw Error("analysis_checks", "delta must lie in (0, rho_tilde]");
  if (samples < shells * 2) throw Error("analysis_checks", "too few samples");
  const int d = static_cast<int>(q.size());
  const double ball = std::pow(pi, 0.5 * d) / std::tgamma(0.5 * d + 1.0) * std::pow(rho, d);
  const long per = samples / shells;
  std::vector<double> frac(shells);
  parallel_for(static_cast<std::size_t>(shells), [&](std::size_t j) {
    Rng rng(seed, j);
    long hit = 0;
    Vec k(d);
    for (long n = 0; n < per; ++n) {
      const double r = rho * std::pow((j + rng.uniform()) / shells, 1.0 / d);
      double nn = 0.0;
      for (int a = 0; a < d; ++a) {
        k[a] = rng.normal();
        nn += k[a] * k[a];
      }
      nn = std::sqrt(nn);
      for (int a = 0; a < d; ++a) k[a] = q[a] + r * k[a] / nn;
      bool in = true;
      for (auto& s : sets) in = in && std::abs(phi_sigma(m, s.p, k, s.sigma) - s.theta) <= s.delta;
      hit += in;
    }
    frac[j] = static_cast<double>(hit) / per;
  });
  VolumeEstimate v;
  double var = 0.0;
  for (double f : frac) {
    v.volume += ball / shells * f;
    var += (ball / shells) * (ball / shells) * f * (1.0 - f) / (per - 1);
  }
  v.stderr_ = std::sqrt(var);
  v.ci = 1.96 * v.stderr_;
  v.samples = per * shells;
  return v;
}

namespace detail {

struct LevelSweep {
  std::vector<double> single, pair;
  double C_single = 0.0, C_pair = 0.0;
  double single_slope = 0.0, pair_slope = 0.0;
  double max_rel_ci = 0.0;
};

// Sets through q: p1 = (0,0,2) and p2 = p1 + e_x, theta_i = Phi_+(p_i, q).
inline LevelSweep level_sweep(const DispersionModel& m, const ProbeLattice& lat, double rho_max) {
  LevelSweep s;
  const Vec p1{0, 0, 2}, p2{1, 0, 2}, q{0.3, 0.2, -0.4};
  const double th1 = phi_sigma(m, p1, q, 1), th2 = phi_sigma(m, p2, q, 1);
  const double D = norm(add(p1, p2, -1.0));
  std::uint64_t stream = 0;
  for (double rho : lat.rho) {
    if (rho > rho_max) continue;
    for (double dl : lat.delta) {
      auto v1 = level_set_volume(m, {{p1, th1, dl, 1}}, q, rho, lat.samples, lat.seed + stream++, 32, rho_max);
      auto v2 = level_set_volume(m, {{p1, th1, dl, 1}, {p2, th2, dl, 1}}, q, rho, lat.samples, lat.seed + stream++, 32, rho_max);
      s.C_single = std::max(s.C_single, v1.volume / (dl * rho * rho));
      s.C_pair = std::max(s.C_pair, v2.volume * D / (dl * dl * rho));
      s.max_rel_ci = std::max(s.max_rel_ci, v1.ci / v1.volume);
      if (rho == rho_max) {
        s.single.push_back(v1.volume);
        s.pair.push_back(v2.volume);
      }
    }
  }
  if (!s.single.empty()) {
    s.single_slope = fit_loglog(lat.delta, s.single).slope;
    s.pair_slope = fit_loglog(lat.delta, s.pair).slope;
  }
  return s;
}

}  // namespace detail

// Thick level sets: |E cap B| <= C~ delta rho^{d-1} and the two-set bound C3 delta1 delta2 rho^{d-2} / |p1 - p2|.
inline EstimateProbe check_level_sets(const DispersionModel& m, const ProbeLattice& lat = {}) {
  if (m.d != 3) throw Error("analysis_checks", "level-set probe is implemented for d = 3");
  EstimateProbe pr;
  pr.id = "level_sets";
  pr.lattice = "delta=" + detail::fmt_list(lat.delta) + " rho=" + detail::fmt_list(lat.rho) + " rho_tilde=" +
               std::to_string(lat.rho_tilde) + " samples=" + std::to_string(lat.samples);
  pr.columns = {"delta", "volume_single", "volume_pair"};
  auto s = detail::level_sweep(m, lat, lat.rho_tilde);
  for (std::size_t k = 0; k < s.single.size(); ++k) pr.rows.push_back({lat.delta[k], s.single[k], s.pair[k]});
  pr.slope = s.single_slope;
  pr.slope_target = 1.0;
  pr.slope_tolerance = 0.1 * lat.tol_scale;
  pr.fitted_constant = s.C_single;
  auto r = detail::level_sweep(m, lat.refined(), lat.rho_tilde);
  pr.refined_constant = r.C_single;
  pr.refinement_stable = detail::stable(s.C_single, r.C_single, lat.stability) && detail::stable(s.C_pair, r.C_pair, lat.stability);
  pr.metrics.push_back({"C3_pair", s.C_pair});
  pr.metrics.push_back({"C3_pair_refined", r.C_pair});
  pr.metrics.push_back({"pair_slope", s.pair_slope});
  pr.metrics.push_back({"max_rel_ci", s.max_rel_ci});
  // sensitivity to the unquantified rho~: repeat with balls up to 2 rho~
  {
    ProbeLattice wide = lat;
    wide.rho = {lat.rho_tilde, 2.0 * lat.rho_tilde};
    auto w = detail::level_sweep(m, wide, 2.0 * lat.rho_tilde);
    pr.metrics.push_back({"C_single_rho_2x", w.C_single});
  }
  // a level below min Phi_+ is empty
  {
    const double below = m.e(0.0) + m.omega(0.0) - 1.0;
    auto e = level_set_volume(m, {{{0, 0, 2}, below, 0.1, 1}}, {0, 0, -2}, lat.rho_tilde, 10000, lat.seed, 32, lat.rho_tilde);
    pr.checks.push_back({"empty_below_min", e.volume == 0.0});
  }
  pr.worst = {{"delta", lat.delta.front()}, {"rho", lat.rho_tilde}};
  pr.checks.push_back({"delta_slope", std::abs(s.single_slope - 1.0) <= pr.slope_tolerance});
  pr.checks.push_back({"pair_slope", std::abs(s.pair_slope - 2.0) <= 0.2 * lat.tol_scale});
  pr.checks.push_back({"refinement_stable", pr.refinement_stable});
  pr.finish();
  return pr;
}

}  // namespace decoh
