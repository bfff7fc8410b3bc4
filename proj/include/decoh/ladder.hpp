#pragma once

#include "decoh/collision.hpp"
#include "decoh/observables.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cstdint>

namespace decoh {

// --- residue identity ---------------------------------------------------------

// int d alpha e^{-i t alpha} / (alpha - e_val + i eta)^{m+1}, closed by the residue at e_val - i eta.
inline cplx residue_time_integral(double e_val, double t, double eta, int m) {
  if (!(eta > 0.0)) throw std::invalid_argument("residue_time_integral: eta must be > 0");
  if (m < 0) throw std::invalid_argument("residue_time_integral: m must be >= 0");
  cplx pw = 1.0;
  for (int k = 1; k <= m; ++k) pw *= cplx(0.0, -t) / double(k);
  return cplx(0.0, -2.0 * pi) * std::exp(-eta * t) * std::exp(cplx(0.0, -t * e_val)) * pw;
}

// Same integral by adaptive quadrature along a deformed alpha contour.  The segment [-R, R]
// is lifted to height h = (m+1)/t above the real axis (the pole sits below it), which keeps
// the integrand comparable to the result; the tails (R, inf), (-inf, -R) are rotated onto
// vertical rays where e^{-i t x} decays.
inline QuadResult<cplx> residue_time_integral_quadrature(double e_val, double t, double eta, int m) {
  if (!(eta > 0.0) || !(t > 0.0) || m < 0) throw std::invalid_argument("residue quadrature: needs eta > 0, t > 0, m >= 0");
  auto f = [&](cplx x) { return std::exp(cplx(0.0, -t) * x) / std::pow(x + cplx(0.0, eta), m + 1); };
  const double R = 1.0, h = (m + 1.0) / t;
  const cplx I(0.0, 1.0);
  auto top = integrate<cplx>([&](double s) { return f(cplx(s, h)); }, -R, R, 1e-14, 1e-13, 20000);
  auto sides = integrate<cplx>([&](double y) { return I * (f(cplx(-R, y)) - f(cplx(R, y))); }, 0.0, h, 1e-14, 1e-13, 20000);
  const double Y = 60.0 / t;
  std::vector<double> ybr{0.0};
  for (double y = 1.0; y < Y; y *= 4.0) ybr.push_back(y);
  ybr.push_back(Y);
  auto tails = integrate<cplx>([&](double y) { return -I * f(cplx(R, -y)) + I * f(cplx(-R, -y)); }, ybr, 1e-14, 1e-13, 20000);
  QuadResult<cplx> out;
  out.value = std::exp(cplx(0.0, -t * e_val)) * (top.value + sides.value + tails.value);
  out.error = top.error + sides.error + tails.error;
  out.evals = top.evals + sides.evals + tails.evals;
  out.converged = top.converged && sides.converged && tails.converged;
  return out;
}

// --- time simplex -------------------------------------------------------------

// int over loop durations tau_j >= 0 with sum <= t of (t - sum)^m/m! prod e^{-i tau_j E_j}.
// Equals i^{2m} f[0,...,0, E_1..E_m] (m+1 zeros) for f(z) = e^{-i t z}; the divided difference
// is read off the exponential of the bidiagonal node matrix.
inline cplx simplex_time_integral(double t, const double* E, int m) {
  if (m == 0) return 1.0;
  if (m == 1) {
    const double x = t * E[0];
    if (std::abs(x) < 1e-3) return t * t * (0.5 - cplx(0.0, x) / 6.0 - x * x / 24.0);
    const double sh = std::sin(0.5 * x);
    return cplx(0.0, -t / E[0]) + cplx(2.0 * sh * sh, std::sin(x)) / (E[0] * E[0]);
  }
  const int n = 2 * m + 1;
  Eigen::MatrixXcd Z = Eigen::MatrixXcd::Zero(n, n);
  for (int j = 0; j < m; ++j) Z(m + 1 + j, m + 1 + j) = E[j];
  for (int i = 1; i < n; ++i) Z(i, i - 1) = 1.0;
  Eigen::MatrixXcd X = (cplx(0.0, -t) * Z).exp();
  return (m % 2 ? -1.0 : 1.0) * X(n - 1, 0);
}

// --- loop spectral density ----------------------------------------------------

// rho_p(E) = sum_sigma int L(k,sigma) delta(E - e(p+k) - sigma omega(k) + e(p)) dk.
// Its Fourier transform is the loop kernel; int rho = sum_sigma int L.
struct LoopDensity {
  const DispersionModel* m = nullptr;
  GaussRule gl;
  double wsph = 1.0;
  ShellOptions opt;

  explicit LoopDensity(const DispersionModel& model, int n_theta = 48) : m(&model) {
    opt.n_theta = n_theta;
    opt.tangency = 0.0;
    if (model.d >= 2) {
      gl = gauss_legendre(n_theta, 0.0, pi);
      wsph = detail::sphere_area(model.d - 1);
      prepare();
    }
  }

  double operator()(double pm, double E) const {
    if (m->zero_coupling()) return 0.0;
    if (m->quadratic_e && m->omega_constant && m->d >= 2) return fast(pm, E);
    double acc = 0.0;
    for (int sg : {+1, -1}) {
      if (m->d == 1) {
        for (double c : {1.0, -1.0})
          for (auto& sp : shell_points(*m, pm, c, sg, opt, nullptr, E)) acc += sp.density;
        continue;
      }
      for (std::size_t i = 0; i < gl.x.size(); ++i) {
        const double th = gl.x[i];
        double s = 0.0;
        for (auto& sp : shell_points(*m, pm, std::cos(th), sg, opt, nullptr, E)) s += sp.density;
        acc += gl.w[i] * wsph * std::pow(std::sin(th), m->d - 2) * s;
      }
    }
    return acc / (2.0 * pi);
  }

  // e = r^2/2, constant omega: the level set in q = p + k is the sphere |q| = r_sigma and
  // |d_r g| = r, so rho = sum_sigma r^{d-2} int_{S^{d-1}} L(|r n - p|, sigma) dn.
  double fast(double pm, double E) const {
    const double w0 = m->omega(0.0);
    double acc = 0.0;
    for (int sg : {+1, -1}) {
      const double r2 = pm * pm + 2.0 * E - 2.0 * sg * w0;
      if (r2 <= 0.0) continue;
      const double r = std::sqrt(r2);
      double s = 0.0;
      for (std::size_t i = 0; i < gl.x.size(); ++i) {
        const double k = std::sqrt(std::max(0.0, r2 + pm * pm - 2.0 * r * pm * cosv[i]));
        s += wv[i] * m->L_r(k, sg);
      }
      acc += std::pow(r, m->d - 2) * s;
    }
    return acc;
  }

  std::vector<double> cosv, wv;
  void prepare() {
    cosv.clear();
    wv.clear();
    for (std::size_t i = 0; i < gl.x.size(); ++i) {
      cosv.push_back(std::cos(gl.x[i]));
      wv.push_back(gl.w[i] * wsph * std::pow(std::sin(gl.x[i]), m->d - 2));
    }
  }
};

// PV int rho_p(E)/E dE by subtracting rho_p(0) near E = 0.
inline double loop_principal_value(const LoopDensity& rho, double pm, double lo, double hi) {
  const double r0 = rho(pm, 0.0);
  std::vector<double> br;
  for (int i = 0; i <= 96; ++i) br.push_back(lo + (hi - lo) * i / 96.0);
  br.push_back(0.0);
  std::sort(br.begin(), br.end());
  br.erase(std::unique(br.begin(), br.end()), br.end());
  auto f = [&](double E) {
    if (E == 0.0) return 0.0;
    const double c = std::abs(E) < 1.0 ? r0 : 0.0;
    return (rho(pm, E) - c) / E;
  };
  br.push_back(-1.0);
  br.push_back(1.0);
  std::sort(br.begin(), br.end());
  br.erase(std::unique(br.begin(), br.end()), br.end());
  // the subtracted constant on [-1, 1] has zero principal value
  return integrate(f, br, 1e-12, 1e-10, 20000).value;
}

// int rho_p(E) I_1(t; E) dE, the one-loop simplex integral against the loop density.
inline cplx loop_simplex_mean(const LoopDensity& rho, double pm, double t, double lo, double hi) {
  const int pieces = 64 + static_cast<int>((hi - lo) * t / (2.0 * pi));
  std::vector<double> br;
  for (int i = 0; i <= pieces; ++i) br.push_back(lo + (hi - lo) * i / pieces);
  auto f = [&](double E) -> cplx {
    const double r = rho(pm, E);
    return r == 0.0 ? cplx(0.0) : r * simplex_time_integral(t, &E, 1);
  };
  auto res = integrate<cplx>(f, br, 1e-11, 1e-9, 40 * pieces);
  if (!res.converged) throw Error("ladder", "loop_simplex_mean: quadrature budget exhausted");
  return res.value;
}

namespace detail {

struct EnergyRange {
  double lo, hi;
};

// Support of rho_p for |p| <= p_max.
inline EnergyRange loop_energy_range(const DispersionModel& m, double p_min, double p_max) {
  const double Rc = coupling_radius(m);
  double emin = m.e(0.0), emax = m.e(0.0), wmax = 0.0;
  for (int i = 0; i <= 4000; ++i) {
    const double r = (p_max + Rc) * i / 4000.0;
    emin = std::min(emin, m.e(r));
    emax = std::max(emax, m.e(r));
    if (r <= Rc) wmax = std::max(wmax, std::abs(m.omega(r)));
  }
  double ep_lo = m.e(p_min), ep_hi = m.e(p_min);
  for (int i = 0; i <= 200; ++i) {
    const double p = p_min + (p_max - p_min) * i / 200.0;
    ep_lo = std::min(ep_lo, m.e(p));
    ep_hi = std::max(ep_hi, m.e(p));
  }
  return {emin - wmax - ep_hi - 0.01, emax + wmax - ep_lo + 0.01};
}

// Mixture sampler for loop energies: tabulated rho at the reference |P|, a near-shell
// density ~ 1/(|E| + 1/t) on [-B, B], and a flat floor over the full support.
struct EnergySampler {
  double lo = 0, hi = 0, t = 1, B = 1, Z = 1;
  double w_rho = 0.45, w_near = 0.45, w_flat = 0.1;
  std::vector<double> cdf, dens;
  double h = 1;

  EnergySampler(const LoopDensity& rho, double p_ref, EnergyRange rg, double t_, int bins = 2000) : lo(rg.lo), hi(rg.hi), t(t_) {
    B = std::min(1.0, std::max(std::abs(lo), std::abs(hi)));
    Z = std::log1p(B * t);
    h = (hi - lo) / bins;
    dens.resize(bins);
    cdf.assign(bins + 1, 0.0);
    for (int i = 0; i < bins; ++i) {
      dens[i] = rho(p_ref, lo + (i + 0.5) * h);
      cdf[i + 1] = cdf[i] + dens[i] * h;
    }
    const double tot = cdf.back();
    if (tot <= 0.0) {
      w_flat += w_rho;
      w_rho = 0.0;
    } else {
      for (auto& c : cdf) c /= tot;
      for (auto& d : dens) d /= tot;
    }
  }

  double sample(Rng& g) const {
    const double c = g.uniform();
    if (c < w_rho) {
      const double u = g.uniform();
      const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      const std::size_t i = std::min<std::size_t>(dens.size() - 1, std::max<std::ptrdiff_t>(0, (it - cdf.begin()) - 1));
      const double frac = dens[i] > 0.0 ? (u - cdf[i]) / (dens[i] * h) : 0.5;
      return lo + (i + std::clamp(frac, 0.0, 1.0)) * h;
    }
    if (c < w_rho + w_near) {
      const double a = std::expm1(g.uniform() * Z) / t;
      return g.uniform() < 0.5 ? -a : a;
    }
    return lo + (hi - lo) * g.uniform();
  }

  double pdf(double E) const {
    double p = 0.0;
    if (E >= lo && E < hi) {
      const std::size_t i = std::min<std::size_t>(dens.size() - 1, static_cast<std::size_t>((E - lo) / h));
      p += w_rho * dens[i] + w_flat / (hi - lo);
    }
    if (std::abs(E) <= B) p += w_near / (2.0 * Z * (std::abs(E) + 1.0 / t));
    return p;
  }
};

inline void require_fringe_at_P(const TwoScaleObservable& J, const WavePacketSpec& s) {
  if (J.kind != TwoScaleObservable::Kind::fringe || norm(add(J.Ptilde, s.P, -1.0)) > 1e-12)
    throw Error("ladder", "ladder pairings need the fringe observable at Ptilde = P");
}

inline double factorial(int n) { return std::tgamma(n + 1.0); }

inline cplx script_coefficient(int m, int mt, double T, cplx phi) {
  return std::pow(cplx(0.0, -T) * phi, m) / factorial(m) * std::pow(cplx(0.0, T) * std::conj(phi), mt) / factorial(mt);
}

}  // namespace detail

// <J, W_{+-,free}(T/eps)> for the fringe observable, by tensor Gauss-Hermite in u = v/eps:
// conj(c_b) int |f-hat(u)|^2 conj(a(eps u)) e^{2i u.Q} e^{-i t [e(P + eps u) - e(eps u - P)]} du.
inline cplx free_pairing(const WavePacketSpec& s, const DispersionModel& m, double T, const TwoScaleObservable& J,
                         int n_gh = 24) {
  detail::require_fringe_at_P(J, s);
  const int d = s.d;
  const double eps = s.epsilon, t = T / eps;
  auto gh = gauss_hermite(n_gh);
  std::size_t total = 1;
  for (int k = 0; k < d; ++k) total *= n_gh;
  cplx acc = 0.0;
  Vec u(d), v(d);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t r = flat;
    double w = 1.0;
    for (int k = d - 1; k >= 0; --k) {
      const std::size_t i = r % n_gh;
      r /= n_gh;
      u[k] = gh.x[i];
      w *= gh.w[i];
    }
    v = scale(u, eps);
    const double de = m.e(norm(add(s.P, v))) - m.e(norm(add(v, s.P, -1.0)));
    acc += w * std::conj(J.a(v)) * std::exp(cplx(0.0, 2.0 * dot(u, s.Q) - t * de));
  }
  return std::conj(J.c_b) * acc;
}

// ((-i T Phi)^m/m!) ((i T conj Phi)^mt/mt!) <J, W_free>.
inline cplx ladder_n0_script(const WavePacketSpec& s, const DispersionModel& m, int mm, int mt, double T,
                             const TwoScaleObservable& J, cplx phi) {
  if (mm < 0 || mt < 0) throw std::invalid_argument("ladder_n0_script: negative order");
  return detail::script_coefficient(mm, mt, T, phi) * free_pairing(s, m, T, J);
}

inline cplx ladder_n0_script(const WavePacketSpec& s, const DispersionModel& m, int mm, int mt, double T,
                             const TwoScaleObservable& J) {
  return ladder_n0_script(s, m, mm, mt, T, J, phi_P(m, s.P).value);
}

struct McOptions {
  cplx phi = std::numeric_limits<double>::quiet_NaN();  // enables the paired deviation estimate
  long shard = 2048;
  double z = 1.96;
  long min_samples = 100000;
  int max_order = 4;
  int n_theta = 48;
};

struct McResult {
  cplx value;
  double stderr_ = 0.0;
  double ci_halfwidth = 0.0;
  long samples = 0;
  bool paired = false;
  cplx deviation;  // value - script, same samples
  double deviation_stderr = 0.0;
  double deviation_ci = 0.0;
};

// Propagator form of the n=0 ladder term with m and mt immediate recollisions (lambda^2 = eps).
// Each side is (-lambda^2)^m e^{-i t e(p)} int prod rho_p(E_j) dE_j I_m(t; E), the k-integrals
// reduced to the loop energy; the time simplex is integrated exactly by simplex_time_integral.
// u ~ |f-hat|^2 and E_j ~ EnergySampler are Monte Carlo; the m = mt = 0 simplex is a point mass.
inline McResult ladder_n0_propagator_mc(const WavePacketSpec& s, const DispersionModel& m, int mm, int mt, double t,
                                        long samples, std::uint64_t seed, const TwoScaleObservable& J,
                                        const McOptions& opt = {}) {
  detail::require_fringe_at_P(J, s);
  if (mm < 0 || mt < 0 || mm > opt.max_order || mt > opt.max_order)
    throw std::invalid_argument("ladder_n0_propagator_mc: order outside [0, max_order]");
  if (samples < opt.min_samples) throw std::invalid_argument("ladder_n0_propagator_mc: too few samples");
  if (!(t > 0.0)) throw std::invalid_argument("ladder_n0_propagator_mc: t must be > 0");
  const double eps = s.epsilon, lam2 = eps, T = eps * t;
  McResult out;
  out.paired = !std::isnan(opt.phi.real());
  if (mm == 0 && mt == 0) {
    out.value = free_pairing(s, m, T, J);
    out.samples = samples;
    return out;
  }
  if (m.zero_coupling()) {
    out.value = 0.0;
    out.samples = samples;
    if (out.paired) out.deviation = -ladder_n0_script(s, m, mm, mt, T, J, opt.phi);
    return out;
  }
  const int d = s.d;
  const double Pm = norm(s.P);
  LoopDensity rho(m, opt.n_theta);
  const double spread = 12.0 * eps;
  const auto rg = detail::loop_energy_range(m, std::max(0.0, Pm - spread), Pm + spread);
  const detail::EnergySampler q(rho, Pm, rg, t);
  const cplx cv_mean = (mm == 1 || mt == 1) ? loop_simplex_mean(rho, Pm, t, rg.lo, rg.hi) : cplx(0.0);
  const cplx coef = out.paired ? detail::script_coefficient(mm, mt, T, opt.phi) : cplx(0.0);
  const cplx cb = std::conj(J.c_b);

  const long nshard = (samples + opt.shard - 1) / opt.shard;
  std::vector<Welford> acc(nshard), dev(nshard);
  parallel_for(static_cast<std::size_t>(nshard), [&](std::size_t sh) {
    Rng g(seed, sh);
    const long n = std::min<long>(opt.shard, samples - static_cast<long>(sh) * opt.shard);
    Vec u(d), v(d);
    double E[8];
    // antithetic partner -E cancels the principal-value part of the near-shell samples
    double En[8];
    auto side = [&](double pm, int k) -> cplx {
      const cplx free = std::exp(cplx(0.0, -t * m.e(pm)));
      if (k == 0) return free;
      double w = 1.0, wn = 1.0;
      for (int j = 0; j < k; ++j) {
        E[j] = q.sample(g);
        En[j] = -E[j];
        const double qe = q.pdf(E[j]);
        if (qe <= 0.0) return 0.0;
        w *= rho(pm, E[j]) / qe;
        wn *= rho(pm, En[j]) / qe;
      }
      cplx I = 0.0;
      if (w != 0.0) I += w * simplex_time_integral(t, E, k);
      if (wn != 0.0) I += wn * simplex_time_integral(t, En, k);
      I *= 0.5;
      if (k == 1) {
        // control variate rho_P(E) I_1(t; E) at the reference |P|, exact mean by quadrature
        const double qe = q.pdf(E[0]);
        I -= 0.5 * (rho(Pm, E[0]) * simplex_time_integral(t, E, 1) + rho(Pm, En[0]) * simplex_time_integral(t, En, 1)) / qe;
        I += cv_mean;
      }
      return std::pow(-lam2, k) * free * I;
    };
    for (long i = 0; i < n; ++i) {
      for (int k = 0; k < d; ++k) u[k] = g.normal() * std::sqrt(0.5);
      v = scale(u, eps);
      const double p1 = norm(add(s.P, v)), p2 = norm(add(v, s.P, -1.0));
      const cplx pre = cb * std::conj(J.a(v)) * std::exp(cplx(0.0, 2.0 * dot(u, s.Q)));
      const cplx A = side(p1, mm);
      const cplx At = side(p2, mt);
      const cplx y = pre * A * std::conj(At);
      acc[sh].add(y.real(), y.imag());
      if (out.paired) {
        const cplx ys = pre * std::exp(cplx(0.0, -t * (m.e(p1) - m.e(p2)))) * coef;
        dev[sh].add((y - ys).real(), (y - ys).imag());
      }
    }
  });
  Welford all, alld;
  for (long sh = 0; sh < nshard; ++sh) {
    all.merge(acc[sh]);
    alld.merge(dev[sh]);
  }
  out.samples = all.n;
  out.value = cplx(all.mr, all.mi);
  out.stderr_ = all.stderr_abs();
  out.ci_halfwidth = opt.z * out.stderr_;
  if (out.paired) {
    out.deviation = cplx(alld.mr, alld.mi);
    out.deviation_stderr = alld.stderr_abs();
    out.deviation_ci = opt.z * out.deviation_stderr;
  }
  return out;
}

// --- resummation ----------------------------------------------------------------

struct ResumRow {
  int K;
  cplx S;
  double abs_err;    // |S_K - target|
  double ratio_err;  // |S_K / free - e^{-T sigma_P}|
};

struct ResumTable {
  double T = 0.0;
  cplx phi;
  double sigma_P = 0.0;  // -2 Im Phi_P
  cplx free;
  cplx target;
  std::vector<ResumRow> rows;
};

inline ResumTable resum_decoherence(const WavePacketSpec& s, const DispersionModel& m, double T, int K,
                                    const TwoScaleObservable& J, cplx phi) {
  if (K < 0 || K > 30) throw std::invalid_argument("resum_decoherence: K must lie in [0, 30]");
  ResumTable tab;
  tab.T = T;
  tab.phi = phi;
  tab.sigma_P = -2.0 * phi.imag();
  tab.free = free_pairing(s, m, T, J);
  tab.target = std::exp(-T * tab.sigma_P) * tab.free;
  cplx S = 0.0;
  for (int k = 0; k <= K; ++k) {
    // add the new shell {max(m, mt) = k} of the double sum
    for (int a = 0; a <= k; ++a) {
      S += detail::script_coefficient(a, k, T, phi) * tab.free;
      if (a < k) S += detail::script_coefficient(k, a, T, phi) * tab.free;
    }
    const double ratio = std::abs(S / tab.free - std::exp(-T * tab.sigma_P));
    tab.rows.push_back({k, S, std::abs(S - tab.target), ratio});
  }
  return tab;
}

// --- Step 1 bound and the sqrt(eps) regression ----------------------------------

struct Step1Cell {
  double eps;
  int m, mt;
  cplx value;
  double ci;
  double bound = 0.0;
  bool ok = false;
};

struct Step1Report {
  double T = 1.0;
  std::vector<Step1Cell> cells;
  double C_fit = 0.0;      // smallest C with every cell under (C T)^n / (m! mt!)
  double C_fit_upper = 0.0; // same with |value| + CI
  double C_theory = 0.0;   // sup <s>^{3/2}|g| * int <s>^{-3/2} ds
  bool bound_ok = false;
  std::vector<double> dev_eps, dev_abs, dev_ci;
  LineFit dev_fit;
  double dev_slope_stderr = 0.0;
  bool sqrt_ok = false;
};

// int_0^inf <s>^{-3/2} ds = (sqrt(pi)/2) Gamma(1/4) / Gamma(3/4).
inline double japanese_decay_integral() { return 0.5 * std::sqrt(pi) * std::tgamma(0.25) / std::tgamma(0.75); }

inline double slope_stderr(const std::vector<double>& x, const std::vector<double>& y, const LineFit& f) {
  const std::size_t n = x.size();
  if (n < 3) return std::numeric_limits<double>::infinity();
  double mx = 0.0, sxx = 0.0, sse = 0.0;
  for (double a : x) mx += a / n;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    sse += r * r;
  }
  return std::sqrt(sse / (n - 2) / sxx);
}

struct Step1Options {
  long samples = 100000;
  long deviation_samples = 400000;
  std::uint64_t seed = 1;
  int max_total = 4;
  double sup_weighted_g = 0.0;  // sup <s>^{3/2} |g(s)|; computed from a decay table when 0
};

// Every (m, mt) cell with m + mt <= max_total at every eps, one C_fit for all of them, and the
// m=1, mt=0 deviation from the script form regressed on eps.
inline Step1Report step1_study(WavePacketSpec s, const DispersionModel& m, double T, const std::vector<double>& eps_list,
                               const TwoScaleObservable& J, cplx phi, const Step1Options& opt = {}) {
  Step1Report rep;
  rep.T = T;
  double G = opt.sup_weighted_g;
  if (G <= 0.0) {
    std::vector<double> grid;
    for (double x = 0.0; x <= 100.0 + 1e-9; x += 0.5) grid.push_back(x);
    G = oscillatory_decay(m, s.P, grid).sup_weighted;
  }
  rep.C_theory = G * japanese_decay_integral();
  McOptions mo;
  mo.phi = phi;
  std::uint64_t cell_seed = opt.seed;
  for (double eps : eps_list) {
    s.epsilon = eps;
    const double t = T / eps;
    for (int n = 0; n <= opt.max_total; ++n) {
      for (int a = 0; a <= n; ++a) {
        const int b = n - a;
        auto r = ladder_n0_propagator_mc(s, m, a, b, t, opt.samples, cell_seed++, J, mo);
        Step1Cell c{eps, a, b, r.value, r.ci_halfwidth};
        rep.cells.push_back(c);
        if (n == 0) continue;
        const double f = detail::factorial(a) * detail::factorial(b);
        rep.C_fit = std::max(rep.C_fit, std::pow(std::abs(r.value) * f, 1.0 / n) / T);
        rep.C_fit_upper = std::max(rep.C_fit_upper, std::pow((std::abs(r.value) + r.ci_halfwidth) * f, 1.0 / n) / T);
      }
    }
  }
  rep.bound_ok = rep.C_fit_upper <= rep.C_theory;
  for (auto& c : rep.cells) {
    const int n = c.m + c.mt;
    c.bound = std::pow(rep.C_fit * T, n) / (detail::factorial(c.m) * detail::factorial(c.mt));
    c.ok = std::abs(c.value) <= c.bound * (1.0 + 1e-12);
    rep.bound_ok = rep.bound_ok && c.ok;
  }
  std::vector<double> lx, ly;
  for (double eps : eps_list) {
    s.epsilon = eps;
    auto r = ladder_n0_propagator_mc(s, m, 1, 0, T / eps, opt.deviation_samples, cell_seed++, J, mo);
    rep.dev_eps.push_back(eps);
    rep.dev_abs.push_back(std::abs(r.deviation));
    rep.dev_ci.push_back(r.deviation_ci);
    lx.push_back(std::log(eps));
    ly.push_back(std::log(std::abs(r.deviation)));
  }
  rep.dev_fit = fit_line(lx, ly);
  rep.dev_slope_stderr = slope_stderr(lx, ly, rep.dev_fit);
  rep.sqrt_ok = std::abs(rep.dev_fit.slope - 0.5) <= 0.15;
  return rep;
}

}  // namespace decoh
