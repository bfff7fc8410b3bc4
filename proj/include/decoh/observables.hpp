#pragma once

#include "decoh/core.hpp"
#include "decoh/quadrature.hpp"
#include "decoh/wavepacket.hpp"

#include <functional>
#include <string>

namespace decoh {

// J_eps(x, v) = A(eps x, v) b(x) with A(X, v) = alpha(X) a(v).
//   fringe:          alpha = 1,                 b = exp(2i Ptilde.x)
//   windowed-fringe: alpha = exp(-|X|^2/(2 s^2)), b = exp(2i Ptilde.x)
//   blind:           alpha = 1,                 b = exp(-|x|^2/(2 l^2))   (no Dirac part)
struct TwoScaleObservable {
  enum class Kind { fringe, windowed, blind };
  Kind kind = Kind::fringe;
  int d = 1;
  Vec Ptilde{0.0};
  cplx c_b = 1.0;      // Dirac coefficient of b-hat at frequency 2P
  double window = 0.0; // s, windowed kind only
  double blind_length = 1.0;
  std::function<cplx(const Vec&)> a = [](const Vec&) { return cplx(1.0); };
  double a_sup = 1.0;
  std::string name;

  bool has_dirac() const { return kind != Kind::blind; }

  // J-hat_eps(xi, v), smooth part only (Dirac kinds return 0 here).
  cplx hat_smooth(const Vec& xi, const Vec& v, double eps) const {
    if (kind == Kind::windowed) {
      const double r = norm(add(xi, Ptilde, -2.0));
      return std::pow(window / eps, d) * std::exp(-0.5 * window * window * r * r / (eps * eps)) * a(v);
    }
    if (kind == Kind::blind) {
      const double r = norm(xi);
      return std::pow(blind_length, d) * std::exp(-0.5 * blind_length * blind_length * r * r) * a(v);
    }
    return 0.0;
  }

  // J(x, v) in position space.
  cplx value(const Vec& x, const Vec& v, double eps) const {
    if (kind == Kind::blind) {
      const double r = norm(x);
      return std::exp(-0.5 * r * r / (blind_length * blind_length)) * a(v);
    }
    cplx b = std::exp(cplx(0.0, 2.0 * dot(Ptilde, x)));
    if (kind == Kind::windowed) {
      const double r = eps * norm(x);
      b *= std::exp(-0.5 * r * r / (window * window));
    }
    return b * a(v);
  }

  // sup_eps int sup_v |J-hat| d xi; every preset integrates to (2 pi)^{d/2} sup|a|.
  double J_norm() const {
    if (kind == Kind::fringe) return std::pow(2.0 * pi, 0.5 * d) * std::abs(c_b) * a_sup;
    return std::pow(2.0 * pi, 0.5 * d) * a_sup;
  }
};

inline TwoScaleObservable fringe_observable(const Vec& Ptilde, const Vec& P) {
  TwoScaleObservable J;
  J.kind = TwoScaleObservable::Kind::fringe;
  J.d = static_cast<int>(Ptilde.size());
  J.Ptilde = Ptilde;
  J.c_b = norm(add(Ptilde, P, -1.0)) == 0.0 ? 1.0 : 0.0;
  J.name = "fringe";
  return J;
}

inline TwoScaleObservable windowed_fringe_observable(const Vec& Ptilde, const Vec& P, double s) {
  auto J = fringe_observable(Ptilde, P);
  J.kind = TwoScaleObservable::Kind::windowed;
  J.window = s;
  J.name = "windowed-fringe";
  return J;
}

inline TwoScaleObservable blind_observable(int d, double length) {
  TwoScaleObservable J;
  J.kind = TwoScaleObservable::Kind::blind;
  J.d = d;
  J.Ptilde = Vec(d, 0.0);
  J.c_b = 0.0;
  J.blind_length = length;
  J.name = "blind";
  return J;
}

// Riemann-sum J_norm on a xi grid; assumes |a| peaks at v = 0.
inline double J_norm_on_grid(const TwoScaleObservable& J, const std::vector<Axis>& xi_axes, double eps) {
  if (J.kind == TwoScaleObservable::Kind::fringe) return J.J_norm();
  WignerGrid tmp;
  tmp.xi_axes = xi_axes;
  double s = 0.0;
  for (std::size_t i = 0; i < tmp.xi_count(); ++i) s += std::abs(J.hat_smooth(tmp.xi(i), Vec(J.d, 0.0), eps));
  return s * tmp.xi_cell() * J.a_sup / std::abs(J.a(Vec(J.d, 0.0)));
}

namespace detail {

// Index of the node equal to x on the axis; -1 outside the range; throws if inside but off-node.
inline int dirac_node(const Axis& ax, double x) {
  if (ax.n == 1) return std::abs(x - ax.start) <= 1e-12 * std::max(1.0, std::abs(x)) ? 0 : -1;
  const double lo = ax.start - 1e-9 * ax.step, hi = ax.end() + 1e-9 * ax.step;
  if (x < lo || x > hi) return -1;
  const double f = (x - ax.start) / ax.step;
  const long k = std::lround(f);
  if (std::abs(f - k) > 1e-9) throw Error("observables", "grid mismatch: Dirac frequency falls between xi nodes");
  return static_cast<int>(k);
}

}  // namespace detail

// <J, W> = int conj(J) W dx dv, evaluated in Fourier space for Fourier-domain grids.
inline cplx pair(const TwoScaleObservable& J, const WignerGrid& W) {
  if (J.d != W.d) throw Error("observables", "grid mismatch: dimension");
  const double eps = W.epsilon;
  const std::size_t nv = W.v_count();
  if (W.position_domain) {
    cplx s = 0.0;
    for (std::size_t i = 0; i < W.xi_count(); ++i) {
      const Vec x = W.xi(i);
      for (std::size_t j = 0; j < nv; ++j) s += std::conj(J.value(x, W.v(j), eps)) * W.at(i, j);
    }
    return s * W.xi_cell() * W.v_cell();
  }
  if (J.kind == TwoScaleObservable::Kind::fringe) {
    std::size_t flat = 0;
    for (int k = 0; k < W.d; ++k) {
      const int idx = detail::dirac_node(W.xi_axes[k], 2.0 * J.Ptilde[k]);
      if (idx < 0) return 0.0;
      flat = flat * W.xi_axes[k].n + idx;
    }
    cplx s = 0.0;
    for (std::size_t j = 0; j < nv; ++j) s += std::conj(J.a(W.v(j))) * W.at(flat, j);
    return std::pow(2.0 * pi, 0.5 * W.d) * s * W.v_cell();
  }
  for (auto& ax : W.xi_axes)
    if (ax.n == 1) throw Error("observables", "grid mismatch: smooth observable needs a full xi grid");
  cplx s = 0.0;
  for (std::size_t i = 0; i < W.xi_count(); ++i) {
    const Vec xi = W.xi(i);
    for (std::size_t j = 0; j < nv; ++j) s += std::conj(J.hat_smooth(xi, W.v(j), eps)) * W.at(i, j);
  }
  return s * W.xi_cell() * W.v_cell();
}

// sup over xi of int |W-hat(xi, v)| dv; |<J,W>| <= J_norm * this.
inline double w_sup_bound(const WignerGrid& W) {
  double best = 0.0;
  for (std::size_t i = 0; i < W.xi_count(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < W.v_count(); ++j) s += std::abs(W.at(i, j));
    best = std::max(best, s * W.v_cell());
  }
  return best;
}

struct CorollaryValue {
  cplx value;
  bool fringe_blind = false;
};

// e^{-T sigma_P} conj(c_b) int conj(A(x,0)) f(x + D) conj f(x - D) dx,  D = Q - T grad e(P).
inline CorollaryValue corollary_limit(const TwoScaleObservable& J, const WavePacketSpec& s, const DispersionModel& m,
                                      double T, double sigma_P) {
  CorollaryValue out;
  if (!J.has_dirac() || J.c_b == cplx(0.0)) {
    out.fringe_blind = true;
    out.value = 0.0;
    return out;
  }
  const double pm = norm(s.P);
  const Vec D = add(s.Q, scale(s.P, m.de_r(pm) / pm), -T);
  const double D2 = dot(D, D);
  const int d = s.d;
  // f(x+D) f(x-D) = pi^{-d/2} exp(-|x|^2 - |D|^2) for the Gaussian envelope
  const double area = d == 1 ? 2.0 : 2.0 * std::pow(pi, 0.5 * d) / std::tgamma(0.5 * d);
  auto radial = [&](double r) {
    double alpha = 1.0;
    if (J.kind == TwoScaleObservable::Kind::windowed) alpha = std::exp(-0.5 * r * r / (J.window * J.window));
    return area * std::pow(r, d - 1) * alpha * std::pow(pi, -0.5 * d) * std::exp(-r * r - D2);
  };
  const double integral = integrate(radial, 0.0, 40.0, 1e-16, 1e-13).value;
  out.value = std::exp(-T * sigma_P) * std::conj(J.c_b) * std::conj(J.a(Vec(d, 0.0))) * integral;
  return out;
}

}  // namespace decoh
