#pragma once

#include "decoh/core.hpp"
#include "decoh/dispersion.hpp"
#include "decoh/quadrature.hpp"

#include <fftw3.h>

#include <array>
#include <bit>
#include <limits>
#include <cstring>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

namespace decoh {

// Gaussian envelope f(x) = pi^{-d/4} exp(-|x|^2/2); it is its own unitary Fourier transform.
inline double envelope(double r, int d) { return std::pow(pi, -0.25 * d) * std::exp(-0.5 * r * r); }
inline double envelope_hat(double r, int d) { return envelope(r, d); }

struct WavePacketSpec {
  int d = 1;
  Vec P{2.0};
  Vec Q{1.0};
  double epsilon = 0.1;

  double overlap() const {  // <psi_+, psi_->, real and positive for the Gaussian envelope
    const double p = norm(P), q = norm(Q);
    return std::exp(-p * p / (epsilon * epsilon) - q * q);
  }
  double norm_sq() const { return 2.0 + 2.0 * overlap(); }
  double overlap_time() const { return norm(Q) / (epsilon * norm(P)); }  // microscopic t-bar
};

inline void validate(const WavePacketSpec& s) {
  if (static_cast<int>(s.P.size()) != s.d || static_cast<int>(s.Q.size()) != s.d)
    throw ValidationError("wavepacket", "P and Q must have d components");
  const double p = norm(s.P), q = norm(s.Q);
  if (p == 0.0) throw ValidationError("wavepacket", "P must be nonzero");
  if (!(s.epsilon > 0.0 && s.epsilon < 1.0)) throw ValidationError("wavepacket", "epsilon must lie in (0,1)");
  if (std::abs(dot(s.P, s.Q) - p * q) > 1e-12 * std::max(1.0, p * q))
    throw ValidationError("wavepacket", "P and Q must be parallel");
  // L2 norm of the envelope on a radial grid
  auto nr = integrate([&](double r) {
    const double f = envelope(r, s.d);
    return (s.d == 1 ? 2.0 : 2.0 * std::pow(pi, 0.5 * s.d) / std::tgamma(0.5 * s.d)) * std::pow(r, s.d - 1) * f * f;
  }, 0.0, 40.0, 1e-15, 1e-13);
  if (std::abs(nr.value - 1.0) > 1e-8) throw ValidationError("wavepacket", "envelope is not L2-normalized");
  const double n = std::sqrt(s.norm_sq());
  if (n < 1.0 || n > 2.0) throw ValidationError("wavepacket", "||psi_0|| outside [1,2]");
}

enum class Component { pp, mm, pm, mp, total };

inline std::string to_string(Component c) {
  switch (c) {
    case Component::pp: return "++";
    case Component::mm: return "--";
    case Component::pm: return "+-";
    case Component::mp: return "-+";
    case Component::total: return "total";
  }
  return "?";
}

inline Component component_from_string(const std::string& s) {
  if (s == "++") return Component::pp;
  if (s == "--") return Component::mm;
  if (s == "+-") return Component::pm;
  if (s == "-+") return Component::mp;
  if (s == "total") return Component::total;
  throw std::invalid_argument("unknown component " + s);
}

struct Axis {
  double start = 0.0, step = 1.0;
  int n = 1;
  double at(int i) const { return start + step * i; }
  double end() const { return at(n - 1); }
  static Axis centered(double center, double half_width, int n) {
    if (n == 1) return {center, 1.0, 1};
    return {center - half_width, 2.0 * half_width / (n - 1), n};
  }
  static Axis point(double x) { return {x, 1.0, 1}; }
};

// Sampled W-hat(xi, v) (Fourier domain) or W(x, v) (position domain).
// Values are row-major over (xi_0..xi_{d-1}, v_0..v_{d-1}).
struct WignerGrid {
  int d = 1;
  std::vector<Axis> xi_axes, v_axes;
  std::vector<cplx> values;
  Component component = Component::total;
  double epsilon = 0.0;
  bool position_domain = false;

  std::size_t xi_count() const {
    std::size_t n = 1;
    for (auto& a : xi_axes) n *= a.n;
    return n;
  }
  std::size_t v_count() const {
    std::size_t n = 1;
    for (auto& a : v_axes) n *= a.n;
    return n;
  }
  void allocate() { values.assign(xi_count() * v_count(), 0.0); }
  cplx& at(std::size_t ixi, std::size_t iv) { return values[ixi * v_count() + iv]; }
  const cplx& at(std::size_t ixi, std::size_t iv) const { return values[ixi * v_count() + iv]; }

  static Vec point(const std::vector<Axis>& axes, std::size_t flat) {
    Vec p(axes.size());
    for (int k = static_cast<int>(axes.size()) - 1; k >= 0; --k) {
      p[k] = axes[k].at(static_cast<int>(flat % axes[k].n));
      flat /= axes[k].n;
    }
    return p;
  }
  Vec xi(std::size_t i) const { return point(xi_axes, i); }
  Vec v(std::size_t i) const { return point(v_axes, i); }
  double v_cell() const {
    double c = 1.0;
    for (auto& a : v_axes) c *= a.n > 1 ? a.step : 1.0;
    return c;
  }
  double xi_cell() const {
    double c = 1.0;
    for (auto& a : xi_axes) c *= a.n > 1 ? a.step : 1.0;
    return c;
  }
  bool same_axes(const WignerGrid& o) const {
    auto eq = [](const std::vector<Axis>& a, const std::vector<Axis>& b) {
      if (a.size() != b.size()) return false;
      for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].n != b[i].n || a[i].start != b[i].start || (a[i].n > 1 && a[i].step != b[i].step)) return false;
      return true;
    };
    return d == o.d && position_domain == o.position_domain && eq(xi_axes, o.xi_axes) && eq(v_axes, o.v_axes);
  }
};

inline WignerGrid operator+(const WignerGrid& a, const WignerGrid& b) {
  if (!a.same_axes(b)) throw Error("wavepacket", "grid mismatch in sum");
  WignerGrid c = a;
  c.component = Component::total;
  for (std::size_t i = 0; i < c.values.size(); ++i) c.values[i] += b.values[i];
  return c;
}

inline WignerGrid operator*(cplx s, const WignerGrid& a) {
  WignerGrid c = a;
  for (auto& x : c.values) x *= s;
  return c;
}

namespace detail {

inline constexpr double kEnvelopeWidth = 8.0;  // |x| beyond which the envelope is below e^{-32}

inline void check_nyquist(const WavePacketSpec& s, Component c, const std::vector<Axis>& xi_axes,
                          const std::vector<Axis>& v_axes) {
  const double eps = s.epsilon, w = kEnvelopeWidth;
  const double q = norm(s.Q);
  double dv_max, dxi_max;
  Vec center(s.d, 0.0);
  if (c == Component::pm || c == Component::mp) {
    dv_max = pi * eps / (2.0 * q + 2.0 * w);
    dxi_max = pi * eps / w;
    center = scale(s.P, c == Component::pm ? 2.0 : -2.0);
  } else {
    dv_max = pi * eps / w;
    dxi_max = pi * eps / (q + w);
  }
  for (int k = 0; k < s.d; ++k) {
    if (v_axes[k].n > 1 && v_axes[k].step > dv_max)
      throw Error("wavepacket", "grid-resolution failure: v spacing exceeds Nyquist bound for component " + to_string(c));
    if (xi_axes[k].n > 1) {
      if (xi_axes[k].step > dxi_max)
        throw Error("wavepacket", "grid-resolution failure: xi spacing exceeds Nyquist bound for component " + to_string(c));
      if (center[k] < xi_axes[k].start - 0.5 * xi_axes[k].step || center[k] > xi_axes[k].end() + 0.5 * xi_axes[k].step)
        throw Error("wavepacket", "grid-resolution failure: xi range misses the component centre");
    }
  }
}

}  // namespace detail

// Closed form of one Wigner component (Fourier in space), evaluated pointwise.
inline cplx wigner_hat_value(const WavePacketSpec& s, Component c, const Vec& xi, const Vec& v) {
  const int d = s.d;
  const double eps = s.epsilon;
  const double pref = std::pow(std::sqrt(2.0 * pi) * eps, -d);
  Vec a(d), b(d);
  double phase = 0.0;
  switch (c) {
    case Component::pm:
    case Component::mp: {
      const double sg = c == Component::pm ? 1.0 : -1.0;
      for (int k = 0; k < d; ++k) {
        const double h = (xi[k] - 2.0 * sg * s.P[k]) / (2.0 * eps);
        a[k] = v[k] / eps + h;
        b[k] = v[k] / eps - h;
      }
      phase = 2.0 * sg * dot(v, s.Q) / eps;
      break;
    }
    case Component::pp:
    case Component::mm: {
      const double sg = c == Component::pp ? 1.0 : -1.0;
      for (int k = 0; k < d; ++k) {
        const double u = (v[k] - sg * s.P[k]) / eps, h = xi[k] / (2.0 * eps);
        a[k] = u + h;
        b[k] = u - h;
      }
      phase = sg * dot(xi, s.Q) / eps;
      break;
    }
    case Component::total:
      return wigner_hat_value(s, Component::pp, xi, v) + wigner_hat_value(s, Component::mm, xi, v) +
             wigner_hat_value(s, Component::pm, xi, v) + wigner_hat_value(s, Component::mp, xi, v);
  }
  return pref * std::exp(cplx(0.0, phase)) * envelope_hat(norm(a), d) * envelope_hat(norm(b), d);
}

inline WignerGrid initial_wigner_hat(const WavePacketSpec& s, Component c, const std::vector<Axis>& xi_axes,
                                     const std::vector<Axis>& v_axes) {
  validate(s);
  if (static_cast<int>(xi_axes.size()) != s.d || static_cast<int>(v_axes.size()) != s.d)
    throw std::invalid_argument("initial_wigner_hat: axis count must equal d");
  if (c == Component::total) {
    for (auto cc : {Component::pp, Component::mm, Component::pm, Component::mp}) detail::check_nyquist(s, cc, xi_axes, v_axes);
  } else {
    detail::check_nyquist(s, c, xi_axes, v_axes);
  }
  WignerGrid g;
  g.d = s.d;
  g.xi_axes = xi_axes;
  g.v_axes = v_axes;
  g.component = c;
  g.epsilon = s.epsilon;
  g.allocate();
  const std::size_t nv = g.v_count();
  parallel_for(g.xi_count(), [&](std::size_t i) {
    const Vec xi = g.xi(i);
    for (std::size_t j = 0; j < nv; ++j) g.at(i, j) = wigner_hat_value(s, c, xi, g.v(j));
  });
  return g;
}

// Pointwise multiplier exp(-i t [e(v + xi/2) - e(v - xi/2)]), t = T/epsilon.
inline WignerGrid free_evolve_offdiagonal(const WignerGrid& w0, const DispersionModel& m, double T) {
  if (w0.position_domain) throw Error("wavepacket", "free evolution acts on the Fourier-domain grid");
  WignerGrid w = w0;
  if (T == 0.0) return w;
  const double t = T / w0.epsilon;
  const std::size_t nv = w.v_count();
  parallel_for(w.xi_count(), [&](std::size_t i) {
    const Vec xi = w.xi(i);
    for (std::size_t j = 0; j < nv; ++j) {
      const Vec v = w.v(j);
      const double de = m.e(norm(add(v, xi, 0.5))) - m.e(norm(add(v, xi, -0.5)));
      w.at(i, j) *= std::exp(cplx(0.0, -t * de));
    }
  });
  return w;
}

// --- spatial wave functions ----------------------------------------------------

struct SpatialGrid {
  int d = 1;
  int n = 256;     // points per dimension
  double h = 0.1;  // spacing
  double x0 = 0.0; // first coordinate (same on every axis)
  std::size_t size() const {
    std::size_t s = 1;
    for (int k = 0; k < d; ++k) s *= n;
    return s;
  }
  Vec x(std::size_t flat) const {
    Vec p(d);
    for (int k = d - 1; k >= 0; --k) {
      p[k] = x0 + h * static_cast<double>(flat % n);
      flat /= n;
    }
    return p;
  }
  double cell() const { return std::pow(h, d); }
};

inline std::vector<cplx> sample_psi0(const WavePacketSpec& s, const SpatialGrid& g, int which = 0) {
  std::vector<cplx> psi(g.size());
  const double eps = s.epsilon, pre = std::pow(eps, 0.5 * s.d);
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const Vec x = g.x(i);
    const Vec ex = scale(x, eps);
    const double px = dot(s.P, x);
    cplx v = 0.0;
    if (which >= 0) v += pre * envelope(norm(add(ex, s.Q)), s.d) * std::exp(cplx(0.0, px));
    if (which <= 0) v += pre * envelope(norm(add(ex, s.Q, -1.0)), s.d) * std::exp(cplx(0.0, -px));
    psi[i] = v;
  }
  return psi;
}

namespace detail {

struct FftwPlan {
  fftw_plan p = nullptr;
  ~FftwPlan() {
    if (p) fftw_destroy_plan(p);
  }
};

// In-place d-dimensional DFT on an n^d row-major array.
inline void fft_nd(std::vector<cplx>& a, int d, int n, int sign) {
  std::vector<int> dims(d, n);
  FftwPlan plan;
  auto* ptr = reinterpret_cast<fftw_complex*>(a.data());
  plan.p = fftw_plan_dft(d, dims.data(), ptr, ptr, sign, FFTW_ESTIMATE);
  fftw_execute(plan.p);
}

inline double fft_freq(int i, int n, double h) {
  const int k = i < (n + 1) / 2 ? i : i - n;
  return 2.0 * pi * k / (n * h);
}

}  // namespace detail

// Exact free Schroedinger propagation e^{-i t e(-i grad)} on a periodic box (spectral).
inline std::vector<cplx> free_propagate(const std::vector<cplx>& psi, const SpatialGrid& g, const DispersionModel& m,
                                        double t) {
  std::vector<cplx> a = psi;
  detail::fft_nd(a, g.d, g.n, FFTW_FORWARD);
  const double inv = 1.0 / static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::size_t f = i;
    double k2 = 0.0;
    for (int k = 0; k < g.d; ++k) {
      const double kk = detail::fft_freq(static_cast<int>(f % g.n), g.n, g.h);
      k2 += kk * kk;
      f /= g.n;
    }
    a[i] *= std::exp(cplx(0.0, -t * m.e(std::sqrt(k2)))) * inv;
  }
  detail::fft_nd(a, g.d, g.n, FFTW_BACKWARD);
  return a;
}

inline cplx fringe_fourier(const std::vector<double>& rho, const SpatialGrid& g, const Vec& Ptilde) {
  cplx s = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) s += std::exp(cplx(0.0, 2.0 * dot(Ptilde, g.x(i)))) * rho[i];
  return s * g.cell();
}

inline std::vector<double> density(const std::vector<cplx>& psi) {
  std::vector<double> r(psi.size());
  for (std::size_t i = 0; i < psi.size(); ++i) r[i] = std::norm(psi[i]);
  return r;
}

// Box large enough to hold both packets from t=0 to the overlap time, fine enough
// for the fringe frequency 2|P| plus the Fourier weight 2|Ptilde|.
inline SpatialGrid fringe_grid(const WavePacketSpec& s, int max_n = 1 << 16) {
  SpatialGrid g;
  g.d = s.d;
  const double p = norm(s.P), q = norm(s.Q);
  g.h = pi / (3.0 * p + 2.0 + 20.0 * s.epsilon);
  const double half = q / s.epsilon + 12.0 / s.epsilon + 1.0;
  int n = 16;
  while (n * g.h < 2.0 * half) n *= 2;
  if (n > max_n) {
    n = max_n;
    g.h = 2.0 * half / n;
    if (g.h > pi / (3.0 * p + 1.0)) throw Error("wavepacket", "fringe grid exceeds the size cap");
  }
  g.n = n;
  g.x0 = -0.5 * n * g.h;
  return g;
}

struct FringePoint {
  double epsilon, ptilde_over_p;
  cplx value;
};

struct FringeSweep {
  std::vector<FringePoint> points;
  std::vector<double> ratios;
  std::vector<cplx> extrapolated;  // per ratio, Richardson in epsilon
  std::vector<double> order;       // observed convergence order (NaN if below noise)
};

inline FringeSweep fringe_sweep(WavePacketSpec s, const DispersionModel& m, const std::vector<double>& eps_list,
                                const std::vector<double>& ratios, int max_n = 1 << 16) {
  FringeSweep out;
  out.ratios = ratios;
  std::vector<std::vector<cplx>> by_ratio(ratios.size());
  for (double eps : eps_list) {
    s.epsilon = eps;
    validate(s);
    auto g = fringe_grid(s, max_n);
    auto psi = free_propagate(sample_psi0(s, g), g, m, s.overlap_time());
    auto rho = density(psi);
    for (std::size_t r = 0; r < ratios.size(); ++r) {
      const cplx v = fringe_fourier(rho, g, scale(s.P, ratios[r]));
      out.points.push_back({eps, ratios[r], v});
      by_ratio[r].push_back(v);
    }
  }
  for (auto& seq : by_ratio) {
    auto rr = richardson(eps_list, seq, std::min<int>(2, static_cast<int>(seq.size()) - 1));
    out.extrapolated.push_back(rr.value);
    double ord = std::numeric_limits<double>::quiet_NaN();
    if (seq.size() >= 3) {
      const double d1 = std::abs(seq[seq.size() - 2] - seq[seq.size() - 3]);
      const double d2 = std::abs(seq.back() - seq[seq.size() - 2]);
      if (d1 > 1e-12 && d2 > 1e-12) ord = std::log(d1 / d2) / std::log(eps_list[eps_list.size() - 3] / eps_list[eps_list.size() - 2]);
    }
    out.order.push_back(ord);
  }
  return out;
}

// --- discrete Wigner transform (d = 1) ------------------------------------------

// W(x_j, v) = (2 pi)^{-1} int dy e^{-i v y} psi(x + y/2) conj psi(x - y/2), sampled at
// y = 2 m h for m in [-M/2, M/2).  psi is taken as zero outside the sampled window.
inline WignerGrid wigner_transform(const std::vector<cplx>& psi, const SpatialGrid& g, int M, double alias_tol = 1e-6) {
  if (g.d != 1) throw std::invalid_argument("wigner_transform: only d = 1 is supported");
  const int N = g.n;
  WignerGrid w;
  w.d = 1;
  w.position_domain = true;
  w.xi_axes = {Axis{g.x0, g.h, N}};
  const double dv = pi / (M * g.h);
  w.v_axes = {Axis{-0.5 * M * dv, dv, M}};
  w.allocate();
  std::vector<cplx> row(M);
  detail::FftwPlan plan;
  auto* ptr = reinterpret_cast<fftw_complex*>(row.data());
  plan.p = fftw_plan_dft_1d(M, ptr, ptr, FFTW_FORWARD, FFTW_ESTIMATE);
  double peak = 0.0, edge = 0.0;
  for (int j = 0; j < N; ++j) {
    for (int mm = 0; mm < M; ++mm) {
      const int lag = mm < M / 2 ? mm : mm - M;
      const int a = j + lag, b = j - lag;
      row[mm] = (a >= 0 && a < N && b >= 0 && b < N) ? psi[a] * std::conj(psi[b]) : cplx(0.0);
    }
    fftw_execute(plan.p);
    for (int n = 0; n < M; ++n) {
      // output index n corresponds to v = (n - M/2) dv after the shift
      const int src = (n + M / 2) % M;
      // exp(-i v y) with v = k dv, y = 2 m h gives exp(-2 pi i k m / M)
      const cplx val = row[src] * (2.0 * g.h / (2.0 * pi));
      w.at(j, n) = val;
      peak = std::max(peak, std::abs(val));
      if (n == 0 || n == M - 1) edge = std::max(edge, std::abs(val));
    }
  }
  if (peak > 0.0 && edge > alias_tol * peak) throw Error("wavepacket", "aliasing: Wigner mass at the v-grid boundary");
  return w;
}

// Fourier transform in x: W-hat(xi, v) = (2 pi)^{-1/2} sum_j h e^{-i xi x_j} W(x_j, v).
inline WignerGrid to_fourier(const WignerGrid& w) {
  if (!w.position_domain || w.d != 1) throw std::invalid_argument("to_fourier: expects a 1-d position-domain grid");
  const int N = w.xi_axes[0].n, M = w.v_axes[0].n;
  const double h = w.xi_axes[0].step, x0 = w.xi_axes[0].start;
  WignerGrid out = w;
  out.position_domain = false;
  const double dxi = 2.0 * pi / (N * h);
  out.xi_axes = {Axis{-0.5 * N * dxi, dxi, N}};
  out.allocate();
  std::vector<cplx> col(N);
  detail::FftwPlan plan;
  auto* ptr = reinterpret_cast<fftw_complex*>(col.data());
  plan.p = fftw_plan_dft_1d(N, ptr, ptr, FFTW_FORWARD, FFTW_ESTIMATE);
  for (int n = 0; n < M; ++n) {
    for (int j = 0; j < N; ++j) col[j] = w.at(j, n);
    fftw_execute(plan.p);
    for (int k = 0; k < N; ++k) {
      const int src = (k + N / 2) % N;
      const double xi = out.xi_axes[0].at(k);
      out.at(k, n) = col[src] * h / std::sqrt(2.0 * pi) * std::exp(cplx(0.0, -xi * x0));
    }
  }
  return out;
}

// --- serialization -------------------------------------------------------------------

// Flat little-endian (re, im) float64 pairs, plus a JSON sidecar written by the caller.
inline void write_grid_binary(const WignerGrid& w, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("wavepacket", "cannot open " + path);
  for (const auto& z : w.values) {
    double re = z.real(), im = z.imag();
    unsigned char buf[16];
    std::memcpy(buf, &re, 8);
    std::memcpy(buf + 8, &im, 8);
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(buf, buf + 8);
      std::reverse(buf + 8, buf + 16);
    }
    f.write(reinterpret_cast<const char*>(buf), 16);
  }
}

inline std::vector<cplx> read_grid_binary(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::vector<cplx> out;
  unsigned char buf[16];
  while (f.read(reinterpret_cast<char*>(buf), 16)) {
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(buf, buf + 8);
      std::reverse(buf + 8, buf + 16);
    }
    double re, im;
    std::memcpy(&re, buf, 8);
    std::memcpy(&im, buf + 8, 8);
    out.emplace_back(re, im);
  }
  return out;
}

}  // namespace decoh
