#pragma once

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/legendre.hpp>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <vector>

namespace decoh {

using cplx = std::complex<double>;
inline constexpr double pi = 3.14159265358979323846;

template <class T>
struct QuadResult {
  T value{};
  double error = 0.0;
  long evals = 0;
  bool converged = false;
};

// Globally adaptive Gauss-Kronrod (G10/K21).  Boost supplies the nodes; the
// refinement loop is ours so that a hard interval budget can be enforced.
template <class T = double, class F>
QuadResult<T> integrate(F&& f, const std::vector<double>& breaks, double abs_tol, double rel_tol,
                        int max_intervals = 2000) {
  using GK = boost::math::quadrature::gauss_kronrod<double, 21>;
  static const auto& xk = GK::abscissa();
  static const auto& wk = GK::weights();
  static const auto& wg = boost::math::quadrature::gauss<double, 10>::weights();

  struct Seg {
    double a, b;
    T v;
    double e;
    bool operator<(const Seg& o) const { return e < o.e; }
  };
  long evals = 0;
  auto rule = [&](double a, double b) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    T k{}, g{};
    T f0 = f(c);
    ++evals;
    k += wk[0] * f0;
    for (std::size_t i = 1; i < xk.size(); ++i) {
      T s = f(c + h * xk[i]) + f(c - h * xk[i]);
      evals += 2;
      k += wk[i] * s;
      if (i % 2 == 1) g += wg[(i - 1) / 2] * s;
    }
    return Seg{a, b, k * h, std::abs((k - g) * h)};
  };

  std::priority_queue<Seg> q;
  T tot{};
  double err = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    if (!(breaks[i + 1] > breaks[i])) continue;
    auto s = rule(breaks[i], breaks[i + 1]);
    tot += s.v;
    err += s.e;
    q.push(s);
  }
  while (!q.empty() && static_cast<int>(q.size()) < max_intervals &&
         err > std::max(abs_tol, rel_tol * std::abs(tot))) {
    auto t = q.top();
    q.pop();
    const double m = 0.5 * (t.a + t.b);
    auto l = rule(t.a, m), r = rule(m, t.b);
    tot += l.v + r.v - t.v;
    err += l.e + r.e - t.e;
    q.push(l);
    q.push(r);
  }
  // resum from scratch; the running total drifts after many updates
  std::vector<Seg> segs;
  segs.reserve(q.size());
  while (!q.empty()) {
    segs.push_back(q.top());
    q.pop();
  }
  std::sort(segs.begin(), segs.end(), [](const Seg& x, const Seg& y) { return x.a < y.a; });
  QuadResult<T> out;
  for (auto& s : segs) {
    out.value += s.v;
    out.error += s.e;
  }
  out.evals = evals;
  out.converged = out.error <= std::max(abs_tol, rel_tol * std::abs(out.value));
  return out;
}

template <class T = double, class F>
QuadResult<T> integrate(F&& f, double a, double b, double abs_tol, double rel_tol,
                        int max_intervals = 2000) {
  return integrate<T>(std::forward<F>(f), std::vector<double>{a, b}, abs_tol, rel_tol,
                      max_intervals);
}

struct GaussRule {
  std::vector<double> x, w;
};

// n-point Gauss-Legendre on [-1,1].
inline GaussRule gauss_legendre(int n) {
  GaussRule g;
  auto zeros = boost::math::legendre_p_zeros<double>(n);  // nonnegative half
  for (double z : zeros) {
    double dp = boost::math::legendre_p_prime(n, z);
    double w = 2.0 / ((1.0 - z * z) * dp * dp);
    if (z == 0.0) {
      g.x.push_back(0.0);
      g.w.push_back(w);
    } else {
      g.x.push_back(z);
      g.w.push_back(w);
      g.x.push_back(-z);
      g.w.push_back(w);
    }
  }
  std::vector<std::size_t> idx(g.x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return g.x[a] < g.x[b]; });
  GaussRule s;
  for (auto i : idx) {
    s.x.push_back(g.x[i]);
    s.w.push_back(g.w[i]);
  }
  return s;
}

inline GaussRule gauss_legendre(int n, double a, double b) {
  auto g = gauss_legendre(n);
  for (std::size_t i = 0; i < g.x.size(); ++i) {
    g.x[i] = 0.5 * (a + b) + 0.5 * (b - a) * g.x[i];
    g.w[i] *= 0.5 * (b - a);
  }
  return g;
}

// Probabilists' rule for the density pi^{-1/2} exp(-u^2): sum_i w_i f(x_i), weights sum to 1.
// Golub-Welsch on the Hermite Jacobi matrix.
inline GaussRule gauss_hermite(int n) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(0.5 * i);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  GaussRule g;
  for (int i = 0; i < n; ++i) {
    g.x.push_back(es.eigenvalues()(i));
    const double v = es.eigenvectors()(0, i);
    g.w.push_back(v * v);
  }
  return g;
}

// Product rule on S^2: Gauss-Legendre in cos(theta), trapezoid in phi.
// Exact for spherical harmonics up to degree min(2*n_theta-1, n_phi-1).
struct SphereRule {
  std::vector<std::array<double, 3>> n;
  std::vector<double> w;
};

inline SphereRule sphere_rule(int n_theta, int n_phi) {
  SphereRule s;
  auto g = gauss_legendre(n_theta);
  for (int i = 0; i < n_theta; ++i) {
    const double c = g.x[i], sn = std::sqrt(std::max(0.0, 1.0 - c * c));
    for (int j = 0; j < n_phi; ++j) {
      const double ph = 2.0 * pi * (j + 0.5) / n_phi;
      s.n.push_back({sn * std::cos(ph), sn * std::sin(ph), c});
      s.w.push_back(g.w[i] * 2.0 * pi / n_phi);
    }
  }
  return s;
}

// Richardson/Neville table for values a(h_k) at decreasing h_k, assuming
// a(h) = a0 + c1 h + c2 h^2 + ...  Stage j removes the h^j term.
template <class T>
struct RichardsonResult {
  T value{};
  double residual = 0.0;  // magnitude of the last correction
  std::vector<std::vector<T>> table;
};

template <class T>
RichardsonResult<T> richardson(const std::vector<double>& h, const std::vector<T>& seq, int stages) {
  if (seq.empty() || h.size() != seq.size()) throw std::invalid_argument("richardson: bad sequence");
  stages = std::min<int>(stages, static_cast<int>(seq.size()) - 1);
  RichardsonResult<T> r;
  r.table.push_back(seq);
  for (int s = 1; s <= stages; ++s) {
    const auto& prev = r.table.back();
    std::vector<T> next;
    for (std::size_t k = 0; k + 1 < prev.size(); ++k) {
      const double ratio = h[k] / h[k + s];
      next.push_back(prev[k + 1] + (prev[k + 1] - prev[k]) / (ratio - 1.0));
    }
    r.table.push_back(std::move(next));
  }
  r.value = r.table.back().back();
  if (r.table.size() >= 2) r.residual = std::abs(r.table.back().back() - r.table[r.table.size() - 2].back());
  return r;
}

struct LineFit {
  double slope = 0.0, intercept = 0.0, r2 = 0.0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

inline LineFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  return fit_line(lx, ly);
}

}  // namespace decoh
