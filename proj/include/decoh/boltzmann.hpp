#pragma once

#include "decoh/collision.hpp"
#include "decoh/wavepacket.hpp"

#include <Eigen/Sparse>

#include <array>
#include <cstdint>

namespace decoh {

// sigma_V, the total outgoing rate at velocity V.
inline double loss_rate(const DispersionModel& m, const Vec& V, const ShellOptions& opt = {}) {
  return sigma_shell(m, V, opt);
}

// Velocity grid for d = 3, axisymmetric about the z axis: energy nodes e_i = (i + 1/2) de and
// Gauss-Legendre nodes c_j in the polar cosine.  A node stands for the ring of velocities
// |V| = r(e_i), V_z = r c_j.
struct VelocityGrid {
  double de = 0.125;
  int ne = 96;
  int nc = 32;
  std::vector<double> e, r, c, wc, speed;  // speed = e'(r)

  std::size_t size() const { return static_cast<std::size_t>(ne) * nc; }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * nc + j; }
  // Lebesgue measure of the cell: 2 pi r^2 dr dc with dr = de / e'(r).
  double measure(int i, int j) const { return 2.0 * pi * r[i] * r[i] / speed[i] * de * wc[j]; }
};

inline VelocityGrid make_velocity_grid(const DispersionModel& m, double de, int ne, int nc) {
  if (m.d != 3) throw Error("boltzmann", "the velocity grid is implemented for d = 3");
  if (!(de > 0.0) || ne < 2 || nc < 2) throw Error("boltzmann", "bad velocity grid");
  VelocityGrid g;
  g.de = de;
  g.ne = ne;
  g.nc = nc;
  const double e0 = m.e(0.0);
  for (int i = 0; i < ne; ++i) {
    g.e.push_back(e0 + (i + 0.5) * de);
    g.r.push_back(radius_of_energy(m, g.e.back()));
    g.speed.push_back(m.de_r(g.r.back()));
  }
  auto gl = gauss_legendre(nc);
  g.c = gl.x;
  g.wc = gl.w;
  return g;
}

// F(X, V) on a periodic slab along z (X.n = 1 for spatially homogeneous data).
// values[(x * ne + i) * nc + j] is the density at (X_x, node (i, j)).
struct PhaseSpaceDensity {
  Axis X = Axis::point(0.0);
  VelocityGrid V;
  std::vector<double> values;
  double T = 0.0;

  std::size_t vsize() const { return V.size(); }
  double& at(int x, std::size_t k) { return values[static_cast<std::size_t>(x) * vsize() + k]; }
  double at(int x, std::size_t k) const { return values[static_cast<std::size_t>(x) * vsize() + k]; }
  double x_cell() const { return X.n > 1 ? X.step : 1.0; }
};

// Samples f(x, V) at the grid nodes, with V = (r sqrt(1-c^2), 0, r c).
template <class F>
PhaseSpaceDensity sample_density(const VelocityGrid& g, const Axis& X, F&& f) {
  PhaseSpaceDensity p;
  p.X = X;
  p.V = g;
  p.values.resize(static_cast<std::size_t>(X.n) * g.size());
  for (int x = 0; x < X.n; ++x)
    for (int i = 0; i < g.ne; ++i)
      for (int j = 0; j < g.nc; ++j) {
        const double s = std::sqrt(std::max(0.0, 1.0 - g.c[j] * g.c[j]));
        p.at(x, g.index(i, j)) = f(X.at(x), Vec{g.r[i] * s, 0.0, g.r[i] * g.c[j]});
      }
  return p;
}

struct Moments {
  double T = 0.0, mass = 0.0, kinetic_energy = 0.0, anisotropy = 0.0;
};

// anisotropy = <V_z> / <|V|>, zero for an isotropic distribution.
inline Moments moments(const PhaseSpaceDensity& p) {
  Moments mo;
  mo.T = p.T;
  double vz = 0.0, vabs = 0.0;
  const auto& g = p.V;
  for (int x = 0; x < p.X.n; ++x)
    for (int i = 0; i < g.ne; ++i)
      for (int j = 0; j < g.nc; ++j) {
        const double n = p.at(x, g.index(i, j)) * g.measure(i, j) * p.x_cell();
        mo.mass += n;
        mo.kinetic_energy += n * g.e[i];
        vz += n * g.r[i] * g.c[j];
        vabs += n * g.r[i];
      }
  mo.anisotropy = vabs > 0.0 ? vz / vabs : 0.0;
  return mo;
}

// Linear homogeneous collision generator C F = G F - Lambda F on the velocity grid.
// Outgoing mass from each node is spread over its energy shells with the co-area weights of
// sigma_shell (polar rule about V) and a trapezoid rule in the azimuth, then deposited linearly in
// energy and in c onto neighbouring nodes.  Lambda is the sum of the deposited weights, so the
// generator conserves mass exactly.
struct CollisionOperator {
  VelocityGrid grid;
  Eigen::SparseMatrix<double, Eigen::RowMajor> gain;  // density space
  std::vector<double> loss;                            // per node
  double max_loss = 0.0;
  double max_loss_mismatch = 0.0;  // max_i |Lambda_i - loss_rate(r_i)| / loss_rate(r_i)
  bool with_gain = true;

  Eigen::VectorXd apply(const Eigen::VectorXd& f) const {
    Eigen::VectorXd out = -Eigen::Map<const Eigen::VectorXd>(loss.data(), loss.size()).cwiseProduct(f);
    if (with_gain) out += gain * f;
    return out;
  }
};

namespace detail {

inline void deposit_linear(const std::vector<double>& nodes, double x, double w, int stride, int base,
                           std::vector<double>& row) {
  const int n = static_cast<int>(nodes.size());
  if (x <= nodes.front()) {
    row[base] += w;
    return;
  }
  if (x >= nodes.back()) {
    row[base + (n - 1) * stride] += w;
    return;
  }
  const int k = static_cast<int>(std::upper_bound(nodes.begin(), nodes.end(), x) - nodes.begin()) - 1;
  const double t = (x - nodes[k]) / (nodes[k + 1] - nodes[k]);
  row[base + k * stride] += w * (1.0 - t);
  row[base + (k + 1) * stride] += w * t;
}

}  // namespace detail

inline CollisionOperator build_collision_operator(const DispersionModel& m, const VelocityGrid& g, bool with_gain = true,
                                                  int n_phi = 32, const ShellOptions& opt = {}) {
  CollisionOperator op;
  op.grid = g;
  op.with_gain = with_gain;
  const std::size_t N = g.size();
  op.loss.assign(N, 0.0);
  op.gain.resize(N, N);
  if (m.zero_coupling()) return op;

  auto gl = gauss_legendre(opt.n_theta, 0.0, pi);
  const double wsph = detail::sphere_area(2);
  std::vector<double> cphi(n_phi);
  for (int l = 0; l < n_phi; ++l) cphi[l] = std::cos(2.0 * pi * (l + 0.5) / n_phi);

  struct Leg {
    double ct, st, w, e_dst;
  };
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> row(N);
  for (int a = 0; a < g.ne; ++a) {
    std::vector<Leg> legs;
    for (int b = 0; b < 2; ++b) {
      const int sg = b == 0 ? +1 : -1;
      for (std::size_t k = 0; k < gl.x.size(); ++k) {
        const double th = gl.x[k];
        for (auto& sp : shell_points(m, g.r[a], std::cos(th), sg, opt))
          legs.push_back({std::cos(th), std::sin(th), gl.w[k] * wsph * std::sin(th) * sp.density, m.e(sp.r)});
      }
    }
    const double ref = loss_rate(m, Vec{0.0, 0.0, g.r[a]}, opt);
    for (int j = 0; j < g.nc; ++j) {
      const double cj = g.c[j], sj = std::sqrt(std::max(0.0, 1.0 - cj * cj));
      std::fill(row.begin(), row.end(), 0.0);
      // energies split first, then c, so each leg deposits into at most 2 x 2 nodes
      for (auto& L : legs) {
        double f = (L.e_dst - g.e[0]) / g.de;
        if (std::abs(f - std::round(f)) < 1e-9) f = std::round(f);
        int i0, i1;
        double t;
        if (f <= 0.0) {
          i0 = i1 = 0;
          t = 0.0;
        } else if (f >= g.ne - 1) {
          i0 = i1 = g.ne - 1;
          t = 0.0;
        } else {
          i0 = static_cast<int>(std::floor(f));
          i1 = std::min(i0 + 1, g.ne - 1);
          t = f - i0;
        }
        const double wl = L.w / n_phi;
        for (int l = 0; l < n_phi; ++l) {
          const double cd = cj * L.ct + sj * L.st * cphi[l];
          if (1.0 - t > 0.0) detail::deposit_linear(g.c, cd, wl * (1.0 - t), 1, static_cast<int>(g.index(i0, 0)), row);
          if (t > 0.0) detail::deposit_linear(g.c, cd, wl * t, 1, static_cast<int>(g.index(i1, 0)), row);
        }
      }
      const std::size_t src = g.index(a, j);
      double lam = 0.0;
      const double mu_src = g.measure(a, j);
      for (std::size_t dst = 0; dst < N; ++dst) {
        if (row[dst] == 0.0) continue;
        lam += row[dst];
        const int di = static_cast<int>(dst) / g.nc, dj = static_cast<int>(dst) % g.nc;
        trip.emplace_back(static_cast<int>(dst), static_cast<int>(src), row[dst] * mu_src / g.measure(di, dj));
      }
      op.loss[src] = lam;
      op.max_loss = std::max(op.max_loss, lam);
      if (ref > 0.0) op.max_loss_mismatch = std::max(op.max_loss_mismatch, std::abs(lam - ref) / ref);
    }
  }
  op.gain.setFromTriplets(trip.begin(), trip.end());
  return op;
}

// Loss-only generator with Lambda_i = loss_rate(r_i) taken directly from sigma_shell.
inline CollisionOperator build_loss_operator(const DispersionModel& m, const VelocityGrid& g, const ShellOptions& opt = {}) {
  CollisionOperator op;
  op.grid = g;
  op.with_gain = false;
  op.gain.resize(g.size(), g.size());
  op.loss.assign(g.size(), 0.0);
  for (int a = 0; a < g.ne; ++a) {
    const double s = loss_rate(m, Vec{0.0, 0.0, g.r[a]}, opt);
    for (int j = 0; j < g.nc; ++j) op.loss[g.index(a, j)] = s;
    op.max_loss = std::max(op.max_loss, s);
  }
  return op;
}

// exp(h C) f by Taylor series; h * max Lambda < 0.5 keeps the weighted 1-norm of hC below 1.
inline Eigen::VectorXd collision_exp(const CollisionOperator& op, double h, const Eigen::VectorXd& f) {
  Eigen::VectorXd sum = f, term = f;
  const double scale = std::max(1e-300, f.cwiseAbs().maxCoeff());
  for (int k = 1; k <= 60; ++k) {
    term = op.apply(term) * (h / k);
    sum += term;
    if (term.cwiseAbs().maxCoeff() <= 1e-18 * scale) break;
  }
  return sum;
}

namespace detail {

// 4-point Lagrange interpolation on a periodic uniform grid at fractional index s.
inline double periodic_cubic(const double* y, int n, double s) {
  const double fl = std::floor(s);
  const double t = s - fl;
  const long k = static_cast<long>(fl);
  auto at = [&](long i) { return y[((i % n) + n) % n]; };
  const double ym = at(k - 1), y0 = at(k), y1 = at(k + 1), y2 = at(k + 2);
  return -t * (t - 1) * (t - 2) / 6.0 * ym + (t + 1) * (t - 1) * (t - 2) / 2.0 * y0 - (t + 1) * t * (t - 2) / 2.0 * y1 +
         (t + 1) * t * (t - 1) / 6.0 * y2;
}

}  // namespace detail

struct BoltzmannOptions {
  double dt = 0.02;
  bool gain = true;
  double negative_tol = 1e-10;
};

struct BoltzmannRun {
  PhaseSpaceDensity F;
  std::vector<Moments> series;  // one row per step, first row at the initial time
  long clipped = 0;
  double most_negative = 0.0;
};

// Strang splitting: half collision step, semi-Lagrangian transport along z, half collision step.
inline BoltzmannRun evolve_boltzmann(const PhaseSpaceDensity& F0, const CollisionOperator& op, double T,
                                     const BoltzmannOptions& opt = {}) {
  if (!(opt.dt > 0.0)) throw Error("boltzmann", "dt must be positive");
  if (opt.dt * op.max_loss >= 0.5) throw Error("boltzmann", "CFL violation: dt * max loss_rate >= 0.5");
  if (op.grid.size() != F0.vsize() || op.grid.de != F0.V.de) throw Error("boltzmann", "grid mismatch");
  CollisionOperator local = op;
  local.with_gain = op.with_gain && opt.gain;

  BoltzmannRun run;
  run.F = F0;
  run.series.push_back(moments(run.F));
  const int steps = static_cast<int>(std::ceil(T / opt.dt - 1e-12));
  const auto& g = F0.V;
  const std::size_t nv = g.size();
  const int nx = F0.X.n;

  auto collide = [&](double h) {
    parallel_for(static_cast<std::size_t>(nx), [&](std::size_t x) {
      Eigen::Map<Eigen::VectorXd> f(run.F.values.data() + x * nv, static_cast<Eigen::Index>(nv));
      f = collision_exp(local, h, Eigen::VectorXd(f));
    });
  };
  auto transport = [&](double h) {
    if (nx == 1) return;
    parallel_for(nv, [&](std::size_t k) {
      const int i = static_cast<int>(k) / g.nc, j = static_cast<int>(k) % g.nc;
      const double shift = g.speed[i] * g.c[j] * h / F0.X.step;
      std::vector<double> line(nx), out(nx);
      for (int x = 0; x < nx; ++x) line[x] = run.F.at(x, k);
      for (int x = 0; x < nx; ++x) out[x] = detail::periodic_cubic(line.data(), nx, x - shift);
      for (int x = 0; x < nx; ++x) run.F.at(x, k) = out[x];
    });
  };

  for (int s = 0; s < steps; ++s) {
    const double h = std::min(opt.dt, T - s * opt.dt);
    collide(0.5 * h);
    transport(h);
    collide(0.5 * h);
    for (auto& v : run.F.values)
      if (v < -opt.negative_tol) {
        run.most_negative = std::min(run.most_negative, v);
        v = 0.0;
        ++run.clipped;
      }
    run.F.T = F0.T + std::min(T, (s + 1) * opt.dt);
    run.series.push_back(moments(run.F));
  }
  return run;
}

// Closed-form limiting evolution of the off-diagonal component: damping times free flow.
inline WignerGrid evolve_offdiagonal_damped(const WignerGrid& W0, const DispersionModel& m, double T, double sigma_P) {
  if (W0.component != Component::pm && W0.component != Component::mp)
    throw Error("boltzmann", "damped evolution applies to the +- and -+ components");
  auto W = free_evolve_offdiagonal(W0, m, T);
  const double damp = std::exp(-T * sigma_P);
  for (auto& z : W.values) z *= damp;
  return W;
}

// sigma_P from the resolvent route, -2 Im Phi_P.
inline WignerGrid evolve_offdiagonal_damped(const WignerGrid& W0, const WavePacketSpec& s, const DispersionModel& m,
                                            double T) {
  const double sigma = m.zero_coupling() ? 0.0 : -2.0 * phi_P(m, s.P).value.imag();
  return evolve_offdiagonal_damped(W0, m, T, sigma);
}

// --- particle simulation ------------------------------------------------------------

// Homogeneous DSMC with null-collision thinning against a tabulated sigma(|V|).
struct DsmcOptions {
  long particles = 100000;
  std::uint64_t seed = 1;
  int table = 4000;
  int envelope_nodes = 128;
  double z = 3.0;  // CI multiplier
};

struct DsmcPoint {
  double T = 0.0;
  double kinetic_energy = 0.0, kinetic_energy_se = 0.0;
  double vz = 0.0, vz_se = 0.0;
};

class DsmcKernel {
 public:
  DsmcKernel(const DispersionModel& m, double r_max, const DsmcOptions& opt, const ShellOptions& sopt = {})
      : m_(m), sopt_(sopt), r_max_(r_max), n_(opt.table) {
    dr_ = r_max / (n_ - 1);
    sig_.resize(n_);
    br_.resize(n_);
    env_.resize(n_);
    const int ne = opt.envelope_nodes;
    for (int k = 0; k < n_; ++k) {
      const double r = std::max(1e-9, k * dr_);
      auto rep = sigma_shell_report(m, Vec{0.0, 0.0, r}, sopt);
      sig_[k] = rep.sigma;
      br_[k] = {rep.branch[0], rep.branch[1]};
      for (int b = 0; b < 2; ++b) {
        double mx = 0.0;
        for (int q = 0; q < ne; ++q) mx = std::max(mx, shell_density(r, -1.0 + 2.0 * q / (ne - 1), b == 0 ? 1 : -1));
        env_[k][b] = mx;
      }
    }
    for (double s : sig_) majorant_ = std::max(majorant_, s);
    majorant_ *= 1.05;
  }

  double majorant() const { return majorant_; }
  double sigma(double r) const { return lerp(r, [&](int k) { return sig_[k]; }); }
  double branch(double r, int b) const { return lerp(r, [&](int k) { return br_[k][b]; }); }

  // One collision from V; returns the post-collision velocity.
  Vec scatter(const Vec& V, Rng& rng) const {
    const double r = norm(V);
    const int b = rng.uniform() * sigma(r) < branch(r, 0) ? 0 : 1;
    const int sg = b == 0 ? 1 : -1;
    const int k = std::min(n_ - 2, static_cast<int>(r / dr_));
    const double env = 1.25 * std::max(env_[k][b], env_[k + 1][b]);
    for (int tries = 0; tries < 1000000; ++tries) {
      const double c = 2.0 * rng.uniform() - 1.0;
      auto pts = shell_points(m_, r, c, sg, sopt_);
      double tot = 0.0;
      for (auto& p : pts) tot += p.density;
      if (tot <= 0.0 || rng.uniform() * env > tot) continue;
      double pick = rng.uniform() * tot, rr = pts.back().r;
      for (auto& p : pts)
        if ((pick -= p.density) <= 0.0) {
          rr = p.r;
          break;
        }
      const double phi = 2.0 * pi * rng.uniform();
      return rotate_about(V, r, c, phi, rr);
    }
    throw Error("boltzmann", "dsmc: shell sampling failed");
  }

 private:
  template <class F>
  double lerp(double r, F&& f) const {
    if (r >= r_max_) throw Error("boltzmann", "dsmc: particle left the tabulated speed range");
    const double s = r / dr_;
    const int k = std::min(n_ - 2, static_cast<int>(s));
    const double t = s - k;
    return (1.0 - t) * f(k) + t * f(k + 1);
  }
  double shell_density(double r, double c, int sg) const {
    double tot = 0.0;
    for (auto& p : shell_points(m_, r, c, sg, sopt_)) tot += p.density;
    return tot;
  }
  static Vec rotate_about(const Vec& V, double r, double c, double phi, double rr) {
    const double vx = V[0] / r, vy = V[1] / r, vz = V[2] / r;
    // orthonormal frame (a, b) perpendicular to V
    double ax, ay, az;
    if (std::abs(vz) < 0.9) {
      ax = -vy;
      ay = vx;
      az = 0.0;
    } else {
      ax = 0.0;
      ay = -vz;
      az = vy;
    }
    const double an = std::sqrt(ax * ax + ay * ay + az * az);
    ax /= an;
    ay /= an;
    az /= an;
    const double bx = vy * az - vz * ay, by = vz * ax - vx * az, bz = vx * ay - vy * ax;
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    const double cp = std::cos(phi), sp = std::sin(phi);
    return {rr * (c * vx + s * (cp * ax + sp * bx)), rr * (c * vy + s * (cp * ay + sp * by)),
            rr * (c * vz + s * (cp * az + sp * bz))};
  }

  DispersionModel m_;
  ShellOptions sopt_;
  double r_max_, dr_ = 0.0;
  int n_;
  std::vector<double> sig_;
  std::vector<std::array<double, 2>> br_, env_;
  double majorant_ = 0.0;
};

// Particles start at the grid nodes of a homogeneous F0 (cell picked with probability equal to its
// mass fraction, azimuth uniform), so both methods evolve the same initial measure.
inline std::vector<DsmcPoint> dsmc_relaxation(const DispersionModel& m, const PhaseSpaceDensity& F0,
                                              const std::vector<double>& times, const DsmcOptions& opt = {}) {
  if (F0.X.n != 1) throw Error("boltzmann", "dsmc: homogeneous data only");
  if (opt.particles < 2) throw Error("boltzmann", "dsmc: need at least two particles");
  if (!std::is_sorted(times.begin(), times.end())) throw Error("boltzmann", "dsmc: times must be sorted");
  const auto& g = F0.V;
  std::vector<double> cdf(g.size());
  double acc = 0.0;
  for (int i = 0; i < g.ne; ++i)
    for (int j = 0; j < g.nc; ++j) {
      acc += std::max(0.0, F0.values[g.index(i, j)]) * g.measure(i, j);
      cdf[g.index(i, j)] = acc;
    }
  if (!(acc > 0.0)) throw Error("boltzmann", "dsmc: initial mass is zero");
  for (auto& v : cdf) v /= acc;

  const double r_max = radius_of_energy(m, g.e.back() + 0.5 * g.de) * 1.5 + 1.0;
  DsmcKernel K(m, r_max, opt);
  const double lam = K.majorant();

  const long shard = 4096;
  const long nshard = (opt.particles + shard - 1) / shard;
  const std::size_t nt = times.size();
  std::vector<std::vector<Welford>> acc_w(nshard, std::vector<Welford>(nt));
  parallel_for(static_cast<std::size_t>(nshard), [&](std::size_t s) {
    const long lo = static_cast<long>(s) * shard, hi = std::min(opt.particles, lo + shard);
    for (long p = lo; p < hi; ++p) {
      Rng rng(opt.seed, static_cast<std::uint64_t>(p));
      const std::size_t cell = std::min<std::size_t>(
          g.size() - 1, std::lower_bound(cdf.begin(), cdf.end(), rng.uniform()) - cdf.begin());
      const int i = static_cast<int>(cell) / g.nc, j = static_cast<int>(cell) % g.nc;
      const double ph = 2.0 * pi * rng.uniform(), sj = std::sqrt(std::max(0.0, 1.0 - g.c[j] * g.c[j]));
      Vec V{g.r[i] * sj * std::cos(ph), g.r[i] * sj * std::sin(ph), g.r[i] * g.c[j]};
      double t = 0.0;
      for (std::size_t q = 0; q < nt; ++q) {
        while (lam > 0.0) {
          const double dt = rng.exponential(lam);
          if (t + dt > times[q]) break;
          t += dt;
          if (rng.uniform() * lam < K.sigma(norm(V))) V = K.scatter(V, rng);
        }
        // memorylessness: restarting the exponential clock at times[q] leaves the law unchanged
        t = times[q];
        acc_w[s][q].add(m.e(norm(V)), V[2]);
      }
    }
  });
  std::vector<DsmcPoint> out(nt);
  for (std::size_t q = 0; q < nt; ++q) {
    Welford w;
    for (long s = 0; s < nshard; ++s) w.merge(acc_w[s][q]);
    out[q].T = times[q];
    out[q].kinetic_energy = w.mr;
    out[q].vz = w.mi;
    out[q].kinetic_energy_se = std::sqrt(w.s2r / (w.n - 1) / w.n);
    out[q].vz_se = std::sqrt(w.s2i / (w.n - 1) / w.n);
  }
  return out;
}

}  // namespace decoh
