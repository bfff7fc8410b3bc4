#include "catch_amalgamated.hpp"

#include "decoh/boltzmann.hpp"
#include "decoh/observables.hpp"

using namespace decoh;

namespace {

const CollisionOperator& default_operator() {
  static const auto op = build_collision_operator(quadratic_einstein(), make_velocity_grid(quadratic_einstein(), 0.125, 96, 32));
  return op;
}

PhaseSpaceDensity bump(const VelocityGrid& g, double width2 = 0.25) {
  return sample_density(g, Axis::point(0.0), [&](double, const Vec& V) {
    const double dz = V[2] - 2.0;
    return std::exp(-(V[0] * V[0] + V[1] * V[1] + dz * dz) / (2.0 * width2));
  });
}

// Total rate from speed r by direct 1-D quadrature in the polar cosine (quadratic Einstein model):
// the shell radius is r'^2 = r^2 - 2 sigma omega and the co-area density per solid angle is 2 pi L r'.
double rate_oracle(const DispersionModel& m, double r) {
  double s = 0.0;
  for (int sg : {1, -1}) {
    const double r2 = r * r - 2.0 * sg;
    if (r2 <= 0.0) continue;
    const double rp = std::sqrt(r2);
    auto f = [&](double c) { return 2.0 * pi * 2.0 * pi * m.L_r(std::sqrt(std::max(0.0, r * r + r2 - 2.0 * r * rp * c)), sg) * rp; };
    s += integrate(f, -1.0, 1.0, 1e-15, 1e-13).value;
  }
  return s;
}

}  // namespace

TEST_CASE("loss rate delegates to sigma_shell") {
  auto m = quadratic_einstein();
  REQUIRE(loss_rate(without_coupling(m), {0, 0, 2}) == 0.0);
  REQUIRE(loss_rate(m, {0, 0, 2}) == sigma_shell(m, {0, 0, 2}));
  REQUIRE(loss_rate(m, {0, 0, 2}) == loss_rate(m, {0, -2, 0}));
  const double a = 2.0 / std::sqrt(3.0);
  REQUIRE(loss_rate(m, {a, a, a}) == Catch::Approx(loss_rate(m, {0, 0, 2})).epsilon(1e-12));
  for (double r : {0.7, 2.0, 3.5}) REQUIRE(loss_rate(m, {0, 0, r}) == Catch::Approx(rate_oracle(m, r)).epsilon(1e-9));
}

TEST_CASE("collision generator: loss equals deposited mass and the direct rate") {
  auto m = quadratic_einstein();
  const auto& op = default_operator();
  REQUIRE(op.max_loss_mismatch < 1e-12);
  const auto& g = op.grid;
  for (int i : {3, 20, 60}) REQUIRE(op.loss[g.index(i, 5)] == Catch::Approx(rate_oracle(m, g.r[i])).epsilon(1e-9));
  REQUIRE(op.max_loss * 0.02 < 0.5);
}

TEST_CASE("collision generator moves energy by exactly one phonon quantum") {
  auto m = quadratic_einstein();
  const auto& op = default_operator();
  const auto& g = op.grid;
  auto F = bump(g);
  // absorption from the top energy row is clamped onto the grid; keep those rows empty
  for (int i = g.ne - 8; i < g.ne; ++i)
    for (int j = 0; j < g.nc; ++j) F.values[g.index(i, j)] = 0.0;
  Eigen::Map<const Eigen::VectorXd> f(F.values.data(), F.values.size());
  const Eigen::VectorXd df = op.apply(f);
  double dE = 0.0, oracle = 0.0;
  for (int i = 0; i < g.ne; ++i) {
    auto rep = sigma_shell_report(m, {0, 0, g.r[i]});
    for (int j = 0; j < g.nc; ++j) {
      const double mu = g.measure(i, j);
      dE += mu * g.e[i] * df[g.index(i, j)];
      oracle += mu * F.values[g.index(i, j)] * (rep.branch[1] - rep.branch[0]);
    }
  }
  REQUIRE(dE == Catch::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("gain+loss conserves mass and relaxes toward isotropy") {
  const auto& op = default_operator();
  auto run = evolve_boltzmann(bump(op.grid), op, 5.0, {0.02});
  const double M0 = run.series.front().mass;
  for (auto& mo : run.series) REQUIRE(std::abs(mo.mass - M0) / M0 < 1e-6 * std::max(mo.T, 1e-3));
  REQUIRE(run.clipped == 0);
  for (double v : run.F.values) REQUIRE(v >= -1e-12);
  REQUIRE(run.series.front().anisotropy > 0.9);
  REQUIRE(std::abs(run.series.back().anisotropy) < 0.05);
  for (std::size_t k = 1; k < run.series.size(); ++k) REQUIRE(run.series[k].anisotropy <= run.series[k - 1].anisotropy + 1e-12);
}

TEST_CASE("loss-only evolution is the exact exponential") {
  auto m = quadratic_einstein();
  const auto& g = default_operator().grid;
  auto lo = build_loss_operator(m, g);
  auto F0 = bump(g, 0.5);
  for (double T : {0.5, 2.0}) {
    auto run = evolve_boltzmann(F0, lo, T, {0.02});
    for (int i = 0; i < g.ne; ++i) {
      const double s = loss_rate(m, {0, 0, g.r[i]});
      for (int j = 0; j < g.nc; ++j) {
        const double ex = F0.values[g.index(i, j)] * std::exp(-T * s);
        REQUIRE(std::abs(run.F.values[g.index(i, j)] - ex) <= 1e-8 * ex + 1e-300);
      }
    }
  }
  // same result when the full operator runs with the gain switched off
  BoltzmannOptions o;
  o.gain = false;
  auto a = evolve_boltzmann(F0, default_operator(), 1.0, o);
  const double s = loss_rate(m, {0, 0, g.r[40]});
  REQUIRE(a.F.values[g.index(40, 7)] == Catch::Approx(F0.values[g.index(40, 7)] * std::exp(-s)).epsilon(1e-12));
}

TEST_CASE("DSMC agrees with the deterministic relaxation") {
  auto m = quadratic_einstein();
  const auto& op = default_operator();
  auto F0 = bump(op.grid);
  DsmcOptions o;
  o.particles = 100000;
  o.seed = 2024;
  auto mc = dsmc_relaxation(m, F0, {0.5, 1.0, 2.0}, o);
  for (auto& p : mc) {
    auto r = evolve_boltzmann(F0, op, p.T, {0.02});
    const auto& g = op.grid;
    double M = 0.0, E = 0.0, vz = 0.0;
    for (int i = 0; i < g.ne; ++i)
      for (int j = 0; j < g.nc; ++j) {
        const double n = r.F.values[g.index(i, j)] * g.measure(i, j);
        M += n;
        E += n * g.e[i];
        vz += n * g.r[i] * g.c[j];
      }
    INFO("T = " << p.T);
    REQUIRE(std::abs(E / M - p.kinetic_energy) < o.z * p.kinetic_energy_se);
    REQUIRE(std::abs(vz / M - p.vz) < o.z * p.vz_se);
  }
  auto again = dsmc_relaxation(m, F0, {0.5}, o);
  REQUIRE(again[0].kinetic_energy == mc[0].kinetic_energy);
}

TEST_CASE("free streaming translates a bump by T grad e(V)") {
  auto m0 = without_coupling(quadratic_einstein());
  auto g = make_velocity_grid(m0, 0.5, 8, 6);
  auto op = build_collision_operator(m0, g);
  const Axis X{-10.0, 20.0 / 256, 256};
  auto F0 = sample_density(g, X, [](double x, const Vec&) { return std::exp(-0.5 * x * x); });
  const double T = 1.0;
  auto run = evolve_boltzmann(F0, op, T, {0.1});
  double err = 0.0;
  for (int x = 0; x < X.n; ++x)
    for (int i = 0; i < g.ne; ++i)
      for (int j = 0; j < g.nc; ++j) {
        double y = X.at(x) - g.speed[i] * g.c[j] * T;
        y -= 20.0 * std::round(y / 20.0);
        err = std::max(err, std::abs(run.F.at(x, g.index(i, j)) - std::exp(-0.5 * y * y)));
      }
  REQUIRE(err < 1e-4);
  REQUIRE(std::abs(run.series.back().mass - run.series.front().mass) < 1e-10);
}

TEST_CASE("step-size guard and negative clipping") {
  const auto& op = default_operator();
  auto F0 = bump(op.grid);
  REQUIRE_THROWS_AS(evolve_boltzmann(F0, op, 1.0, {0.06}), Error);
  auto m0 = without_coupling(quadratic_einstein());
  auto g = make_velocity_grid(m0, 0.5, 4, 4);
  auto op0 = build_collision_operator(m0, g);
  const Axis X{0.0, 0.1, 64};
  auto step = sample_density(g, X, [](double x, const Vec&) { return x < 3.2 ? 1.0 : 0.0; });
  auto run = evolve_boltzmann(step, op0, 0.37, {0.37});
  REQUIRE(run.clipped > 0);
  REQUIRE(run.most_negative < -1e-10);
  for (double v : run.F.values) REQUIRE(v >= -1e-10);
}

TEST_CASE("damped off-diagonal evolution") {
  auto m = quadratic_einstein(1, -1, 1, 1, 1);
  WavePacketSpec s;
  s.d = 1;
  s.P = {2.0};
  s.Q = {1.0};
  s.epsilon = 0.1;
  auto W0 = initial_wigner_hat(s, Component::pm, {Axis::point(4.0)}, {Axis::centered(0.0, 0.8, 401)});
  const double sigma = 1.7;
  REQUIRE(evolve_offdiagonal_damped(W0, m, 0.0, sigma).values == W0.values);
  auto J = fringe_observable(s.P, s.P);
  const double Tq = s.Q[0] / s.P[0];
  const cplx z = pair(J, evolve_offdiagonal_damped(W0, m, Tq, sigma));
  REQUIRE(std::abs(z - std::exp(-sigma * Tq)) < 1e-9);
  auto m0 = without_coupling(m);
  REQUIRE(evolve_offdiagonal_damped(W0, s, m0, 0.8).values == free_evolve_offdiagonal(W0, m0, 0.8).values);
  auto Wpp = initial_wigner_hat(s, Component::pp, {Axis::point(0.0)}, {Axis::centered(2.0, 0.8, 401)});
  REQUIRE_THROWS_AS(evolve_offdiagonal_damped(Wpp, m, 1.0, sigma), Error);
}
