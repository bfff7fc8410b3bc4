#include "catch_amalgamated.hpp"

#include "decoh/observables.hpp"

using namespace decoh;

namespace {

WavePacketSpec spec1(double eps, double P = 2.0, double Q = 1.0) {
  WavePacketSpec s;
  s.d = 1;
  s.P = {P};
  s.Q = {Q};
  s.epsilon = eps;
  return s;
}

// pm grid with xi covering the window around 2P; node exactly at 2P.
WignerGrid pm_grid(const WavePacketSpec& s, double xi_half, int nxi, int nv) {
  const double eps = s.epsilon;
  const double vh = 8.0 * eps;
  return initial_wigner_hat(s, Component::pm, {Axis::centered(2.0 * s.P[0], xi_half, nxi)}, {Axis::centered(0.0, vh, nv)});
}

// Windowed pairing for free quadratic evolution, reduced to one Gaussian integral over eta.
double windowed_oracle(double s, double D, double eps, double T) {
  auto f = [&](double eta) {
    const double a = D - 0.5 * eps * T * eta;
    return s / std::sqrt(2.0 * pi) * std::exp(-(0.5 * s * s + 0.25) * eta * eta - a * a);
  };
  return integrate(f, -40.0, 40.0, 1e-15, 1e-13).value;
}

}  // namespace

TEST_CASE("fringe pairing at T = 0 gives exp(-|Q|^2)") {
  auto s = spec1(0.1);
  auto W = initial_wigner_hat(s, Component::pm, {Axis::point(4.0)}, {Axis::centered(0.0, 0.8, 401)});
  auto J = fringe_observable({2.0}, s.P);
  const cplx z = pair(J, W);
  REQUIRE(std::abs(z - std::exp(-1.0)) < 1e-10);
  auto m = quadratic_einstein(1, -1, 1, 1, 1);
  REQUIRE(std::abs(corollary_limit(J, s, m, 0.0, 0.0).value - std::exp(-1.0)) < 1e-12);
}

TEST_CASE("fringe pairing of free evolution matches the limit at every eps") {
  auto m = without_coupling(quadratic_einstein(1, -1, 1, 1, 1));
  for (double eps : {0.2, 0.1, 0.05}) {
    auto s = spec1(eps);
    const double vh = 8.0 * eps;
    auto W0 = initial_wigner_hat(s, Component::pm, {Axis::point(4.0)}, {Axis::centered(0.0, vh, 801)});
    auto J = fringe_observable({2.0}, s.P);
    for (double T : {0.0, 0.3, 0.5, 1.0}) {
      const cplx z = pair(J, free_evolve_offdiagonal(W0, m, T));
      const cplx lim = corollary_limit(J, s, m, T, 0.0).value;
      const double D = 1.0 - 2.0 * T;
      REQUIRE(std::abs(lim - std::exp(-D * D)) < 1e-12);
      REQUIRE(std::abs(z - lim) < 1e-9);
    }
  }
}

TEST_CASE("Dirac placement on the xi grid") {
  auto s = spec1(0.1);
  auto J = fringe_observable({2.0}, s.P);
  auto off = initial_wigner_hat(s, Component::pm, {Axis::centered(4.0, 0.3, 20)}, {Axis::centered(0.0, 0.8, 201)});
  REQUIRE_THROWS_AS(pair(J, off), Error);
  auto outside = initial_wigner_hat(s, Component::pm, {Axis::point(4.0)}, {Axis::centered(0.0, 0.8, 201)});
  auto J2 = fringe_observable({3.0}, {3.0});
  REQUIRE(pair(J2, outside) == cplx(0.0));
  auto J3 = blind_observable(1, 1.0);
  REQUIRE_THROWS_AS(pair(J3, outside), Error);
}

TEST_CASE("pairing is linear in W") {
  auto s = spec1(0.1);
  auto W1 = pm_grid(s, 0.35, 21, 201);
  auto s2 = spec1(0.1, 2.0, 0.5);
  auto W2 = pm_grid(s2, 0.35, 21, 201);
  const cplx a(0.3, -1.2), b(-0.7, 0.4);
  auto W = a * W1 + b * W2;
  for (auto J : {windowed_fringe_observable({2.0}, s.P, 1.0), fringe_observable({2.0}, s.P)}) {
    const cplx lhs = pair(J, W), rhs = a * pair(J, W1) + b * pair(J, W2);
    REQUIRE(std::abs(lhs - rhs) < 1e-12 * (1.0 + std::abs(lhs)));
  }
}

TEST_CASE("norm surrogate bounds the pairing") {
  auto m = without_coupling(quadratic_einstein(1, -1, 1, 1, 1));
  auto s = spec1(0.1);
  auto W0 = pm_grid(s, 0.35, 21, 201);
  auto J = windowed_fringe_observable({2.0}, s.P, 1.0);
  for (double T : {0.0, 0.5, 1.0}) {
    auto W = free_evolve_offdiagonal(W0, m, T);
    REQUIRE(std::abs(pair(J, W)) <= J.J_norm() * w_sup_bound(W) * (1.0 + 1e-12));
  }
}

TEST_CASE("J_norm is the same for every preset and stable on refinement") {
  const double ref = std::sqrt(2.0 * pi);
  REQUIRE(fringe_observable({2.0}, {2.0}).J_norm() == Catch::Approx(ref));
  auto Jw = windowed_fringe_observable({2.0}, {2.0}, 0.7);
  REQUIRE(Jw.J_norm() == Catch::Approx(ref));
  double prev = 0.0;
  for (int n : {101, 201, 401}) {
    const double g = J_norm_on_grid(Jw, {Axis::centered(4.0, 1.5, n)}, 0.1);
    REQUIRE(std::abs(g - ref) < 1e-8);
    if (prev > 0.0) REQUIRE(std::abs(g - prev) < 1e-8);
    prev = g;
  }
  auto Jb = blind_observable(1, 2.0);
  REQUIRE(std::abs(J_norm_on_grid(Jb, {Axis::centered(0.0, 10.0, 801)}, 0.1) - ref) < 1e-8);
}

TEST_CASE("windowed fringe matches the reduced Gaussian oracle and converges to the limit") {
  auto m = without_coupling(quadratic_einstein(1, -1, 1, 1, 1));
  const double T = 1.0, sw = 1.0;
  std::vector<double> gaps;
  for (double eps : {0.2, 0.1, 0.05}) {
    auto s = spec1(eps);
    const double half = 8.0 * eps / sw + 8.0 * eps;
    const int nxi = 2 * static_cast<int>(std::ceil(half / (pi * eps / 8.0 * 0.9))) + 1;
    const int nv = 2 * static_cast<int>(std::ceil(8.0 * eps / (pi * eps / 18.0 * 0.9))) + 1;
    auto W = free_evolve_offdiagonal(pm_grid(s, half, nxi, nv), m, T);
    auto J = windowed_fringe_observable({2.0}, s.P, sw);
    const cplx z = pair(J, W);
    const double D = 1.0 - 2.0 * T;
    REQUIRE(std::abs(z - windowed_oracle(sw, D, eps, T)) < 1e-6);
    const cplx lim = corollary_limit(J, s, m, T, 0.0).value;
    REQUIRE(std::abs(lim - std::exp(-D * D) / std::sqrt(1.0 + 0.5 / (sw * sw))) < 1e-12);
    gaps.push_back(std::abs(z - lim));
  }
  REQUIRE(gaps[1] < gaps[0]);
  REQUIRE(gaps[2] < gaps[1]);
}

TEST_CASE("blind observable has zero limit and tiny pairing") {
  auto m = quadratic_einstein(1, -1, 1, 1, 1);
  auto s = spec1(0.1);
  auto J = blind_observable(1, 3.0);
  auto c = corollary_limit(J, s, m, 1.0, 0.5);
  REQUIRE(c.fringe_blind);
  REQUIRE(c.value == cplx(0.0));
  auto W = pm_grid(s, 0.35, 21, 201);
  REQUIRE(std::abs(pair(J, W)) < 1e-12);
}

TEST_CASE("position-domain pairing of the total Wigner function gives the norm") {
  auto s = spec1(0.3, 2.0, 1.0);
  SpatialGrid g{1, 512, 0.12, -30.72};
  auto psi = sample_psi0(s, g, 0);
  auto W = wigner_transform(psi, g, 512);
  auto J = fringe_observable({0.0}, {0.0});
  J.c_b = 1.0;
  REQUIRE(std::abs(pair(J, W) - s.norm_sq()) < 1e-6);
}
