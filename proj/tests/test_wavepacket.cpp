#include "catch_amalgamated.hpp"

#include "decoh/wavepacket.hpp"

#include <cstdio>

using namespace decoh;
using Catch::Approx;

namespace {

WavePacketSpec spec1(double eps, double P = 2.0, double Q = 1.0) {
  WavePacketSpec s;
  s.d = 1;
  s.P = {P};
  s.Q = {Q};
  s.epsilon = eps;
  return s;
}

double fhat1(double u) { return std::pow(pi, -0.25) * std::exp(-0.5 * u * u); }

}  // namespace

TEST_CASE("spec validation") {
  auto s = spec1(0.1);
  REQUIRE_NOTHROW(validate(s));
  auto bad = s;
  bad.P = {0.0};
  REQUIRE_THROWS_AS(validate(bad), ValidationError);
  WavePacketSpec s3;
  s3.d = 3;
  s3.P = {0, 0, 2};
  s3.Q = {0, 1, 0};
  s3.epsilon = 0.2;
  REQUIRE_THROWS_AS(validate(s3), ValidationError);  // not parallel
  s3.Q = {0, 0, 1};
  REQUIRE_NOTHROW(validate(s3));
  REQUIRE(std::sqrt(s3.norm_sq()) >= 1.0);
  REQUIRE(std::sqrt(s3.norm_sq()) <= 2.0);
}

TEST_CASE("+- component on the xi = 2P slice") {
  auto s = spec1(0.2);
  const double eps = s.epsilon;
  for (double v : {-0.3, -0.05, 0.0, 0.11, 0.4}) {
    const cplx expect = std::exp(cplx(0, 2 * v * s.Q[0] / eps)) * fhat1(v / eps) * fhat1(v / eps) / (std::sqrt(2 * pi) * eps);
    REQUIRE(std::abs(wigner_hat_value(s, Component::pm, {4.0}, {v}) - expect) < 1e-14);
  }
  auto s0 = spec1(0.2, 2.0, 0.0);
  const cplx z = wigner_hat_value(s0, Component::pm, {4.0}, {0.0});
  REQUIRE(z.imag() == 0.0);
  REQUIRE(z.real() > 0.0);
}

TEST_CASE("++ slice normalization") {
  auto s = spec1(0.1);
  auto g = initial_wigner_hat(s, Component::pp, {Axis::point(0.0)}, {Axis::centered(2.0, 1.2, 601)});
  cplx sum = 0;
  for (auto& z : g.values) sum += z;
  REQUIRE(std::sqrt(2 * pi) * sum.real() * g.v_cell() == Approx(1.0).epsilon(1e-10));

  WavePacketSpec s3;
  s3.d = 3;
  s3.P = {0, 0, 2};
  s3.Q = {0, 0, 1};
  s3.epsilon = 0.4;
  std::vector<Axis> v3 = {Axis::centered(0, 3.2, 45), Axis::centered(0, 3.2, 45), Axis::centered(2, 3.2, 45)};
  auto g3 = initial_wigner_hat(s3, Component::pp, {Axis::point(0), Axis::point(0), Axis::point(0)}, v3);
  cplx s3sum = 0;
  for (auto& z : g3.values) s3sum += z;
  REQUIRE(std::pow(2 * pi, 1.5) * s3sum.real() * g3.v_cell() == Approx(1.0).epsilon(1e-8));
}

TEST_CASE("total marginal reproduces the norm including the overlap") {
  auto s = spec1(0.9, 0.5, 0.3);
  auto g = initial_wigner_hat(s, Component::total, {Axis::point(0.0)}, {Axis::centered(0.0, 9.0, 1201)});
  cplx sum = 0;
  for (auto& z : g.values) sum += z;
  REQUIRE(s.overlap() > 0.5);
  REQUIRE(std::sqrt(2 * pi) * sum.real() * g.v_cell() == Approx(s.norm_sq()).epsilon(1e-9));
}

TEST_CASE("Hermitian pairing and reality of diagonal components") {
  auto s = spec1(0.3);
  for (double xi : {-4.2, -3.9, 0.3, 4.05}) {
    for (double v : {-0.2, 0.0, 0.13}) {
      REQUIRE(std::abs(wigner_hat_value(s, Component::pm, {xi}, {v}) - std::conj(wigner_hat_value(s, Component::mp, {-xi}, {v}))) < 1e-15);
      for (auto c : {Component::pp, Component::mm})
        REQUIRE(std::abs(wigner_hat_value(s, c, {-xi}, {v + 2}) - std::conj(wigner_hat_value(s, c, {xi}, {v + 2}))) < 1e-15);
    }
  }
}

TEST_CASE("Nyquist violations are rejected") {
  auto s = spec1(0.05);
  REQUIRE_THROWS_AS(initial_wigner_hat(s, Component::pm, {Axis::point(4.0)}, {Axis::centered(0, 0.5, 11)}), Error);
  REQUIRE_THROWS_AS(initial_wigner_hat(s, Component::pm, {Axis::centered(0.0, 0.1, 5)}, {Axis::point(0)}), Error);
  REQUIRE_NOTHROW(initial_wigner_hat(s, Component::pm, {Axis::point(4.0)}, {Axis::centered(0, 0.5, 2001)}));
}

TEST_CASE("discrete Wigner transform of a Gaussian") {
  SpatialGrid g{1, 256, 0.1, -12.8};
  std::vector<cplx> psi(g.size());
  for (std::size_t i = 0; i < psi.size(); ++i) psi[i] = fhat1(g.x(i)[0]);
  auto w = wigner_transform(psi, g, 256);
  double err = 0;
  for (std::size_t i = 0; i < w.xi_count(); ++i)
    for (std::size_t j = 0; j < w.v_count(); ++j) {
      const double x = w.xi(i)[0], v = w.v(j)[0];
      err = std::max(err, std::abs(w.at(i, j) - std::exp(-x * x - v * v) / pi));
    }
  REQUIRE(err < 1e-12);

  auto psi2 = psi;
  for (auto& z : psi2) z *= std::exp(cplx(0, 0.7));
  auto w2 = wigner_transform(psi2, g, 256);
  double d2 = 0;
  for (std::size_t i = 0; i < w.values.size(); ++i) d2 = std::max(d2, std::abs(w.values[i] - w2.values[i]));
  REQUIRE(d2 < 1e-15);
}

TEST_CASE("aliasing is detected") {
  SpatialGrid g{1, 256, 0.5, -64};
  std::vector<cplx> psi(g.size());
  for (std::size_t i = 0; i < psi.size(); ++i) psi[i] = fhat1(g.x(i)[0] / 3) * std::exp(cplx(0, 3.0 * g.x(i)[0]));
  REQUIRE_THROWS_AS(wigner_transform(psi, g, 256), Error);
}

TEST_CASE("FFT Wigner of psi_0 matches the closed-form component sum") {
  auto s = spec1(0.5, 1.0, 1.0);
  SpatialGrid g{1, 512, 0.1, -25.6};
  auto w = to_fourier(wigner_transform(sample_psi0(s, g), g, 512));
  double err = 0, peak = 0;
  for (std::size_t i = 0; i < w.xi_count(); ++i)
    for (std::size_t j = 0; j < w.v_count(); ++j) {
      const cplx ref = wigner_hat_value(s, Component::total, w.xi(i), w.v(j));
      err = std::max(err, std::abs(w.at(i, j) - ref));
      peak = std::max(peak, std::abs(ref));
    }
  INFO("sup error " << err << " peak " << peak);
  REQUIRE(err < 1e-6);
}

TEST_CASE("free evolution of the off-diagonal component") {
  auto s = spec1(0.1);
  auto m = quadratic_einstein(1, -1, 1, 1, 1);
  auto w0 = initial_wigner_hat(s, Component::pm, {Axis::centered(4.0, 0.3, 31)}, {Axis::centered(0, 0.6, 301)});
  auto same = free_evolve_offdiagonal(w0, m, 0.0);
  REQUIRE(same.values == w0.values);
  auto wt = free_evolve_offdiagonal(w0, m, 0.8);
  for (std::size_t i = 0; i < w0.values.size(); ++i) REQUIRE(std::abs(wt.values[i]) == Approx(std::abs(w0.values[i])).epsilon(1e-14));

  // at T = |Q|/|P| the xi = 2P slice loses its v-phase: the fringe is centred
  auto slice = initial_wigner_hat(s, Component::pm, {Axis::point(4.0)}, {Axis::centered(0, 0.6, 301)});
  auto st = free_evolve_offdiagonal(slice, m, s.Q[0] / s.P[0]);
  for (auto& z : st.values) REQUIRE(std::abs(z.imag()) <= 1e-9 * std::max(1e-300, std::abs(z)) + 1e-300);
}

TEST_CASE("density at the overlap time shows 2(1 + cos 2Px) fringes") {
  auto s = spec1(0.1);
  auto m = quadratic_einstein(1, -1, 1, 1, 1);
  auto g = fringe_grid(s);
  auto psi = free_propagate(sample_psi0(s, g), g, m, s.overlap_time());
  const double tau = s.epsilon * s.epsilon * s.overlap_time();
  double err = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double x = g.x(i)[0], y = s.epsilon * x;
    const cplx uf = std::pow(pi, -0.25) / std::sqrt(cplx(1, tau)) * std::exp(-y * y / (2.0 * cplx(1, tau)));
    const double expect = 2 * (1 + std::cos(2 * s.P[0] * x)) * s.epsilon * std::norm(uf);
    err = std::max(err, std::abs(std::norm(psi[i]) - expect));
  }
  REQUIRE(err < 1e-10);
}

TEST_CASE("fringe Fourier at zero frequency is conserved mass") {
  auto s = spec1(0.2, 2.0, 1.0);
  auto m = quadratic_einstein(1, -1, 1, 1, 1);
  auto g = fringe_grid(s);
  auto psi0 = sample_psi0(s, g);
  for (double t : {0.0, 1.0, 2.5, s.overlap_time()}) {
    auto rho = density(free_propagate(psi0, g, m, t));
    REQUIRE(std::abs(fringe_fourier(rho, g, {0.0}) - s.norm_sq()) < 1e-8);
  }
}

TEST_CASE("fringe sweep limits in d = 1") {
  auto s = spec1(0.4);
  auto m = quadratic_einstein(1, -1, 1, 1, 1);
  auto sw = fringe_sweep(s, m, {0.4, 0.2, 0.1}, {0.0, 1.0, -1.0, 0.5});
  const double target[] = {2, 1, 1, 0};
  for (int r = 0; r < 4; ++r) REQUIRE(std::abs(sw.extrapolated[r] - target[r]) < 2e-2);
}

TEST_CASE("fringe at P in d = 3 on a 64^3 box") {
  WavePacketSpec s;
  s.d = 3;
  s.P = {0, 0, 2};
  s.Q = {0, 0, 1};
  s.epsilon = 0.4;
  auto m = quadratic_einstein();
  SpatialGrid g{3, 64, 0.55, -32 * 0.55};
  auto rho = density(free_propagate(sample_psi0(s, g), g, m, s.overlap_time()));
  REQUIRE(std::abs(fringe_fourier(rho, g, s.P) - 1.0) < 1e-6);
  REQUIRE(std::abs(fringe_fourier(rho, g, {0, 0, 0}) - s.norm_sq()) < 1e-6);
}

TEST_CASE("grid binary round trip") {
  auto s = spec1(0.2);
  auto w = initial_wigner_hat(s, Component::pm, {Axis::point(4.0)}, {Axis::centered(0, 0.4, 101)});
  const std::string path = "wavepacket_roundtrip.bin";
  write_grid_binary(w, path);
  auto back = read_grid_binary(path);
  REQUIRE(back == w.values);
  std::remove(path.c_str());
}
