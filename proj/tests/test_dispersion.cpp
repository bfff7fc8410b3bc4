#include "catch_amalgamated.hpp"

#include "decoh/dispersion.hpp"

using namespace decoh;
using Catch::Approx;

TEST_CASE("thermal occupancy oracles") {
  auto m = quadratic_einstein();
  const double N = 1.0 / (std::exp(2.0) - 1.0);
  REQUIRE(thermal_occupancy(m, {0.3, -1.0, 2.0}) == Approx(0.156517642749665).epsilon(1e-13));
  REQUIRE(thermal_occupancy(m, {0, 0, 0}) == Approx(N).epsilon(1e-15));

  auto cold = quadratic_einstein(50.0, -1.0);
  REQUIRE(thermal_occupancy(cold, {1, 0, 0}) < 1e-20);

  auto m2 = m;
  m2.omega = [](double r) { return 1 + r * r; };
  m2.omega_constant = false;
  REQUIRE(thermal_occupancy(m2, {0, 2, 0}) == Approx(1.0 / (std::exp(6.0) - 1.0)).epsilon(1e-14));
}

TEST_CASE("occupancy rejects a non-trace-class model") {
  auto m = quadratic_einstein(1.0, 2.0);
  REQUIRE_THROWS_AS(thermal_occupancy(m, {0, 0, 0}), ValidationError);
}

TEST_CASE("coupling weights") {
  auto m = quadratic_einstein();
  const double N = 1.0 / (std::exp(2.0) - 1.0);
  REQUIRE(coupling_weight(m, {0, 0, 0}, +1) == Approx(N + 1).epsilon(1e-15));
  REQUIRE(coupling_weight(m, {0, 0, 0}, -1) == Approx(N).epsilon(1e-15));
  auto z = without_coupling(m);
  REQUIRE(coupling_weight(z, {1, 2, 3}, +1) == 0.0);
  REQUIRE(coupling_weight(z, {1, 2, 3}, -1) == 0.0);

  for (double r = 0; r < 8; r += 0.37) {
    Vec k{r, 0, 0};
    const double lm = coupling_weight(m, k, -1), lp = coupling_weight(m, k, +1);
    REQUIRE(lm >= 0.0);
    REQUIRE(lm <= lp);
  }
}

TEST_CASE("phi_sigma") {
  auto m = quadratic_einstein();
  REQUIRE(phi_sigma(m, {0, 0, 0}, {0, 0, 0}, +1) == 1.0);
  REQUIRE(phi_sigma(m, {1, 0, 0}, {1, 0, 0}, -1) == Approx(1.0).epsilon(1e-15));
  Vec p{0.4, -1.2, 0.7};
  REQUIRE(phi_sigma(m, p, scale(p, -1.0), +1) == Approx(m.omega(norm(p))).epsilon(1e-15));
  // difference of the two branches is exactly 2 omega
  Vec k{0.3, 0.1, -0.8};
  REQUIRE(phi_sigma(m, p, k, +1) - phi_sigma(m, p, k, -1) == Approx(2 * m.omega(norm(k))).epsilon(1e-15));
}

TEST_CASE("radial evaluators are bitwise invariant under signed permutations") {
  auto m = quadratic_einstein();
  Vec k{0.3, -1.7, 2.2};
  const double L0 = coupling_weight(m, k, +1), N0 = thermal_occupancy(m, k);
  std::vector<Vec> images = {{-1.7, 2.2, 0.3}, {2.2, 0.3, -1.7}, {-0.3, 1.7, -2.2}, {1.7, -0.3, 2.2}};
  for (auto& q : images) {
    REQUIRE(coupling_weight(m, q, +1) == L0);
    REQUIRE(thermal_occupancy(m, q) == N0);
    REQUIRE(m.e(norm(q)) == m.e(norm(k)));
  }
}

TEST_CASE("default model passes validation with identity Hessian") {
  auto rep = validate_assumptions(quadratic_einstein());
  for (auto& c : rep.checks) {
    INFO(c.name << " fitted=" << c.fitted);
    CHECK(c.pass);
  }
  REQUIRE(rep.pass());
  REQUIRE(rep.find("hessian_min")->fitted == Approx(1.0).epsilon(1e-5));
  REQUIRE(rep.find("hessian_max")->fitted == Approx(1.0).epsilon(1e-5));
}

TEST_CASE("quadratic phonon dispersion breaks the Hessian bound") {
  auto m = quadratic_einstein();
  m.omega = [](double r) { return 1.0 + r * r; };
  m.omega_constant = false;
  m.domega = nullptr;
  auto rep = validate_assumptions(m);
  REQUIRE_FALSE(rep.pass());
  REQUIRE_FALSE(rep.find("hessian_max")->pass);  // 1 + 2 > C2 = 2
  REQUIRE_FALSE(rep.find("hessian_min")->pass);  // 1 - 2 < 0
}

TEST_CASE("slowly decaying form factor fails the decay check") {
  auto m = quadratic_einstein();
  m.F = [](double r) { return 1.0 / japanese(r); };
  auto rep = validate_assumptions(m);
  REQUIRE_FALSE(rep.find("F_tail_slope")->pass);
  REQUIRE(rep.find("F_tail_slope")->fitted == Approx(-1.0).margin(0.05));
  REQUIRE_FALSE(rep.find("F_derivative_0")->pass);
}

TEST_CASE("trace-class violation stops validation early") {
  auto m = quadratic_einstein(1.0, 1.5);
  auto rep = validate_assumptions(m);
  REQUIRE(rep.checks.size() == 1);
  REQUIRE_FALSE(rep.pass());
}

TEST_CASE("coupling mass matches the Gaussian closed form") {
  auto m = quadratic_einstein();
  const double N = 1.0 / (std::exp(2.0) - 1.0);
  REQUIRE(coupling_mass(m, +1) == Approx((N + 1) * std::pow(pi, 1.5)).epsilon(1e-12));
  REQUIRE(coupling_mass(m, -1) == Approx(N * std::pow(pi, 1.5)).epsilon(1e-12));
}
