#include <doctest.h>

#include <cmath>

#include "abstain/calibration.hpp"
#include "abstain/rng.hpp"
#include "oracles.hpp"

using namespace abstain;

TEST_CASE("conditional risk values") {
  CHECK(conditional_risk(0.0, CalibrationContext(0.5, 0.3, 0.0)) == doctest::Approx(1.0));
  CHECK(conditional_risk(ExtendedScore::pos_inf(), CalibrationContext(1.0, 0.2, 0.5)) == 0.0);
  CHECK(conditional_risk(40.0, CalibrationContext(1.0, 0.2, 0.5)) == doctest::Approx(0.0));
  CHECK(conditional_risk(1.0, CalibrationContext(0.8, 0.2, 0.5)) == doctest::Approx(0.6189106285676).epsilon(1e-10));
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const double z = rng.uniform(-8, 8), eta = rng.uniform(), d = rng.uniform(0.01, 0.5), rho = rng.uniform(0, 3);
    CHECK(conditional_risk(z, CalibrationContext(eta, d, rho)) ==
          doctest::Approx(static_cast<double>(oracle::cond_risk(z, eta, d, rho))).epsilon(1e-12));
  }
}

TEST_CASE("optimal score edge cases") {
  CHECK(optimal_score(CalibrationContext(0.5, 0.2, 1.0)).value == 0.0);
  CHECK(optimal_score(CalibrationContext(0.95, 0.2, 1.0)).kind == ExtendedScore::Kind::PosInf);
  CHECK(optimal_score(CalibrationContext(0.05, 0.2, 1.0)).kind == ExtendedScore::Kind::NegInf);
  CHECK_THROWS_AS(optimal_score(CalibrationContext(0.6, 0.2, 0.0)), DegenerateBandError);
}

TEST_CASE("optimal score matches brute force and golden section") {
  const CalibrationContext ctx(0.6, 0.2, 1.0);
  const auto z = optimal_score(ctx);
  REQUIRE(z.is_finite());
  const auto g = grid_minimize(ctx);
  CHECK(std::abs(z.value - g.z) <= 2e-4);
  const auto gold = oracle::golden_min([](long double t) { return oracle::cond_risk(t, 0.6L, 0.2L, 1.0L); }, -5, 5);
  CHECK(z.value == doctest::Approx(static_cast<double>(gold)).epsilon(1e-7));
}

TEST_CASE("closed form is a global minimizer on random contexts") {
  Rng rng(21);
  for (int i = 0; i < 300; ++i) {
    const double eta = rng.uniform(0.02, 0.98), d = rng.uniform(0.05, 0.45), rho = rng.uniform(0.1, 3.0);
    const CalibrationContext ctx(eta, d, rho);
    const double best = optimal_conditional_risk(ctx);
    CHECK(best == doctest::Approx(conditional_risk(optimal_score(ctx), ctx)).epsilon(1e-12));
    for (int k = 0; k < 50; ++k) CHECK(conditional_risk(rng.uniform(-15, 15), ctx) >= best - 1e-12);
  }
}

TEST_CASE("gamma rescales the minimizer") {
  const auto base = optimal_score(CalibrationContext(0.6, 0.2, 2.0));
  const auto scaled = optimal_score(CalibrationContext(0.6, 0.2, 1.0), 2.0);
  REQUIRE(base.is_finite());
  CHECK(scaled.value == doctest::Approx(base.value / 2.0));
}

TEST_CASE("generalized Bayes decision") {
  CHECK(bayes_decision(0.85, 0.2) == Decision::Pos);
  CHECK(bayes_decision(0.5, 0.2) == Decision::Reject);
  CHECK(bayes_decision(0.1, 0.2) == Decision::Neg);
  CHECK(bayes_decision(0.8, 0.2) == Decision::Reject);
}

TEST_CASE("h_minus") {
  CHECK(h_minus(0.4, 0.3, 0.0) == 1.0);
  CHECK(h_minus(0.1, 0.5, 0.7) == doctest::Approx(1.0));
  CHECK(h_minus(0.1, 0.2, 0.5) == doctest::Approx(0.7));
}

TEST_CASE("h_opt branches and grid oracle") {
  const double d = 0.2, zeta = std::tanh(0.5);
  CHECK(h_opt(0.0, d, zeta) == doctest::Approx(1.0 + (2 * d - 1) * zeta));
  CHECK(h_opt(1.0, d, zeta) == doctest::Approx(0.0));
  for (double theta : {0.05, 0.2, 0.4, 0.59, 0.61, 0.9}) {
    const auto g = grid_minimize(CalibrationContext((1 + theta) / 2, d, 1.0));
    CHECK(h_opt(theta, d, zeta) == doctest::Approx(g.risk).epsilon(1e-4));
  }
}

TEST_CASE("psi") {
  for (double d : {0.1, 0.25, 0.4})
    for (double z : {0.0, 0.3, 0.9}) CHECK(psi(0.0, d, z) == 0.0);
  CHECK(psi(0.7, 0.25, 0.0) == doctest::Approx(0.7));
  CHECK(psi(0.6, 0.25, std::tanh(0.5)) == doctest::Approx(0.36894).epsilon(1e-5));
  CHECK_THROWS_AS(psi(1.2, 0.25, 0.5), DomainError);
  CHECK_THROWS_AS(psi(-0.1, 0.25, 0.5), DomainError);
}

TEST_CASE("psi is continuous at both branch points") {
  for (double d : {0.1, 0.2, 0.3, 0.4}) {
    for (double rho : {0.25, 0.5, 1.0, 2.0}) {
      const double zeta = std::tanh(rho / 2), c = 1 - 2 * d;
      CHECK(std::abs(psi_middle_branch(1e-10, d, zeta)) < 1e-6);
      CHECK(std::abs(psi_middle_branch(c - 1e-10, d, zeta) - (c + (2 * d - 1) * zeta)) < 1e-6);
    }
  }
}

TEST_CASE("excess risk bound, deterministic cases") {
  const double d = 0.25, rho = 0.8;
  SUBCASE("Bayes scoring rule") {
    std::vector<PointMass> dist{{0.9, 0.5}, {0.1, 0.5}};
    std::vector<double> scores;
    for (const auto& p : dist) {
      const auto z = optimal_score(CalibrationContext(p.eta, d, rho));
      scores.push_back(z.is_finite() ? z.value : (z.kind == ExtendedScore::Kind::PosInf ? 1e3 : -1e3));
    }
    const auto rep = verify_excess_risk_bound(dist, scores, rho, d);
    CHECK(rep.lhs == 0.0);
    CHECK(rep.rhs == doctest::Approx(0.0));
    CHECK(rep.holds);
  }
  SUBCASE("constantly wrong sign") {
    std::vector<PointMass> dist{{0.9, 0.5}, {0.1, 0.5}};
    std::vector<double> scores{-3.0, 3.0};
    const auto rep = verify_excess_risk_bound(dist, scores, rho, d);
    CHECK(rep.theta == doctest::Approx(0.8));
    CHECK(rep.holds);
  }
}
