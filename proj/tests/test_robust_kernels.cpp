#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "rfpca/errors.hpp"
#include "rfpca/robust_kernels.hpp"

using namespace rfpca;

TEST_SUITE("robust_kernels") {
  TEST_CASE("rho closed forms") {
    const auto huber = RhoFamily::huber(1.345);
    const auto bisq = RhoFamily::bisquare(kBisquareScaleC);
    CHECK(rho(huber, 0.0) == 0.0);
    CHECK(rho(bisq, 2.0) == 1.0);
    CHECK(rho(bisq, kBisquareScaleC / 2) == doctest::Approx(0.578125).epsilon(1e-14));
    CHECK(rho(huber, 3.0) == doctest::Approx(1.345 * 3.0 - 0.5 * 1.345 * 1.345));
    CHECK(rho(RhoFamily::square(), -3.0) == 9.0);
  }

  TEST_CASE("rho is even, zero at zero and nondecreasing in |x|") {
    for (const auto& f : {RhoFamily::huber(1.345), RhoFamily::bisquare(1.54764), RhoFamily::bisquare(3.44369),
                          RhoFamily::square()}) {
      double prev = 0.0;
      for (double x = 0.0; x <= 6.0; x += 0.01) {
        CHECK(rho(f, x) == rho(f, -x));
        CHECK(rho(f, x) >= prev);
        prev = rho(f, x);
      }
      CHECK(rho(f, 0.0) == 0.0);
    }
  }

  TEST_CASE("psi values") {
    for (const auto& f : {RhoFamily::huber(1.345), RhoFamily::bisquare(1.54764), RhoFamily::square()}) {
      CHECK(psi(f, 0.0) == 0.0);
    }
    CHECK(psi(RhoFamily::huber(1.345), 10.0) == 1.345);
    CHECK(psi(RhoFamily::bisquare(3.44369), 3.44369) == 0.0);
  }

  TEST_CASE("psi matches a central difference of rho") {
    const double h = 1e-5;
    for (const auto& f : {RhoFamily::huber(1.345), RhoFamily::bisquare(1.54764), RhoFamily::square()}) {
      for (double x = -4.0; x <= 4.0; x += 0.037) {
        if (f.kind == RhoKind::Huber && std::abs(std::abs(x) - f.c) < 2 * h) continue;
        const double fd = (rho(f, x + h) - rho(f, x - h)) / (2 * h);
        CHECK(std::abs(fd - psi(f, x)) <= 1e-6);
      }
    }
  }

  TEST_CASE("IRLS weights") {
    CHECK(irls_weight(RhoFamily::huber(1.345), 0.0) == 1.0);
    CHECK(irls_weight(RhoFamily::huber(1.345), 1e-9) == 1.0);
    const auto bisq = RhoFamily::bisquare(1.54764);
    CHECK(irls_weight(bisq, 1.54764) == 0.0);
    CHECK(irls_weight(bisq, -5.0) == 0.0);
    CHECK(irls_weight(bisq, 1e-9) == doctest::Approx(irls_weight(bisq, 0.0)));
    CHECK(irls_weight(RhoFamily::square(), 0.0) == irls_weight(RhoFamily::square(), 17.0));
    for (double x = -5; x <= 5; x += 0.1) CHECK(irls_weight(bisq, x) >= 0.0);
  }

  TEST_CASE("median and MAD") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
    const std::vector<double> constant(7, 4.2);
    CHECK(mad(constant) == 0.0);
    const std::vector<double> v{-1.0, 0.0, 1.0};
    CHECK(mad(v, 1.0) == 1.0);
    CHECK(mad(v) == doctest::Approx(1.0 / 0.674489750196082));
  }

  TEST_CASE("MAD of Gaussian draws is consistent") {
    const auto z = oracle::gaussian_draws(100000, 11);
    CHECK(std::abs(mad(z) - 1.0) <= 0.02);
  }

  TEST_CASE("M-scale of identical residuals matches the bisection root") {
    // u* solves 1 - (1 - u^2)^3 = 1/2; frozen 1/u* = 2.2016 for c = 1.
    const double u_star = oracle::bisect([](double u) { return 1.0 - std::pow(1.0 - u * u, 3) - 0.5; }, 0.0, 1.0);
    CHECK(1.0 / u_star == doctest::Approx(2.2016).epsilon(1e-4));
    const std::vector<double> r(10, 0.7);
    const std::vector<double> w(10, 0.1);
    MScaleSpec unit{RhoFamily::bisquare(1.0), 0.5};
    CHECK(weighted_mscale(r, w, unit).scale == doctest::Approx(0.7 / u_star).epsilon(1e-8));
    MScaleSpec tuned{RhoFamily::bisquare(kBisquareScaleC), 0.5};
    CHECK(weighted_mscale(r, w, tuned).scale == doctest::Approx(0.7 / (u_star * kBisquareScaleC)).epsilon(1e-8));
  }

  TEST_CASE("M-scale agrees with an independent bisection on mixed data") {
    const auto z = oracle::gaussian_draws(501, 5, 3.0);
    const double expected = oracle::bisquare_mscale_bisect(z, kBisquareScaleC, 0.5);
    CHECK(mscale(z, MScaleSpec{}).scale == doctest::Approx(expected).epsilon(1e-8));
  }

  TEST_CASE("M-scale is Gaussian-consistent") {
    const auto z = oracle::gaussian_draws(100000, 3);
    const auto s = mscale(z, MScaleSpec{});
    CHECK(std::abs(s.scale - 1.0) <= 0.02);
  }

  TEST_CASE("zero residuals are degenerate") {
    const std::vector<double> r(5, 0.0), w(5, 0.2);
    const auto s = weighted_mscale(r, w, MScaleSpec{});
    CHECK(s.scale == 0.0);
    CHECK(s.degenerate);
    // More than half the mass at zero has no positive root either.
    const std::vector<double> r2{0.0, 0.0, 0.0, 1.0, 2.0};
    CHECK(weighted_mscale(r2, w, MScaleSpec{}).degenerate);
    const std::vector<double> r3{0.0, 0.0, 3.0, 1.0, 2.0};
    CHECK_FALSE(weighted_mscale(r3, w, MScaleSpec{}).degenerate);
  }

  TEST_CASE("M-scale rejects bad inputs") {
    const std::vector<double> r{1.0, 2.0}, bad_w{0.3, 0.3};
    CHECK_THROWS_AS(weighted_mscale(r, bad_w, MScaleSpec{}), Error);
    CHECK_THROWS_AS(mscale(r, MScaleSpec{RhoFamily::huber(), 0.5}), Error);
    CHECK_THROWS_AS(mscale(std::vector<double>{}, MScaleSpec{}), Error);
  }

  TEST_CASE("M-scale convergence budget is enforced") {
    const auto z = oracle::gaussian_draws(50, 9);
    MScaleSpec spec;
    spec.max_iterations = 1;
    spec.tolerance = 1e-15;
    try {
      (void)mscale(z, spec);
      FAIL("expected NoConvergence");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoConvergence);
    }
  }

  TEST_CASE("property: M-scale scale equivariance and permutation invariance") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> unif(-3.0, 3.0);
    std::uniform_int_distribution<int> len(3, 60);
    for (int trial = 0; trial < 200; ++trial) {
      const int n = len(rng);
      std::vector<double> r(n), w(n);
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        r[i] = unif(rng) * std::exp(unif(rng));
        w[i] = std::abs(unif(rng)) + 0.01;
        total += w[i];
      }
      for (double& x : w) x /= total;
      const MScaleSpec spec;
      const double base = weighted_mscale(r, w, spec).scale;

      const double a = unif(rng) * 10.0 + (trial % 2 ? 0.5 : -0.5);
      std::vector<double> scaled(r);
      for (double& x : scaled) x *= a;
      CHECK(weighted_mscale(scaled, w, spec).scale == doctest::Approx(std::abs(a) * base).epsilon(1e-7));

      std::vector<int> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<double> rp(n), wp(n);
      for (int i = 0; i < n; ++i) {
        rp[i] = r[perm[i]];
        wp[i] = w[perm[i]];
      }
      CHECK(weighted_mscale(rp, wp, spec).scale == base);
    }
  }

  TEST_CASE("property: square family with b = 1 is the weighted RMS") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal(0.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 2 + trial;
      std::vector<double> r(n), w(n, 1.0 / n);
      for (double& x : r) x = normal(rng);
      double ss = 0.0;
      for (double x : r) ss += x * x / n;
      const MScaleSpec spec{RhoFamily::square(), 1.0};
      CHECK(std::abs(weighted_mscale(r, w, spec).scale - std::sqrt(ss)) <= 1e-10);
    }
  }

  TEST_CASE("weighted median") {
    const std::vector<double> v{1.0, 2.0, 3.0};
    CHECK(weighted_median(v, std::vector<double>{0.1, 0.1, 0.8}) == 3.0);
    CHECK(weighted_median(v, std::vector<double>{1.0, 1.0, 1.0}) == 2.0);
    CHECK(weighted_median(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 1.0}) == 1.5);
  }
}
