#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <random>

#include "stork/analysis.hpp"
#include "stork/coefficients.hpp"

using namespace stork;

namespace {

// Independent long-double evaluation of the printed RKG2 formulas.
long double b_formula(int j) {
  return 4.0L * (j - 1) * (j + 4) / (3.0L * j * (j + 1) * (j + 2) * (j + 3));
}
long double b_conv(int j) { return j < 2 ? b_formula(2) : b_formula(j); }
long double a_conv(int j) {
  if (j == 0) return 1 - b_conv(0);
  if (j == 1) return 1 - 3 * b_conv(1);
  return 1 - (j + 1.0L) * (j + 2.0L) / 2 * b_conv(j);
}

}  // namespace

TEST(Gegenbauer, Examples) {
  EXPECT_EQ(gegenbauer_c32(0, 0.37), 1.0);
  EXPECT_EQ(gegenbauer_c32(0, -5.0), 1.0);
  EXPECT_DOUBLE_EQ(gegenbauer_c32(1, 0.5), 1.5);
  EXPECT_DOUBLE_EQ(gegenbauer_c32(2, 1.0), 6.0);
}

TEST(Gegenbauer, MatchesSymbolicLowDegrees) {
  for (double x : {-1.0, -0.3, 0.0, 0.42, 1.0, 1.7}) {
    EXPECT_NEAR(gegenbauer_c32(2, x), (15 * x * x - 3) / 2, 1e-13);
    EXPECT_NEAR(gegenbauer_c32(3, x), (35 * x * x * x - 15 * x) / 2, 1e-12);
  }
}

TEST(Gegenbauer, ValueAtOneIsTriangular) {
  for (int n = 0; n <= 60; ++n) EXPECT_NEAR(gegenbauer_c32(n, 1.0), (n + 1.0) * (n + 2.0) / 2, 1e-9 * n * n + 1e-12);
}

TEST(Gegenbauer, NegativeDegreeRejected) { EXPECT_THROW(gegenbauer_c32(-1, 0.0), ConfigError); }

TEST(Rkg2Coeffs, FourSubstepsHasQuarterW1) { EXPECT_DOUBLE_EQ(rkg2_coeffs(4).w1, 0.25); }

TEST(Rkg2Coeffs, ThreeSubstepsPrintedValues) {
  const auto k = rkg2_coeffs(3);
  EXPECT_DOUBLE_EQ(k.b[3], 7.0 / 135);
  EXPECT_DOUBLE_EQ(k.a[3], 13.0 / 27);
}

TEST(Rkg2Coeffs, RejectsTooFewSubsteps) {
  EXPECT_THROW(rkg2_coeffs(1), ConfigError);
  EXPECT_THROW(rkg2_coeffs(0), ConfigError);
  EXPECT_THROW(rkg2_coeffs(-3), ConfigError);
}

TEST(Rkg2Coeffs, InvariantsHoldForManyS) {
  for (int s : {2, 3, 4, 5, 9, 17, 54, 100, 257, 1000}) {
    const auto k = rkg2_coeffs(s);
    ASSERT_EQ(static_cast<int>(k.a.size()), s + 1);
    EXPECT_NEAR(k.w1, 6.0L / ((s + 4.0L) * (s - 1.0L)), 1e-17) << s;
    for (int j = 0; j <= s; ++j) {
      EXPECT_NEAR(k.b[j], b_conv(j), 1e-15 * std::abs(b_conv(j))) << s << " " << j;
      EXPECT_NEAR(k.a[j], a_conv(j), 1e-15) << s << " " << j;
    }
    for (int j = 2; j <= s; ++j) {
      EXPECT_NEAR(k.a[j] + (j + 1.0) * (j + 2.0) / 2 * k.b[j], 1.0, 1e-15);
      const long double mu = (2.0L * j + 1) / j * b_conv(j) / b_conv(j - 1);
      const long double nu = -(j + 1.0L) / j * b_conv(j) / b_conv(j - 2);
      EXPECT_NEAR(k.mu[j], mu, 1e-14 * std::abs(mu));
      EXPECT_NEAR(k.nu[j], nu, 1e-14 * std::abs(nu));
      EXPECT_NEAR(k.mu_tilde[j], mu * k.w1, 1e-14 * std::abs(mu * k.w1));
      EXPECT_NEAR(k.gamma_tilde[j], -mu * k.w1 * a_conv(j - 1), 1e-14 * std::abs(mu * k.w1));
    }
    EXPECT_NEAR(k.mu_tilde[1], 3 * k.w1 * k.b[1], 1e-15 * k.mu_tilde[1]);
  }
}

TEST(Rkg2Coeffs, AbscissaeEndpoints) {
  for (int s = 2; s <= 300; ++s) {
    const auto c = stage_abscissae(rkg2_coeffs(s));
    EXPECT_EQ(c.front(), 0.0);
    EXPECT_NEAR(c.back(), 1.0, 1e-12) << s;
    for (double cj : c) {
      EXPECT_GE(cj, -0.1) << s;
      EXPECT_LE(cj, 1.1) << s;
    }
  }
}

TEST(Rkg2Coeffs, RepeatedCallsAreBitwiseIdentical) {
  const auto a = rkg2_coeffs(37), b = rkg2_coeffs(37);
  EXPECT_EQ(a.mu, b.mu);
  EXPECT_EQ(a.nu, b.nu);
  EXPECT_EQ(a.mu_tilde, b.mu_tilde);
  EXPECT_EQ(a.gamma_tilde, b.gamma_tilde);
  EXPECT_EQ(a.c, b.c);
}

TEST(Rkg2StabilityPoly, OneAtZero) {
  for (int s : {2, 3, 4, 10, 54}) EXPECT_NEAR(rkg2_stability_poly(rkg2_coeffs(s), 0.0), 1.0, 1e-13);
}

TEST(Rkg2StabilityPoly, BoundedAtMappedEndpoint) {
  const auto k = rkg2_coeffs(4);
  EXPECT_LE(std::abs(rkg2_stability_poly(k, -2 / k.w1)), 1.0);
  EXPECT_DOUBLE_EQ(-2 / k.w1, -8.0);
}

TEST(Rkg2StabilityPoly, DifferenceQuotientTendsToOne) {
  const auto k = rkg2_coeffs(6);
  double prev = 1e9;
  for (double h : {1e-1, 1e-2, 1e-3, 1e-4}) {
    const double dq = (rkg2_stability_poly(k, h) - rkg2_stability_poly(k, 0.0)) / h;
    EXPECT_LT(std::abs(dq - 1), prev);
    prev = std::abs(dq - 1);
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(Rkg2StabilityPoly, BoundedOnRealStabilityInterval) {
  for (int s : {2, 3, 4, 9, 20, 54, 100}) {
    const auto k = rkg2_coeffs(s);
    for (int i = 1; i <= 200; ++i) {
      const double z = -(2 / k.w1) * i / 201.0;
      EXPECT_LE(std::abs(rkg2_stability_poly(k, z)), 1 + 1e-8) << s << " " << z;
    }
  }
}

TEST(Rkg2StabilityPoly, ExtentGrowsQuadratically) {
  // extent 2/w1 = (s+4)(s-1)/3; the doubling ratio increases toward 4.
  double prev_ratio = 0;
  for (int s : {10, 20, 40}) {
    const double r = (2 / rkg2_coeffs(2 * s).w1) / (2 / rkg2_coeffs(s).w1);
    EXPECT_GT(r, prev_ratio);
    EXPECT_LT(r, 4.0);
    prev_ratio = r;
  }
  EXPECT_NEAR(prev_ratio, 4.0, 0.05 * 4.0);
}

TEST(Rkg2StabilityPoly, ClosedFormAtKnownPoint) {
  // s = 4, z = -2: 1 + w1 z = 1/2, C_4(1/2) = -285/128, a_4 + b_4 C_4 = 11/32.
  const auto k = rkg2_coeffs(4);
  EXPECT_NEAR(gegenbauer_c32(4, 0.5), -2.2265625, 1e-15);
  EXPECT_NEAR(rkg2_stability_poly(k, -2.0), 11.0 / 32, 1e-15);
}

TEST(ValidateConsistency, Rkg2Examples) {
  for (int s : {2, 10}) {
    const auto r = validate_consistency(rkg2_coeffs(s));
    EXPECT_TRUE(r.ok) << s;
    ASSERT_EQ(r.deviation.size(), 3u);
    for (double d : r.deviation) EXPECT_LT(d, 1e-7);
  }
}

TEST(ValidateConsistency, Rkg2AllSmallS) {
  for (int s = 2; s <= 100; ++s) EXPECT_TRUE(validate_consistency(rkg2_coeffs(s)).ok) << s;
}

TEST(ValidateConsistency, Rock4NineMatchesExpSeries) {
  const auto r = validate_consistency(rock4_coeffs(9));
  EXPECT_TRUE(r.ok);
  const double target[5] = {1, 1, 0.5, 1.0 / 6, 1.0 / 24};
  ASSERT_EQ(r.taylor.size(), 5u);
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(r.taylor[k], target[k], 1e-6);
}

TEST(ValidateConsistency, ReportsRatherThanThrows) {
  Rock4Coefficients broken = rock4_coeffs(9);
  broken.b[0] += 0.01;
  ConsistencyReport r;
  EXPECT_NO_THROW(r = validate_consistency(broken));
  EXPECT_FALSE(r.ok);
  EXPECT_GT(r.max_deviation, 1e-6);
}

TEST(ValidateConsistency, Rkg2DetectsPerturbation) {
  Rkg2Coefficients k = rkg2_coeffs(7);
  k.mu_tilde[3] *= 1.001;
  EXPECT_FALSE(validate_consistency(k).ok);
}

TEST(Rock4Coeffs, SupportedExamplesValidate) {
  for (int s : {5, 9, 54}) {
    const auto k = rock4_coeffs(s, true);
    EXPECT_EQ(k.substeps, s);
    EXPECT_TRUE(validate_consistency(k).ok) << s;
  }
}

TEST(Rock4Coeffs, DegreeSetSpansFiveTo152) {
  const auto& d = rock4_supported_degrees();
  EXPECT_EQ(d.front(), 5);
  EXPECT_EQ(d.back(), 152);
  EXPECT_TRUE(std::is_sorted(d.begin(), d.end()));
}

TEST(Rock4Coeffs, EveryDegreeConsistentAndStable) {
  for (int s : rock4_supported_degrees()) {
    const auto k = rock4_coeffs(s, true);
    EXPECT_TRUE(validate_consistency(k).ok) << s;
    EXPECT_GT(k.stability_extent, 0.2 * s * s) << s;
    for (int i = 1; i <= 200; ++i) {
      const double z = -k.stability_extent * i / 201.0;
      EXPECT_LE(std::abs(rock4_amplification(k, z)), 1 + 1e-8) << s << " " << z;
    }
  }
}

TEST(Rock4Coeffs, AmplificationFactorsAsW4TimesP) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int s : {5, 9, 33, 152}) {
    const auto k = rock4_coeffs(s);
    for (int i = 0; i < 50; ++i) {
      const std::complex<double> z(k.stability_extent * (u(rng) - 1) / 2, 2 * u(rng));
      const auto a = rock4_amplification(k, z), b = rock4_stability_poly(k, z);
      EXPECT_LE(std::abs(a - b), 1e-8 * std::max(1.0, std::abs(b))) << s;
    }
  }
}

TEST(Rock4Coeffs, UnsupportedDegreeRoundsUp) {
  const auto k = rock4_coeffs(41);
  EXPECT_EQ(k.requested, 41);
  EXPECT_EQ(k.substeps, 42);
}

TEST(Rock4Coeffs, StrictModeNamesNearestDegrees) {
  try {
    rock4_coeffs(41, true);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("40"), std::string::npos) << msg;
    EXPECT_NE(msg.find("42"), std::string::npos) << msg;
  }
}

TEST(Rock4Coeffs, OutOfRangeDegrees) {
  EXPECT_THROW(rock4_coeffs(4), ConfigError);
  EXPECT_THROW(rock4_coeffs(4, true), ConfigError);
  EXPECT_THROW(rock4_coeffs(153), ConfigError);
  try {
    rock4_coeffs(500, true);
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("152"), std::string::npos);
  }
}

TEST(Rock4Coeffs, AbscissaeEndpointsAndRange) {
  for (int s : rock4_supported_degrees())
    for (bool literal : {false, true}) {
      const auto c = stage_abscissae(rock4_coeffs(s), literal);
      ASSERT_EQ(static_cast<int>(c.size()), s + 1);
      EXPECT_EQ(c.front(), 0.0);
      EXPECT_NEAR(c.back(), 1.0, 1e-12) << s << " literal=" << literal;
      for (double cj : c) {
        EXPECT_GE(cj, -0.1) << s;
        EXPECT_LE(cj, 1.1) << s;
      }
    }
}

TEST(Rock4Coeffs, RepeatedCallsAreBitwiseIdentical) {
  const auto a = rock4_coeffs(61), b = rock4_coeffs(61);
  EXPECT_EQ(a.substeps, 64);
  EXPECT_EQ(a.mu, b.mu);
  EXPECT_EQ(a.kappa, b.kappa);
  EXPECT_EQ(a.a, b.a);
  EXPECT_EQ(a.b, b.b);
}

TEST(Rock4Table, ChecksumAndVersion) {
  EXPECT_EQ(detail::rock4_recomputed_checksum(), rock4_table_checksum());
  EXPECT_STREQ(rock4_table_version(), "rock4-table/1");
}

TEST(Rock4Coeffs, LiteralFinishingIsFourthOrderOnScalarProblems) {
  // The chain form reproduces w4 on linear problems, so the scalar test is consistent too.
  for (int s : {5, 9, 54}) {
    const auto k = rock4_coeffs(s);
    auto R = [&](std::complex<double> z) { return rock4_amplification(k, z, true); };
    const auto t = detail::taylor_coefficients(R, 5, 0.25, 128);
    const double target[5] = {1, 1, 0.5, 1.0 / 6, 1.0 / 24};
    for (int q = 0; q < 5; ++q) EXPECT_NEAR(t[q], target[q], 1e-6) << s;
  }
}
