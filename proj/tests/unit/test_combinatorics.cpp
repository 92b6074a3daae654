#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/multiprecision/cpp_dec_float.hpp>
#include <cmath>
#include <numbers>

#include "mfrate/combinatorics.hpp"
#include "mfrate/errors.hpp"

using namespace mfrate;
using Big = boost::multiprecision::cpp_dec_float_100;

namespace {

Big big_factorial(int n) {
  Big r = 1;
  for (int k = 2; k <= n; ++k) r *= k;
  return r;
}

// Explicit sum over k of (-1)^k C(n + alpha, n - k) x^k / k!, integer alpha.
Big laguerre_sum(int n, int alpha, int x) {
  Big s = 0;
  for (int k = 0; k <= n; ++k) {
    const Big binom = big_factorial(n + alpha) / (big_factorial(n - k) * big_factorial(alpha + k));
    Big term = binom * boost::multiprecision::pow(Big(x), k) / big_factorial(k);
    s += (k % 2 == 0) ? term : Big(-term);
  }
  return s;
}

Big coefficient_oracle(int n, int m) {
  const Big big_n = n;
  return boost::multiprecision::exp(-big_n / 2) * boost::multiprecision::pow(boost::multiprecision::sqrt(big_n), n - m - 1) *
         boost::multiprecision::sqrt(big_factorial(m) / big_factorial(n - 1)) * laguerre_sum(m, n - m - 1, n);
}

}  // namespace

TEST_CASE("d_N") {
  CHECK(log_dN(1) == doctest::Approx(0.5).epsilon(1e-15));
  for (int n : {2, 7, 20, 32, 33, 60, 150}) {
    const Big d = boost::multiprecision::sqrt(big_factorial(n)) /
                  (boost::multiprecision::pow(Big(n), Big(n) / 2) * boost::multiprecision::exp(-Big(n) / 2));
    const double expect = static_cast<double>(boost::multiprecision::log(d));
    CHECK(std::abs(log_dN(n) - expect) <= 1e-13 * std::max(1.0, std::abs(expect)));
  }
  // d_N ~ (2 pi N)^(1/4)
  const double stirling = 0.25 * std::log(2.0 * std::numbers::pi * 1e4);
  CHECK(std::exp(log_dN(10000) - stirling) == doctest::Approx(1.0).epsilon(1e-5));
  double prev = log_dN(1);
  for (int n = 2; n <= 1000000; n = n < 100 ? n + 1 : n * 2) {
    const double cur = log_dN(n);
    CHECK(cur > prev);
    prev = cur;
  }
  CHECK_THROWS_AS(log_dN(0), ConfigError);
}

TEST_CASE("Laguerre polynomials") {
  CHECK(laguerre_assoc(0, 3.0, 2.0) == 1.0);
  CHECK(laguerre_assoc(1, 3.0, 2.0) == doctest::Approx(2.0));
  for (int n : {3, 9, 17}) {
    for (int alpha : {0, 4, 12}) {
      for (int x : {1, 10, 30}) {
        const double expect = static_cast<double>(laguerre_sum(n, alpha, x));
        CHECK(std::abs(laguerre_assoc(n, alpha, x) - expect) <= 1e-10 * std::max(1.0, std::abs(expect)));
        const ScaledValue s = laguerre_assoc_scaled(n, alpha, x);
        CHECK(std::abs(s.value() - expect) <= 1e-10 * std::max(1.0, std::abs(expect)));
      }
    }
  }
  // L_n^(alpha)(0) = C(n + alpha, n), far beyond double range here.
  const ScaledValue huge = laguerre_assoc_scaled(600, 1400.0, 0.0);
  const double log_binom = std::lgamma(2001.0) - std::lgamma(601.0) - std::lgamma(1401.0);
  CHECK(huge.sign == 1);
  CHECK(huge.log_abs == doctest::Approx(log_binom).epsilon(1e-12));
}

TEST_CASE("coefficients A_m") {
  for (int n : {1, 2, 5, 12, 30}) {
    const CoefficientTable t = a_coeffs(n);
    CHECK(std::exp(t.log_abs[0]) == doctest::Approx(std::exp(-log_dN(n))).epsilon(1e-14));
    for (int m = 0; m < n; ++m) {
      const double expect = static_cast<double>(coefficient_oracle(n, m));
      CHECK(std::abs(t.value(m) - expect) <= 1e-11 * std::max(std::abs(expect), 1e-3));
    }
    CHECK(t.total_mass() <= 1.0);
    for (std::size_t i = 1; i < t.sum_sq.size(); ++i) CHECK(t.sum_sq[i] >= t.sum_sq[i - 1]);
  }
  CHECK_THROWS_AS(a_coeffs(3).value(3), ConfigError);
  CHECK_THROWS_AS(a_coeffs(0), ConfigError);
}

TEST_CASE("mass and weighted sums") {
  const WeightedSum one = weighted_sum(1);
  CHECK(one.value == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  for (int n : {10, 100, 1000, 10000}) {
    const CoefficientTable t = a_coeffs(n);
    CHECK(t.total_mass() <= 1.0 + 1e-12);
    const WeightedSum w = weighted_sum(n);
    CHECK(w.tail_bound >= -1e-12);
    CHECK(std::isfinite(w.scaled));
  }
  const CoefficientTable big = a_coeffs(5000);
  for (int m : {0, 1000, 2500, 4999}) CHECK(std::isfinite(big.log_abs[static_cast<std::size_t>(m)]));
}

TEST_CASE("Krasikov bound") {
  for (int n : {10, 50, 200}) {
    for (int m = 1; m < n; ++m) CHECK(krasikov_check(n, m).ok);
  }
  // |A_m| < C N^(-1/4) m^(-1/4) with C = 2 on the same grid.
  double worst = 0.0;
  for (int n : {10, 50, 200}) {
    const CoefficientTable t = a_coeffs(n);
    for (int m = 1; m < n; ++m) worst = std::max(worst, std::abs(t.value(m)) * std::pow(double(n) * m, 0.25));
  }
  CHECK(worst < 2.0);
  const KrasikovCheck far = krasikov_check(1000000, 500000);
  CHECK(std::isfinite(far.log_value));
  CHECK(far.ok);
  CHECK_THROWS_AS(krasikov_check(10, 10), ConfigError);
  CHECK_THROWS_AS(krasikov_check(10, 0), ConfigError);
  CHECK_THROWS_AS(krasikov_log_bound(4, 1.0, 100.0), ConfigError);
}
