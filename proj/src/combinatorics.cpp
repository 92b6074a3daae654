#include "mfrate/combinatorics.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mfrate/errors.hpp"

namespace mfrate {

namespace {

constexpr long double kRescaleAbove = 1e300L;

}  // namespace

double log_dN(int n) {
  if (n < 1) throw ConfigError("log_dN: N must be >= 1, got " + std::to_string(n));
  const double x = n;
  if (n <= 32) return 0.5 * std::lgamma(x + 1.0) - 0.5 * x * std::log(x) + 0.5 * x;
  // Stirling series of lgamma(N + 1) with the N ln N - N part cancelled
  // analytically; avoids losing digits to the cancellation for large N.
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)));
  return 0.25 * std::log(2.0 * std::numbers::pi * x) + 0.5 * series;
}

double laguerre_assoc(int n, double alpha, double x) {
  if (n < 0) throw ConfigError("laguerre_assoc: n must be >= 0");
  long double prev = 1.0L;
  if (n == 0) return 1.0;
  long double cur = 1.0L + alpha - x;
  for (int k = 1; k < n; ++k) {
    const long double next = ((2.0L * k + 1.0L + alpha - x) * cur - (k + static_cast<long double>(alpha)) * prev) / (k + 1.0L);
    prev = cur;
    cur = next;
  }
  return static_cast<double>(cur);
}

double ScaledValue::value() const { return sign == 0 ? 0.0 : sign * std::exp(log_abs); }

ScaledValue laguerre_assoc_scaled(int n, double alpha, double x) {
  if (n < 0) throw ConfigError("laguerre_assoc_scaled: n must be >= 0");
  long double prev = 1.0L;
  long double cur = n == 0 ? 1.0L : 1.0L + alpha - x;
  long double log_scale = 0.0L;
  for (int k = 1; k < n; ++k) {
    const long double next = ((2.0L * k + 1.0L + alpha - x) * cur - (k + static_cast<long double>(alpha)) * prev) / (k + 1.0L);
    prev = cur;
    cur = next;
    const long double mag = std::fabs(cur);
    if (mag > kRescaleAbove) {
      prev /= mag;
      cur /= mag;
      log_scale += std::log(mag);
    }
  }
  ScaledValue out;
  if (cur == 0.0L) {
    out.sign = 0;
    out.log_abs = -std::numeric_limits<double>::infinity();
    return out;
  }
  out.sign = cur > 0 ? 1 : -1;
  out.log_abs = static_cast<double>(std::log(std::fabs(cur)) + log_scale);
  return out;
}

double CoefficientTable::value(int m) const {
  if (m < 0 || m >= n) throw ConfigError("CoefficientTable::value: m out of range");
  const auto i = static_cast<std::size_t>(m);
  return sign[i] == 0 ? 0.0 : sign[i] * std::exp(log_abs[i]);
}

CoefficientTable a_coeffs(int n) {
  if (n < 1) throw ConfigError("a_coeffs: N must be >= 1");
  CoefficientTable t;
  t.n = n;
  const auto count = static_cast<std::size_t>(n);
  t.log_abs.resize(count);
  t.sign.resize(count);
  t.sum_sq.resize(count);
  t.sum_weighted.resize(count);
  const double big_n = n;
  const double log_n = std::log(big_n);
  const double base = -log_dN(n);  // ln A_0
  double sq = 0.0;
  double weighted = 0.0;
  for (int m = 0; m < n; ++m) {
    const auto i = static_cast<std::size_t>(m);
    const ScaledValue l = laguerre_assoc_scaled(m, big_n - m - 1.0, big_n);
    t.log_abs[i] = base - 0.5 * m * log_n + 0.5 * std::lgamma(m + 1.0) + l.log_abs;
    t.sign[i] = l.sign;
    const double a2 = l.sign == 0 ? 0.0 : std::exp(2.0 * t.log_abs[i]);
    sq += a2;
    weighted += a2 / (m + 1.0);
    t.sum_sq[i] = sq;
    t.sum_weighted[i] = weighted;
  }
  return t;
}

double krasikov_log_bound(int n, double alpha, double x) {
  if (n < 0) throw ConfigError("krasikov_log_bound: n must be >= 0");
  const double s = std::sqrt(n + alpha + 1.0) + std::sqrt(static_cast<double>(n));
  const double q = std::sqrt(n + alpha + 1.0) - std::sqrt(static_cast<double>(n));
  if (!(x > q * q && x < s * s)) {
    throw ConfigError("krasikov_log_bound: x = " + std::to_string(x) + " outside the window (" +
                      std::to_string(q * q) + ", " + std::to_string(s * s) + ")");
  }
  const double r = (x - q * q) * (s * s - x);
  return 0.5 * (std::lgamma(n + alpha + 1.0) - std::lgamma(n + 1.0)) + 0.5 * std::log(x * (s * s - q * q) / r) +
         0.5 * x - 0.5 * (alpha + 1.0) * std::log(x);
}

KrasikovCheck krasikov_check(int n_particles, int m) {
  if (m < 1 || m > n_particles - 1) {
    throw ConfigError("krasikov_check: need 1 <= m <= N - 1, got m = " + std::to_string(m) +
                      ", N = " + std::to_string(n_particles));
  }
  const double alpha = n_particles - m - 1.0;
  const double x = n_particles;
  KrasikovCheck c;
  c.log_bound = krasikov_log_bound(m, alpha, x);
  c.log_value = laguerre_assoc_scaled(m, alpha, x).log_abs;
  c.ok = c.log_value < c.log_bound;
  return c;
}

WeightedSum weighted_sum(int n) {
  const CoefficientTable t = a_coeffs(n);
  WeightedSum w;
  w.value = t.sum_weighted.back();
  w.tail_bound = (1.0 - t.total_mass()) / n;
  w.scaled = std::sqrt(static_cast<double>(n)) * w.value;
  return w;
}

}  // namespace mfrate
