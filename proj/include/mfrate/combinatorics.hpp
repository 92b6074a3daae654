#pragma once

#include <vector>

namespace mfrate {

// ln d_N with d_N = sqrt(N!) / (N^(N/2) e^(-N/2)).
double log_dN(int n);

/// L_n^(alpha)(x) by the three-term recurrence in n (long double internally).
double laguerre_assoc(int n, double alpha, double x);

/// Signed value sign * exp(log_abs); used where L_n^(alpha)(x) overflows a double.
struct ScaledValue {
  double log_abs = 0.0;
  int sign = 1;  // 0 for an exact zero

  double value() const;
};

ScaledValue laguerre_assoc_scaled(int n, double alpha, double x);

/// A_m = e^(-N/2) sqrt(N)^(N-m-1) sqrt(m!/(N-1)!) L_m^(N-m-1)(N) for 0 <= m < N.
struct CoefficientTable {
  int n = 1;
  std::vector<double> log_abs;
  std::vector<int> sign;
  std::vector<double> sum_sq;        // prefix sums of |A_m|^2
  std::vector<double> sum_weighted;  // prefix sums of |A_m|^2 / (m + 1)

  double value(int m) const;
  double total_mass() const { return sum_sq.back(); }
};

CoefficientTable a_coeffs(int n);

/// Krasikov's bound for |L_n^(alpha)(x)| on the oscillatory window q^2 < x < s^2.
double krasikov_log_bound(int n, double alpha, double x);

struct KrasikovCheck {
  double log_bound = 0.0;
  double log_value = 0.0;
  bool ok = false;  // strict inequality
};

// n = m, alpha = N - m - 1, x = N; requires 1 <= m <= N - 1.
KrasikovCheck krasikov_check(int n_particles, int m);

struct WeightedSum {
  double value = 0.0;       // sum_{m<N} |A_m|^2 / (m + 1)
  double tail_bound = 0.0;  // (1/N)(1 - sum_{m<N} |A_m|^2)
  double scaled = 0.0;      // sqrt(N) * value
};

WeightedSum weighted_sum(int n);

}  // namespace mfrate
