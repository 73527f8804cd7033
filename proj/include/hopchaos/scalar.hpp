#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>

namespace hopchaos {

/// log(cosh(x)) without overflow or cancellation. Even, nonnegative, and
/// bounded above by x^2/2.
inline double log_cosh(double x) noexcept {
  const double a = std::fabs(x);
  if (a <= 1.0) {
    // cosh(x) - 1 = 2 sinh^2(x/2)
    const double s = std::sinh(0.5 * a);
    return std::log1p(2.0 * s * s);
  }
  return a - std::numbers::ln2 + std::log1p(std::exp(-2.0 * a));
}

/// Remainder of the quadratic approximation, log cosh(t) - t^2/2 (always <= 0).
inline double log_cosh_remainder(double t) noexcept { return log_cosh(t) - 0.5 * t * t; }

inline double log_sum_exp(std::span<const double> values) noexcept {
  double peak = -std::numeric_limits<double>::infinity();
  for (double v : values) peak = std::max(peak, v);
  if (!std::isfinite(peak)) return peak;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - peak);
  return peak + std::log(sum);
}

/// psi(x, y) = log(cosh(x + y) / (cosh x cosh y)) = log1p(tanh x tanh y).
/// When the product approaches -1 the signs differ and
/// 1 + tanh x tanh y = a + b - ab with a = 1 - |tanh x|, b = 1 - |tanh y|,
/// which avoids the cancellation.
inline double psi(double x, double y) noexcept {
  const double t = std::tanh(x) * std::tanh(y);
  if (t > -0.5) return std::log1p(t);
  auto one_minus_abs_tanh = [](double v) {
    const double e = std::exp(-2.0 * std::fabs(v));
    return 2.0 * e / (1.0 + e);
  };
  const double a = one_minus_abs_tanh(x);
  const double b = one_minus_abs_tanh(y);
  return std::log(a + b - a * b);
}

/// theta_p(x_1..x_p) = log cosh(sum x_a) - sum log cosh(x_a).
inline double theta_p(std::span<const double> xs) {
  if (xs.size() < 2) throw std::invalid_argument("theta_p: needs at least two arguments");
  double total = 0.0;
  double separate = 0.0;
  for (double x : xs) {
    total += x;
    separate += log_cosh(x);
  }
  return log_cosh(total) - separate;
}

/// KL(Bernoulli with mean tanh h || uniform sign) in closed form.
inline double tilted_kl(double h) noexcept {
  if (h == 0.0) return 0.0;
  return h * std::tanh(h) - log_cosh(h);
}

/// log of the symmetric binomial pmf P(sum of n Rademachers = 2j - n).
inline double log_symmetric_binomial(std::size_t n, std::size_t j) noexcept {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(j) + 1.0) -
         std::lgamma(static_cast<double>(n - j) + 1.0) - static_cast<double>(n) * std::numbers::ln2;
}

}  // namespace hopchaos
