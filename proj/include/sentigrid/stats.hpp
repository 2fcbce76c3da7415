#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

#include "sentigrid/types.hpp"

namespace sentigrid::stats {

namespace detail {

// ln Gamma(x) for x > 0 (Lanczos, g=7).
inline double log_gamma(double x) {
  static constexpr double kCoef[9] = {
      0.99999999999980993,  676.5203681218851,   -1259.1392167224028,
      771.32342877765313,   -176.61502916214059, 12.507343278686905,
      -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
  if (x < 0.5) {
    // Reflection keeps the series in its accurate range.
    return std::log(M_PI / std::sin(M_PI * x)) - log_gamma(1.0 - x);
  }
  x -= 1.0;
  double a = kCoef[0];
  double t = x + 7.5;
  for (int i = 1; i < 9; ++i) {
    a += kCoef[i] / (x + i);
  }
  return 0.5 * std::log(2.0 * M_PI) + (x + 0.5) * std::log(t) - t + std::log(a);
}

// Lower regularized incomplete gamma P(a,x) by series, for x < a+1.
inline double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - log_gamma(a));
}

// Upper regularized incomplete gamma Q(a,x) by continued fraction
// (modified Lentz), for x >= a+1.
inline double gamma_q_cf(double a, double x) {
  const double kTiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - log_gamma(a)) * h;
}

}  // namespace detail

/// Upper regularized incomplete gamma Q(a, x) = Gamma(a,x)/Gamma(a).
inline double regularized_gamma_upper(double a, double x) {
  if (!(a > 0.0) || x < 0.0 || !std::isfinite(x)) {
    throw InternalError("regularized_gamma_upper: domain error");
  }
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_cf(a, x);
}

/// Upper-tail p-value of a chi-square statistic with `df` degrees of freedom.
inline double chi_square_upper_p(double statistic, int df = 1) {
  if (df < 1) throw InternalError("chi_square_upper_p: df < 1");
  if (statistic <= 0.0) return 1.0;
  return regularized_gamma_upper(0.5 * df, 0.5 * statistic);
}

/// Two-sided p-value of a z statistic under the standard normal.
inline double normal_two_sided_p(double z) {
  return std::erfc(std::fabs(z) / std::sqrt(2.0));
}

struct Correlation {
  double r = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n = 0;
};

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ValidationError("pearson: need two equal-length series of size >= 2");
  }
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    throw ValidationError("pearson: undefined correlation (zero variance)");
  }
  double r = sxy / std::sqrt(sxx * syy);
  if (r > 1.0) r = 1.0;
  if (r < -1.0) r = -1.0;
  return r;
}

/// Pearson r with a 95% CI from the Fisher z transform:
/// z = atanh(r), half-width 1.96/sqrt(n-3), back-transformed with tanh.
inline Correlation pearson_with_fisher_ci(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 4) throw ValidationError("pearson_with_fisher_ci: need n >= 4");
  Correlation out;
  out.n = x.size();
  out.r = pearson(x, y);
  if (out.r >= 1.0 || out.r <= -1.0) {
    out.ci_low = out.ci_high = out.r;
    return out;
  }
  const double z = std::atanh(out.r);
  const double hw = 1.96 / std::sqrt(static_cast<double>(out.n) - 3.0);
  out.ci_low = std::tanh(z - hw);
  out.ci_high = std::tanh(z + hw);
  return out;
}

/// CI for a given r and n without the data (used when r is already known).
inline Correlation fisher_ci(double r, std::size_t n) {
  if (n < 4) throw ValidationError("fisher_ci: need n >= 4");
  Correlation out;
  out.r = r;
  out.n = n;
  if (r >= 1.0 || r <= -1.0) {
    out.ci_low = out.ci_high = r;
    return out;
  }
  const double z = std::atanh(r);
  const double hw = 1.96 / std::sqrt(static_cast<double>(n) - 3.0);
  out.ci_low = std::tanh(z - hw);
  out.ci_high = std::tanh(z + hw);
  return out;
}

}  // namespace sentigrid::stats
