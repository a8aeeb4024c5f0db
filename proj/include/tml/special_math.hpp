#pragma once

// Special functions and closed-form quantities for the Beta family.

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

#include "tml/random.hpp"

namespace tml {

/// Shape pair (a, b) of a Beta distribution on [0, 1].
struct BetaParams {
  double a = 1.0;
  double b = 1.0;

  BetaParams() = default;
  BetaParams(double a_, double b_) : a(a_), b(b_) {
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
      throw std::domain_error("BetaParams: shapes must be finite and positive, got (" +
                              std::to_string(a) + ", " + std::to_string(b) + ")");
    }
  }

  /// Beta with mean r and total concentration c, i.e. (c r, c (1 - r)).
  static BetaParams from_mean(double r, double c) { return {c * r, c * (1.0 - r)}; }

  friend bool operator==(const BetaParams&, const BetaParams&) = default;
};

namespace detail {

inline void require_positive(double x, const char* fn) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw std::domain_error(std::string(fn) + ": argument must be finite and > 0");
  }
}

// Lanczos approximation, g = 7, n = 9.
inline constexpr std::array<double, 9> kLanczos = {
    0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
    771.32342877765313,   -176.61502916214059,   12.507343278686905,
    -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};

}  // namespace detail

/// ln Gamma(x) for x > 0.
inline double log_gamma(double x) {
  detail::require_positive(x, "log_gamma");
  if (x < 0.5) return log_gamma(x + 1.0) - std::log(x);
  const double z = x - 1.0;
  double acc = detail::kLanczos[0];
  for (std::size_t i = 1; i < detail::kLanczos.size(); ++i) {
    acc += detail::kLanczos[i] / (z + static_cast<double>(i));
  }
  const double t = z + 7.5;
  return 0.5 * std::log(2.0 * std::numbers::pi) + (z + 0.5) * std::log(t) - t + std::log(acc);
}

/// ln B(a, b) = ln Gamma(a) + ln Gamma(b) - ln Gamma(a + b).
inline double log_beta_fn(double a, double b) {
  detail::require_positive(a, "log_beta_fn");
  detail::require_positive(b, "log_beta_fn");
  return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

/// Digamma by upward recurrence to x >= 10, then the asymptotic series.
inline double digamma(double x) {
  detail::require_positive(x, "digamma");
  double shift = 0.0;
  while (x < 10.0) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli terms B_2k / (2k x^2k), k = 1..6.
  const double series =
      inv2 * (1.0 / 12 -
              inv2 * (1.0 / 120 -
                      inv2 * (1.0 / 252 -
                              inv2 * (1.0 / 240 - inv2 * (1.0 / 132 - inv2 * (691.0 / 32760))))));
  return shift + std::log(x) - 0.5 * inv - series;
}

/// Log density of Beta(p.a, p.b) at an interior point.
inline double beta_log_pdf(double x, const BetaParams& p) {
  if (!(x > 0.0 && x < 1.0)) {
    throw std::domain_error("beta_log_pdf: x must lie in the open interval (0, 1)");
  }
  return (p.a - 1.0) * std::log(x) + (p.b - 1.0) * std::log1p(-x) - log_beta_fn(p.a, p.b);
}

struct MeanVar {
  double mean;
  double var;
};

inline MeanVar beta_mean_var(const BetaParams& p) {
  const double s = p.a + p.b;
  return {p.a / s, p.a * p.b / (s * s * (s + 1.0))};
}

/// KL(Beta(p) || Beta(q)) in nats.
inline double kl_beta_beta(const BetaParams& p, const BetaParams& q) {
  if (p == q) return 0.0;
  const double psi_sum = digamma(p.a + p.b);
  return log_beta_fn(q.a, q.b) - log_beta_fn(p.a, p.b) + (p.a - q.a) * digamma(p.a) +
         (p.b - q.b) * digamma(p.b) + (q.a - p.a + q.b - p.b) * psi_sum;
}

/// log of a Gamma(shape, 1) draw (Marsaglia-Tsang). Working in logs keeps
/// shapes far below 1 from underflowing to zero.
inline double sample_log_gamma(double shape, Rng& rng) {
  if (shape < 1.0) {
    // G(a) = G(a + 1) U^(1/a)
    const double log_u = std::log(rng.uniform());
    return sample_log_gamma(shape + 1.0, rng) + log_u / shape;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return std::log(d * v);
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return std::log(d * v);
  }
}

/// Beta draw as X / (X + Y) with X, Y Gamma; clipped into the open unit interval.
inline double sample_beta(const BetaParams& p, Rng& rng) {
  const double lx = sample_log_gamma(p.a, rng);
  const double ly = sample_log_gamma(p.b, rng);
  const double x = 1.0 / (1.0 + std::exp(ly - lx));
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  return x < lo ? lo : (x > hi ? hi : x);
}

/// Numerically stable log(exp(a) + exp(b)).
inline double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

/// ln C(n, k) via log-gamma.
inline double log_binomial(int n, int k) {
  if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
  if (k == 0 || k == n) return 0.0;
  return log_gamma(n + 1.0) - log_gamma(k + 1.0) - log_gamma(n - k + 1.0);
}

}  // namespace tml
