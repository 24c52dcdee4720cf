#pragma once

// Reference formulas for tests. Written directly from the definitions in
// long double and kept independent of the library's code paths.

#include <cmath>
#include <random>
#include <vector>

namespace oracle {

using ld = long double;

inline std::vector<double> logs(std::initializer_list<double> p) {
  std::vector<double> out;
  for (double x : p) out.push_back(std::log(x));
  return out;
}

inline ld hellinger(const std::vector<double>& p, const std::vector<double>& q) {
  ld s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const ld d = std::sqrt(static_cast<ld>(p[i])) - std::sqrt(static_cast<ld>(q[i]));
    s += d * d;
  }
  return std::sqrt(s) / std::sqrt(static_cast<ld>(2));
}

inline ld total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  ld s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs(static_cast<ld>(p[i]) - q[i]);
  return s / 2;
}

inline ld kl(const std::vector<double>& p, const std::vector<double>& q) {
  ld s = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) s += static_cast<ld>(p[i]) * std::log(static_cast<ld>(p[i]) / q[i]);
  return s;
}

// l_c + 1[max l_c < ln a] (1 - g)/g (l_c - l_u), no clamp or cap.
inline std::vector<double> m3id(const std::vector<double>& lc, const std::vector<double>& lu, long t, double alpha,
                                double lambda, long t0) {
  ld mx = -INFINITY;
  for (double x : lc) mx = std::max<ld>(mx, x);
  const bool gate = mx < std::log(static_cast<ld>(alpha));
  const ld g = std::exp(-static_cast<ld>(lambda) * (t + t0));
  std::vector<double> out(lc.size());
  for (std::size_t i = 0; i < lc.size(); ++i)
    out[i] = static_cast<double>(gate ? lc[i] + (1 - g) / g * (static_cast<ld>(lc[i]) - lu[i]) : lc[i]);
  return out;
}

inline ld dpo_loss(ld tw, ld rw, ld tl, ld rl, ld beta) {
  const ld m = beta * ((tw - rw) - (tl - rl));
  return std::log1p(std::exp(-m));
}

// Random probability vector of length n (Dirichlet(1) via exponentials),
// optionally with some exact zeros.
inline std::vector<double> random_distribution(std::mt19937_64& gen, std::size_t n, bool zeros = false) {
  std::exponential_distribution<double> e(1.0);
  std::bernoulli_distribution z(0.2);
  std::vector<double> p(n);
  double s = 0;
  for (auto& x : p) {
    x = zeros && z(gen) ? 0.0 : e(gen);
    s += x;
  }
  if (s == 0) {
    p[0] = 1;
    s = 1;
  }
  for (auto& x : p) x /= s;
  return p;
}

}  // namespace oracle
