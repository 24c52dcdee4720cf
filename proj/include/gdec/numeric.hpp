#pragma once

// Log-space helpers shared by every module. All logarithms are natural.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "gdec/error.hpp"

namespace gdec {

using LogProbs = std::vector<double>;
using Probs = std::vector<double>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

inline double max_finite(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v)
    if (x > m) m = x;
  return m;
}

inline bool has_finite(std::span<const double> v) {
  return std::any_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// log(sum(exp(v))); -inf when every entry is -inf.
inline double logsumexp(std::span<const double> v) {
  const double m = max_finite(v);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v)
    if (x != kNegInf) s += std::exp(x - m);
  return m + std::log(s);
}

inline Probs softmax(std::span<const double> scores) {
  const double m = max_finite(scores);
  if (m == kNegInf) throw DegenerateInput("softmax over all -inf scores");
  Probs p(scores.size(), 0.0);
  double s = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] == kNegInf) continue;
    p[i] = std::exp(scores[i] - m);
    s += p[i];
  }
  for (double& x : p) x /= s;
  return p;
}

// Shifts scores so that logsumexp == 0.
inline LogProbs log_normalize(std::span<const double> scores) {
  const double z = logsumexp(scores);
  if (z == kNegInf) throw DegenerateInput("cannot normalize all -inf scores");
  LogProbs out(scores.begin(), scores.end());
  for (double& x : out)
    if (x != kNegInf) x -= z;
  return out;
}

inline LogProbs log_of(std::span<const double> probs) {
  LogProbs out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i)
    out[i] = probs[i] > 0.0 ? std::log(probs[i]) : kNegInf;
  return out;
}

// Throws DomainError unless entries are non-negative and sum to 1 within tol.
inline void require_distribution(std::span<const double> p, double tol, const char* what) {
  double s = 0.0;
  for (double x : p) {
    if (!(x >= 0.0) || !std::isfinite(x))
      throw DomainError(std::string(what) + ": entry outside [0, inf)");
    s += x;
  }
  if (std::abs(s - 1.0) > tol)
    throw DomainError(std::string(what) + ": not normalized (sum = " + std::to_string(s) + ")");
}

}  // namespace gdec
