#pragma once

/**
 * Prompt-dependency measures.
 *
 * A PDM compares the next-token distribution with the visual context against
 * the one without it. PDM-H uses the Hellinger distance; PDM-R is the rank of
 * the conditioned argmax under the unconditioned distribution. The decay
 * estimator fits ln(value) = intercept - lambda * t by least squares.
 */

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <sstream>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gdec/error.hpp"
#include "gdec/logit_source.hpp"
#include "gdec/numeric.hpp"
#include "gdec/trace.hpp"

namespace gdec {

enum class DistanceKind { hellinger, total_variation, kl };

inline std::string_view to_string(DistanceKind k) {
  switch (k) {
    case DistanceKind::hellinger: return "hellinger";
    case DistanceKind::total_variation: return "total_variation";
    case DistanceKind::kl: return "kl";
  }
  return "?";
}

inline constexpr double kDistributionTol = 1e-6;

// KL is directed: KL(p || q).
inline double distance(std::span<const double> p, std::span<const double> q, DistanceKind kind) {
  if (p.size() != q.size()) throw DomainError("distance: length mismatch");
  require_distribution(p, kDistributionTol, "distance p");
  require_distribution(q, kDistributionTol, "distance q");
  switch (kind) {
    case DistanceKind::hellinger: {
      double s = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = std::sqrt(p[i]) - std::sqrt(q[i]);
        s += d * d;
      }
      return std::min(1.0, std::sqrt(0.5 * s));
    }
    case DistanceKind::total_variation: {
      double s = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
      return std::min(1.0, 0.5 * s);
    }
    case DistanceKind::kl: {
      double s = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        if (q[i] == 0.0) return kPosInf;
        s += p[i] * std::log(p[i] / q[i]);
      }
      return std::max(0.0, s);
    }
  }
  return 0.0;
}

inline double pdm(const LogitFrame& f, DistanceKind kind) {
  return distance(softmax(f.conditioned), softmax(f.unconditioned), kind);
}

inline double pdm_h(const LogitFrame& f) { return pdm(f, DistanceKind::hellinger); }

// Lowest index among the maximal entries.
inline std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline std::int64_t pdm_r(const LogitFrame& f) {
  const std::size_t top = argmax_lowest(f.conditioned);
  const double ref = f.unconditioned[top];
  std::int64_t rank = 1;
  for (std::size_t i = 0; i < f.unconditioned.size(); ++i) {
    const double u = f.unconditioned[i];
    if (u > ref || (u == ref && i < top)) ++rank;
  }
  return rank;
}

struct SeriesEntry {
  std::int64_t t = 0;
  double value = 0.0;
  std::size_t n = 1;  // number of traces contributing

  bool operator==(const SeriesEntry&) const = default;
};

struct PdmSeries {
  std::string kind = "hellinger";  // a DistanceKind name or "rank"
  std::vector<SeriesEntry> entries;
};

struct DecayFit {
  double lambda_hat = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

inline DecayFit estimate_decay_rate(const PdmSeries& series) {
  const auto& e = series.entries;
  if (e.size() < 8)
    throw InsufficientData("decay estimation needs >= 8 points, got " + std::to_string(e.size()));
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (!(e[i].value > 0.0) || !std::isfinite(e[i].value))
      throw DomainError("series value at index " + std::to_string(i) + " (t=" + std::to_string(e[i].t) +
                        ") is not positive");
    if (i > 0 && e[i].t <= e[i - 1].t) throw DomainError("series t must be strictly increasing");
  }
  const double n = static_cast<double>(e.size());
  double mx = 0.0, my = 0.0;
  for (const auto& s : e) {
    mx += static_cast<double>(s.t);
    my += std::log(s.value);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& s : e) {
    const double dx = static_cast<double>(s.t) - mx;
    const double dy = std::log(s.value) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  const double slope = sxy / sxx;
  DecayFit fit;
  fit.lambda_hat = slope == 0.0 ? 0.0 : -slope;
  fit.intercept = my - slope * mx;
  if (syy == 0.0) {
    fit.r_squared = 1.0;
  } else {
    double ss_res = 0.0;
    for (const auto& s : e) {
      const double r = std::log(s.value) - (fit.intercept + slope * static_cast<double>(s.t));
      ss_res += r * r;
    }
    fit.r_squared = 1.0 - ss_res / syy;
  }
  return fit;
}

enum class SeriesKind { hellinger, rank };

inline PdmSeries trace_series(const GenerationTrace& trace, SeriesKind kind) {
  if (trace.steps.empty()) throw DegenerateInput("trace has no steps");
  PdmSeries s;
  s.kind = kind == SeriesKind::rank ? "rank" : "hellinger";
  for (const auto& st : trace.steps)
    s.entries.push_back({st.t, kind == SeriesKind::rank ? static_cast<double>(st.pdm_r) : st.pdm_h, 1});
  return s;
}

inline constexpr double kMinCoverage = 0.25;

// Averages series by t. Positions reached by fewer than 25% of the inputs are
// dropped.
inline PdmSeries aggregate_series(std::span<const PdmSeries> all) {
  PdmSeries out;
  if (all.empty()) return out;
  out.kind = all.front().kind;
  std::map<std::int64_t, std::pair<double, std::size_t>> acc;
  for (const auto& s : all) {
    if (s.kind != out.kind) throw DataError("cannot aggregate series of different kinds");
    for (const auto& e : s.entries) {
      auto& a = acc[e.t];
      a.first += e.value;
      a.second += 1;
    }
  }
  const double need = kMinCoverage * static_cast<double>(all.size());
  for (const auto& [t, a] : acc) {
    if (static_cast<double>(a.second) < need) continue;
    out.entries.push_back({t, a.first / static_cast<double>(a.second), a.second});
  }
  return out;
}

inline PdmSeries window(const PdmSeries& s, std::int64_t t_min, std::int64_t t_max) {
  PdmSeries out;
  out.kind = s.kind;
  for (const auto& e : s.entries)
    if (e.t >= t_min && e.t <= t_max) out.entries.push_back(e);
  return out;
}

inline void write_series_csv(std::ostream& os, const PdmSeries& s) {
  os << "t,value,kind,n\n";
  char buf[64];
  for (const auto& e : s.entries) {
    std::snprintf(buf, sizeof buf, "%.17g", e.value);
    os << e.t << ',' << buf << ',' << s.kind << ',' << e.n << '\n';
  }
}

inline PdmSeries read_series_csv(std::istream& is) {
  PdmSeries s;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1) {
      if (line != "t,value,kind,n") throw DataError("series CSV header must be 't,value,kind,n'");
      continue;
    }
    std::stringstream ss(line);
    std::string t, v, kind, n;
    if (!std::getline(ss, t, ',') || !std::getline(ss, v, ',') || !std::getline(ss, kind, ',') ||
        !std::getline(ss, n, ','))
      throw DataError("series CSV line " + std::to_string(lineno) + " has fewer than 4 fields");
    try {
      s.entries.push_back({std::stoll(t), std::stod(v), static_cast<std::size_t>(std::stoull(n))});
    } catch (const std::exception&) {
      throw DataError("series CSV line " + std::to_string(lineno) + " is not numeric");
    }
    s.kind = kind;
  }
  return s;
}

}  // namespace gdec
