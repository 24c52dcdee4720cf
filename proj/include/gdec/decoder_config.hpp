#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "gdec/error.hpp"
#include "gdec/numeric.hpp"

namespace gdec {

enum class DecoderKind { greedy, multinomial, m3id, pmi, contrastive };

inline std::string_view to_string(DecoderKind k) {
  switch (k) {
    case DecoderKind::greedy: return "greedy";
    case DecoderKind::multinomial: return "multinomial";
    case DecoderKind::m3id: return "m3id";
    case DecoderKind::pmi: return "pmi";
    case DecoderKind::contrastive: return "contrastive";
  }
  return "?";
}

inline DecoderKind parse_decoder_kind(std::string_view s) {
  for (auto k : {DecoderKind::greedy, DecoderKind::multinomial, DecoderKind::m3id, DecoderKind::pmi,
                 DecoderKind::contrastive})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown decoder kind '" + std::string(s) + "'");
}

struct DecoderConfig {
  DecoderKind kind = DecoderKind::greedy;
  double alpha = 0.3;        // gate threshold on the top conditioned probability
  double lambda = 0.02;      // forgetting rate per token
  std::int64_t t0 = 0;       // schedule offset in tokens
  double mu = 1.0;           // PMI weight
  double tau = 1.0;          // PMI entropy threshold (nats)
  double xi = 0.5;           // contrastive amplification
  double psi = 0.1;          // plausibility fraction
  double temperature = 0.2;
  std::uint64_t seed = 0;
  std::int64_t max_tokens = 512;
  double diff_clamp = 20.0;  // +inf disables the clamp
  double coef_cap = kPosInf; // +inf means unbounded

  bool operator==(const DecoderConfig&) const = default;
};

// Range checks apply to every field regardless of kind.
inline void validate(const DecoderConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) fail("alpha must lie in [0, 1]");
  if (!(c.lambda >= 0.0) || !std::isfinite(c.lambda)) fail("lambda must be a finite value >= 0");
  if (c.t0 < 0) fail("t0 must be >= 0");
  if (!(c.mu >= 0.0) || !std::isfinite(c.mu)) fail("mu must be >= 0");
  if (!(c.tau >= 0.0)) fail("tau must be >= 0");
  if (!(c.xi >= 0.0) || !std::isfinite(c.xi)) fail("xi must be >= 0");
  if (!(c.psi > 0.0 && c.psi <= 1.0)) fail("psi must lie in (0, 1]");
  if (!(c.temperature > 0.0) || !std::isfinite(c.temperature)) fail("temperature must be > 0");
  if (c.max_tokens <= 0) fail("max_tokens must be positive");
  if (!(c.diff_clamp > 0.0)) fail("diff_clamp must be > 0");
  if (!(c.coef_cap > 0.0)) fail("coef_cap must be > 0");
}

}  // namespace gdec
