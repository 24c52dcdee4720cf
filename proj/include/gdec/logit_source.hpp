#pragma once

/**
 * Paired logit frames and the session abstraction.
 *
 * A session answers, for a token prefix, the next-token log-probabilities
 * with the visual context present (conditioned) or masked (unconditioned).
 * Sessions are single-consumer; frames and descriptors are plain values.
 */

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gdec/error.hpp"
#include "gdec/numeric.hpp"

namespace gdec {

using TokenId = std::int32_t;
using Tokens = std::vector<TokenId>;

inline constexpr double kNormalizationTol = 1e-4;

struct LogitFrame {
  LogProbs conditioned;
  LogProbs unconditioned;

  std::size_t vocab_size() const { return conditioned.size(); }
  bool operator==(const LogitFrame&) const = default;
};

// Checks one log-probability vector against the frame contract. Returns an
// empty string when valid, otherwise a description of the first violation.
inline std::string check_logprobs(std::span<const double> v) {
  if (v.size() < 2) return "vocabulary smaller than 2";
  bool finite = false;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = v[i];
    if (std::isnan(x) || x == kPosInf) return "entry " + std::to_string(i) + " is not a log-probability";
    if (x != kNegInf) {
      finite = true;
      if (x > kNormalizationTol) return "entry " + std::to_string(i) + " is positive";
    }
  }
  if (!finite) return "no finite entry";
  const double z = logsumexp(v);
  if (std::abs(z) > kNormalizationTol) return "logsumexp = " + std::to_string(z) + " exceeds 1e-4";
  return {};
}

inline void validate_frame(const LogitFrame& f) {
  if (f.conditioned.size() != f.unconditioned.size())
    throw ContractViolation("frame vectors differ in length");
  if (auto e = check_logprobs(f.conditioned); !e.empty()) throw ContractViolation("conditioned: " + e);
  if (auto e = check_logprobs(f.unconditioned); !e.empty())
    throw ContractViolation("unconditioned: " + e);
}

struct SessionDescriptor {
  std::size_t vocab_size = 0;
  TokenId bos_id = 0;
  TokenId eos_id = 1;
  std::string model_name;

  bool operator==(const SessionDescriptor&) const = default;
};

inline void validate_descriptor(const SessionDescriptor& d) {
  if (d.vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
  if (d.bos_id == d.eos_id) throw ConfigError("bos_id must differ from eos_id");
  if (d.bos_id < 0 || d.eos_id < 0 || static_cast<std::size_t>(d.bos_id) >= d.vocab_size ||
      static_cast<std::size_t>(d.eos_id) >= d.vocab_size)
    throw ConfigError("bos/eos ids must lie in [0, vocab_size)");
}

class ModelSession {
 public:
  virtual ~ModelSession() = default;

  virtual const SessionDescriptor& descriptor() const = 0;

  // Next-token log-probabilities after `prefix`. Must be deterministic.
  virtual LogProbs frame_for(std::span<const TokenId> prefix, bool include_context) = 0;

  // Detokenized text of one token, used for sentence boundaries and reports.
  virtual std::string token_text(TokenId id) const { return "<" + std::to_string(id) + ">"; }

  // How the unconditioned frame is obtained (reported verbatim).
  virtual std::string masking_mode() const { return "unspecified"; }

  LogitFrame paired_frame(std::span<const TokenId> prefix) {
    LogitFrame f{frame_for(prefix, true), frame_for(prefix, false)};
    return f;
  }
};

}  // namespace gdec
