#pragma once

/**
 * Score adjusters, token selectors and the generation loop.
 *
 * M3ID adds a time-growing multiple of (l_c - l_u) to the conditioned scores:
 *
 *   s = l_c + [max_k l_c < ln alpha] * min((1 - g_t) / g_t, cap) * clamp(l_c - l_u)
 *   g_t = exp(-lambda * (t + t0))
 *
 * PMI and contrastive decoding are the time-independent baselines. All
 * adjusters and selectors are pure; decode() is sequential per session.
 */

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <utility>

#include "gdec/decoder_config.hpp"
#include "gdec/error.hpp"
#include "gdec/logit_source.hpp"
#include "gdec/numeric.hpp"
#include "gdec/pdm.hpp"
#include "gdec/rng.hpp"
#include "gdec/trace.hpp"

namespace gdec {

inline double m3id_gamma(std::int64_t t, const DecoderConfig& cfg) {
  return std::exp(-cfg.lambda * static_cast<double>(t + cfg.t0));
}

// Multiplier (1 - g) / g, capped. Zero at g = 1.
inline double m3id_coefficient(std::int64_t t, const DecoderConfig& cfg) {
  const double g = m3id_gamma(t, cfg);
  const double k = g > 0.0 ? (1.0 - g) / g : kPosInf;
  return std::min(k, cfg.coef_cap);
}

// Strict: the gate is off when the top conditioned log-probability equals ln alpha.
inline bool m3id_gate(const LogitFrame& f, const DecoderConfig& cfg) {
  return max_finite(f.conditioned) < std::log(cfg.alpha);
}

inline void require_paired(const LogitFrame& f) {
  if (f.conditioned.size() != f.unconditioned.size()) throw DomainError("frame vectors differ in length");
}

inline LogProbs m3id_adjust(const LogitFrame& f, std::int64_t t, const DecoderConfig& cfg) {
  validate(cfg);
  require_paired(f);
  LogProbs out = f.conditioned;
  if (!m3id_gate(f, cfg)) return out;
  const double k = m3id_coefficient(t, cfg);
  if (k == 0.0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double lc = f.conditioned[i];
    if (lc == kNegInf) continue;
    double d = lc - f.unconditioned[i];
    d = std::clamp(d, -cfg.diff_clamp, cfg.diff_clamp);
    if (d == 0.0) continue;
    out[i] = lc + k * d;
  }
  return out;
}

// -sum p ln p in nats, with 0 ln 0 = 0.
inline double shannon_entropy(std::span<const double> p) {
  require_distribution(p, 1e-6, "shannon_entropy");
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

inline LogProbs pmi_adjust(const LogitFrame& f, const DecoderConfig& cfg) {
  validate(cfg);
  require_paired(f);
  LogProbs out = f.conditioned;
  if (shannon_entropy(softmax(f.conditioned)) < cfg.tau || cfg.mu == 0.0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] == kNegInf) continue;
    out[i] -= cfg.mu * f.unconditioned[i];
  }
  return out;
}

inline LogProbs contrastive_adjust(const LogitFrame& f, const DecoderConfig& cfg) {
  validate(cfg);
  require_paired(f);
  const double cutoff = std::log(cfg.psi) + max_finite(f.conditioned);
  LogProbs out(f.conditioned.size(), kNegInf);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double lc = f.conditioned[i];
    if (lc == kNegInf || lc < cutoff) continue;
    out[i] = cfg.xi == 0.0 ? lc : (1.0 + cfg.xi) * lc - cfg.xi * f.unconditioned[i];
  }
  return out;
}

// Scores used for selection under cfg.kind. Greedy and multinomial use l_c.
inline LogProbs adjust(const LogitFrame& f, std::int64_t t, const DecoderConfig& cfg) {
  switch (cfg.kind) {
    case DecoderKind::m3id: return m3id_adjust(f, t, cfg);
    case DecoderKind::pmi: return pmi_adjust(f, cfg);
    case DecoderKind::contrastive: return contrastive_adjust(f, cfg);
    default: return f.conditioned;
  }
}

inline TokenId select_greedy(std::span<const double> scores) {
  if (scores.empty() || max_finite(scores) == kNegInf)
    throw DegenerateInput("degenerate frame: no finite score");
  for (double s : scores)
    if (std::isnan(s)) throw DegenerateInput("degenerate frame: NaN score");
  return static_cast<TokenId>(argmax_lowest(scores));
}

// Inverse-CDF sampling from softmax(scores / temperature) in token-id order.
inline TokenId select_multinomial(std::span<const double> scores, double temperature, Rng& rng) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  const double m = max_finite(scores);
  if (scores.empty() || m == kNegInf) throw DegenerateInput("degenerate frame: no finite score");
  std::vector<double> w(scores.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] == kNegInf) continue;
    if (std::isnan(scores[i])) throw DegenerateInput("degenerate frame: NaN score");
    w[i] = scores[i] == kPosInf ? 1.0 : std::exp((scores[i] - m) / temperature);
    total += w[i];
  }
  const double u = rng.uniform() * total;
  double cum = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 0.0) continue;
    cum += w[i];
    last = i;
    if (u < cum) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last);
}

// Thrown when the session fails mid-generation; carries the steps completed so far.
class DecodeFailure : public Error {
 public:
  DecodeFailure(const Error& cause, GenerationTrace partial)
      : Error(cause.kind(), std::string(cause.what()) + " (after " + std::to_string(partial.steps.size()) +
                                " steps)"),
        partial_(std::move(partial)) {}
  const GenerationTrace& partial() const { return partial_; }

 private:
  GenerationTrace partial_;
};

struct StepView {
  std::int64_t t;
  std::span<const TokenId> prefix;
  const LogitFrame& frame;
  std::span<const double> scores;
  const StepRecord& record;
};

struct DecodeOptions {
  Tokens prefix;                    // defaults to {bos}
  bool unconditioned_only = false;  // score with the context-masked frame in both slots
  std::int64_t t_offset = 0;        // t of the first generated token
  std::function<void(const StepView&)> observer;
};

inline GenerationTrace decode(ModelSession& session, const DecoderConfig& cfg, DecodeOptions opts = {}) {
  validate(cfg);
  const auto& desc = session.descriptor();
  GenerationTrace trace{cfg, desc, {}, Termination::budget};
  Tokens prefix = opts.prefix.empty() ? Tokens{desc.bos_id} : std::move(opts.prefix);
  Rng rng(cfg.seed);

  for (std::int64_t i = 0; i < cfg.max_tokens; ++i) {
    const std::int64_t t = opts.t_offset + i;
    LogitFrame frame;
    try {
      frame = session.paired_frame(prefix);
      if (frame.vocab_size() != desc.vocab_size)
        throw ContractViolation("frame length " + std::to_string(frame.vocab_size()) + " != vocab_size");
      validate_frame(frame);
    } catch (const Error& e) {
      throw DecodeFailure(e, trace);
    }

    const LogitFrame scoring = opts.unconditioned_only ? LogitFrame{frame.unconditioned, frame.unconditioned}
                                                       : frame;
    const LogProbs scores = adjust(scoring, t, cfg);
    TokenId tok = cfg.kind == DecoderKind::multinomial ? select_multinomial(scores, cfg.temperature, rng)
                                                       : select_greedy(scores);

    StepRecord rec;
    rec.t = t;
    rec.token = tok;
    if (cfg.kind == DecoderKind::m3id) {
      rec.gamma = m3id_gamma(t, cfg);
      rec.gate_active = m3id_gate(scoring, cfg);
    }
    rec.adjusted_argmax_differs = argmax_lowest(scores) != argmax_lowest(scoring.conditioned);
    rec.pdm_h = pdm_h(frame);
    rec.pdm_r = pdm_r(frame);
    trace.steps.push_back(rec);
    if (opts.observer) opts.observer(StepView{t, prefix, frame, scores, trace.steps.back()});

    prefix.push_back(tok);
    if (tok == desc.eos_id) {
      trace.terminated_by = Termination::eos;
      break;
    }
  }
  return trace;
}

}  // namespace gdec
