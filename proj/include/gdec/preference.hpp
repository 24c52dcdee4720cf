#pragma once

/**
 * Self-generated preference pairs and the DPO objective.
 *
 * A pair shares the first sentence of the M3ID caption y_w; the rejected
 * continuation y_l is decoded from that prefix with the visual context
 * masked, so it follows the language prior alone.
 *
 *   L = -ln sigmoid(beta * ((lp_theta(y_w) - lp_ref(y_w)) - (lp_theta(y_l) - lp_ref(y_l))))
 */

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gdec/decoders.hpp"
#include "gdec/error.hpp"
#include "gdec/logit_source.hpp"
#include "gdec/trace.hpp"

namespace gdec {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ln(1 + e^x) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double bt_preference(double reward_w, double reward_l) {
  if (!std::isfinite(reward_w) || !std::isfinite(reward_l)) throw DomainError("rewards must be finite");
  return sigmoid(reward_w - reward_l);
}

struct DpoInputs {
  double logp_theta_w = 0.0;
  double logp_ref_w = 0.0;
  double logp_theta_l = 0.0;
  double logp_ref_l = 0.0;
  double beta = 0.1;
};

struct DpoGradient {
  double logp_theta_w = 0.0;
  double logp_ref_w = 0.0;
  double logp_theta_l = 0.0;
  double logp_ref_l = 0.0;
};

struct DpoResult {
  double loss = 0.0;
  DpoGradient grad;
};

inline DpoResult dpo_loss(const DpoInputs& in) {
  if (!(in.beta > 0.0) || !std::isfinite(in.beta)) throw DomainError("beta must be a finite value > 0");
  for (double v : {in.logp_theta_w, in.logp_ref_w, in.logp_theta_l, in.logp_ref_l})
    if (!std::isfinite(v)) throw DomainError("DPO log-probabilities must be finite");
  const double margin = in.beta * ((in.logp_theta_w - in.logp_ref_w) - (in.logp_theta_l - in.logp_ref_l));
  const double s = in.beta * sigmoid(-margin);
  DpoResult r;
  r.loss = softplus(-margin);
  r.grad = {-s, s, s, -s};
  return r;
}

// Sum of per-token log-probabilities of `continuation` after `prompt`.
inline double sequence_logprob(ModelSession& session, const Tokens& prompt, const Tokens& continuation,
                               bool include_context) {
  Tokens prefix = prompt;
  double total = 0.0;
  for (TokenId tok : continuation) {
    const auto lp = session.frame_for(prefix, include_context);
    if (tok < 0 || static_cast<std::size_t>(tok) >= lp.size()) throw DomainError("token id out of range");
    total += lp[static_cast<std::size_t>(tok)];
    prefix.push_back(tok);
  }
  return total;
}

struct PairProvenance {
  DecoderConfig preferred_decoder;
  DecoderConfig rejected_decoder;
  std::size_t first_sentence_len = 0;
};

struct PreferencePair {
  std::string image_ref;
  Tokens prompt;
  Tokens preferred;
  Tokens rejected;
  PairProvenance provenance;
};

struct PairSource {
  ModelSession* session = nullptr;
  std::string image_ref;
};

// True for tokens that close a sentence.
using SentenceRule = std::function<bool(const std::string& token_text)>;

inline bool ends_sentence(const std::string& text) {
  auto it = std::find_if(text.rbegin(), text.rend(), [](unsigned char c) { return !std::isspace(c); });
  return it != text.rend() && (*it == '.' || *it == '!' || *it == '?');
}

struct PairBuildResult {
  std::vector<PreferencePair> pairs;
  std::size_t dropped_identical = 0;
  std::size_t skipped_no_terminator = 0;
  std::vector<std::string> log;
};

inline PairBuildResult build_pairs(const std::vector<PairSource>& sources, const DecoderConfig& cfg_preferred,
                                   const DecoderConfig& cfg_rejected, const SentenceRule& rule = ends_sentence) {
  if (cfg_preferred.kind != DecoderKind::m3id) throw ConfigError("preferred decoder must be m3id");
  validate(cfg_rejected);
  PairBuildResult out;
  for (const auto& src : sources) {
    ModelSession& s = *src.session;
    const Tokens prompt{s.descriptor().bos_id};
    DecodeOptions first;
    first.prefix = prompt;
    const Tokens preferred = decode(s, cfg_preferred, std::move(first)).tokens();

    auto term = std::find_if(preferred.begin(), preferred.end(),
                             [&](TokenId id) { return id != s.descriptor().eos_id && rule(s.token_text(id)); });
    if (term == preferred.end()) {
      out.skipped_no_terminator += 1;
      out.log.push_back(src.image_ref + ": preferred continuation has no sentence terminator");
      continue;
    }
    const Tokens shared(preferred.begin(), term + 1);

    DecodeOptions opts;
    opts.prefix = prompt;
    opts.prefix.insert(opts.prefix.end(), shared.begin(), shared.end());
    opts.unconditioned_only = true;
    opts.t_offset = static_cast<std::int64_t>(shared.size());
    const Tokens continuation = decode(s, cfg_rejected, std::move(opts)).tokens();

    Tokens rejected = shared;
    rejected.insert(rejected.end(), continuation.begin(), continuation.end());
    if (rejected == preferred) {
      out.dropped_identical += 1;
      out.log.push_back(src.image_ref + ": rejected continuation equals preferred; dropped");
      continue;
    }
    out.pairs.push_back({src.image_ref, prompt, preferred, rejected, {cfg_preferred, cfg_rejected, shared.size()}});
  }
  return out;
}

inline json to_json(const PreferencePair& p) {
  return json{{"image_ref", p.image_ref},
              {"prompt_tokens", p.prompt},
              {"preferred_tokens", p.preferred},
              {"rejected_tokens", p.rejected},
              {"provenance",
               {{"preferred_decoder", to_json(p.provenance.preferred_decoder)},
                {"rejected_decoder", to_json(p.provenance.rejected_decoder)},
                {"first_sentence_len", p.provenance.first_sentence_len}}}};
}

inline PreferencePair pair_from_json(const json& j) {
  PreferencePair p;
  p.image_ref = j.at("image_ref").get<std::string>();
  p.prompt = j.at("prompt_tokens").get<Tokens>();
  p.preferred = j.at("preferred_tokens").get<Tokens>();
  p.rejected = j.at("rejected_tokens").get<Tokens>();
  const auto& pv = j.at("provenance");
  p.provenance.preferred_decoder = decoder_config_from_json(pv.at("preferred_decoder"));
  p.provenance.rejected_decoder = decoder_config_from_json(pv.at("rejected_decoder"));
  p.provenance.first_sentence_len = pv.at("first_sentence_len").get<std::size_t>();
  return p;
}

// Shared-prefix invariant of an emitted pair.
inline bool shares_first_sentence(const PreferencePair& p) {
  const auto n = p.provenance.first_sentence_len;
  return n > 0 && p.preferred.size() >= n && p.rejected.size() >= n &&
         std::equal(p.preferred.begin(), p.preferred.begin() + static_cast<std::ptrdiff_t>(n), p.rejected.begin()) &&
         p.preferred != p.rejected;
}

}  // namespace gdec
