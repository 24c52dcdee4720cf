#pragma once

/**
 * Synthetic fading-memory language model with known ground truth.
 *
 * Prior logits z_l and grounded logits z_v are hash-derived from the seeds
 * and the last two prefix tokens. The grounded table adds an image bias that
 * boosts the image's grounded object tokens G and suppresses the other object
 * tokens. What the model emits at step t is
 *
 *   conditioned   = normalize(g*_t z_v + (1 - g*_t) z_l + noise)
 *   unconditioned = normalize(z_l + noise)
 *   oracle        = normalize(z_v)
 *
 * with g*_t = exp(-lambda* t). Mixing happens in logit space and is then
 * renormalized, so M3ID with lambda = lambda* recovers z_v up to a constant.
 * Emitting an object token outside G counts as a hallucination.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gdec/decoders.hpp"
#include "gdec/error.hpp"
#include "gdec/logit_source.hpp"
#include "gdec/numeric.hpp"
#include "gdec/pdm.hpp"
#include "gdec/rng.hpp"

namespace gdec {

struct SimSpec {
  std::size_t vocab_size = 64;
  double lambda_star = 0.02;
  std::uint64_t image_seed = 1;
  std::uint64_t prior_seed = 1234;
  double grounded_fraction = 0.25;
  std::vector<TokenId> object_token_ids;  // empty: the first 3V/8 ids
  double noise_sigma = 0.0;
  std::int64_t horizon = 200;

  // Shape of the synthetic model.
  double prior_scale = 1.0;
  std::size_t popular_objects = 4;  // object tokens the prior favours
  double popular_boost = 1.5;
  double grounded_boost = 2.5;
  double ungrounded_penalty = 2.5;
  double image_scale = 0.3;     // prefix-dependent image residual
  double attribute_gain = 3.0;  // residual grows after a grounded object
  double eos_logit = -8.0;

  bool operator==(const SimSpec&) const = default;
};

struct SimFrame {
  LogitFrame observed;
  LogProbs oracle_grounded;
};

class FadingModel {
 public:
  explicit FadingModel(SimSpec spec) : spec_(std::move(spec)) {
    const auto V = spec_.vocab_size;
    if (V < 4) throw ConfigError("simulator vocab_size must be >= 4");
    if (!(spec_.grounded_fraction > 0.0 && spec_.grounded_fraction < 1.0))
      throw ConfigError("grounded_fraction must lie in (0, 1)");
    if (!(spec_.lambda_star >= 0.0)) throw ConfigError("lambda_star must be >= 0");
    if (!(spec_.noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
    if (spec_.horizon < 1) throw ConfigError("horizon must be >= 1");
    bos_ = static_cast<TokenId>(V - 2);
    eos_ = static_cast<TokenId>(V - 1);
    if (spec_.object_token_ids.empty())
      for (std::size_t i = 0; i < 3 * V / 8; ++i) spec_.object_token_ids.push_back(static_cast<TokenId>(i));
    std::sort(spec_.object_token_ids.begin(), spec_.object_token_ids.end());
    const auto& obj = spec_.object_token_ids;
    if (std::adjacent_find(obj.begin(), obj.end()) != obj.end()) throw ConfigError("duplicate object token id");
    for (TokenId id : obj)
      if (id < 0 || id >= bos_) throw ConfigError("object token ids must lie in [0, V-2)");
    if (obj.size() < 2) throw ConfigError("need at least two object tokens");

    is_object_.assign(V, false);
    grounded_.assign(V, false);
    popular_.assign(V, false);
    for (TokenId id : obj) is_object_[id] = true;

    const std::size_t n_grounded = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(spec_.grounded_fraction * static_cast<double>(obj.size()))), 1,
        obj.size() - 1);
    for (TokenId id : pick(obj, n_grounded, hash_words({spec_.image_seed, 0x67726f756e64ULL})))
      grounded_[id] = true;
    const std::size_t n_popular = std::min(spec_.popular_objects, obj.size());
    for (TokenId id : pick(obj, n_popular, hash_words({spec_.prior_seed, 0x706f70ULL}))) popular_[id] = true;
  }

  const SimSpec& spec() const { return spec_; }
  TokenId bos() const { return bos_; }
  TokenId eos() const { return eos_; }
  bool is_object(TokenId id) const { return is_object_.at(id); }
  bool is_grounded(TokenId id) const { return grounded_.at(id); }

  std::vector<TokenId> grounded_set() const {
    std::vector<TokenId> g;
    for (std::size_t i = 0; i < grounded_.size(); ++i)
      if (grounded_[i]) g.push_back(static_cast<TokenId>(i));
    return g;
  }

  SimFrame frame_at(std::span<const TokenId> prefix, std::int64_t t) const {
    if (t < 0 || t > spec_.horizon) throw DomainError("t outside [0, horizon]");
    const auto V = spec_.vocab_size;
    const auto a = static_cast<std::uint64_t>(prefix.size() >= 2 ? prefix[prefix.size() - 2] : bos_);
    const auto b = prefix.empty() ? bos_ : prefix.back();
    const double residual = spec_.image_scale * (1.0 + (is_grounded_safe(b) ? spec_.attribute_gain : 0.0));
    const double gamma = std::exp(-spec_.lambda_star * static_cast<double>(t));

    LogProbs zl(V), zv(V), cond(V), uncond(V);
    for (std::size_t i = 0; i < V; ++i) {
      if (static_cast<TokenId>(i) == bos_) {
        zl[i] = zv[i] = kNegInf;
        continue;
      }
      if (static_cast<TokenId>(i) == eos_) {
        zl[i] = zv[i] = spec_.eos_logit;
        continue;
      }
      zl[i] = spec_.prior_scale * normal_from_key(hash_words({spec_.prior_seed, a, static_cast<std::uint64_t>(b), i})) +
              (popular_[i] ? spec_.popular_boost : 0.0);
      double bias = 0.0;
      if (is_object_[i]) bias = grounded_[i] ? spec_.grounded_boost : -spec_.ungrounded_penalty;
      zv[i] = zl[i] + bias +
              residual * normal_from_key(hash_words({spec_.image_seed, a, static_cast<std::uint64_t>(b), i, 0x7669ULL}));
    }

    std::uint64_t prefix_key = hash_words({spec_.image_seed, spec_.prior_seed, 0x6e6f6973ULL});
    for (TokenId tok : prefix) prefix_key = hash_combine(prefix_key, static_cast<std::uint64_t>(tok));
    for (std::size_t i = 0; i < V; ++i) {
      if (zl[i] == kNegInf) {
        cond[i] = uncond[i] = kNegInf;
        continue;
      }
      cond[i] = gamma * zv[i] + (1.0 - gamma) * zl[i];
      uncond[i] = zl[i];
      if (spec_.noise_sigma > 0.0) {
        cond[i] += spec_.noise_sigma * normal_from_key(hash_words({prefix_key, static_cast<std::uint64_t>(t), 1, i}));
        uncond[i] += spec_.noise_sigma * normal_from_key(hash_words({prefix_key, static_cast<std::uint64_t>(t), 2, i}));
      }
    }
    return SimFrame{{log_normalize(cond), log_normalize(uncond)}, log_normalize(zv)};
  }

 private:
  bool is_grounded_safe(TokenId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < grounded_.size() && grounded_[id];
  }

  // Deterministic partial Fisher-Yates draw of k ids from `from`.
  static std::vector<TokenId> pick(std::vector<TokenId> from, std::size_t k, std::uint64_t key) {
    for (std::size_t i = 0; i < k; ++i) {
      const std::uint64_t r = splitmix64(hash_combine(key, i));
      const std::size_t j = i + static_cast<std::size_t>(r % (from.size() - i));
      std::swap(from[i], from[j]);
    }
    from.resize(k);
    return from;
  }

  SimSpec spec_;
  TokenId bos_ = 0;
  TokenId eos_ = 1;
  std::vector<bool> is_object_, grounded_, popular_;
};

inline SimFrame frame_at(const SimSpec& spec, std::span<const TokenId> prefix, std::int64_t t) {
  return FadingModel(spec).frame_at(prefix, t);
}

// ModelSession view of the simulator; t is the number of tokens after bos.
class FadingSession : public ModelSession {
 public:
  explicit FadingSession(SimSpec spec, std::string name = "sim:fading")
      : model_(std::move(spec)) {
    desc_ = {model_.spec().vocab_size, model_.bos(), model_.eos(), std::move(name)};
  }

  const SessionDescriptor& descriptor() const override { return desc_; }

  LogProbs frame_for(std::span<const TokenId> prefix, bool include_context) override {
    auto f = sim_frame(prefix);
    return include_context ? f.observed.conditioned : f.observed.unconditioned;
  }

  SimFrame sim_frame(std::span<const TokenId> prefix) const {
    const auto t = static_cast<std::int64_t>(prefix.empty() ? 0 : prefix.size() - 1);
    return model_.frame_at(prefix, std::min(t, model_.spec().horizon));
  }

  std::string token_text(TokenId id) const override {
    if (id == model_.bos()) return "<s>";
    if (id == model_.eos()) return "</s>";
    return (model_.is_object(id) ? "obj" : "w") + std::to_string(id);
  }

  std::string masking_mode() const override { return "simulated_prior"; }

  const FadingModel& model() const { return model_; }

 private:
  FadingModel model_;
  SessionDescriptor desc_;
};

struct ExperimentArm {
  std::string name;
  DecoderConfig config;
};

struct PositionStats {
  std::int64_t t = 0;
  std::size_t n = 0;
  double pdm_h = 0.0;     // mean over runs
  double pdm_r = 0.0;     // mean over runs
  double oracle_kl = 0.0; // mean over runs
  std::size_t objects = 0;
  std::size_t hallucinated = 0;
  std::size_t gate_on = 0;
};

struct ArmReport {
  ExperimentArm arm;
  std::vector<PositionStats> series;
  std::size_t object_tokens = 0;
  std::size_t hallucinated_tokens = 0;
  std::size_t steps = 0;
  std::size_t gate_on_steps = 0;
  double mean_oracle_kl = 0.0;

  double hallucination_rate() const {
    return object_tokens == 0 ? 0.0 : static_cast<double>(hallucinated_tokens) / static_cast<double>(object_tokens);
  }
};

struct ExperimentReport {
  SimSpec spec;
  std::size_t n_runs = 0;
  std::uint64_t master_seed = 0;
  std::vector<ArmReport> arms;
};

inline SimSpec run_spec(const SimSpec& spec, std::uint64_t master_seed, std::size_t run) {
  SimSpec s = spec;
  s.image_seed = hash_words({master_seed, 0x696d616765ULL, run});
  return s;
}

inline ExperimentReport run_experiment(const SimSpec& spec, const std::vector<ExperimentArm>& arms,
                                       std::size_t n_runs, std::uint64_t master_seed) {
  if (n_runs < 1) throw ConfigError("n_runs must be >= 1");
  ExperimentReport rep{spec, n_runs, master_seed, {}};
  const auto H = static_cast<std::size_t>(spec.horizon);

  for (std::size_t a = 0; a < arms.size(); ++a) {
    ArmReport ar{arms[a], {}, 0, 0, 0, 0, 0.0};
    std::vector<PositionStats> acc(H);
    double kl_sum = 0.0;
    for (std::size_t r = 0; r < n_runs; ++r) {
      FadingSession session(run_spec(spec, master_seed, r));
      DecoderConfig cfg = arms[a].config;
      cfg.max_tokens = spec.horizon;
      cfg.seed = hash_words({master_seed, 0x72756eULL, r, a});
      DecodeOptions opts;
      opts.observer = [&](const StepView& v) {
        auto& p = acc.at(static_cast<std::size_t>(v.t));
        const auto oracle = softmax(session.sim_frame(v.prefix).oracle_grounded);
        const double kl = distance(oracle, softmax(v.scores), DistanceKind::kl);
        p.n += 1;
        p.pdm_h += v.record.pdm_h;
        p.pdm_r += static_cast<double>(v.record.pdm_r);
        p.oracle_kl += kl;
        p.gate_on += v.record.gate_active ? 1 : 0;
        kl_sum += kl;
        const TokenId tok = v.record.token;
        if (session.model().is_object(tok)) {
          p.objects += 1;
          if (!session.model().is_grounded(tok)) p.hallucinated += 1;
        }
      };
      decode(session, cfg, std::move(opts));
    }
    for (std::size_t t = 0; t < H; ++t) {
      auto p = acc[t];
      if (p.n == 0) continue;
      p.t = static_cast<std::int64_t>(t);
      ar.steps += p.n;
      ar.object_tokens += p.objects;
      ar.hallucinated_tokens += p.hallucinated;
      ar.gate_on_steps += p.gate_on;
      const double n = static_cast<double>(p.n);
      p.pdm_h /= n;
      p.pdm_r /= n;
      p.oracle_kl /= n;
      ar.series.push_back(p);
    }
    ar.mean_oracle_kl = ar.steps == 0 ? 0.0 : kl_sum / static_cast<double>(ar.steps);
    rep.arms.push_back(std::move(ar));
  }
  return rep;
}

inline nlohmann::ordered_json to_json(const SimSpec& s) {
  return nlohmann::ordered_json{{"vocab_size", s.vocab_size},
                                {"lambda_star", s.lambda_star},
                                {"image_seed", s.image_seed},
                                {"prior_seed", s.prior_seed},
                                {"grounded_fraction", s.grounded_fraction},
                                {"object_token_ids", s.object_token_ids},
                                {"noise_sigma", s.noise_sigma},
                                {"horizon", s.horizon},
                                {"prior_scale", s.prior_scale},
                                {"popular_objects", s.popular_objects},
                                {"popular_boost", s.popular_boost},
                                {"grounded_boost", s.grounded_boost},
                                {"ungrounded_penalty", s.ungrounded_penalty},
                                {"image_scale", s.image_scale},
                                {"attribute_gain", s.attribute_gain},
                                {"eos_logit", s.eos_logit}};
}

inline SimSpec sim_spec_from_json(const nlohmann::ordered_json& j, SimSpec s = {}) {
  if (!j.is_object()) throw ConfigError("simulator spec must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    const auto& v = it.value();
    try {
      if (k == "vocab_size") s.vocab_size = v.get<std::size_t>();
      else if (k == "lambda_star") s.lambda_star = v.get<double>();
      else if (k == "image_seed") s.image_seed = v.get<std::uint64_t>();
      else if (k == "prior_seed") s.prior_seed = v.get<std::uint64_t>();
      else if (k == "grounded_fraction") s.grounded_fraction = v.get<double>();
      else if (k == "object_token_ids") s.object_token_ids = v.get<std::vector<TokenId>>();
      else if (k == "noise_sigma") s.noise_sigma = v.get<double>();
      else if (k == "horizon") s.horizon = v.get<std::int64_t>();
      else if (k == "prior_scale") s.prior_scale = v.get<double>();
      else if (k == "popular_objects") s.popular_objects = v.get<std::size_t>();
      else if (k == "popular_boost") s.popular_boost = v.get<double>();
      else if (k == "grounded_boost") s.grounded_boost = v.get<double>();
      else if (k == "ungrounded_penalty") s.ungrounded_penalty = v.get<double>();
      else if (k == "image_scale") s.image_scale = v.get<double>();
      else if (k == "attribute_gain") s.attribute_gain = v.get<double>();
      else if (k == "eos_logit") s.eos_logit = v.get<double>();
      else throw ConfigError("unknown simulator key '" + k + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("sim." + k + ": " + e.what());
    }
  }
  return s;
}

inline nlohmann::ordered_json to_json(const ExperimentReport& rep) {
  using oj = nlohmann::ordered_json;
  oj arms = oj::array();
  for (const auto& a : rep.arms) {
    oj t = oj::array(), n = oj::array(), h = oj::array(), r = oj::array(), kl = oj::array(), ob = oj::array(),
       ha = oj::array(), g = oj::array();
    for (const auto& p : a.series) {
      t.push_back(p.t);
      n.push_back(p.n);
      h.push_back(p.pdm_h);
      r.push_back(p.pdm_r);
      kl.push_back(number_or_null(p.oracle_kl));
      ob.push_back(p.objects);
      ha.push_back(p.hallucinated);
      g.push_back(p.gate_on);
    }
    arms.push_back(oj{{"name", a.arm.name},
                      {"config", to_json(a.arm.config)},
                      {"hallucination_rate", a.hallucination_rate()},
                      {"object_tokens", a.object_tokens},
                      {"hallucinated_tokens", a.hallucinated_tokens},
                      {"steps", a.steps},
                      {"gate_on_steps", a.gate_on_steps},
                      {"mean_oracle_kl", number_or_null(a.mean_oracle_kl)},
                      {"series",
                       oj{{"t", t}, {"n", n}, {"pdm_h", h}, {"pdm_r", r}, {"oracle_kl", kl}, {"objects", ob},
                          {"hallucinated", ha}, {"gate_on", g}}}});
  }
  return oj{{"kind", "experiment_report"},
            {"spec", to_json(rep.spec)},
            {"n_runs", rep.n_runs},
            {"master_seed", rep.master_seed},
            {"arms", arms}};
}

inline void write_experiment_csv(std::ostream& os, const ExperimentReport& rep) {
  os << "arm,t,n,pdm_h,pdm_r,oracle_kl,objects,hallucinated,gate_on\n";
  char buf[160];
  for (const auto& a : rep.arms)
    for (const auto& p : a.series) {
      std::snprintf(buf, sizeof buf, "%lld,%zu,%.17g,%.17g,%.17g,%zu,%zu,%zu", static_cast<long long>(p.t), p.n,
                    p.pdm_h, p.pdm_r, p.oracle_kl, p.objects, p.hallucinated, p.gate_on);
      os << a.arm.name << ',' << buf << '\n';
    }
}

}  // namespace gdec
