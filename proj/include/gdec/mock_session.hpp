#pragma once

// Deterministic in-process sessions. Scenarios are named generators that can
// be written in a config file:
//
//   {"kind": "uniform"}
//   {"kind": "random", "scale": 2.0}
//   {"kind": "fixed_table", "rows": [{"conditioned": [..], "unconditioned": [..]}],
//    "vocab": ["a", "."], "bos": 0, "eos": 1}
//   {"kind": "fading", "lambda_star": 0.02, ...simulator keys}
//
// fixed_table rows hold probabilities; row k serves every prefix with k
// tokens after bos (the last row repeats).

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gdec/error.hpp"
#include "gdec/logit_source.hpp"
#include "gdec/numeric.hpp"
#include "gdec/rng.hpp"
#include "gdec/simulator.hpp"
#include "gdec/trace.hpp"

namespace gdec {

class MockSession : public ModelSession {
 public:
  const SessionDescriptor& descriptor() const override { return desc_; }

  LogProbs frame_for(std::span<const TokenId> prefix, bool include_context) override {
    ++(include_context ? context_reads_ : masked_reads_);
    return generate(prefix, include_context);
  }

  std::string token_text(TokenId id) const override {
    if (static_cast<std::size_t>(id) < vocab_.size()) return vocab_[id];
    return ModelSession::token_text(id);
  }

  std::string masking_mode() const override { return "mock"; }

  // Number of requests that read the (simulated) visual context.
  std::size_t context_reads() const { return context_reads_; }
  std::size_t masked_reads() const { return masked_reads_; }

 protected:
  virtual LogProbs generate(std::span<const TokenId> prefix, bool include_context) const = 0;

  SessionDescriptor desc_;
  std::vector<std::string> vocab_;

 private:
  std::size_t context_reads_ = 0;
  std::size_t masked_reads_ = 0;
};

namespace detail {

inline SessionDescriptor default_descriptor(std::size_t V, const std::string& name) {
  if (V < 2) throw ConfigError("vocab_size must be >= 2");
  return {V, static_cast<TokenId>(V - 2), static_cast<TokenId>(V - 1), name};
}

class UniformMock final : public MockSession {
 public:
  explicit UniformMock(std::size_t V) { desc_ = default_descriptor(V, "mock:uniform"); }

 protected:
  LogProbs generate(std::span<const TokenId>, bool) const override {
    return LogProbs(desc_.vocab_size, -std::log(static_cast<double>(desc_.vocab_size)));
  }
};

// Hash-derived logits per (seed, full prefix, context flag).
class RandomMock final : public MockSession {
 public:
  RandomMock(std::uint64_t seed, std::size_t V, double scale) : seed_(seed), scale_(scale) {
    if (!(scale > 0.0)) throw ConfigError("random scenario scale must be > 0");
    desc_ = default_descriptor(V, "mock:random");
  }

 protected:
  LogProbs generate(std::span<const TokenId> prefix, bool include_context) const override {
    std::uint64_t key = hash_words({seed_, 0x72616e64ULL});
    for (TokenId t : prefix) key = hash_combine(key, static_cast<std::uint64_t>(t));
    key = hash_combine(key, include_context ? 1 : 2);
    LogProbs z(desc_.vocab_size);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = scale_ * normal_from_key(hash_combine(key, i));
    return log_normalize(z);
  }

 private:
  std::uint64_t seed_;
  double scale_;
};

class TableMock final : public MockSession {
 public:
  TableMock(const json& sc, std::size_t V) {
    const auto& rows = sc.at("rows");
    if (!rows.is_array() || rows.empty()) throw ConfigError("fixed_table needs a non-empty rows array");
    for (const auto& r : rows) {
      auto c = r.at("conditioned").get<std::vector<double>>();
      auto u = r.contains("unconditioned") ? r.at("unconditioned").get<std::vector<double>>() : c;
      if (c.size() != V || u.size() != V) throw ConfigError("fixed_table row length must equal vocab_size");
      cond_.push_back(to_logprobs(c));
      uncond_.push_back(to_logprobs(u));
    }
    desc_ = default_descriptor(V, "mock:fixed_table");
    if (sc.contains("bos")) desc_.bos_id = sc.at("bos").get<TokenId>();
    if (sc.contains("eos")) desc_.eos_id = sc.at("eos").get<TokenId>();
    validate_descriptor(desc_);
    if (sc.contains("vocab")) {
      vocab_ = sc.at("vocab").get<std::vector<std::string>>();
      if (vocab_.size() != V) throw ConfigError("fixed_table vocab length must equal vocab_size");
    }
  }

 protected:
  LogProbs generate(std::span<const TokenId> prefix, bool include_context) const override {
    const std::size_t k = prefix.empty() ? 0 : std::min(prefix.size() - 1, cond_.size() - 1);
    return include_context ? cond_[k] : uncond_[k];
  }

 private:
  static LogProbs to_logprobs(const std::vector<double>& p) {
    for (double x : p)
      if (!(x >= 0.0)) throw ConfigError("fixed_table probabilities must be >= 0");
    return log_normalize(log_of(p));
  }

  std::vector<LogProbs> cond_, uncond_;
};

class FadingMock final : public MockSession {
 public:
  explicit FadingMock(SimSpec spec) : sim_(std::move(spec), "mock:fading") {
    desc_ = sim_.descriptor();
    for (std::size_t i = 0; i < desc_.vocab_size; ++i) vocab_.push_back(sim_.token_text(static_cast<TokenId>(i)));
  }
  const FadingSession& simulator() const { return sim_; }

 protected:
  LogProbs generate(std::span<const TokenId> prefix, bool include_context) const override {
    auto f = sim_.sim_frame(prefix);
    return include_context ? f.observed.conditioned : f.observed.unconditioned;
  }

 private:
  FadingSession sim_;
};

}  // namespace detail

inline std::unique_ptr<MockSession> open_mock_session(std::uint64_t seed, std::size_t vocab_size,
                                                      const json& scenario) {
  if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
  if (!scenario.is_object() || !scenario.contains("kind") || !scenario.at("kind").is_string())
    throw ConfigError("mock scenario must be an object with a string 'kind'");
  const auto kind = scenario.at("kind").get<std::string>();
  try {
    if (kind == "uniform") return std::make_unique<detail::UniformMock>(vocab_size);
    if (kind == "random")
      return std::make_unique<detail::RandomMock>(seed, vocab_size, scenario.value("scale", 2.0));
    if (kind == "fixed_table") return std::make_unique<detail::TableMock>(scenario, vocab_size);
    if (kind == "fading") {
      json sim = json::object();
      for (auto it = scenario.begin(); it != scenario.end(); ++it)
        if (it.key() != "kind") sim[it.key()] = it.value();
      SimSpec spec;
      spec.vocab_size = vocab_size;
      spec.image_seed = seed;
      return std::make_unique<detail::FadingMock>(sim_spec_from_json(sim, spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("mock scenario '" + kind + "': " + e.what());
  }
  throw ConfigError("unknown mock scenario '" + kind + "'");
}

}  // namespace gdec
