#pragma once

// Generation traces and their .trace.jsonl persistence: one header line with
// the decoder config and session descriptor, then one StepRecord per line.

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gdec/decoder_config.hpp"
#include "gdec/error.hpp"
#include "gdec/logit_source.hpp"

namespace gdec {

struct StepRecord {
  std::int64_t t = 0;
  TokenId token = 0;
  double gamma = 1.0;
  bool gate_active = false;
  bool adjusted_argmax_differs = false;
  double pdm_h = 0.0;
  std::int64_t pdm_r = 1;

  bool operator==(const StepRecord&) const = default;
};

enum class Termination { eos, budget };

struct GenerationTrace {
  DecoderConfig config;
  SessionDescriptor descriptor;
  std::vector<StepRecord> steps;
  Termination terminated_by = Termination::budget;

  Tokens tokens() const {
    Tokens out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s.token);
    return out;
  }
};

using json = nlohmann::ordered_json;

// +inf has no JSON number form; it is written as null.
inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double number_or_inf(const json& j) {
  return j.is_null() ? kPosInf : j.get<double>();
}

inline json to_json(const DecoderConfig& c) {
  return json{{"kind", std::string(to_string(c.kind))},
              {"alpha", c.alpha},
              {"lambda", c.lambda},
              {"t0", c.t0},
              {"mu", c.mu},
              {"tau", c.tau},
              {"xi", c.xi},
              {"psi", c.psi},
              {"temperature", c.temperature},
              {"seed", c.seed},
              {"max_tokens", c.max_tokens},
              {"diff_clamp", number_or_null(c.diff_clamp)},
              {"coef_cap", number_or_null(c.coef_cap)}};
}

// Reads the fields present in `j` over `base`; unknown keys are rejected.
inline DecoderConfig decoder_config_from_json(const json& j, DecoderConfig base = {}) {
  if (!j.is_object()) throw ConfigError("decoder config must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    const auto& v = it.value();
    try {
      if (k == "kind") base.kind = parse_decoder_kind(v.get<std::string>());
      else if (k == "alpha") base.alpha = v.get<double>();
      else if (k == "lambda") base.lambda = v.get<double>();
      else if (k == "t0") base.t0 = v.get<std::int64_t>();
      else if (k == "mu") base.mu = v.get<double>();
      else if (k == "tau") base.tau = v.get<double>();
      else if (k == "xi") base.xi = v.get<double>();
      else if (k == "psi") base.psi = v.get<double>();
      else if (k == "temperature") base.temperature = v.get<double>();
      else if (k == "seed") base.seed = v.get<std::uint64_t>();
      else if (k == "max_tokens") base.max_tokens = v.get<std::int64_t>();
      else if (k == "diff_clamp") base.diff_clamp = number_or_inf(v);
      else if (k == "coef_cap") base.coef_cap = number_or_inf(v);
      else throw ConfigError("unknown decoder key '" + k + "'");
    } catch (const json::exception& e) {
      throw ConfigError("decoder." + k + ": " + e.what());
    }
  }
  validate(base);
  return base;
}

inline json to_json(const SessionDescriptor& d) {
  return json{{"vocab_size", d.vocab_size},
              {"bos_id", d.bos_id},
              {"eos_id", d.eos_id},
              {"model_name", d.model_name}};
}

inline SessionDescriptor descriptor_from_json(const json& j) {
  SessionDescriptor d;
  d.vocab_size = j.at("vocab_size").get<std::size_t>();
  d.bos_id = j.at("bos_id").get<TokenId>();
  d.eos_id = j.at("eos_id").get<TokenId>();
  d.model_name = j.at("model_name").get<std::string>();
  return d;
}

inline json to_json(const StepRecord& s) {
  return json{{"t", s.t},
              {"token", s.token},
              {"gamma", s.gamma},
              {"gate_active", s.gate_active},
              {"adjusted_argmax_differs", s.adjusted_argmax_differs},
              {"pdm_h", s.pdm_h},
              {"pdm_r", s.pdm_r}};
}

inline StepRecord step_from_json(const json& j) {
  StepRecord s;
  s.t = j.at("t").get<std::int64_t>();
  s.token = j.at("token").get<TokenId>();
  s.gamma = j.at("gamma").get<double>();
  s.gate_active = j.at("gate_active").get<bool>();
  s.adjusted_argmax_differs = j.at("adjusted_argmax_differs").get<bool>();
  s.pdm_h = j.at("pdm_h").get<double>();
  s.pdm_r = j.at("pdm_r").get<std::int64_t>();
  return s;
}

inline json trace_header(const GenerationTrace& tr, const json& extra = json::object()) {
  json h{{"kind", "trace_header"},
         {"config", to_json(tr.config)},
         {"descriptor", to_json(tr.descriptor)},
         {"terminated_by", tr.terminated_by == Termination::eos ? "eos" : "budget"},
         {"n_steps", tr.steps.size()}};
  for (auto it = extra.begin(); it != extra.end(); ++it) h[it.key()] = it.value();
  return h;
}

inline void write_trace(std::ostream& os, const GenerationTrace& tr, const json& extra = json::object()) {
  os << trace_header(tr, extra).dump() << '\n';
  for (const auto& s : tr.steps) os << to_json(s).dump() << '\n';
}

inline GenerationTrace read_trace(std::istream& is) {
  GenerationTrace tr;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = json::parse(line);
      if (!have_header) {
        if (j.value("kind", "") != "trace_header") throw DataError("line 1 is not a trace header");
        tr.config = decoder_config_from_json(j.at("config"));
        tr.descriptor = descriptor_from_json(j.at("descriptor"));
        tr.terminated_by = j.at("terminated_by").get<std::string>() == "eos" ? Termination::eos
                                                                              : Termination::budget;
        have_header = true;
      } else {
        tr.steps.push_back(step_from_json(j));
      }
    } catch (const json::exception& e) {
      throw DataError("trace line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw DataError("empty trace file");
  return tr;
}

}  // namespace gdec
