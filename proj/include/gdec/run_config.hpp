#pragma once

// Command configuration: defaults, then a JSON file, then flags addressed by
// dotted path. Keys that are not in the defaults are rejected, except inside
// the free-form sections named by is_free_form().

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "gdec/error.hpp"
#include "gdec/simulator.hpp"
#include "gdec/trace.hpp"

namespace gdec {

inline json default_run_config() {
  json decoder = to_json(DecoderConfig{});
  return json{
      {"seed", 0},
      {"source", "mock"},
      {"endpoint", ""},
      {"out", ""},
      {"decoder", decoder},
      {"mock", {{"vocab_size", 64}, {"sessions", 1}, {"scenario", {{"kind", "fading"}}}}},
      {"inputs", json::array()},
      {"sim", to_json(SimSpec{})},
      {"experiment",
       {{"n_runs", 100},
        {"arms", json::array({json{{"name", "greedy"}, {"decoder", {{"kind", "greedy"}}}},
                              json{{"name", "m3id"}, {"decoder", {{"kind", "m3id"}}}}})}}},
      {"chair", {{"captions", ""}, {"annotations", ""}, {"lexicon", ""}, {"mode", "unique"}}},
      {"pope", {{"questions", ""}, {"answers", ""}}},
      {"pdm", {{"traces", json::array()}, {"series", ""}, {"kind", "hellinger"}, {"t_min", 0}, {"t_max", nullptr}}},
      {"prefs", {{"rejected", {{"kind", "greedy"}}}}},
  };
}

// Sections whose keys are not fixed by the defaults.
inline bool is_free_form(const std::string& path) { return path == "mock.scenario" || path == "prefs.rejected"; }

namespace detail {

inline void merge_into(json& base, const json& over, const std::string& path) {
  if (!over.is_object()) throw ConfigError("'" + (path.empty() ? std::string("<root>") : path) + "' must be an object");
  for (auto it = over.begin(); it != over.end(); ++it) {
    const std::string key_path = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key_path + "'");
    json& slot = base[it.key()];
    if (key_path == "mock.scenario") {
      slot = it.value();
    } else if (is_free_form(key_path)) {
      if (!it.value().is_object()) throw ConfigError("'" + key_path + "' must be an object");
      for (auto jt = it.value().begin(); jt != it.value().end(); ++jt) slot[jt.key()] = jt.value();
    } else if (slot.is_object()) {
      merge_into(slot, it.value(), key_path);
    } else {
      slot = it.value();
    }
  }
}

}  // namespace detail

inline void merge_config(json& base, const json& over) { detail::merge_into(base, over, ""); }

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

// Parses a flag value as JSON, falling back to a plain string.
inline json parse_flag_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return json(text);
  }
}

inline void set_path(json& cfg, const std::string& dotted, const json& value) {
  std::vector<std::string> parts;
  std::stringstream ss(dotted);
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
  if (parts.empty()) throw ConfigError("empty config path");
  json* node = &cfg;
  std::string parent;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::string walked = parent.empty() ? parts[i] : parent + "." + parts[i];
    if (!node->is_object()) throw ConfigError("'" + parent + "' is not an object");
    if (!node->contains(parts[i]) && !is_free_form(parent)) throw ConfigError("unknown config key '" + walked + "'");
    if (i + 1 == parts.size()) (*node)[parts[i]] = value;
    else node = &(*node)[parts[i]];
    parent = walked;
  }
}

// Writes through a temporary file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace gdec
