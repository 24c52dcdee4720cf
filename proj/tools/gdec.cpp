// gdec command-line tool: decoding, hallucination metrics, PDM analysis,
// preference-pair generation and simulator experiments.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gdec/gdec.hpp"
#include "gdec/log.hpp"
#include "gdec/run_config.hpp"

namespace fs = std::filesystem;
using gdec::json;

namespace {

struct Flag {
  std::string name;
  std::string path;
  bool as_string = false;
};

const std::vector<Flag> kCommonFlags = {
    {"--decoder", "decoder.kind", true}, {"--alpha", "decoder.alpha"},
    {"--lambda", "decoder.lambda"},      {"--t0", "decoder.t0"},
    {"--mu", "decoder.mu"},              {"--tau", "decoder.tau"},
    {"--xi", "decoder.xi"},              {"--psi", "decoder.psi"},
    {"--temperature", "decoder.temperature"},
    {"--seed", "seed"},                  {"--max-tokens", "decoder.max_tokens"},
    {"--source", "source", true},        {"--endpoint", "endpoint", true},
    {"--out", "out", true},
};

// Flag values captured by CLI11 for one subcommand.
struct Invocation {
  std::string name;
  std::string config_path;
  std::vector<std::string> sets;
  std::map<std::string, std::string> values;
  std::vector<std::string> traces;
  std::vector<Flag> flags;
  CLI::App* app = nullptr;
};

void add_flags(Invocation& inv, const std::vector<Flag>& extra) {
  inv.flags = kCommonFlags;
  inv.flags.insert(inv.flags.end(), extra.begin(), extra.end());
  inv.app->add_option("--config", inv.config_path, "JSON config file");
  inv.app->add_option("--set", inv.sets, "Override a config field: dotted.path=value");
  for (const auto& f : inv.flags) inv.app->add_option(f.name, inv.values[f.name], f.path);
}

json resolve_config(const Invocation& inv) {
  json cfg = gdec::default_run_config();
  if (!inv.config_path.empty()) gdec::merge_config(cfg, gdec::load_json_file(inv.config_path));
  for (const auto& f : inv.flags) {
    if (inv.app->count(f.name) == 0) continue;
    const auto& raw = inv.values.at(f.name);
    gdec::set_path(cfg, f.path, f.as_string ? json(raw) : gdec::parse_flag_value(raw));
  }
  if (!inv.traces.empty()) cfg["pdm"]["traces"] = inv.traces;
  for (const auto& s : inv.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw gdec::ConfigError("--set expects path=value, got '" + s + "'");
    gdec::set_path(cfg, s.substr(0, eq), gdec::parse_flag_value(s.substr(eq + 1)));
  }
  gdec::decoder_config_from_json(cfg.at("decoder"));
  const auto source = cfg.at("source").get<std::string>();
  if (source != "mock" && source != "bridge") throw gdec::ConfigError("source must be mock or bridge");
  return cfg;
}

json stamp(const std::string& command, const json& cfg) {
  return json{{"tool", "gdec"},
              {"version", gdec::kVersion},
              {"command", command},
              {"seed", cfg.at("seed")},
              {"run_config", cfg}};
}

std::uint64_t master_seed(const json& cfg) { return cfg.at("seed").get<std::uint64_t>(); }

std::string require_path(const json& cfg, const std::string& section, const std::string& key) {
  const auto& node = section.empty() ? cfg.at(key) : cfg.at(section).at(key);
  const auto v = node.get<std::string>();
  if (v.empty())
    throw gdec::ConfigError("missing required path '" + (section.empty() ? key : section + "." + key) + "'");
  return v;
}

void emit(const json& cfg, const std::string& content) {
  const auto out = cfg.at("out").get<std::string>();
  if (out.empty()) std::cout << content;
  else gdec::write_file_atomic(out, content);
}

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw gdec::DataError("cannot open " + path);
  std::vector<json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw gdec::DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

struct OpenSession {
  std::unique_ptr<gdec::ModelSession> session;
  std::string image_ref;
};

std::vector<OpenSession> open_sessions(const json& cfg) {
  std::vector<OpenSession> out;
  const auto seed = master_seed(cfg);
  if (cfg.at("source") == "mock") {
    const auto& mock = cfg.at("mock");
    const auto n = mock.at("sessions").get<std::size_t>();
    if (n < 1) throw gdec::ConfigError("mock.sessions must be >= 1");
    for (std::size_t i = 0; i < n; ++i)
      out.push_back({gdec::open_mock_session(seed + i, mock.at("vocab_size").get<std::size_t>(), mock.at("scenario")),
                     "mock:" + std::to_string(seed + i)});
    return out;
  }
  const auto endpoint = require_path(cfg, "", "endpoint");
  json inputs = cfg.at("inputs");
  if (inputs.empty()) inputs.push_back(json::object());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto prompt = inputs[i].value("prompt", std::string());
    const auto context = inputs[i].value("context", std::string());
    gdec::log::info("opening bridge session " + std::to_string(i) + " at " + endpoint);
    out.push_back({gdec::open_bridge_session(endpoint, prompt, context),
                   context.empty() ? "input:" + std::to_string(i) : context});
  }
  return out;
}

std::string trace_text(const gdec::GenerationTrace& tr, const json& header_extra) {
  std::ostringstream os;
  gdec::write_trace(os, tr, header_extra);
  return os.str();
}

int cmd_decode(const json& cfg) {
  const auto out = fs::path(require_path(cfg, "", "out"));
  const auto base = gdec::decoder_config_from_json(cfg.at("decoder"));
  auto sessions = open_sessions(cfg);
  const bool many = sessions.size() > 1;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    auto dcfg = base;
    dcfg.seed += i;
    json extra = stamp("decode", cfg);
    extra["session_index"] = i;
    extra["image_ref"] = sessions[i].image_ref;
    extra["masking_mode"] = sessions[i].session->masking_mode();
    char name[64];
    std::snprintf(name, sizeof name, "session_%04zu.trace.jsonl", i);
    const auto path = many ? out / name : out;
    gdec::GenerationTrace tr;
    try {
      tr = gdec::decode(*sessions[i].session, dcfg);
    } catch (const gdec::DecodeFailure& e) {
      extra["partial"] = true;
      auto partial = path;
      partial += ".partial";
      gdec::write_file_atomic(partial, trace_text(e.partial(), extra));
      throw;
    }
    gdec::write_file_atomic(path, trace_text(tr, extra));
    std::cout << "wrote " << path.string() << " steps=" << tr.steps.size()
              << " terminated_by=" << (tr.terminated_by == gdec::Termination::eos ? "eos" : "budget") << '\n';
  }
  return 0;
}

int cmd_eval_chair(const json& cfg) {
  const auto& c = cfg.at("chair");
  const auto lex = gdec::lexicon_from_json(gdec::load_json_file(require_path(cfg, "chair", "lexicon")));
  const auto ann = gdec::annotations_from_json(gdec::load_json_file(require_path(cfg, "chair", "annotations")), lex);
  const auto mode = gdec::parse_count_mode(c.at("mode").get<std::string>());
  std::vector<gdec::CaptionRecord> caps;
  for (const auto& row : read_jsonl(require_path(cfg, "chair", "captions"))) {
    gdec::CaptionRecord r;
    r.image_id = gdec::image_key(row.at("image_id"));
    r.text = row.at("text").get<std::string>();
    r.extracted = gdec::extract_objects(r.text, lex);
    caps.push_back(std::move(r));
  }
  const auto rep = gdec::chair(caps, ann, mode);
  json per = json::array();
  for (const auto& r : caps) {
    json objs = json::array(), bad = json::array();
    const auto& truth = ann.at(r.image_id);
    for (const auto& m : r.extracted) {
      objs.push_back(m.category);
      if (!truth.count(m.category)) bad.push_back(m.category);
    }
    per.push_back(json{{"image_id", r.image_id}, {"objects", objs}, {"hallucinated", bad}});
  }
  json doc = stamp("eval-chair", cfg);
  doc["report"] = gdec::to_json(rep);
  doc["per_caption"] = per;
  emit(cfg, doc.dump(2) + "\n");
  std::cerr << "CHAIRi=" << rep.chair_i << " CHAIRs=" << rep.chair_s << " Cover=" << rep.cover << '\n';
  return 0;
}

bool parse_gold(const json& v) {
  if (v.is_boolean()) return v.get<bool>();
  const auto s = v.get<std::string>();
  const auto yn = gdec::parse_yes_no(s);
  if (yn == gdec::YesNo::unparsed) throw gdec::DataError("gold label '" + s + "' is neither yes nor no");
  return yn == gdec::YesNo::yes;
}

int cmd_eval_pope(const json& cfg) {
  const auto questions = read_jsonl(require_path(cfg, "pope", "questions"));
  std::map<std::string, std::string> answers;
  const auto answers_path = cfg.at("pope").at("answers").get<std::string>();
  if (!answers_path.empty())
    for (const auto& row : read_jsonl(answers_path))
      answers[gdec::image_key(row.at("id"))] = row.contains("text") ? row.at("text").get<std::string>()
                                                                   : row.at("answer").get<std::string>();
  std::vector<gdec::PopeAnswer> items;
  for (const auto& q : questions) {
    gdec::PopeAnswer a;
    a.question_id = gdec::image_key(q.at("id"));
    a.split = q.value("split", std::string("all"));
    a.gold_yes = parse_gold(q.at("gold"));
    if (auto it = answers.find(a.question_id); it != answers.end()) a.text = it->second;
    else a.text = q.value("answer", std::string());
    items.push_back(std::move(a));
  }
  const auto rep = gdec::pope_score(items);
  json doc = stamp("eval-pope", cfg);
  doc["report"] = gdec::to_json(rep);
  emit(cfg, doc.dump(2) + "\n");
  std::cerr << "accuracy=" << rep.accuracy() << " yes_rate=" << rep.yes_rate() << '\n';
  return 0;
}

std::vector<fs::path> expand_traces(const json& list) {
  std::vector<fs::path> out;
  for (const auto& item : list) {
    const fs::path p = item.get<std::string>();
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p)) {
        const auto name = e.path().filename().string();
        if (name.size() > 12 && name.compare(name.size() - 12, 12, ".trace.jsonl") == 0) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(p);
    }
  }
  if (out.empty()) throw gdec::ConfigError("no trace files given (pdm.traces / --traces)");
  return out;
}

gdec::SeriesKind series_kind(const json& cfg) {
  const auto k = cfg.at("pdm").at("kind").get<std::string>();
  if (k == "hellinger") return gdec::SeriesKind::hellinger;
  if (k == "rank") return gdec::SeriesKind::rank;
  throw gdec::ConfigError("pdm.kind must be hellinger or rank");
}

gdec::PdmSeries series_from_traces(const json& cfg) {
  const auto kind = series_kind(cfg);
  std::vector<gdec::PdmSeries> all;
  for (const auto& p : expand_traces(cfg.at("pdm").at("traces"))) {
    std::ifstream in(p);
    if (!in) throw gdec::DataError("cannot open " + p.string());
    all.push_back(gdec::trace_series(gdec::read_trace(in), kind));
  }
  return gdec::aggregate_series(all);
}

std::string series_csv(const gdec::PdmSeries& s) {
  std::ostringstream os;
  gdec::write_series_csv(os, s);
  return os.str();
}

// CSV files keep their column header first; the stamp goes to a sidecar.
void write_csv_with_meta(const fs::path& path, const std::string& csv, const json& meta) {
  gdec::write_file_atomic(path, csv);
  auto side = path;
  side += ".meta.json";
  gdec::write_file_atomic(side, meta.dump(2) + "\n");
}

int cmd_pdm_trace(const json& cfg) {
  const auto out = fs::path(require_path(cfg, "", "out"));
  const auto series = series_from_traces(cfg);
  write_csv_with_meta(out, series_csv(series), stamp("pdm-trace", cfg));
  std::cout << "wrote " << out.string() << " positions=" << series.entries.size() << '\n';
  return 0;
}

int cmd_estimate_lambda(const json& cfg) {
  const auto& p = cfg.at("pdm");
  gdec::PdmSeries series;
  const auto series_path = p.at("series").get<std::string>();
  if (!series_path.empty()) {
    std::ifstream in(series_path);
    if (!in) throw gdec::DataError("cannot open " + series_path);
    series = gdec::read_series_csv(in);
  } else {
    series = series_from_traces(cfg);
  }
  const auto t_min = p.at("t_min").get<std::int64_t>();
  const auto t_max = p.at("t_max").is_null() ? std::numeric_limits<std::int64_t>::max() : p.at("t_max").get<std::int64_t>();
  series = gdec::window(series, t_min, t_max);
  if (!series.entries.empty() &&
      std::all_of(series.entries.begin(), series.entries.end(), [](const auto& e) { return e.value == 0.0; }))
    throw gdec::DegenerateInput("all PDM values are zero");
  const auto fit = gdec::estimate_decay_rate(series);
  char line[256];
  std::snprintf(line, sizeof line, "lambda_hat=%.9g intercept=%.9g r_squared=%.9g n=%zu\n", fit.lambda_hat,
                fit.intercept, fit.r_squared, series.entries.size());
  std::cout << line;
  const auto out = cfg.at("out").get<std::string>();
  if (!out.empty()) {
    json doc = stamp("estimate-lambda", cfg);
    doc["fit"] = json{{"lambda_hat", fit.lambda_hat},
                      {"intercept", fit.intercept},
                      {"r_squared", fit.r_squared},
                      {"n", series.entries.size()},
                      {"kind", series.kind}};
    gdec::write_file_atomic(out, doc.dump(2) + "\n");
  }
  return 0;
}

int cmd_gen_prefs(const json& cfg) {
  const auto out = fs::path(require_path(cfg, "", "out"));
  const auto preferred = gdec::decoder_config_from_json(cfg.at("decoder"));
  const auto rejected = gdec::decoder_config_from_json(cfg.at("prefs").at("rejected"));
  auto sessions = open_sessions(cfg);
  std::vector<gdec::PairSource> sources;
  for (auto& s : sessions) sources.push_back({s.session.get(), s.image_ref});
  const auto res = gdec::build_pairs(sources, preferred, rejected);
  for (const auto& msg : res.log) gdec::log::info(msg);

  json header = stamp("gen-prefs", cfg);
  header["kind"] = "pairs_header";
  header["emitted"] = res.pairs.size();
  header["dropped_identical"] = res.dropped_identical;
  header["skipped_no_terminator"] = res.skipped_no_terminator;
  header["log"] = res.log;
  std::ostringstream os;
  os << header.dump() << '\n';
  for (const auto& p : res.pairs) os << gdec::to_json(p).dump() << '\n';
  gdec::write_file_atomic(out, os.str());
  std::cout << "emitted=" << res.pairs.size() << " dropped=" << res.dropped_identical
            << " skipped=" << res.skipped_no_terminator << '\n';
  return 0;
}

int cmd_simulate(const json& cfg) {
  const auto out = fs::path(require_path(cfg, "", "out"));
  const auto spec = gdec::sim_spec_from_json(cfg.at("sim"));
  const auto base = gdec::decoder_config_from_json(cfg.at("decoder"));
  std::vector<gdec::ExperimentArm> arms;
  for (const auto& a : cfg.at("experiment").at("arms"))
    arms.push_back({a.at("name").get<std::string>(), gdec::decoder_config_from_json(a.at("decoder"), base)});
  if (arms.empty()) throw gdec::ConfigError("experiment.arms is empty");
  const auto rep =
      gdec::run_experiment(spec, arms, cfg.at("experiment").at("n_runs").get<std::size_t>(), master_seed(cfg));

  json doc = stamp("simulate", cfg);
  doc["report"] = gdec::to_json(rep);
  gdec::write_file_atomic(out, doc.dump(2) + "\n");
  std::ostringstream csv;
  gdec::write_experiment_csv(csv, rep);
  auto csv_path = out;
  csv_path.replace_extension(".csv");
  write_csv_with_meta(csv_path, csv.str(), stamp("simulate", cfg));
  for (const auto& a : rep.arms)
    std::cout << a.arm.name << ": hallucination_rate=" << a.hallucination_rate()
              << " mean_oracle_kl=" << a.mean_oracle_kl << '\n';
  return 0;
}

int cmd_serve_mock(const json& cfg) {
  const auto& mock = cfg.at("mock");
  auto session = gdec::open_mock_session(master_seed(cfg), mock.at("vocab_size").get<std::size_t>(), mock.at("scenario"));
  gdec::FdChannel ch(0, 1);
  gdec::serve_session(*session, ch);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gdec: mutual-information decoding and hallucination evaluation"};
  app.set_version_flag("--version", std::string("gdec ") + gdec::kVersion);
  app.require_subcommand(1);

  struct Command {
    std::string name;
    std::string help;
    std::vector<Flag> extra;
    int (*run)(const json&);
  };
  const std::vector<Command> commands = {
      {"decode", "Decode with a mock or bridge session and write .trace.jsonl files", {}, cmd_decode},
      {"eval-chair",
       "CHAIR / Cover over a caption corpus",
       {{"--captions", "chair.captions", true},
        {"--annotations", "chair.annotations", true},
        {"--lexicon", "chair.lexicon", true},
        {"--mode", "chair.mode", true}},
       cmd_eval_chair},
      {"eval-pope",
       "POPE accuracy / yes-rate",
       {{"--questions", "pope.questions", true}, {"--answers", "pope.answers", true}},
       cmd_eval_pope},
      {"pdm-trace",
       "Aggregate per-position PDM series from traces (CSV)",
       {{"--kind", "pdm.kind", true}, {"--series", "pdm.series", true}, {"--t-min", "pdm.t_min"}, {"--t-max", "pdm.t_max"}},
       cmd_pdm_trace},
      {"estimate-lambda",
       "Fit the fading rate to a PDM series",
       {{"--kind", "pdm.kind", true}, {"--series", "pdm.series", true}, {"--t-min", "pdm.t_min"}, {"--t-max", "pdm.t_max"}},
       cmd_estimate_lambda},
      {"gen-prefs", "Build DPO preference pairs", {}, cmd_gen_prefs},
      {"simulate", "Run the fading-memory simulator experiment", {{"--runs", "experiment.n_runs"}}, cmd_simulate},
      {"serve-mock", "Serve a mock session over stdio with the bridge protocol", {}, cmd_serve_mock},
  };

  std::vector<std::unique_ptr<Invocation>> invocations;
  for (const auto& c : commands) {
    auto inv = std::make_unique<Invocation>();
    inv->name = c.name;
    inv->app = app.add_subcommand(c.name, c.help);
    add_flags(*inv, c.extra);
    if (c.name == "pdm-trace" || c.name == "estimate-lambda")
      inv->app->add_option("--traces", inv->traces, "Trace files or directories");
    invocations.push_back(std::move(inv));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    for (std::size_t i = 0; i < commands.size(); ++i) {
      if (!invocations[i]->app->parsed()) continue;
      const json cfg = resolve_config(*invocations[i]);
      gdec::log::debug("resolved config: " + cfg.dump());
      return commands[i].run(cfg);
    }
  } catch (const gdec::Error& e) {
    gdec::log::error(e.what());
    return gdec::exit_code(e.kind());
  } catch (const std::exception& e) {
    gdec::log::error(e.what());
    return 1;
  }
  return 1;
}
