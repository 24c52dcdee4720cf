#include <gtest/gtest.h>

#include "cli_util.hpp"
#include "gdec/gdec.hpp"

using namespace gdec;
namespace fs = std::filesystem;

namespace {

std::vector<json> jsonl(const std::string& text) {
  std::vector<json> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(json::parse(line));
  return rows;
}

void write_toy_corpus(const fs::path& d) {
  cli::put(d / "lex.json", cli::kLexicon);
  cli::put(d / "ann.json", cli::kAnnotations);
  cli::put(d / "caps.jsonl", cli::kCaptions);
  cli::put(d / "q.jsonl", cli::kQuestions);
  cli::put(d / "a.jsonl", cli::kAnswers);
}

}  // namespace

TEST(Cli, DecodeUniformFourSteps) {
  const auto d = cli::scratch("decode");
  const auto r = cli::run(d, "decode --set mock.vocab_size=8 --set 'mock.scenario={\"kind\":\"uniform\"}' "
                             "--decoder greedy --max-tokens 4 --out u.trace.jsonl");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rows = jsonl(cli::slurp(d / "u.trace.jsonl"));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].at("kind"), "trace_header");
  EXPECT_EQ(rows[0].at("n_steps"), 4);
  EXPECT_EQ(rows[0].at("terminated_by"), "budget");
  EXPECT_EQ(rows[0].at("tool"), "gdec");
  EXPECT_EQ(rows[0].at("seed"), 0);
  std::istringstream in(cli::slurp(d / "u.trace.jsonl"));
  const auto tr = read_trace(in);
  EXPECT_EQ(tr.steps.size(), 4u);
  EXPECT_EQ(tr.descriptor.vocab_size, 8u);
}

TEST(Cli, DecodeIsByteIdenticalAcrossRuns) {
  const auto d1 = cli::scratch("repro"), d2 = cli::scratch("repro");
  const std::string args = "decode --decoder multinomial --temperature 0.7 --seed 11 --max-tokens 50 "
                           "--set mock.sessions=3 --out traces";
  ASSERT_EQ(cli::run(d1, args).code, 0);
  ASSERT_EQ(cli::run(d2, args).code, 0);
  for (const char* f : {"session_0000.trace.jsonl", "session_0001.trace.jsonl", "session_0002.trace.jsonl"}) {
    const auto a = cli::slurp(d1 / "traces" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, cli::slurp(d2 / "traces" / f)) << f;
  }
}

TEST(Cli, M3idDefaultsStampedInHeader) {
  const auto d = cli::scratch("stamp");
  ASSERT_EQ(cli::run(d, "decode --decoder m3id --max-tokens 3 --out m.trace.jsonl").code, 0);
  const auto h = jsonl(cli::slurp(d / "m.trace.jsonl")).at(0);
  EXPECT_EQ(h.at("config").at("kind"), "m3id");
  EXPECT_EQ(h.at("config").at("alpha"), 0.3);
  EXPECT_EQ(h.at("config").at("lambda"), 0.02);
  EXPECT_EQ(h.at("run_config").at("decoder").at("alpha"), 0.3);
  EXPECT_EQ(h.at("version"), kVersion);
}

TEST(Cli, HeaderConfigReproducesFile) {
  const auto d = cli::scratch("rerun");
  ASSERT_EQ(cli::run(d, "decode --decoder m3id --alpha 0.5 --seed 3 --max-tokens 30 --out a.trace.jsonl").code, 0);
  const auto original = cli::slurp(d / "a.trace.jsonl");
  auto rc = jsonl(original).at(0).at("run_config");
  cli::put(d / "cfg.json", rc.dump());
  ASSERT_EQ(cli::run(d, "decode --config cfg.json").code, 0);
  EXPECT_EQ(cli::slurp(d / "a.trace.jsonl"), original);
}

TEST(Cli, EvalChairToyCorpus) {
  const auto d = cli::scratch("chair");
  write_toy_corpus(d);
  const auto r =
      cli::run(d, "eval-chair --captions caps.jsonl --annotations ann.json --lexicon lex.json --out chair.json");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rep = json::parse(cli::slurp(d / "chair.json"));
  EXPECT_EQ(rep.at("report").at("chair_i").get<double>(), 1.0 / 3.0);
  EXPECT_EQ(rep.at("report").at("chair_s").get<double>(), 0.5);
  EXPECT_EQ(rep.at("report").at("cover").get<double>(), 1.0);
  EXPECT_EQ(rep.at("report").at("count_mode"), "unique");
  EXPECT_EQ(rep.at("per_caption").at(0).at("hallucinated").at(0), "frisbee");
}

TEST(Cli, EvalChairEmptyCaptions) {
  const auto d = cli::scratch("chair_empty");
  write_toy_corpus(d);
  cli::put(d / "none.jsonl", "");
  const auto r = cli::run(d, "eval-chair --captions none.jsonl --annotations ann.json --lexicon lex.json");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rep = json::parse(r.out.substr(0, r.out.rfind("CHAIRi")));
  EXPECT_EQ(rep.at("report").at("counts").at("captions"), 0);
  EXPECT_EQ(rep.at("report").at("chair_i"), 0.0);
}

TEST(Cli, EvalChairMissingAnnotationExitsThree) {
  const auto d = cli::scratch("chair_missing");
  write_toy_corpus(d);
  cli::put(d / "caps2.jsonl", "{\"image_id\":\"Z9\",\"text\":\"a dog\"}\n");
  const auto r = cli::run(d, "eval-chair --captions caps2.jsonl --annotations ann.json --lexicon lex.json");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("Z9"), std::string::npos);
}

TEST(Cli, EvalPopeToySet) {
  const auto d = cli::scratch("pope");
  write_toy_corpus(d);
  const auto r = cli::run(d, "eval-pope --questions q.jsonl --answers a.jsonl --out pope.json");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rep = json::parse(cli::slurp(d / "pope.json")).at("report");
  EXPECT_EQ(rep.at("accuracy").get<double>(), 0.75);
  EXPECT_EQ(rep.at("yes_rate").get<double>(), 0.75);
  EXPECT_EQ(rep.at("splits").at("random").at("accuracy").get<double>(), 0.5);
}

TEST(Cli, UnreachableBridgeExitsTwo) {
  const auto d = cli::scratch("bridge");
  auto r = cli::run(d, "decode --source bridge --endpoint tcp:127.0.0.1:1 --out x.trace.jsonl");
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("protocol error"), std::string::npos) << r.out;
  r = cli::run(d, "decode --source bridge --endpoint 'stdio:exit 0' --out x.trace.jsonl");
  EXPECT_EQ(r.code, 2) << r.out;
}

TEST(Cli, DecodeOverBridgeMatchesMock) {
  const auto d = cli::scratch("bridge_ok");
  const std::string ep = std::string("stdio:") + GDEC_CLI_PATH + " serve-mock --seed 5";
  ASSERT_EQ(cli::run(d, "decode --seed 5 --decoder m3id --max-tokens 40 --out local.trace.jsonl").code, 0);
  const auto r = cli::run(d, "decode --decoder m3id --max-tokens 40 --source bridge --endpoint '" + ep +
                                 "' --out remote.trace.jsonl");
  ASSERT_EQ(r.code, 0) << r.out;
  std::istringstream a(cli::slurp(d / "local.trace.jsonl")), b(cli::slurp(d / "remote.trace.jsonl"));
  const auto ta = read_trace(a), tb = read_trace(b);
  EXPECT_EQ(ta.tokens(), tb.tokens());
  ASSERT_EQ(ta.steps.size(), tb.steps.size());
  for (std::size_t i = 0; i < ta.steps.size(); ++i) EXPECT_EQ(ta.steps[i].pdm_h, tb.steps[i].pdm_h);
}

TEST(Cli, PdmTraceAndEstimateLambda) {
  const auto d = cli::scratch("pdm");
  ASSERT_EQ(cli::run(d, "decode --set sim.horizon=200 --max-tokens 200 --set mock.sessions=4 --out traces").code, 0);
  auto r = cli::run(d, "pdm-trace --traces traces --out series.csv");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(cli::slurp(d / "series.csv").rfind("t,value,kind,n\n", 0), 0u);
  EXPECT_TRUE(fs::exists(d / "series.csv.meta.json"));
  r = cli::run(d, "estimate-lambda --series series.csv --out fit.json");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("lambda_hat="), std::string::npos);
  const double lam = json::parse(cli::slurp(d / "fit.json")).at("fit").at("lambda_hat").get<double>();
  EXPECT_NEAR(lam, 0.02, 0.002);
}

TEST(Cli, SingleTraceSeriesEqualsTrace) {
  const auto d = cli::scratch("pdm_single");
  ASSERT_EQ(cli::run(d, "decode --max-tokens 20 --out one.trace.jsonl").code, 0);
  ASSERT_EQ(cli::run(d, "pdm-trace --traces one.trace.jsonl --out s.csv").code, 0);
  std::istringstream t(cli::slurp(d / "one.trace.jsonl")), s(cli::slurp(d / "s.csv"));
  const auto tr = read_trace(t);
  const auto series = read_series_csv(s);
  ASSERT_EQ(series.entries.size(), tr.steps.size());
  for (std::size_t i = 0; i < tr.steps.size(); ++i) EXPECT_EQ(series.entries[i].value, tr.steps[i].pdm_h);
}

TEST(Cli, EstimateLambdaExactExponential) {
  const auto d = cli::scratch("lambda_exact");
  std::ostringstream csv;
  csv << "t,value,kind,n\n";
  for (int t = 0; t < 100; ++t) {
    char b[64];
    std::snprintf(b, sizeof b, "%.17g", 0.8 * std::exp(-0.02 * t));
    csv << t << ',' << b << ",hellinger,1\n";
  }
  cli::put(d / "exp.csv", csv.str());
  const auto r = cli::run(d, "estimate-lambda --series exp.csv");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("lambda_hat=0.02 "), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("r_squared=1 "), std::string::npos) << r.out;
}

TEST(Cli, EstimateLambdaAllZeroExitsFour) {
  const auto d = cli::scratch("lambda_zero");
  ASSERT_EQ(cli::run(d, "decode --set 'mock.scenario={\"kind\":\"uniform\"}' --max-tokens 12 --out z.trace.jsonl")
                .code,
            0);
  const auto r = cli::run(d, "estimate-lambda --traces z.trace.jsonl");
  EXPECT_EQ(r.code, 4) << r.out;
}

TEST(Cli, EstimateLambdaTooFewPointsExitsFour) {
  const auto d = cli::scratch("lambda_few");
  ASSERT_EQ(cli::run(d, "decode --max-tokens 5 --out f.trace.jsonl").code, 0);
  EXPECT_EQ(cli::run(d, "estimate-lambda --traces f.trace.jsonl").code, 4);
}

TEST(Cli, GenPrefsDivergentAndDegenerate) {
  const auto d = cli::scratch("prefs");
  cli::put(d / "div.json", json{{"mock", {{"vocab_size", 5}, {"scenario", json::parse(cli::prefs_table(2))}}}}.dump());
  cli::put(d / "deg.json", json{{"mock", {{"vocab_size", 5}, {"scenario", json::parse(cli::prefs_table(4))}}}}.dump());
  auto r = cli::run(d, "gen-prefs --config div.json --decoder m3id --out div.jsonl");
  ASSERT_EQ(r.code, 0) << r.out;
  auto rows = jsonl(cli::slurp(d / "div.jsonl"));
  ASSERT_GE(rows.size(), 2u);
  EXPECT_EQ(rows[0].at("emitted"), 1);
  const auto p = pair_from_json(rows[1]);
  EXPECT_TRUE(shares_first_sentence(p));
  EXPECT_EQ(p.rejected, (Tokens{1, 3, 2, 4}));

  r = cli::run(d, "gen-prefs --config deg.json --decoder m3id --out deg.jsonl");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("emitted=0 dropped=1"), std::string::npos) << r.out;
  rows = jsonl(cli::slurp(d / "deg.jsonl"));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].at("dropped_identical"), 1);

  EXPECT_EQ(cli::run(d, "gen-prefs --config div.json --decoder greedy --out x.jsonl").code, 1);
}

TEST(Cli, SimulateReportsBothArms) {
  const auto d = cli::scratch("sim");
  const auto r = cli::run(d, "simulate --runs 3 --set sim.horizon=30 --out rep.json");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rep = json::parse(cli::slurp(d / "rep.json")).at("report");
  ASSERT_EQ(rep.at("arms").size(), 2u);
  EXPECT_EQ(rep.at("arms").at(0).at("name"), "greedy");
  EXPECT_EQ(rep.at("arms").at(1).at("name"), "m3id");
  EXPECT_EQ(rep.at("arms").at(1).at("config").at("kind"), "m3id");
  EXPECT_EQ(cli::slurp(d / "rep.csv").rfind("arm,t,n,", 0), 0u);
  EXPECT_TRUE(fs::exists(d / "rep.csv.meta.json"));
  ASSERT_EQ(cli::run(d, "simulate --runs 3 --set sim.horizon=30 --out rep2.json").code, 0);
  EXPECT_EQ(cli::slurp(d / "rep.csv"), cli::slurp(d / "rep2.csv"));
}

TEST(Cli, ConfigErrors) {
  const auto d = cli::scratch("cfg");
  cli::put(d / "bad.json", R"({"decoder":{"alpha":0.3,"betta":1}})");
  auto r = cli::run(d, "decode --config bad.json --out x.trace.jsonl");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("betta"), std::string::npos) << r.out;
  r = cli::run(d, "decode --set nope.key=1 --out x.trace.jsonl");
  EXPECT_EQ(r.code, 1);
  r = cli::run(d, "decode --alpha 2 --out x.trace.jsonl");
  EXPECT_EQ(r.code, 1);
  r = cli::run(d, "decode --source carrier --out x.trace.jsonl");
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(fs::exists(d / "x.trace.jsonl"));
}
