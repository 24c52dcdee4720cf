#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "gdec/gdec.hpp"
#include "oracles.hpp"

using namespace gdec;

TEST(Distance, KnownValues) {
  const std::vector<double> p{0.5, 0.5}, q{0.9, 0.1};
  EXPECT_NEAR(distance(p, q, DistanceKind::hellinger), 0.324919696232906326, 1e-12);
  EXPECT_NEAR(distance(p, q, DistanceKind::total_variation), 0.4, 1e-15);
  EXPECT_NEAR(distance(p, q, DistanceKind::kl), static_cast<double>(oracle::kl(p, q)), 1e-14);
  const std::vector<double> a{1, 0}, b{0, 1};
  EXPECT_EQ(distance(a, b, DistanceKind::hellinger), 1.0);
  EXPECT_EQ(distance(a, b, DistanceKind::total_variation), 1.0);
  EXPECT_EQ(distance(a, b, DistanceKind::kl), kPosInf);
  for (auto k : {DistanceKind::hellinger, DistanceKind::total_variation, DistanceKind::kl})
    EXPECT_EQ(distance(q, q, k), 0.0);
}

TEST(Distance, KlZeroMassTermsVanish) {
  EXPECT_NEAR(distance(std::vector<double>{1, 0}, std::vector<double>{0.5, 0.5}, DistanceKind::kl), std::log(2.0),
              1e-15);
}

TEST(Distance, DomainErrors) {
  const std::vector<double> p{0.5, 0.5};
  EXPECT_THROW(distance(p, std::vector<double>{1, 0, 0}, DistanceKind::hellinger), DomainError);
  EXPECT_THROW(distance(p, std::vector<double>{0.5, 0.6}, DistanceKind::total_variation), DomainError);
}

TEST(Distance, RandomPairsAgainstReference) {
  std::mt19937_64 gen(21);
  std::uniform_int_distribution<std::size_t> len(2, 40);
  for (int i = 0; i < 2000; ++i) {
    const auto n = len(gen);
    const auto p = oracle::random_distribution(gen, n, i % 2 == 0);
    const auto q = oracle::random_distribution(gen, n, i % 3 == 0);
    const double h = distance(p, q, DistanceKind::hellinger);
    const double tv = distance(p, q, DistanceKind::total_variation);
    EXPECT_NEAR(h, static_cast<double>(oracle::hellinger(p, q)), 1e-12);
    EXPECT_NEAR(tv, static_cast<double>(oracle::total_variation(p, q)), 1e-12);
    EXPECT_NEAR(h, distance(q, p, DistanceKind::hellinger), 1e-12);
    EXPECT_NEAR(tv, distance(q, p, DistanceKind::total_variation), 1e-12);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, 1.0);
    EXPECT_GE(tv, 0.0);
    EXPECT_LE(tv, 1.0);
    const double kl = distance(p, q, DistanceKind::kl);
    EXPECT_GE(kl, 0.0);
    // H^2 <= TV <= sqrt(2) H
    EXPECT_LE(h * h, tv + 1e-12);
    EXPECT_LE(tv, std::sqrt(2.0) * h + 1e-12);
  }
}

TEST(Distance, PermutationEquivariance) {
  std::mt19937_64 gen(22);
  for (int i = 0; i < 200; ++i) {
    auto p = oracle::random_distribution(gen, 10);
    auto q = oracle::random_distribution(gen, 10);
    std::vector<std::size_t> perm(10);
    for (std::size_t k = 0; k < 10; ++k) perm[k] = k;
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<double> pp(10), qq(10);
    for (std::size_t k = 0; k < 10; ++k) pp[k] = p[perm[k]], qq[k] = q[perm[k]];
    for (auto k : {DistanceKind::hellinger, DistanceKind::total_variation, DistanceKind::kl})
      EXPECT_NEAR(distance(p, q, k), distance(pp, qq, k), 1e-12);
  }
}

TEST(PdmH, Examples) {
  const LogitFrame same{oracle::logs({0.2, 0.8}), oracle::logs({0.2, 0.8})};
  EXPECT_EQ(pdm_h(same), 0.0);
  const LogitFrame disjoint{{0.0, kNegInf}, {kNegInf, 0.0}};
  EXPECT_EQ(pdm_h(disjoint), 1.0);
  const LogitFrame f{oracle::logs({0.5, 0.3, 0.2}), oracle::logs({0.6, 0.2, 0.2})};
  EXPECT_NEAR(pdm_h(f), 0.0856064729825734423, 1e-12);
}

TEST(PdmR, Examples) {
  const LogitFrame same{oracle::logs({0.1, 0.6, 0.3}), oracle::logs({0.1, 0.6, 0.3})};
  EXPECT_EQ(pdm_r(same), 1);
  std::vector<double> c(10, 0.01), u(10, 0.0);
  c[7] = 0.91;
  for (std::size_t i = 0; i < 10; ++i) u[i] = 0.01;
  u[2] = 0.4;
  u[5] = 0.3;
  u[7] = 0.22;
  double s = 0;
  for (double x : u) s += x;
  for (auto& x : u) x /= s;
  EXPECT_EQ(pdm_r({log_of(c), log_of(u)}), 3);
}

TEST(PdmR, TiesRankLowestIdFirst) {
  const LogitFrame f{oracle::logs({0.1, 0.1, 0.8}), oracle::logs({0.4, 0.2, 0.4})};
  EXPECT_EQ(pdm_r(f), 2);
  const LogitFrame g{oracle::logs({0.8, 0.1, 0.1}), oracle::logs({0.4, 0.2, 0.4})};
  EXPECT_EQ(pdm_r(g), 1);
}

TEST(PdmR, OneWhenArgmaxesCoincide) {
  std::mt19937_64 gen(23);
  for (int i = 0; i < 200; ++i) {
    auto c = oracle::random_distribution(gen, 12);
    auto u = oracle::random_distribution(gen, 12);
    const auto ac = std::max_element(c.begin(), c.end()) - c.begin();
    const auto au = std::max_element(u.begin(), u.end()) - u.begin();
    std::swap(u[ac], u[au]);
    EXPECT_EQ(pdm_r({log_of(c), log_of(u)}), 1);
  }
}

namespace {
PdmSeries exp_series(double a, double lam, int n) {
  PdmSeries s;
  for (int t = 0; t < n; ++t) s.entries.push_back({t, a * std::exp(-lam * t), 1});
  return s;
}
}  // namespace

TEST(DecayRate, ExactOnExponential) {
  const auto fit = estimate_decay_rate(exp_series(0.8, 0.02, 100));
  EXPECT_NEAR(fit.lambda_hat, 0.02, 1e-9);
  EXPECT_NEAR(fit.intercept, std::log(0.8), 1e-9);
  EXPECT_NEAR(fit.r_squared, 1.0, 1e-12);
}

TEST(DecayRate, ConstantSeries) {
  PdmSeries s;
  for (int t = 0; t < 20; ++t) s.entries.push_back({t, 0.3, 1});
  const auto fit = estimate_decay_rate(s);
  EXPECT_EQ(fit.lambda_hat, 0.0);
  EXPECT_EQ(fit.r_squared, 1.0);
}

TEST(DecayRate, Errors) {
  EXPECT_THROW(estimate_decay_rate(exp_series(1, 0.1, 7)), InsufficientData);
  auto s = exp_series(1, 0.1, 10);
  s.entries[4].value = 0.0;
  try {
    estimate_decay_rate(s);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("index 4"), std::string::npos);
  }
}

TEST(DecayRate, MatchesNormalEquationsOnNoisyData) {
  std::mt19937_64 gen(24);
  std::normal_distribution<double> nd(0, 0.1);
  PdmSeries s;
  for (int t = 3; t < 60; t += 2) s.entries.push_back({t, 0.5 * std::exp(-0.05 * t + nd(gen)), 1});
  oracle::ld n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& e : s.entries) {
    const oracle::ld x = e.t, y = std::log(static_cast<oracle::ld>(e.value));
    n += 1, sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  const oracle::ld slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const auto fit = estimate_decay_rate(s);
  EXPECT_NEAR(fit.lambda_hat, static_cast<double>(-slope), 1e-12);
  EXPECT_NEAR(fit.intercept, static_cast<double>((sy - slope * sx) / n), 1e-10);
  EXPECT_GT(fit.r_squared, 0.5);
  EXPECT_LT(fit.r_squared, 1.0);
}

TEST(Series, SingleStepTrace) {
  GenerationTrace tr;
  tr.steps.push_back({0, 5, 1.0, false, false, 0.25, 3});
  const auto h = trace_series(tr, SeriesKind::hellinger);
  ASSERT_EQ(h.entries.size(), 1u);
  EXPECT_EQ(h.entries[0].value, 0.25);
  EXPECT_EQ(trace_series(tr, SeriesKind::rank).entries[0].value, 3.0);
  EXPECT_THROW(trace_series(GenerationTrace{}, SeriesKind::hellinger), DegenerateInput);
}

TEST(Series, AggregationByHand) {
  // Lengths 4, 2, 1. Coverage needs >= 0.75 traces, so every position with at
  // least one trace survives; with a fourth empty-tail trace t=3 is dropped.
  auto mk = [](std::vector<double> v) {
    PdmSeries s;
    for (std::size_t i = 0; i < v.size(); ++i) s.entries.push_back({static_cast<std::int64_t>(i), v[i], 1});
    return s;
  };
  std::vector<PdmSeries> three{mk({0.9, 0.6, 0.3, 0.1}), mk({0.6, 0.3}), mk({0.3})};
  auto agg = aggregate_series(three);
  ASSERT_EQ(agg.entries.size(), 4u);
  EXPECT_NEAR(agg.entries[0].value, 0.6, 1e-15);
  EXPECT_EQ(agg.entries[0].n, 3u);
  EXPECT_NEAR(agg.entries[1].value, 0.45, 1e-15);
  EXPECT_EQ(agg.entries[1].n, 2u);
  EXPECT_NEAR(agg.entries[2].value, 0.3, 1e-15);
  EXPECT_NEAR(agg.entries[3].value, 0.1, 1e-15);

  std::vector<PdmSeries> five{mk({0.9, 0.6, 0.3, 0.1}), mk({0.6, 0.3}), mk({0.3}), mk({0.5}), mk({0.5})};
  agg = aggregate_series(five);
  ASSERT_EQ(agg.entries.size(), 2u);  // t=2,3 covered by 1 of 5 < 1.25
  EXPECT_NEAR(agg.entries[0].value, (0.9 + 0.6 + 0.3 + 0.5 + 0.5) / 5, 1e-15);
  EXPECT_NEAR(agg.entries[1].value, 0.45, 1e-15);
}

TEST(Series, WindowAndCsvRoundTrip) {
  auto s = exp_series(0.7, 0.03, 30);
  s.entries[3].n = 9;
  const auto w = window(s, 5, 9);
  ASSERT_EQ(w.entries.size(), 5u);
  EXPECT_EQ(w.entries.front().t, 5);
  std::stringstream ss;
  write_series_csv(ss, s);
  EXPECT_EQ(ss.str().rfind("t,value,kind,n\n", 0), 0u);
  const auto back = read_series_csv(ss);
  EXPECT_EQ(back.kind, "hellinger");
  ASSERT_EQ(back.entries.size(), s.entries.size());
  for (std::size_t i = 0; i < s.entries.size(); ++i) EXPECT_EQ(back.entries[i], s.entries[i]);
  std::stringstream bad("x,y\n1,2\n");
  EXPECT_THROW(read_series_csv(bad), DataError);
}
