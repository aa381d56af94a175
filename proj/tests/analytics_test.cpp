#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "logopt/analytics.hpp"

using namespace logopt;
using fixtures::atom;

namespace {

MarketPath fixed_path(std::vector<JointOutcome> support, std::vector<std::size_t> atoms) {
  std::vector<double> probs(support.size(), 1.0 / static_cast<double>(support.size()));
  return MarketPath(build_iid(std::move(support), probs), std::move(atoms), 0, 0);
}

double growth_gap(Strategy& a, Strategy& b, const MarketPath& path) {
  return run_strategy(a, path).growth_rate.back() - run_strategy(b, path).growth_rate.back();
}

}  // namespace

TEST(Ledger, AllOnesMarketHasZeroLedger) {
  auto path = sample_path(build_iid({atom({1, 1, 1})}, {1.0}), 50, 3);
  ConstantStrategy s(Portfolio{0.2, 0.3, 0.5});
  auto ledger = run_strategy(s, path);
  ASSERT_EQ(ledger.size(), 50u);
  for (std::size_t i = 0; i < ledger.size(); ++i) {
    EXPECT_EQ(ledger.log_returns[i], 0.0);
    EXPECT_EQ(ledger.cum_log_wealth[i], 0.0);
    EXPECT_EQ(ledger.growth_rate[i], 0.0);
  }
}

TEST(Ledger, SingleStepLogReturn) {
  auto path = fixed_path({atom({2, 1}), atom({0.5, 1})}, {0});
  ConstantStrategy s(Portfolio{0.5, 0.5});
  auto ledger = run_strategy(s, path);
  EXPECT_DOUBLE_EQ(ledger.log_returns[0], std::log(1.5));
  EXPECT_DOUBLE_EQ(ledger.growth_at(1), std::log(1.5));
  EXPECT_THROW(ledger.growth_at(2), Error);
  EXPECT_THROW(ledger.growth_at(0), Error);
}

TEST(Ledger, CumulativeAndGrowthAreConsistent) {
  auto path = sample_path(fixtures::coupled_markov(), 500, 11);
  EmpiricalLogOptimal s;
  auto ledger = run_strategy(s, path);
  CompensatedSum cum;
  for (std::size_t i = 0; i < ledger.size(); ++i) {
    cum.add(ledger.log_returns[i]);
    EXPECT_EQ(ledger.cum_log_wealth[i], cum.value());
    EXPECT_EQ(ledger.growth_rate[i], cum.value() / static_cast<double>(i + 1));
  }
  EXPECT_EQ(ledger.path_digest, path.digest());
  EXPECT_EQ(ledger.final_portfolio.size(), 2u);
}

TEST(Ledger, CsvRoundTripsDoubles) {
  auto path = sample_path(fixtures::kelly(), 20, 1);
  ConstantStrategy s(Portfolio{0.3, 0.7});
  auto ledger = run_strategy(s, path);
  const auto csv = ledger_csv(ledger);
  EXPECT_EQ(csv.rfind("n,log_return,cum_log_wealth,growth_rate\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 21);
  EXPECT_EQ(std::stod(format_double(ledger.growth_rate[7])), ledger.growth_rate[7]);
}

TEST(CompensatedSum, RecoversCancellation) {
  CompensatedSum s;
  s.add(1.0);
  s.add(1e100);
  s.add(1.0);
  s.add(-1e100);
  EXPECT_EQ(s.value(), 2.0);
}

TEST(GrowthDiff, SameStrategyGivesZeros) {
  auto path = sample_path(fixtures::kelly(0.6), 1000, 4);
  EmpiricalLogOptimal a, b;
  auto series = growth_diff(run_strategy(a, path), run_strategy(b, path), default_checkpoints(1000));
  EXPECT_EQ(series.n_grid, (std::vector<std::size_t>{100, 1000}));
  for (double d : series.diff) EXPECT_EQ(d, 0.0);
}

TEST(GrowthDiff, RejectsLedgersFromDifferentPaths) {
  ConstantStrategy s(Portfolio{0.5, 0.5});
  auto la = run_strategy(s, sample_path(fixtures::kelly(), 200, 1));
  auto lb = run_strategy(s, sample_path(fixtures::kelly(), 200, 2));
  try {
    growth_diff(la, lb, {100});
    FAIL() << "expected PathMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PathMismatch);
  }
}

TEST(GrowthDiff, CheckpointValidation) {
  EXPECT_EQ(default_checkpoints(50), (std::vector<std::size_t>{50}));
  EXPECT_EQ(default_checkpoints(2500), (std::vector<std::size_t>{100, 1000, 2500}));
  EXPECT_THROW(validate_checkpoints({}, 10), Error);
  EXPECT_THROW(validate_checkpoints({0}, 10), Error);
  EXPECT_THROW(validate_checkpoints({11}, 10), Error);
  EXPECT_THROW(validate_checkpoints({5, 5}, 10), Error);
  EXPECT_NO_THROW(validate_checkpoints({1, 10}, 10));
}

TEST(Supermartingale, OracleAgainstItselfIsExactlyOne) {
  auto e = supermartingale_estimate(OracleLogOptimal(), fixtures::coupled_markov(), 30, 40, 9, 2);
  EXPECT_EQ(e.mean, 1.0);
  EXPECT_EQ(e.stderr_, 0.0);
  EXPECT_EQ(e.samples, 40u);
}

TEST(Supermartingale, CompetitorsDoNotBeatTheOracleInExpectation) {
  for (const auto& spec : {fixtures::kelly(0.6), fixtures::coupled_markov()}) {
    ConstantStrategy uniform(Portfolio{0.5, 0.5});
    auto e = supermartingale_estimate(uniform, spec, 20, 2000, 17, 4);
    EXPECT_LE(e.mean, 1.0 + 3.0 * e.stderr_);
    EmpiricalLogOptimal emp;
    auto f = supermartingale_estimate(emp, spec, 20, 2000, 18, 4);
    EXPECT_LE(f.mean, 1.0 + 3.0 * f.stderr_);
  }
}

TEST(Supermartingale, ThreadCountDoesNotChangeTheEstimate) {
  ConstantStrategy s(Portfolio{0.4, 0.6});
  auto a = supermartingale_estimate(s, fixtures::kelly(0.6), 15, 64, 5, 1);
  auto b = supermartingale_estimate(s, fixtures::kelly(0.6), 15, 64, 5, 7);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.stderr_, b.stderr_);
}

TEST(Supermartingale, RejectsTooFewPaths) {
  EXPECT_THROW(supermartingale_estimate(OracleLogOptimal(), fixtures::kelly(), 10, 29, 1), Error);
}

TEST(KtCertificate, OptimizingStrategiesPass) {
  auto path = sample_path(fixtures::coupled_markov(), 300, 21);
  const auto steps = geometric_steps(300);
  EXPECT_EQ(steps.front(), 1u);
  EXPECT_EQ(steps.back(), 300u);
  OracleLogOptimal oracle;
  EmpiricalLogOptimal emp;
  KernelStrategy kernel(KernelParams{1, 4, std::nullopt, 3});
  for (Strategy* s : std::vector<Strategy*>{&oracle, &emp, &kernel}) {
    auto cert = kt_certificate(*s, path, steps);
    EXPECT_TRUE(cert.pass) << s->name() << " residual " << cert.max_residual;
    EXPECT_FALSE(cert.steps.empty());
  }
}

TEST(KtCertificate, CoverIsNotApplicable) {
  auto path = sample_path(fixtures::kelly(), 20, 1);
  UniversalCover cover(500, 1);
  try {
    kt_certificate(cover, path, {1, 20});
    FAIL() << "expected NotApplicable";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotApplicable);
  }
}

TEST(NormalizationIdentity, HoldsOnRandomPaths) {
  auto path = sample_path(fixtures::coupled_markov(), 2000, 8);
  EXPECT_LE(normalization_identity_report(path, Portfolio{0.9, 0.1}, Portfolio{0.2, 0.8}), 1e-12);
}

TEST(NormalizationIdentity, HoldsWithExtremeReturns) {
  auto path = sample_path(build_iid({atom({100, 0.01}), atom({0.01, 100}), atom({1, 1})}, {0.3, 0.3, 0.4}), 5000, 2);
  EXPECT_LE(normalization_identity_report(path, Portfolio{0.99, 0.01}, Portfolio{0.01, 0.99}), 1e-6);
}

TEST(NormalizedWealth, OptimalConstantDominatesPathwiseInRatio) {
  // With b-hat log-optimal for the empirical distribution, the average of
  // <b, U> is at most one for every b on that same path.
  auto path = sample_path(fixtures::coupled_markov(), 1000, 31);
  auto [bhat, w] = bcrp_in_hindsight(path);
  for (double t : {0.0, 0.1, 0.5, 0.9, 1.0}) {
    const Portfolio b = Portfolio::clamped({t, 1 - t});
    CompensatedSum s;
    for (std::size_t i = 0; i < path.size(); ++i) {
      const auto x = path.returns(i).values();
      s.add(b.dot(x) / bhat.dot(x));
    }
    EXPECT_LE(s.value() / static_cast<double>(path.size()), 1.0 + 1e-9) << "t = " << t;
  }
}

TEST(BcrpInHindsight, MatchesGridSearch) {
  auto path = sample_path(fixtures::kelly(0.6), 400, 3);
  auto [b, w] = bcrp_in_hindsight(path);
  double best = -1e300;
  for (int k = 0; k <= 10000; ++k) {
    const double t = k / 10000.0;
    CompensatedSum s;
    for (std::size_t i = 0; i < path.size(); ++i) s.add(std::log(t * path.returns(i)[0] + (1 - t) * path.returns(i)[1]));
    best = std::max(best, s.value() / 400.0);
  }
  EXPECT_NEAR(w, best, 1e-7);
  EXPECT_GE(w, best - 1e-12);
}

TEST(OracleGap, VanishesOnIidAndMixtureMarkets) {
  for (const auto& spec : {fixtures::kelly(0.6), fixtures::kelly_mixture()}) {
    auto path = sample_path(spec, 20000, 77);
    OracleLogOptimal oracle;
    OracleModeConstant mode_const;
    EXPECT_NEAR(growth_gap(oracle, mode_const, path), 0.0, 1e-9);
  }
}

TEST(OracleGap, EmpiricalGapDecaysOnIid) {
  auto spec = fixtures::kelly(0.6);
  double early = 0, late = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto path = sample_path(spec, 20000, seed);
    OracleLogOptimal oracle;
    EmpiricalLogOptimal emp;
    auto lo = run_strategy(oracle, path);
    auto le = run_strategy(emp, path);
    early += std::abs(lo.growth_at(200) - le.growth_at(200));
    late += std::abs(lo.growth_at(20000) - le.growth_at(20000));
  }
  EXPECT_LT(late, early);
  EXPECT_LT(late / 5, 1e-3);
}

TEST(OracleGap, PersistsWhenPastAndSideInformationPredictReturns) {
  // The exact limit of the gap for this market is 0.04071.
  auto path = sample_path(fixtures::coupled_markov(), 50000, 5);
  OracleLogOptimal oracle;
  OracleModeConstant constant;
  EXPECT_NEAR(growth_gap(oracle, constant, path), 0.0407, 0.005);
}

TEST(AmGm, SquareRootChainHolds) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(0.01, 10.01);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> a(2 + t % 7);
    for (auto& x : a) x = unif(rng);
    auto r = am_gm_check(a);
    EXPECT_TRUE(r.sqrt_holds) << "trial " << t;
    EXPECT_GE(r.gap, -1e-12);
  }
}

TEST(AmGm, SpreadFormFailsOnCounterexample) {
  auto r = am_gm_check({1.0, 4.0});
  EXPECT_DOUBLE_EQ(r.gap, 1.0);
  EXPECT_DOUBLE_EQ(r.sqrt_spread, 1.0);
  EXPECT_DOUBLE_EQ(r.spread, 3.0);
  EXPECT_FALSE(r.holds);
  EXPECT_TRUE(r.sqrt_holds);
}

TEST(AmGm, RejectsBadInput) {
  EXPECT_THROW(am_gm_check({}), Error);
  EXPECT_THROW(am_gm_check({1.0, 0.0}), Error);
}

TEST(CheckResult, JsonShape) {
  CheckResult r{"am_gm", "not_applicable", 0.5, 1.0, {1, 2}, {}};
  auto j = to_json(r);
  EXPECT_EQ(j["status"], "not_applicable");
  EXPECT_EQ(j["pass"], true);
  EXPECT_FALSE(j.contains("details"));
  EXPECT_FALSE(r.failed());
}
