#pragma once

// Wealth accounting and the diagnostics built on it.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "logopt/error.hpp"
#include "logopt/market.hpp"
#include "logopt/optimize.hpp"
#include "logopt/random.hpp"
#include "logopt/strategies.hpp"

namespace logopt {

// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// ---------------------------------------------------------------------------

struct WealthLedger {
  std::string strategy_name;
  std::string path_digest;
  std::vector<double> log_returns;
  std::vector<double> cum_log_wealth;
  std::vector<double> growth_rate;
  std::vector<double> final_portfolio;

  std::size_t size() const { return log_returns.size(); }
  // W_n for 1-based n.
  double growth_at(std::size_t n) const {
    require(n >= 1 && n <= size(), ErrorCode::InvalidArgument, "checkpoint outside the ledger");
    return growth_rate[n - 1];
  }
};

// Called after each period with (n, emitted portfolio, strategy).
using StepObserver = std::function<void(std::size_t, const Portfolio&, const Strategy&)>;

inline WealthLedger run_strategy(Strategy& strategy, const MarketPath& path, const StepObserver& observer = {}) {
  require(path.size() >= 1, ErrorCode::InvalidArgument, "cannot run a strategy on an empty path");
  WealthLedger ledger;
  ledger.strategy_name = strategy.name();
  ledger.path_digest = path.digest();
  ledger.log_returns.reserve(path.size());
  ledger.cum_log_wealth.reserve(path.size());
  ledger.growth_rate.reserve(path.size());
  strategy.reset();
  CompensatedSum cum;
  std::optional<Portfolio> last;
  for (std::size_t n = 1; n <= path.size(); ++n) {
    Portfolio b = strategy.next_portfolio(History(path, n));
    require(b.size() == path.m(), ErrorCode::DimensionMismatch, "strategy and market dimensions differ");
    const double r = std::log(b.dot(path.returns(n - 1).values()));
    cum.add(r);
    ledger.log_returns.push_back(r);
    ledger.cum_log_wealth.push_back(cum.value());
    ledger.growth_rate.push_back(cum.value() / static_cast<double>(n));
    if (observer) observer(n, b, strategy);
    last = std::move(b);
  }
  ledger.final_portfolio.assign(last->weights().begin(), last->weights().end());
  return ledger;
}

inline std::string ledger_csv(const WealthLedger& ledger) {
  std::ostringstream out;
  out << "n,log_return,cum_log_wealth,growth_rate\n";
  for (std::size_t i = 0; i < ledger.size(); ++i) {
    out << (i + 1) << ',' << format_double(ledger.log_returns[i]) << ',' << format_double(ledger.cum_log_wealth[i])
        << ',' << format_double(ledger.growth_rate[i]) << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------

struct ComparisonSeries {
  std::string strategy_a;
  std::string strategy_b;
  std::string path_digest;
  std::vector<std::size_t> n_grid;
  std::vector<double> diff;
};

// {10^2, 10^3, ...} up to n, with n appended when it is not on the grid.
inline std::vector<std::size_t> default_checkpoints(std::size_t n) {
  std::vector<std::size_t> out;
  for (std::size_t c = 100; c <= n; c *= 10) out.push_back(c);
  if (out.empty() || out.back() != n) out.push_back(n);
  return out;
}

inline void validate_checkpoints(const std::vector<std::size_t>& checkpoints, std::size_t n) {
  require(!checkpoints.empty(), ErrorCode::InvalidArgument, "no checkpoints");
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    require(checkpoints[i] >= 1 && checkpoints[i] <= n, ErrorCode::InvalidArgument,
            "checkpoint " + std::to_string(checkpoints[i]) + " outside 1.." + std::to_string(n));
    require(i == 0 || checkpoints[i] > checkpoints[i - 1], ErrorCode::InvalidArgument,
            "checkpoints must be strictly increasing");
  }
}

inline ComparisonSeries growth_diff(const WealthLedger& a, const WealthLedger& b,
                                    const std::vector<std::size_t>& checkpoints) {
  require(a.path_digest == b.path_digest && a.size() == b.size(), ErrorCode::PathMismatch,
          "ledgers come from different paths");
  validate_checkpoints(checkpoints, a.size());
  ComparisonSeries out{a.strategy_name, b.strategy_name, a.path_digest, checkpoints, {}};
  for (std::size_t n : checkpoints) out.diff.push_back(a.growth_at(n) - b.growth_at(n));
  return out;
}

inline std::string comparison_csv(const ComparisonSeries& series) {
  std::ostringstream out;
  out << "n,diff\n";
  for (std::size_t i = 0; i < series.n_grid.size(); ++i) {
    out << series.n_grid[i] << ',' << format_double(series.diff[i]) << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------

struct MeanEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t samples = 0;
};

// Mean and standard error with compensated sums in index order, so the
// result does not depend on how work was split across threads.
inline MeanEstimate estimate_mean(const std::vector<double>& xs) {
  MeanEstimate e;
  e.samples = xs.size();
  if (xs.empty()) return e;
  CompensatedSum s;
  for (double x : xs) s.add(x);
  e.mean = s.value() / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    CompensatedSum q;
    for (double x : xs) q.add((x - e.mean) * (x - e.mean));
    e.stderr_ = std::sqrt(q.value() / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
  return e;
}

// Evaluates f(0..count-1) on up to `threads` workers; results by index.
template <class F>
std::vector<double> parallel_map(std::size_t count, std::size_t threads, F f) {
  std::vector<double> out(count);
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = f(i);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < count; i += threads) out[i] = f(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// Monte Carlo estimate of E[S_n(competitor) / S_n(oracle log-optimal)].
// Path p uses seed derive_seed(seed, p).
inline MeanEstimate supermartingale_estimate(const Strategy& competitor, const MarketSpec& spec, std::size_t n,
                                             std::size_t paths, std::uint64_t seed, std::size_t threads = 1) {
  require(paths >= 30, ErrorCode::InvalidArgument, "supermartingale estimate needs at least 30 paths");
  require(n >= 1, ErrorCode::InvalidArgument, "horizon must be >= 1");
  auto ratios = parallel_map(paths, threads, [&](std::size_t p) {
    const MarketPath path = sample_path(spec, n, derive_seed(seed, p));
    auto c = competitor.clone();
    OracleLogOptimal oracle;
    const double lc = run_strategy(*c, path).cum_log_wealth.back();
    const double lo = run_strategy(oracle, path).cum_log_wealth.back();
    return std::exp(lc - lo);
  });
  return estimate_mean(ratios);
}

// ---------------------------------------------------------------------------

struct KtStepReport {
  std::size_t step = 0;
  std::string component;
  double max_residual = 0.0;
};

struct KtCertificate {
  std::vector<KtStepReport> steps;
  double max_residual = 0.0;
  double threshold = 1.0 + 1e-6;
  bool pass = true;
};

// Periods 1, 2, 4, 8, ... up to n, plus n.
inline std::vector<std::size_t> geometric_steps(std::size_t n) {
  std::vector<std::size_t> out;
  for (std::size_t s = 1; s <= n; s *= 2) out.push_back(s);
  if (out.back() != n) out.push_back(n);
  return out;
}

inline KtCertificate kt_certificate(const Strategy& strategy, const MarketPath& path,
                                    const std::vector<std::size_t>& step_sample) {
  auto s = strategy.clone();
  s->reset();
  require(s->optimization_records().has_value(), ErrorCode::NotApplicable,
          strategy.name() + " does not optimize an explicit distribution");
  std::vector<std::size_t> sample = step_sample;
  std::sort(sample.begin(), sample.end());
  KtCertificate cert;
  std::size_t next = 0;
  run_strategy(*s, path, [&](std::size_t n, const Portfolio&, const Strategy& st) {
    while (next < sample.size() && sample[next] < n) ++next;
    if (next >= sample.size() || sample[next] != n) return;
    const auto records = st.optimization_records();
    for (const auto& rec : *records) {
      const double r = max_kt_residual(rec.portfolio, rec.distribution);
      cert.steps.push_back({n, rec.component, r});
      cert.max_residual = std::max(cert.max_residual, r);
    }
  });
  cert.pass = cert.max_residual <= cert.threshold;
  return cert;
}

// Largest |W_n raw difference - W_n normalized difference| over all prefixes.
inline double normalization_identity_report(const MarketPath& path, const Portfolio& b1, const Portfolio& b2) {
  require(b1.size() == path.m() && b2.size() == path.m(), ErrorCode::DimensionMismatch,
          "portfolio and market dimensions differ");
  CompensatedSum raw, normalized;
  double worst = 0.0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    const auto x = path.returns(i).values();
    const auto u = normalize(x);
    raw.add(std::log(b1.dot(x)) - std::log(b2.dot(x)));
    normalized.add(std::log(b1.dot(u.values())) - std::log(b2.dot(u.values())));
    const double n = static_cast<double>(i + 1);
    worst = std::max(worst, std::abs(raw.value() / n - normalized.value() / n));
  }
  return worst;
}

// Best constant portfolio in hindsight on a path and its growth rate.
inline std::pair<Portfolio, double> bcrp_in_hindsight(const MarketPath& path, std::size_t n = 0) {
  if (n == 0) n = path.size();
  AtomCounter counter;
  for (std::size_t i = 0; i < n; ++i) counter.add(path.returns(i).values());
  const auto dist = counter.distribution();
  Portfolio b = solve_log_optimal(dist);
  return {b, expected_log_return(b, dist)};
}

// ---------------------------------------------------------------------------

struct AmGmReport {
  double gap = 0.0;          // sum a - n (prod a)^(1/n)
  double sqrt_spread = 0.0;  // max (sqrt a_i - sqrt a_j)^2
  double spread = 0.0;       // max |a_i - a_j|
  bool holds = false;        // gap >= spread
  bool sqrt_holds = false;   // gap >= sqrt_spread, up to rounding in the sum
};

// Evaluates the AM-GM lemma's chain on a positive sequence.
inline AmGmReport am_gm_check(const std::vector<double>& a) {
  require(!a.empty(), ErrorCode::InvalidArgument, "empty sequence");
  CompensatedSum sum, logs;
  for (double x : a) {
    require(x > 0.0, ErrorCode::NonPositiveInput, "sequence must be positive");
    sum.add(x);
    logs.add(std::log(x));
  }
  const double n = static_cast<double>(a.size());
  const auto [lo, hi] = std::minmax_element(a.begin(), a.end());
  AmGmReport r;
  r.gap = sum.value() - n * std::exp(logs.value() / n);
  r.sqrt_spread = (std::sqrt(*hi) - std::sqrt(*lo)) * (std::sqrt(*hi) - std::sqrt(*lo));
  r.spread = *hi - *lo;
  r.holds = r.gap >= r.spread;
  r.sqrt_holds = r.gap >= r.sqrt_spread - 1e-12 * sum.value();
  return r;
}

// ---------------------------------------------------------------------------

struct CheckResult {
  std::string check;
  std::string status;  // "pass", "fail" or "not_applicable"
  double statistic = 0.0;
  double threshold = 0.0;
  std::vector<std::uint64_t> seed_panel;
  nlohmann::json details = nlohmann::json::object();

  bool failed() const { return status == "fail"; }
};

inline nlohmann::json to_json(const CheckResult& r) {
  nlohmann::json j{{"check", r.check},
                   {"status", r.status},
                   {"pass", r.status != "fail"},
                   {"statistic", r.statistic},
                   {"threshold", r.threshold},
                   {"seed_panel", r.seed_panel}};
  if (!r.details.empty()) j["details"] = r.details;
  return j;
}

}  // namespace logopt
