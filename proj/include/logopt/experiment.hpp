#pragma once

// Config-driven experiment runner behind the command-line tool.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "logopt/analytics.hpp"
#include "logopt/digest.hpp"
#include "logopt/error.hpp"
#include "logopt/market.hpp"
#include "logopt/strategies.hpp"

#ifndef LOGOPT_VERSION
#define LOGOPT_VERSION "0.0.0"
#endif

namespace logopt {

inline constexpr const char* kToolVersion = LOGOPT_VERSION;

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitRuntime = 2 };

inline const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> names{"normalization_identity", "supermartingale", "kt_certificate", "am_gm"};
  return names;
}

struct StrategyEntry {
  std::string label;
  nlohmann::json config;  // materialized, without the label
};

struct ExperimentConfig {
  explicit ExperimentConfig(MarketSpec spec) : market(std::move(spec)) {}

  MarketSpec market;
  std::vector<StrategyEntry> strategies;
  std::size_t horizon = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<std::size_t> checkpoints;
  std::string output = "out";
  std::vector<std::string> checks;
  nlohmann::json check_params = nlohmann::json::object();

  const StrategyEntry& strategy(const std::string& label) const {
    for (const auto& s : strategies) {
      if (s.label == label) return s;
    }
    throw Error(ErrorCode::UnknownName, "no strategy labelled '" + label + "' in the config");
  }

  // All defaults filled in.
  nlohmann::json to_json() const {
    nlohmann::json strategies_json = nlohmann::json::array();
    for (const auto& s : strategies) {
      nlohmann::json j = s.config;
      j["label"] = s.label;
      strategies_json.push_back(j);
    }
    return {{"market", logopt::to_json(market)}, {"strategies", strategies_json}, {"horizon", horizon},
            {"seeds", seeds},                    {"checkpoints", checkpoints},       {"output", output},
            {"checks", checks},                  {"check_params", check_params}};
  }

  std::string digest() const { return sha256_hex(to_json().dump()); }
};

// Parses and validates a config; every failure surfaces as Error.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
  try {
    ExperimentConfig c(spec_from_json(j.at("market")));
    for (const auto& s : j.at("strategies")) {
      auto strategy = strategy_from_json(s);
      StrategyEntry e{s.value("label", strategy->name()), strategy->config()};
      require(!e.label.empty() && e.label.find_first_of("/\\ ") == std::string::npos, ErrorCode::InvalidArgument,
              "strategy label '" + e.label + "' is not a valid file name part");
      for (const auto& prev : c.strategies) {
        require(prev.label != e.label, ErrorCode::InvalidArgument, "duplicate strategy label '" + e.label + "'");
      }
      c.strategies.push_back(std::move(e));
    }
    require(!c.strategies.empty(), ErrorCode::InvalidArgument, "config needs at least one strategy");
    c.horizon = j.at("horizon").get<std::size_t>();
    require(c.horizon >= 1, ErrorCode::InvalidArgument, "horizon must be >= 1");
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    require(!c.seeds.empty(), ErrorCode::InvalidArgument, "config needs at least one seed");
    require(std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() == c.seeds.size(),
            ErrorCode::InvalidArgument, "seeds must be distinct");
    if (j.contains("checkpoints")) {
      c.checkpoints = j.at("checkpoints").get<std::vector<std::size_t>>();
      for (std::size_t cp : c.checkpoints) {
        require(cp <= c.horizon, ErrorCode::InvalidArgument,
                "horizon " + std::to_string(c.horizon) + " is below checkpoint " + std::to_string(cp));
      }
      validate_checkpoints(c.checkpoints, c.horizon);
    } else {
      c.checkpoints = default_checkpoints(c.horizon);
    }
    c.output = j.value("output", std::string("out"));
    c.checks = j.value("checks", std::vector<std::string>{});
    for (const auto& name : c.checks) {
      require(std::find(known_checks().begin(), known_checks().end(), name) != known_checks().end(),
              ErrorCode::UnknownName, "unknown check '" + name + "'");
    }
    if (j.contains("check_params")) c.check_params = j.at("check_params");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, path + ": " + e.what());
  }
  return parse_config(j);
}

// "1,2,5..8" -> {1,2,5,6,7,8}
inline std::vector<std::uint64_t> parse_seed_panel(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  try {
    while (std::getline(ss, item, ',')) {
      const auto dots = item.find("..");
      if (dots == std::string::npos) {
        out.push_back(std::stoull(item));
      } else {
        const std::uint64_t lo = std::stoull(item.substr(0, dots));
        const std::uint64_t hi = std::stoull(item.substr(dots + 2));
        require(lo <= hi, ErrorCode::InvalidArgument, "empty seed range '" + item + "'");
        for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
      }
    }
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::InvalidArgument, "bad seed panel '" + text + "'");
  }
  require(!out.empty(), ErrorCode::InvalidArgument, "empty seed panel");
  require(std::set<std::uint64_t>(out.begin(), out.end()).size() == out.size(), ErrorCode::InvalidArgument,
          "seeds must be distinct");
  return out;
}

struct RunOptions {
  std::optional<std::string> out;
  std::optional<std::vector<std::uint64_t>> seed_panel;
  std::size_t threads = 1;
};

// ---------------------------------------------------------------------------

namespace detail {

namespace fs = std::filesystem;

class OutputTree {
 public:
  explicit OutputTree(fs::path root) : root_(std::move(root)) {}

  const fs::path& root() const { return root_; }

  void write(const std::string& relative, const std::string& content) {
    const fs::path p = root_ / relative;
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::InvalidArgument, "cannot write " + p.string());
    out << content;
    out.close();
    require(static_cast<bool>(out), ErrorCode::InvalidArgument, "write failed for " + p.string());
    std::lock_guard lock(mutex_);
    files_.push_back({{"path", relative}, {"sha256", sha256_hex(content)}});
  }

  nlohmann::json files() const {
    auto sorted = files_;
    std::sort(sorted.begin(), sorted.end(),
              [](const nlohmann::json& a, const nlohmann::json& b) { return a["path"] < b["path"]; });
    return sorted;
  }

 private:
  fs::path root_;
  std::mutex mutex_;
  std::vector<nlohmann::json> files_;
};


struct Session {
  Session(ExperimentConfig c, RunOptions o) : config(std::move(c)), options(std::move(o)) {}

  ExperimentConfig config;
  RunOptions options;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  nlohmann::json timings = nlohmann::json::array();
  std::unique_ptr<std::mutex> mutex = std::make_unique<std::mutex>();

  std::string output_dir() const { return options.out.value_or(config.output); }

  void record_timing(const std::string& what, std::uint64_t seed, double seconds) {
    std::lock_guard lock(*mutex);
    timings.push_back({{"run", what}, {"seed", seed}, {"seconds", seconds}});
  }
};

inline double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// Runs body(i) for i in [0, count) on a worker pool; first error wins.
template <class F>
void fan_out(std::size_t count, std::size_t threads, F body) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  std::vector<std::exception_ptr> errors(threads);
  auto worker = [&](std::size_t t) {
    try {
      for (std::size_t i = t; i < count; i += threads) body(i);
    } catch (...) {
      errors[t] = std::current_exception();
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline void write_manifest(Session& s, OutputTree& tree, const std::string& command) {
  std::sort(s.timings.begin(), s.timings.end(), [](const nlohmann::json& a, const nlohmann::json& b) {
    return std::tie(a["run"], a["seed"]) < std::tie(b["run"], b["seed"]);
  });
  nlohmann::json manifest{{"tool_version", kToolVersion},
                          {"command", command},
                          {"config", s.config.to_json()},
                          {"config_digest", s.config.digest()},
                          {"spec_digest", s.config.market.digest()},
                          {"files", tree.files()},
                          {"timings", {{"total_seconds", seconds_since(s.start)}, {"runs", s.timings}}}};
  const fs::path p = tree.root() / "manifest.json";
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::InvalidArgument, "cannot write " + p.string());
  out << manifest.dump(2) << '\n';
}

inline std::vector<MarketPath> sample_all(const Session& s) {
  std::vector<MarketPath> paths;
  for (std::uint64_t seed : s.config.seeds) paths.push_back(sample_path(s.config.market, s.config.horizon, seed));
  return paths;
}

template <class Body>
int guarded(Body body, std::ostream& err) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

inline std::optional<Session> open_session(const std::string& config_path, const RunOptions& options,
                                           std::ostream& err) {
  try {
    Session s(load_config(config_path), options);
    if (options.seed_panel) {
      s.config.seeds = *options.seed_panel;
    }
    if (options.out) s.config.output = *options.out;
    return s;
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return std::nullopt;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------

// simulate: one ledger CSV per (strategy, seed), then the manifest.
inline int cmd_simulate(const std::string& config_path, const RunOptions& options = {},
                        std::ostream& err = std::cerr) {
  auto session = detail::open_session(config_path, options, err);
  if (!session) return kExitConfig;
  detail::Session& s = *session;
  return detail::guarded(
      [&] {
        detail::OutputTree tree(s.output_dir());
        const auto paths = detail::sample_all(s);
        const std::size_t ns = s.config.strategies.size();
        detail::fan_out(ns * paths.size(), s.options.threads, [&](std::size_t i) {
          const auto& entry = s.config.strategies[i % ns];
          const std::size_t p = i / ns;
          const auto t0 = std::chrono::steady_clock::now();
          auto strategy = strategy_from_json(entry.config);
          const auto ledger = run_strategy(*strategy, paths[p]);
          tree.write("ledgers/" + entry.label + "_" + std::to_string(s.config.seeds[p]) + ".csv", ledger_csv(ledger));
          s.record_timing(entry.label, s.config.seeds[p], detail::seconds_since(t0));
        });
        detail::write_manifest(s, tree, "simulate");
        return static_cast<int>(kExitOk);
      },
      err);
}

// compare: growth-difference CSV per seed plus mean/stderr across seeds.
inline int cmd_compare(const std::string& config_path, const std::string& a, const std::string& b,
                       const RunOptions& options = {}, std::ostream& err = std::cerr) {
  auto session = detail::open_session(config_path, options, err);
  if (!session) return kExitConfig;
  detail::Session& s = *session;
  const StrategyEntry* ea = nullptr;
  const StrategyEntry* eb = nullptr;
  try {
    ea = &s.config.strategy(a);
    eb = &s.config.strategy(b);
  } catch (const Error& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return detail::guarded(
      [&] {
        detail::OutputTree tree(s.output_dir());
        const auto paths = detail::sample_all(s);
        std::vector<ComparisonSeries> series(paths.size());
        detail::fan_out(paths.size(), s.options.threads, [&](std::size_t p) {
          const auto t0 = std::chrono::steady_clock::now();
          auto sa = strategy_from_json(ea->config);
          auto sb = strategy_from_json(eb->config);
          auto la = run_strategy(*sa, paths[p]);
          auto lb = run_strategy(*sb, paths[p]);
          la.strategy_name = ea->label;
          lb.strategy_name = eb->label;
          series[p] = growth_diff(la, lb, s.config.checkpoints);
          tree.write("compare/" + a + "_vs_" + b + "_" + std::to_string(s.config.seeds[p]) + ".csv",
                     comparison_csv(series[p]));
          s.record_timing(a + "_vs_" + b, s.config.seeds[p], detail::seconds_since(t0));
        });
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t k = 0; k < s.config.checkpoints.size(); ++k) {
          std::vector<double> d;
          for (const auto& sr : series) d.push_back(sr.diff[k]);
          const auto e = estimate_mean(d);
          rows.push_back({{"n", s.config.checkpoints[k]}, {"mean_diff", e.mean}, {"stderr", e.stderr_}});
        }
        nlohmann::json summary{{"a", a}, {"b", b}, {"seeds", s.config.seeds}, {"checkpoints", rows}};
        tree.write("compare/" + a + "_vs_" + b + "_summary.json", summary.dump(2) + "\n");
        detail::write_manifest(s, tree, "compare");
        return static_cast<int>(kExitOk);
      },
      err);
}

namespace detail {

inline Portfolio param_portfolio(const nlohmann::json& params, const char* key, std::vector<double> fallback) {
  if (params.contains(key)) return Portfolio(params.at(key).get<std::vector<double>>());
  double total = 0.0;
  for (double x : fallback) total += x;
  for (double& x : fallback) x /= total;
  return Portfolio(fallback);
}

inline std::vector<CheckResult> run_check(const std::string& name, Session& s, const std::vector<MarketPath>& paths) {
  const auto& cfg = s.config;
  const nlohmann::json params = cfg.check_params.value(name, nlohmann::json::object());
  const std::size_t m = cfg.market.m();
  std::vector<CheckResult> out;

  if (name == "normalization_identity") {
    std::vector<double> up(m), down(m);
    for (std::size_t i = 0; i < m; ++i) {
      up[i] = static_cast<double>(i + 1);
      down[i] = static_cast<double>(m - i);
    }
    const Portfolio b1 = param_portfolio(params, "b1", down);
    const Portfolio b2 = param_portfolio(params, "b2", up);
    CheckResult r{name, "pass", 0.0, params.value("threshold", 1e-7), cfg.seeds};
    for (const auto& p : paths) r.statistic = std::max(r.statistic, normalization_identity_report(p, b1, b2));
    r.status = r.statistic <= r.threshold ? "pass" : "fail";
    out.push_back(r);
  } else if (name == "supermartingale") {
    auto competitor = params.contains("competitor")
                          ? strategy_from_json(params.at("competitor"))
                          : constant_strategy(Portfolio::uniform(m));
    const std::size_t n = params.value("n", std::size_t{20});
    const std::size_t count = params.value("paths", std::size_t{1000});
    const std::uint64_t seed = params.value("seed", cfg.seeds.front());
    const auto e = supermartingale_estimate(*competitor, cfg.market, n, count, seed, s.options.threads);
    CheckResult r{name, "pass", e.mean, 1.0 + 3.0 * e.stderr_, {seed}};
    r.status = e.mean <= r.threshold ? "pass" : "fail";
    r.details = {{"competitor", competitor->config()}, {"n", n}, {"paths", count}, {"stderr", e.stderr_}};
    out.push_back(r);
  } else if (name == "kt_certificate") {
    for (const auto& entry : cfg.strategies) {
      auto strategy = strategy_from_json(entry.config);
      CheckResult r{name + ":" + entry.label, "pass", 0.0, 1.0 + 1e-6, cfg.seeds};
      try {
        for (const auto& p : paths) {
          const auto cert = kt_certificate(*strategy, p, geometric_steps(p.size()));
          r.statistic = std::max(r.statistic, cert.max_residual);
        }
        r.status = r.statistic <= r.threshold ? "pass" : "fail";
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NotApplicable) throw;
        r.status = "not_applicable";
        r.details = {{"reason", e.what()}};
      }
      out.push_back(r);
    }
  } else if (name == "am_gm") {
    const std::size_t count = params.value("sequences", std::size_t{1000});
    const std::uint64_t seed = params.value("seed", cfg.seeds.front());
    Rng rng(derive_seed(seed, 0xa3a3));
    std::size_t violations = 0, sqrt_violations = 0;
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t len = 2 + static_cast<std::size_t>(rng.uniform() * 49.0);
      std::vector<double> a(len);
      for (double& x : a) x = 0.01 + 4.0 * rng.uniform();
      const auto rep = am_gm_check(a);
      if (!rep.holds) ++violations;
      if (!rep.sqrt_holds) ++sqrt_violations;
    }
    CheckResult r{name, "pass", static_cast<double>(violations), 0.0, {seed}};
    r.status = violations == 0 ? "pass" : "fail";
    r.details = {{"sequences", count}, {"sqrt_form_violations", sqrt_violations}};
    out.push_back(r);
  } else {
    throw Error(ErrorCode::UnknownName, "unknown check '" + name + "'");
  }
  return out;
}

}  // namespace detail

// checks: runs the requested diagnostics and writes checks/report.json.
// Failed diagnostics are reported in the JSON; they do not change the exit
// code.
inline int cmd_checks(const std::string& config_path, const std::optional<std::vector<std::string>>& only = {},
                      const RunOptions& options = {}, std::ostream& err = std::cerr) {
  auto session = detail::open_session(config_path, options, err);
  if (!session) return kExitConfig;
  detail::Session& s = *session;
  std::vector<std::string> names = only.value_or(s.config.checks);
  if (names.empty()) names = known_checks();
  for (const auto& n : names) {
    if (std::find(known_checks().begin(), known_checks().end(), n) == known_checks().end()) {
      err << "config error: unknown check '" << n << "'\n";
      return kExitConfig;
    }
  }
  s.config.checks = names;
  return detail::guarded(
      [&] {
        detail::OutputTree tree(s.output_dir());
        const auto paths = detail::sample_all(s);
        nlohmann::json report = nlohmann::json::array();
        for (const auto& n : names) {
          const auto t0 = std::chrono::steady_clock::now();
          for (const auto& r : detail::run_check(n, s, paths)) report.push_back(to_json(r));
          s.record_timing(n, 0, detail::seconds_since(t0));
        }
        tree.write("checks/report.json", report.dump(2) + "\n");
        detail::write_manifest(s, tree, "checks");
        return static_cast<int>(kExitOk);
      },
      err);
}

}  // namespace logopt
