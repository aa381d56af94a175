#pragma once

#include <vector>

#include "logopt/market.hpp"

namespace fixtures {

using logopt::AssetReturns;
using logopt::JointOutcome;
using logopt::MarketSpec;

inline JointOutcome atom(std::vector<double> x, std::vector<double> y = {}) {
  return JointOutcome{AssetReturns(std::move(x)), logopt::SideInfo{std::move(y)}, 0};
}

// Coin flip: asset 1 doubles or halves, asset 2 is cash.
inline MarketSpec kelly(double p = 0.5) {
  return logopt::build_iid({atom({2, 1}), atom({0.5, 1})}, {p, 1.0 - p});
}

// The two Kelly atoms alternate deterministically.
inline MarketSpec two_cycle(std::size_t start = 0) {
  logopt::TransitionTable t{{{0}, {0.0, 1.0}}, {{1}, {1.0, 0.0}}};
  logopt::TupleDistribution init{{{start}, 1.0}};
  return logopt::build_markov({atom({2, 1}), atom({0.5, 1})}, 1, t, init);
}

// Four atoms, one feature y = +-1. The previous atom and the current y both
// carry information about the current X.
inline MarketSpec coupled_markov() {
  logopt::TransitionTable t{{{0}, {0.45, 0.15, 0.25, 0.15}},
                            {{1}, {0.20, 0.40, 0.10, 0.30}},
                            {{2}, {0.15, 0.25, 0.20, 0.40}},
                            {{3}, {0.30, 0.10, 0.45, 0.15}}};
  return logopt::build_markov({atom({1.25, 0.95}, {1}), atom({0.85, 1.05}, {1}), atom({1.20, 0.90}, {-1}),
                               atom({0.80, 1.10}, {-1})},
                              1, t);
}

// Two ergodic IID modes whose optimal constant portfolios differ:
// b* = (3p - 1, 2 - 3p), i.e. (0.8, 0.2) and (0.2, 0.8).
inline MarketSpec kelly_mixture(double w0 = 0.5) { return logopt::build_mixture({kelly(0.6), kelly(0.4)}, {w0, 1 - w0}); }

}  // namespace fixtures
