#pragma once

// Normalized returns, log-optimal portfolios over finite-support
// distributions, and Kuhn-Tucker residuals.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "logopt/error.hpp"
#include "logopt/market.hpp"

namespace logopt {

inline constexpr double kInteriorEpsilon = 1e-9;

// A strictly positive point of the m-simplex.
class Portfolio {
 public:
  Portfolio() = default;
  Portfolio(std::initializer_list<double> weights) : Portfolio(std::vector<double>(weights)) {}
  explicit Portfolio(std::vector<double> weights, double epsilon = kInteriorEpsilon)
      : weights_(std::move(weights)) {
    require(weights_.size() >= 2, ErrorCode::DimensionMismatch, "portfolio needs m >= 2");
    double sum = 0.0;
    for (double w : weights_) {
      require(std::isfinite(w) && w >= epsilon * (1.0 - 1e-6), ErrorCode::InvalidArgument,
              "portfolio weights must be >= the interior epsilon");
      sum += w;
    }
    require(std::abs(sum - 1.0) <= 1e-12, ErrorCode::InvalidArgument, "portfolio weights must sum to 1");
  }

  static Portfolio uniform(std::size_t m) {
    return Portfolio(std::vector<double>(m, 1.0 / static_cast<double>(m)));
  }

  // Projects arbitrary nonnegative weights onto the epsilon-clamped simplex.
  static Portfolio clamped(std::vector<double> raw, double epsilon = kInteriorEpsilon) {
    const std::size_t m = raw.size();
    require(m >= 2 && epsilon * static_cast<double>(m) < 1.0, ErrorCode::DimensionMismatch,
            "cannot clamp to the simplex");
    std::vector<bool> fixed(m, false);
    for (;;) {
      double free_mass = 0.0;
      std::size_t n_fixed = 0;
      for (std::size_t i = 0; i < m; ++i) {
        if (fixed[i]) {
          ++n_fixed;
        } else {
          free_mass += std::max(raw[i], 0.0);
        }
      }
      const double target = 1.0 - epsilon * static_cast<double>(n_fixed);
      bool changed = false;
      for (std::size_t i = 0; i < m; ++i) {
        if (fixed[i]) continue;
        const double w = free_mass > 0.0 ? std::max(raw[i], 0.0) * target / free_mass
                                         : target / static_cast<double>(m - n_fixed);
        if (w < epsilon) {
          fixed[i] = true;
          changed = true;
        }
      }
      if (changed) continue;
      std::vector<double> out(m);
      for (std::size_t i = 0; i < m; ++i) {
        out[i] = fixed[i] ? epsilon
                          : (free_mass > 0.0 ? std::max(raw[i], 0.0) * target / free_mass
                                             : target / static_cast<double>(m - n_fixed));
      }
      return Portfolio(std::move(out), epsilon);
    }
  }

  std::size_t size() const { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_[i]; }
  std::span<const double> weights() const { return weights_; }

  double dot(std::span<const double> x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < weights_.size(); ++i) s += weights_[i] * x[i];
    return s;
  }

  friend bool operator==(const Portfolio&, const Portfolio&) = default;

 private:
  std::vector<double> weights_;
};

// Returns divided by the equal-weight portfolio's return: <b_hat, u> = 1 and
// 0 < u_i <= m.
class NormalizedReturns {
 public:
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }

 private:
  friend NormalizedReturns normalize(std::span<const double> x);
  explicit NormalizedReturns(std::vector<double> v) : values_(std::move(v)) {}
  std::vector<double> values_;
};

inline NormalizedReturns normalize(std::span<const double> x) {
  require(x.size() >= 2, ErrorCode::DimensionMismatch, "normalize needs m >= 2");
  double mean = 0.0;
  for (double v : x) {
    require(std::isfinite(v) && v > 0.0, ErrorCode::NonPositiveInput, "normalize needs strictly positive returns");
    mean += v;
  }
  mean /= static_cast<double>(x.size());
  std::vector<double> u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) u[i] = x[i] / mean;
  return NormalizedReturns(std::move(u));
}

inline NormalizedReturns normalize(const AssetReturns& x) { return normalize(x.values()); }
inline NormalizedReturns normalize(const NormalizedReturns& u) { return normalize(u.values()); }

// Finite weighted support over return vectors (raw or normalized).
class EmpiricalDistribution {
 public:
  EmpiricalDistribution() = default;
  EmpiricalDistribution(std::vector<std::vector<double>> atoms, std::vector<double> weights)
      : atoms_(std::move(atoms)), weights_(std::move(weights)) {
    require(atoms_.size() == weights_.size(), ErrorCode::DimensionMismatch, "one weight per atom");
    double sum = 0.0;
    for (double w : weights_) {
      require(std::isfinite(w) && w >= 0.0, ErrorCode::InvalidProbability, "negative weight");
      sum += w;
    }
    if (!atoms_.empty()) {
      require(std::abs(sum - 1.0) <= kProbabilityTolerance, ErrorCode::InvalidProbability,
              "weights must sum to 1");
    }
    for (const auto& a : atoms_) {
      require(a.size() == atoms_.front().size() && a.size() >= 2, ErrorCode::DimensionMismatch,
              "atoms must share dimension m >= 2");
      for (double v : a) {
        require(std::isfinite(v) && v > 0.0, ErrorCode::NonPositiveInput, "atoms must be strictly positive");
      }
    }
  }

  static EmpiricalDistribution uniform(std::vector<std::vector<double>> atoms) {
    std::vector<double> w(atoms.size(), atoms.empty() ? 0.0 : 1.0 / static_cast<double>(atoms.size()));
    return EmpiricalDistribution(std::move(atoms), std::move(w));
  }

  bool empty() const { return atoms_.empty(); }
  std::size_t size() const { return atoms_.size(); }
  std::size_t dimension() const { return atoms_.empty() ? 0 : atoms_.front().size(); }
  const std::vector<std::vector<double>>& atoms() const { return atoms_; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<std::vector<double>> atoms_;
  std::vector<double> weights_;
};

// Multiset of return vectors with identical vectors merged. The empirical
// law of n observations of a discrete market has only as many distinct
// atoms as the market has, which keeps every solve small.
class AtomCounter {
 public:
  void add(std::span<const double> atom, double count = 1.0) {
    counts_[std::vector<double>(atom.begin(), atom.end())] += count;
    total_ += count;
  }
  void merge(const AtomCounter& other) {
    for (const auto& [atom, c] : other.counts_) counts_[atom] += c;
    total_ += other.total_;
  }
  double total() const { return total_; }
  bool empty() const { return counts_.empty(); }
  std::size_t distinct() const { return counts_.size(); }

  EmpiricalDistribution distribution() const {
    std::vector<std::vector<double>> atoms;
    std::vector<double> weights;
    atoms.reserve(counts_.size());
    for (const auto& [atom, c] : counts_) {
      atoms.push_back(atom);
      weights.push_back(c / total_);
    }
    // Re-normalize exactly so the weight-sum check sees rounding only once.
    const double s = std::accumulate(weights.begin(), weights.end(), 0.0);
    for (double& w : weights) w /= s;
    return EmpiricalDistribution(std::move(atoms), std::move(weights));
  }

 private:
  std::map<std::vector<double>, double> counts_;
  double total_ = 0.0;
};

inline double expected_log_return(std::span<const double> b, const EmpiricalDistribution& dist) {
  require(dist.empty() || b.size() == dist.dimension(), ErrorCode::DimensionMismatch,
          "portfolio and distribution dimensions differ");
  double f = 0.0;
  for (std::size_t j = 0; j < dist.size(); ++j) {
    double r = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) r += b[i] * dist.atoms()[j][i];
    f += dist.weights()[j] * std::log(r);
  }
  return f;
}

inline double expected_log_return(const Portfolio& b, const EmpiricalDistribution& dist) {
  return expected_log_return(b.weights(), dist);
}

// Component i is E[a_i / <b, a>] under `dist`. All are <= 1 at a log-optimal
// portfolio, with equality where the portfolio has interior weight.
inline std::vector<double> kt_residuals(std::span<const double> b, const EmpiricalDistribution& dist) {
  require(dist.empty() || b.size() == dist.dimension(), ErrorCode::DimensionMismatch,
          "portfolio and distribution dimensions differ");
  std::vector<double> r(b.size(), 0.0);
  for (std::size_t j = 0; j < dist.size(); ++j) {
    const auto& a = dist.atoms()[j];
    double ret = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) ret += b[i] * a[i];
    const double scale = dist.weights()[j] / ret;
    for (std::size_t i = 0; i < b.size(); ++i) r[i] += scale * a[i];
  }
  return r;
}

inline std::vector<double> kt_residuals(const Portfolio& b, const EmpiricalDistribution& dist) {
  return kt_residuals(b.weights(), dist);
}

inline double max_kt_residual(const Portfolio& b, const EmpiricalDistribution& dist) {
  const auto r = kt_residuals(b, dist);
  return *std::max_element(r.begin(), r.end());
}

struct SolverOptions {
  double epsilon = kInteriorEpsilon;
  // Stop once the KT residuals on free coordinates agree to this tolerance
  // and no clamped coordinate exceeds them by more than it.
  double tolerance = 1e-13;
  std::size_t max_iterations = 100'000;
};

struct SolveResult {
  Portfolio portfolio;
  double objective = 0.0;
  double max_residual = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

namespace detail {

// Newton direction for maximizing the objective over the free coordinates
// with their total held fixed: maximize g.d - d'Nd/2 subject to sum(d) = 0,
// where N is the negated Hessian plus a small ridge.
inline std::vector<double> face_newton_direction(std::span<const double> b, const std::vector<std::size_t>& free,
                                                 const std::vector<double>& grad,
                                                 const EmpiricalDistribution& dist) {
  const auto f = static_cast<Eigen::Index>(free.size());
  Eigen::MatrixXd N = Eigen::MatrixXd::Zero(f, f);
  Eigen::VectorXd g(f);
  for (Eigen::Index p = 0; p < f; ++p) g[p] = grad[free[static_cast<std::size_t>(p)]];
  for (std::size_t j = 0; j < dist.size(); ++j) {
    const auto& a = dist.atoms()[j];
    double ret = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) ret += b[i] * a[i];
    const double scale = dist.weights()[j] / (ret * ret);
    for (Eigen::Index p = 0; p < f; ++p) {
      const double ap = a[free[static_cast<std::size_t>(p)]] * scale;
      for (Eigen::Index q = 0; q < f; ++q) N(p, q) += ap * a[free[static_cast<std::size_t>(q)]];
    }
  }
  const double ridge = 1e-12 * std::max(N.diagonal().maxCoeff(), 1e-300);
  N.diagonal().array() += ridge;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(N);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(f);
  const Eigen::VectorXd ng = ldlt.solve(g);
  const Eigen::VectorXd n1 = ldlt.solve(ones);
  const double lambda = ones.dot(ng) / ones.dot(n1);
  const Eigen::VectorXd d = ng - lambda * n1;
  std::vector<double> out(b.size(), 0.0);
  for (Eigen::Index p = 0; p < f; ++p) out[free[static_cast<std::size_t>(p)]] = d[p];
  return out;
}

inline double spread_on(const std::vector<double>& r, const std::vector<std::size_t>& free) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i : free) {
    lo = std::min(lo, r[i]);
    hi = std::max(hi, r[i]);
  }
  return free.empty() ? 0.0 : hi - lo;
}

}  // namespace detail

// Maximizes E log<b, a> over the epsilon-clamped simplex. Starts at the
// uniform portfolio (or `start`) and runs an active-set iteration: Newton
// steps on the face of free coordinates, coordinates pinned at epsilon when
// a step reaches the boundary and released when their KT residual exceeds
// the free ones, with the multiplicative update b <- b * r(b) as fallback
// whenever Newton fails to make progress.
inline SolveResult solve_log_optimal_detailed(const EmpiricalDistribution& dist, const SolverOptions& opts = {},
                                              const Portfolio* start = nullptr) {
  require(!dist.empty(), ErrorCode::EmptyDistribution, "cannot optimize over an empty distribution");
  const std::size_t m = dist.dimension();
  const double eps = opts.epsilon;
  std::vector<double> b = start ? std::vector<double>(start->weights().begin(), start->weights().end())
                                : std::vector<double>(m, 1.0 / static_cast<double>(m));
  require(b.size() == m, ErrorCode::DimensionMismatch, "start portfolio dimension");

  std::vector<bool> pinned(m, false);
  for (std::size_t i = 0; i < m; ++i) {
    if (b[i] <= eps) {
      b[i] = eps;
      pinned[i] = true;
    }
  }
  auto free_set = [&] {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < m; ++i) {
      if (!pinned[i]) out.push_back(i);
    }
    return out;
  };

  SolveResult result;
  double f = expected_log_return(b, dist);
  std::vector<double> r = kt_residuals(b, dist);
  std::size_t iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    std::vector<std::size_t> free = free_set();
    const double spread = detail::spread_on(r, free);
    double free_max = -std::numeric_limits<double>::infinity();
    for (std::size_t i : free) free_max = std::max(free_max, r[i]);

    if (spread <= opts.tolerance) {
      std::size_t best = m;
      for (std::size_t i = 0; i < m; ++i) {
        if (pinned[i] && r[i] > free_max + opts.tolerance && (best == m || r[i] > r[best])) best = i;
      }
      if (best == m) {
        result.converged = true;
        break;
      }
      pinned[best] = false;
      continue;
    }

    // Newton on the face.
    const std::vector<double> d = detail::face_newton_direction(b, free, r, dist);
    double t_max = 1.0;
    std::size_t blocking = m;
    for (std::size_t i : free) {
      if (d[i] < 0.0) {
        const double t = (b[i] - eps) / -d[i];
        if (t < t_max) {
          t_max = t;
          blocking = i;
        }
      }
    }
    bool accepted = false;
    double t = t_max;
    for (int halvings = 0; halvings < 60 && t > 0.0; ++halvings, t *= 0.5) {
      std::vector<double> trial = b;
      for (std::size_t i : free) trial[i] += t * d[i];
      if (t == t_max && blocking < m) trial[blocking] = eps;
      bool feasible = true;
      for (std::size_t i : free) feasible = feasible && trial[i] >= eps;
      if (!feasible) continue;
      const double f_trial = expected_log_return(trial, dist);
      const std::vector<double> r_trial = kt_residuals(trial, dist);
      const bool hits_boundary = t == t_max && blocking < m;
      std::vector<std::size_t> trial_free = free;
      if (hits_boundary) std::erase(trial_free, blocking);
      // Near the optimum the objective is flat to rounding; accept steps
      // that shrink the residual spread without losing objective.
      const bool improves = f_trial > f || (f_trial >= f - 1e-15 * std::max(1.0, std::abs(f)) &&
                                            detail::spread_on(r_trial, trial_free) < spread);
      if (!improves) continue;
      b = std::move(trial);
      f = f_trial;
      r = r_trial;
      if (hits_boundary) pinned[blocking] = true;
      accepted = true;
      break;
    }
    if (accepted) continue;

    // Multiplicative fallback on the free coordinates.
    double mass = 0.0, scaled = 0.0;
    for (std::size_t i : free) {
      mass += b[i];
      scaled += b[i] * r[i];
    }
    std::vector<double> trial = b;
    for (std::size_t i : free) trial[i] = std::max(eps, b[i] * r[i] * mass / scaled);
    const double f_trial = expected_log_return(trial, dist);
    if (!(f_trial > f)) break;  // numerical floor
    b = std::move(trial);
    f = f_trial;
    r = kt_residuals(b, dist);
    for (std::size_t i : free) pinned[i] = b[i] <= eps;
  }

  // Exact renormalization; free coordinates absorb the rounding.
  const double total = std::accumulate(b.begin(), b.end(), 0.0);
  for (double& w : b) w /= total;
  for (double& w : b) w = std::max(w, eps);
  result.portfolio = Portfolio(std::move(b), eps);
  result.objective = expected_log_return(result.portfolio, dist);
  result.max_residual = max_kt_residual(result.portfolio, dist);
  result.iterations = iter;
  return result;
}

inline Portfolio solve_log_optimal(const EmpiricalDistribution& dist, const SolverOptions& opts = {}) {
  return solve_log_optimal_detailed(dist, opts).portfolio;
}

// |dW on raw returns - dW on normalized returns| for two constant
// portfolios over the whole path, where dW = W(b1) - W(b2).
inline double growth_decomposition_check(const Portfolio& b1, const Portfolio& b2, const MarketPath& path) {
  require(b1.size() == path.m() && b2.size() == path.m(), ErrorCode::DimensionMismatch,
          "portfolio and market dimensions differ");
  double raw = 0.0, normalized = 0.0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    const auto x = path.returns(i).values();
    const auto u = normalize(x);
    raw += std::log(b1.dot(x)) - std::log(b2.dot(x));
    normalized += std::log(b1.dot(u.values())) - std::log(b2.dot(u.values()));
  }
  const double n = static_cast<double>(path.size());
  return std::abs(raw / n - normalized / n);
}

}  // namespace logopt
