#pragma once

// Sequential portfolio strategies. Every strategy is driven through
// `History`, which exposes X_1..X_{n-1} and Y_1..Y_n when the period-n
// portfolio is requested, so no strategy can look at X_n.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "logopt/error.hpp"
#include "logopt/market.hpp"
#include "logopt/optimize.hpp"
#include "logopt/random.hpp"

namespace logopt {

// Causal view of a path at period n (1-based).
class History {
 public:
  History(const MarketPath& path, std::size_t n) : path_(&path), n_(n) {
    require(n >= 1 && n <= path.size(), ErrorCode::InvalidArgument, "history step out of range");
  }

  std::size_t step() const { return n_; }
  std::size_t m() const { return path_->m(); }
  std::size_t k() const { return path_->k(); }

  // Realized returns of period i (1-based), i <= n - 1.
  const AssetReturns& returns(std::size_t i) const {
    require(i >= 1 && i < n_, ErrorCode::InvalidArgument, "returns of period " + std::to_string(i) +
                                                              " are not visible at period " + std::to_string(n_));
    return path_->returns(i - 1);
  }
  // Side information of period i (1-based), i <= n.
  const SideInfo& side(std::size_t i) const {
    require(i >= 1 && i <= n_, ErrorCode::InvalidArgument, "side information of period " + std::to_string(i) +
                                                               " is not visible at period " + std::to_string(n_));
    return path_->side(i - 1);
  }

  // Oracle access: the generating spec, the path's ergodic mode and the
  // joint atoms observed so far (warm-up tuple, then periods 1..n-1).
  const MarketSpec& oracle_spec() const { return path_->spec(); }
  std::size_t oracle_mode() const { return path_->mode_id(); }
  std::vector<std::size_t> oracle_atoms() const {
    std::vector<std::size_t> out = path_->warmup();
    out.insert(out.end(), path_->atoms().begin(), path_->atoms().begin() + static_cast<std::ptrdiff_t>(n_ - 1));
    return out;
  }

 private:
  const MarketPath* path_;
  std::size_t n_;
};

// One (portfolio, distribution) pair a strategy optimized at its last step.
struct OptimizationRecord {
  std::string component;
  Portfolio portfolio;
  EmpiricalDistribution distribution;
};

class Strategy {
 public:
  virtual ~Strategy() = default;

  virtual std::string name() const = 0;
  virtual nlohmann::json config() const = 0;
  virtual std::unique_ptr<Strategy> clone() const = 0;

  // Forget all path state. Steps must then be requested as 1, 2, 3, ...
  virtual void reset() = 0;
  virtual Portfolio next_portfolio(const History& history) = 0;

  // What the last emitted portfolio was optimized against, or nullopt when
  // the strategy does not optimize a distribution.
  virtual std::optional<std::vector<OptimizationRecord>> optimization_records() const { return std::nullopt; }
};

namespace detail {

inline std::vector<double> to_vector(std::span<const double> s) { return {s.begin(), s.end()}; }

// Enforces the 1, 2, 3, ... stepping contract.
class StepCounter {
 public:
  void reset() { last_ = 0; }
  void advance(const History& h) {
    require(h.step() == last_ + 1, ErrorCode::InvalidArgument,
            "strategy stepped out of order: expected period " + std::to_string(last_ + 1) + ", got " +
                std::to_string(h.step()));
    last_ = h.step();
  }
  std::size_t last() const { return last_; }

 private:
  std::size_t last_ = 0;
};

inline double log_sum_exp(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

// Wealth-proportional combination of component portfolios given their
// log-wealths: sum_j b_j S_j / sum_j S_j.
inline Portfolio wealth_weighted(const std::vector<Portfolio>& components, const std::vector<double>& log_wealth) {
  const double mx = *std::max_element(log_wealth.begin(), log_wealth.end());
  const std::size_t m = components.front().size();
  std::vector<double> b(m, 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < components.size(); ++j) {
    const double w = std::exp(log_wealth[j] - mx);
    total += w;
    for (std::size_t i = 0; i < m; ++i) b[i] += w * components[j][i];
  }
  for (double& x : b) x /= total;
  return Portfolio::clamped(std::move(b));
}

inline EmpiricalDistribution dirac_ones(std::size_t m) {
  return EmpiricalDistribution({std::vector<double>(m, 1.0)}, {1.0});
}

}  // namespace detail

// ---------------------------------------------------------------------------

class ConstantStrategy final : public Strategy {
 public:
  explicit ConstantStrategy(Portfolio b) : b_(std::move(b)) {}

  std::string name() const override { return "constant"; }
  nlohmann::json config() const override {
    return {{"name", name()}, {"weights", detail::to_vector(b_.weights())}};
  }
  std::unique_ptr<Strategy> clone() const override { return std::make_unique<ConstantStrategy>(*this); }
  void reset() override {}
  Portfolio next_portfolio(const History& h) override {
    require(h.m() == b_.size(), ErrorCode::DimensionMismatch, "constant portfolio dimension differs from market");
    return b_;
  }

 private:
  Portfolio b_;
};

inline std::unique_ptr<Strategy> constant_strategy(Portfolio b) { return std::make_unique<ConstantStrategy>(std::move(b)); }

// ---------------------------------------------------------------------------

namespace detail {

// Law of the normalized returns of the next period given the next joint
// atom's law, restricted to atoms whose side information equals `side`.
inline EmpiricalDistribution conditional_returns(const MarketSpec& spec, const std::vector<double>& atom_probs,
                                                 const SideInfo* side) {
  AtomCounter counter;
  for (std::size_t a = 0; a < atom_probs.size(); ++a) {
    if (atom_probs[a] <= 0.0) continue;
    const auto& atom = spec.support()[a];
    if (side && !(atom.side == *side)) continue;
    counter.add(normalize(atom.returns).values(), atom_probs[a]);
  }
  require(!counter.empty(), ErrorCode::InvalidArgument, "observed side information has zero probability");
  return counter.distribution();
}

}  // namespace detail

// Log-optimal with oracle knowledge of the generating spec: at period n it
// conditions on all visible information (past joint atoms and the current
// side information) and maximizes the exact conditional expected log return.
class OracleLogOptimal final : public Strategy {
 public:
  explicit OracleLogOptimal(std::optional<std::size_t> mode = std::nullopt) : mode_(mode) {}

  std::string name() const override { return "oracle_log_optimal"; }
  nlohmann::json config() const override {
    nlohmann::json j{{"name", name()}};
    if (mode_) j["mode"] = *mode_;
    return j;
  }
  std::unique_ptr<Strategy> clone() const override { return std::make_unique<OracleLogOptimal>(*this); }
  void reset() override {
    steps_.reset();
    last_.reset();
  }

  Portfolio next_portfolio(const History& h) override {
    steps_.advance(h);
    const MarketSpec& spec = h.oracle_spec();
    const std::size_t mode = mode_.value_or(h.oracle_mode());
    const auto atoms = h.oracle_atoms();
    std::size_t memory = 0;
    if (spec.kind() == MarketKind::Markov) memory = spec.order();
    if (spec.kind() == MarketKind::Mixture && spec.components()[mode].kind() == MarketKind::Markov) {
      memory = spec.components()[mode].order();
    }
    require(atoms.size() >= memory, ErrorCode::HistoryTooShort, "oracle history shorter than the Markov order");
    Key key{mode, std::vector<std::size_t>(atoms.end() - static_cast<std::ptrdiff_t>(memory), atoms.end()),
            h.side(h.step()).values};
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      const auto probs = conditional_next(spec, atoms, mode);
      auto dist = detail::conditional_returns(spec, probs, &h.side(h.step()));
      Portfolio b = solve_log_optimal(dist);
      it = cache_.emplace(std::move(key), OptimizationRecord{"", std::move(b), std::move(dist)}).first;
    }
    last_ = it->second;
    return it->second.portfolio;
  }

  std::optional<std::vector<OptimizationRecord>> optimization_records() const override {
    if (!last_) return std::vector<OptimizationRecord>{};
    return std::vector<OptimizationRecord>{*last_};
  }

 private:
  struct Key {
    std::size_t mode;
    std::vector<std::size_t> context;
    std::vector<double> side;
    auto operator<=>(const Key&) const = default;
  };
  std::optional<std::size_t> mode_;
  detail::StepCounter steps_;
  std::map<Key, OptimizationRecord> cache_;
  std::optional<OptimizationRecord> last_;
};

inline std::unique_ptr<Strategy> oracle_log_optimal(std::optional<std::size_t> mode = std::nullopt) {
  return std::make_unique<OracleLogOptimal>(mode);
}

// The best constant portfolio for the path's ergodic mode: maximizes the
// expected log return under the mode's stationary one-step law.
inline EmpiricalDistribution mode_stationary_returns(const MarketSpec& spec, std::size_t mode) {
  return detail::conditional_returns(spec, stationary_atom_marginal(spec, mode), nullptr);
}

class OracleModeConstant final : public Strategy {
 public:
  explicit OracleModeConstant(std::optional<std::size_t> mode = std::nullopt) : mode_(mode) {}

  std::string name() const override { return "oracle_mode_constant"; }
  nlohmann::json config() const override {
    nlohmann::json j{{"name", name()}};
    if (mode_) j["mode"] = *mode_;
    return j;
  }
  std::unique_ptr<Strategy> clone() const override { return std::make_unique<OracleModeConstant>(*this); }
  void reset() override { steps_.reset(); }

  Portfolio next_portfolio(const History& h) override {
    steps_.advance(h);
    const std::size_t mode = mode_.value_or(h.oracle_mode());
    const std::string& digest = h.oracle_spec().digest();
    auto it = cache_.find({digest, mode});
    if (it == cache_.end()) {
      auto dist = mode_stationary_returns(h.oracle_spec(), mode);
      Portfolio b = solve_log_optimal(dist);
      it = cache_.emplace(std::make_pair(digest, mode), OptimizationRecord{"", std::move(b), std::move(dist)}).first;
    }
    last_ = it->second;
    return it->second.portfolio;
  }

  std::optional<std::vector<OptimizationRecord>> optimization_records() const override {
    if (!last_) return std::vector<OptimizationRecord>{};
    return std::vector<OptimizationRecord>{*last_};
  }

 private:
  std::optional<std::size_t> mode_;
  detail::StepCounter steps_;
  std::map<std::pair<std::string, std::size_t>, OptimizationRecord> cache_;
  std::optional<OptimizationRecord> last_;
};

inline std::unique_ptr<Strategy> oracle_mode_constant(std::optional<std::size_t> mode = std::nullopt) {
  return std::make_unique<OracleModeConstant>(mode);
}

// ---------------------------------------------------------------------------

// Cover's universal portfolio with the uniform prior on the simplex,
// integrated over a fixed Monte Carlo panel. The panel is drawn once per
// dimension from (mc_samples, seed): each uniform Dirichlet draw enters
// together with its m cyclic rotations, so the panel mean is exactly b_hat.
class UniversalCover final : public Strategy {
 public:
  static constexpr std::size_t kDefaultSamples = 100'000;

  explicit UniversalCover(std::size_t mc_samples = kDefaultSamples, std::uint64_t seed = 0)
      : samples_(mc_samples), seed_(seed) {
    require(mc_samples >= 1, ErrorCode::InvalidArgument, "mc_samples must be >= 1");
  }

  std::string name() const override { return "universal_cover"; }
  nlohmann::json config() const override {
    return {{"name", name()}, {"mc_samples", samples_}, {"seed", seed_}};
  }
  std::unique_ptr<Strategy> clone() const override { return std::make_unique<UniversalCover>(*this); }
  void reset() override {
    steps_.reset();
    std::fill(wealth_.begin(), wealth_.end(), 1.0);
    std::fill(log_wealth_.begin(), log_wealth_.end(), 0.0);
    since_sync_ = 0;
    current_.reset();
  }

  Portfolio next_portfolio(const History& h) override {
    steps_.advance(h);
    const std::size_t m = h.m();
    if (m != m_) build_panel(m);
    if (h.step() == 1) {
      current_ = Portfolio::uniform(m);
    } else {
      absorb(h.returns(h.step() - 1).values());
    }
    return *current_;
  }

  std::size_t panel_size() const { return m_ == 0 ? 0 : panel_.size() / m_; }
  std::span<const double> panel_point(std::size_t j) const { return {panel_.data() + j * m_, m_}; }
  // log S_{n-1}(b_j) for every panel point.
  const std::vector<double>& log_wealth() const { return log_wealth_; }

  // Delta-method standard error of each coordinate of the current
  // self-normalized estimate, with rotation groups as independent units.
  std::vector<double> mc_stderr() const {
    const auto& b = *current_;
    std::vector<double> sq(m_, 0.0);
    double denom = 0.0;
    for (std::size_t g = 0; g < panel_size() / m_; ++g) {
      std::vector<double> num(m_, 0.0);
      double den = 0.0;
      for (std::size_t r = 0; r < m_; ++r) {
        const std::size_t j = g * m_ + r;
        den += wealth_[j];
        for (std::size_t i = 0; i < m_; ++i) num[i] += wealth_[j] * panel_[j * m_ + i];
      }
      denom += den;
      for (std::size_t i = 0; i < m_; ++i) sq[i] += (num[i] - b[i] * den) * (num[i] - b[i] * den);
    }
    std::vector<double> out(m_);
    for (std::size_t i = 0; i < m_; ++i) out[i] = std::sqrt(sq[i]) / denom;
    return out;
  }

 private:
  // Each uniform Dirichlet draw enters with its m cyclic rotations, so the
  // panel mean is exactly b_hat.
  void build_panel(std::size_t m) {
    m_ = m;
    const std::size_t groups = (samples_ + m - 1) / m;
    Rng rng(derive_seed(seed_, m));
    panel_.assign(groups * m * m, 0.0);
    std::vector<double> e(m);
    for (std::size_t g = 0; g < groups; ++g) {
      double s = 0.0;
      for (double& v : e) {
        v = rng.exponential();
        s += v;
      }
      for (std::size_t r = 0; r < m; ++r) {
        double* point = panel_.data() + (g * m + r) * m;
        for (std::size_t i = 0; i < m; ++i) point[i] = e[(i + r) % m] / s;
      }
    }
    wealth_.assign(groups * m, 1.0);
    log_wealth_.assign(groups * m, 0.0);
    memo_.clear();
  }

  // log_wealth_ is the exact record. wealth_ holds exp(log_wealth_ - s) for a
  // shift s and is advanced multiplicatively, which avoids an exp per point
  // per period; it is rebuilt from the logs when it drifts out of range.
  void absorb(std::span<const double> x) {
    std::vector<double> key(x.begin(), x.end());
    auto it = memo_.find(key);
    if (it == memo_.end() && memo_.size() < kMemoLimit) {
      Growth g{std::vector<double>(wealth_.size()), std::vector<double>(wealth_.size())};
      for (std::size_t j = 0; j < wealth_.size(); ++j) {
        g.ratio[j] = dot(j, x);
        g.log_ratio[j] = std::log(g.ratio[j]);
      }
      it = memo_.emplace(std::move(key), std::move(g)).first;
    }
    double top = 0.0;
    for (std::size_t j = 0; j < wealth_.size(); ++j) {
      const double r = it != memo_.end() ? it->second.ratio[j] : dot(j, x);
      log_wealth_[j] += it != memo_.end() ? it->second.log_ratio[j] : std::log(r);
      wealth_[j] *= r;
      top = std::max(top, wealth_[j]);
    }
    if (top < 1e-100 || top > 1e100 || ++since_sync_ >= kSyncPeriod) {
      const double mx = *std::max_element(log_wealth_.begin(), log_wealth_.end());
      for (std::size_t j = 0; j < wealth_.size(); ++j) wealth_[j] = std::exp(log_wealth_[j] - mx);
      since_sync_ = 0;
    }
    std::vector<double> b(m_, 0.0);
    double total = 0.0;
    for (std::size_t j = 0; j < wealth_.size(); ++j) {
      total += wealth_[j];
      const double* point = panel_.data() + j * m_;
      for (std::size_t i = 0; i < m_; ++i) b[i] += wealth_[j] * point[i];
    }
    for (double& v : b) v /= total;
    current_ = Portfolio::clamped(std::move(b));
  }

  double dot(std::size_t j, std::span<const double> x) const {
    const double* point = panel_.data() + j * m_;
    double s = 0.0;
    for (std::size_t i = 0; i < m_; ++i) s += point[i] * x[i];
    return s;
  }

  struct Growth {
    std::vector<double> ratio;
    std::vector<double> log_ratio;
  };

  static constexpr std::size_t kMemoLimit = 64;
  static constexpr std::size_t kSyncPeriod = 1024;
  std::size_t samples_;
  std::uint64_t seed_;
  std::size_t m_ = 0;
  detail::StepCounter steps_;
  std::vector<double> panel_;  // row-major, one simplex point per row
  std::vector<double> wealth_;
  std::vector<double> log_wealth_;
  std::size_t since_sync_ = 0;
  std::optional<Portfolio> current_;
  std::map<std::vector<double>, Growth> memo_;
};

inline std::unique_ptr<Strategy> universal_cover(std::size_t mc_samples = UniversalCover::kDefaultSamples,
                                                 std::uint64_t seed = 0) {
  return std::make_unique<UniversalCover>(mc_samples, seed);
}

// ---------------------------------------------------------------------------

// Follow-the-leader on the empirical law of past normalized returns; no
// side information. Period 1 plays b_hat.
class EmpiricalLogOptimal final : public Strategy {
 public:
  std::string name() const override { return "empirical_log_optimal"; }
  nlohmann::json config() const override { return {{"name", name()}}; }
  std::unique_ptr<Strategy> clone() const override { return std::make_unique<EmpiricalLogOptimal>(*this); }
  void reset() override {
    steps_.reset();
    counter_ = AtomCounter{};
    last_.reset();
  }

  Portfolio next_portfolio(const History& h) override {
    steps_.advance(h);
    if (h.step() == 1) {
      last_.reset();
      return Portfolio::uniform(h.m());
    }
    counter_.add(normalize(h.returns(h.step() - 1)).values());
    auto dist = counter_.distribution();
    Portfolio b = solve_log_optimal(dist);
    last_ = OptimizationRecord{"", b, std::move(dist)};
    return b;
  }

  std::optional<std::vector<OptimizationRecord>> optimization_records() const override {
    if (!last_) return std::vector<OptimizationRecord>{};
    return std::vector<OptimizationRecord>{*last_};
  }

 private:
  detail::StepCounter steps_;
  AtomCounter counter_;
  std::optional<OptimizationRecord> last_;
};

inline std::unique_ptr<Strategy> empirical_log_optimal() { return std::make_unique<EmpiricalLogOptimal>(); }

// ---------------------------------------------------------------------------
// Kernel machinery

struct KernelParams {
  std::size_t h = 1;
  std::size_t L = 10;
  // Base width; unset means "0.5 x median nonzero pairwise context distance
  // over the first 200 contexts", recomputed until 200 contexts have been
  // seen and frozen afterwards. With no nonzero distance the width is 1.
  std::optional<double> c;
  std::size_t H = 3;

  void validate(bool check_h = true) const {
    require(L >= 1, ErrorCode::InvalidArgument, "kernel L must be >= 1");
    require(!c || (std::isfinite(*c) && *c > 0.0), ErrorCode::InvalidArgument, "kernel c must be > 0");
    if (check_h) require(h <= H, ErrorCode::InvalidArgument, "kernel h must be <= H");
  }
};

// The window (X_{i-h}..X_{i-1}, Y_{i-h}..Y_i) around period i.
struct KernelContext {
  std::vector<std::vector<double>> returns;  // h vectors, oldest first
  std::vector<std::vector<double>> sides;    // h + 1 vectors, oldest first

  // Flattened stacked matrix; the zero block under Y_i is omitted because it
  // is identical for every context.
  std::vector<double> flat() const {
    std::vector<double> out;
    for (const auto& y : sides) out.insert(out.end(), y.begin(), y.end());
    for (const auto& x : returns) out.insert(out.end(), x.begin(), x.end());
    return out;
  }
};

inline KernelContext context_at(const History& history, std::size_t i, std::size_t h) {
  require(i >= h + 1 && i <= history.step(), ErrorCode::ShapeMismatch, "context window leaves the history");
  KernelContext ctx;
  for (std::size_t s = i - h; s < i; ++s) ctx.returns.push_back(detail::to_vector(history.returns(s).values()));
  for (std::size_t s = i - h; s <= i; ++s) ctx.sides.push_back(history.side(s).values);
  return ctx;
}

inline double frobenius_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

struct KernelMatchSet {
  std::vector<std::size_t> indices;  // 1-based periods i with h+1 <= i <= n-1
  std::size_t width_level = 1;
};

// All periods whose context lies within Frobenius distance c / l of theta.
inline KernelMatchSet kernel_match(const History& history, const KernelContext& theta, std::size_t h,
                                   std::size_t l, double c) {
  const std::size_t n = history.step();
  require(n >= h + 2, ErrorCode::ShapeMismatch, "kernel matching needs n >= h + 2");
  require(l >= 1 && c > 0.0, ErrorCode::InvalidArgument, "kernel width needs l >= 1 and c > 0");
  require(theta.returns.size() == h && theta.sides.size() == h + 1, ErrorCode::ShapeMismatch,
          "theta must hold h return vectors and h + 1 side vectors");
  for (const auto& x : theta.returns) {
    require(x.size() == history.m(), ErrorCode::ShapeMismatch, "theta return vector has wrong length");
  }
  for (const auto& y : theta.sides) {
    require(y.size() == history.k(), ErrorCode::ShapeMismatch, "theta side vector has wrong length");
  }
  const auto target = theta.flat();
  const double radius = c / static_cast<double>(l);
  KernelMatchSet out;
  out.width_level = l;
  for (std::size_t i = h + 1; i <= n - 1; ++i) {
    if (frobenius_distance(context_at(history, i, h).flat(), target) <= radius) out.indices.push_back(i);
  }
  return out;
}

namespace detail {

inline double median_nonzero_pairwise(const std::vector<std::vector<double>>& contexts) {
  std::vector<double> d;
  for (std::size_t a = 0; a < contexts.size(); ++a) {
    for (std::size_t b = a + 1; b < contexts.size(); ++b) {
      const double v = frobenius_distance(contexts[a], contexts[b]);
      if (v > 0.0) d.push_back(v);
    }
  }
  if (d.empty()) return 0.0;
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  if (d.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(d.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace detail

// Fixed-order kernel strategy: for each width level l = 1..L, the
// log-optimal portfolio of the empirical law of normalized returns that
// followed contexts within c / l of the current one; levels are combined in
// proportion to the running (normalized) wealth each level has earned.
class KernelStrategy final : public Strategy {
 public:
  static constexpr std::size_t kWidthSampleContexts = 200;

  explicit KernelStrategy(KernelParams params) : params_(params) { params_.validate(false); }

  std::string name() const override { return "kernel"; }
  nlohmann::json config() const override {
    nlohmann::json j{{"name", name()}, {"h", params_.h}, {"L", params_.L}};
    if (params_.c) j["c"] = *params_.c;
    return j;
  }
  std::unique_ptr<Strategy> clone() const override { return std::make_unique<KernelStrategy>(*this); }
  const KernelParams& params() const { return params_; }

  void reset() override {
    steps_.reset();
    groups_.clear();
    group_index_.clear();
    width_sample_.clear();
    frozen_c_.reset();
    log_wealth_.assign(params_.L, 0.0);
    last_components_.clear();
    last_distributions_.clear();
    last_empty_.clear();
    cache_.clear();
  }

  // Width in force at the last step.
  double current_c() const { return c_; }
  const std::vector<double>& component_log_wealth() const { return log_wealth_; }
  const std::vector<Portfolio>& component_portfolios() const { return last_components_; }

  Portfolio next_portfolio(const History& h) override {
    if (steps_.last() == 0 && log_wealth_.size() != params_.L) reset();
    steps_.advance(h);
    const std::size_t n = h.step();
    const std::size_t m = h.m();
    const std::size_t order = params_.h;

    // Fold in period n-1: its realized return updates the component wealth
    // and, when its context is complete, the matching group.
    if (n >= 2) {
      const auto u = normalize(h.returns(n - 1));
      if (!last_components_.empty()) {
        // A level with no matches held b_hat against the Dirac convention;
        // its wealth stays frozen.
        for (std::size_t l = 0; l < params_.L; ++l) {
          if (!last_empty_[l]) log_wealth_[l] += std::log(last_components_[l].dot(u.values()));
        }
      }
      if (n - 1 >= order + 1) {
        auto key = context_at(h, n - 1, order).flat();
        auto it = group_index_.find(key);
        if (it == group_index_.end()) {
          it = group_index_.emplace(key, groups_.size()).first;
          groups_.push_back(Group{std::move(key), AtomCounter{}, 0});
        }
        Group& g = groups_[it->second];
        g.outcomes.add(u.values());
        ++g.version;
      }
    }

    if (n < order + 2) {
      last_empty_.assign(params_.L, true);
      last_components_.assign(params_.L, Portfolio::uniform(m));
      last_distributions_.assign(params_.L, detail::dirac_ones(m));
      return Portfolio::uniform(m);
    }

    const auto theta = context_at(h, n, order).flat();
    update_width(theta);

    std::vector<double> distance(groups_.size());
    for (std::size_t g = 0; g < groups_.size(); ++g) distance[g] = frobenius_distance(groups_[g].key, theta);

    last_components_.clear();
    last_distributions_.clear();
    last_empty_.assign(params_.L, false);
    for (std::size_t l = 1; l <= params_.L; ++l) {
      const double radius = c_ / static_cast<double>(l);
      std::vector<std::pair<std::size_t, std::size_t>> matched;
      for (std::size_t g = 0; g < groups_.size(); ++g) {
        if (distance[g] <= radius) matched.emplace_back(g, groups_[g].version);
      }
      if (matched.empty()) {
        last_empty_[l - 1] = true;
        last_components_.push_back(Portfolio::uniform(m));
        last_distributions_.push_back(detail::dirac_ones(m));
        continue;
      }
      auto it = cache_.find(matched);
      if (it == cache_.end()) {
        AtomCounter merged;
        for (const auto& [g, version] : matched) merged.merge(groups_[g].outcomes);
        auto dist = merged.distribution();
        Portfolio b = solve_log_optimal(dist);
        if (cache_.size() > kCacheLimit) cache_.clear();
        it = cache_.emplace(matched, std::make_pair(std::move(b), std::move(dist))).first;
      }
      last_components_.push_back(it->second.first);
      last_distributions_.push_back(it->second.second);
    }
    return detail::wealth_weighted(last_components_, log_wealth_);
  }

  std::optional<std::vector<OptimizationRecord>> optimization_records() const override {
    std::vector<OptimizationRecord> out;
    for (std::size_t l = 0; l < last_components_.size(); ++l) {
      out.push_back({"h=" + std::to_string(params_.h) + ",l=" + std::to_string(l + 1), last_components_[l],
                     last_distributions_[l]});
    }
    return out;
  }

 private:
  struct Group {
    std::vector<double> key;
    AtomCounter outcomes;
    std::size_t version;
  };

  void update_width(const std::vector<double>& theta) {
    if (params_.c) {
      c_ = *params_.c;
      return;
    }
    if (frozen_c_) {
      c_ = *frozen_c_;
      return;
    }
    width_sample_.push_back(theta);
    const double med = detail::median_nonzero_pairwise(width_sample_);
    c_ = med > 0.0 ? 0.5 * med : 1.0;
    if (width_sample_.size() >= kWidthSampleContexts) frozen_c_ = c_;
  }

  static constexpr std::size_t kCacheLimit = 4096;
  KernelParams params_;
  detail::StepCounter steps_;
  std::vector<Group> groups_;
  std::map<std::vector<double>, std::size_t> group_index_;
  std::vector<std::vector<double>> width_sample_;
  std::optional<double> frozen_c_;
  double c_ = 1.0;
  std::vector<double> log_wealth_;
  std::vector<Portfolio> last_components_;
  std::vector<EmpiricalDistribution> last_distributions_;
  std::vector<bool> last_empty_;
  std::map<std::vector<std::pair<std::size_t, std::size_t>>, std::pair<Portfolio, EmpiricalDistribution>> cache_;
};

inline std::unique_ptr<Strategy> kernel_strategy(KernelParams params) {
  return std::make_unique<KernelStrategy>(params);
}

// Kernel strategies of every order h = 0..H, combined by running wealth.
class OrderMixture final : public Strategy {
 public:
  explicit OrderMixture(KernelParams params) : params_(params) {
    params_.validate(false);
    for (std::size_t h = 0; h <= params_.H; ++h) {
      KernelParams p = params_;
      p.h = h;
      components_.emplace_back(p);
    }
    log_wealth_.assign(components_.size(), 0.0);
  }

  std::string name() const override { return "order_mixture"; }
  nlohmann::json config() const override {
    nlohmann::json j{{"name", name()}, {"H", params_.H}, {"L", params_.L}};
    if (params_.c) j["c"] = *params_.c;
    return j;
  }
  std::unique_ptr<Strategy> clone() const override { return std::make_unique<OrderMixture>(*this); }

  void reset() override {
    steps_.reset();
    for (auto& c : components_) c.reset();
    log_wealth_.assign(components_.size(), 0.0);
    last_.clear();
  }

  Portfolio next_portfolio(const History& h) override {
    if (steps_.last() == 0 && last_.empty()) {
      for (auto& c : components_) c.reset();
    }
    steps_.advance(h);
    if (h.step() >= 2 && !last_.empty()) {
      const auto u = normalize(h.returns(h.step() - 1));
      for (std::size_t j = 0; j < components_.size(); ++j) log_wealth_[j] += std::log(last_[j].dot(u.values()));
    }
    last_.clear();
    for (auto& c : components_) last_.push_back(c.next_portfolio(h));
    return detail::wealth_weighted(last_, log_wealth_);
  }

  const std::vector<KernelStrategy>& components() const { return components_; }
  const std::vector<double>& component_log_wealth() const { return log_wealth_; }

  std::optional<std::vector<OptimizationRecord>> optimization_records() const override {
    std::vector<OptimizationRecord> out;
    for (const auto& c : components_) {
      auto records = c.optimization_records();
      out.insert(out.end(), records->begin(), records->end());
    }
    return out;
  }

 private:
  KernelParams params_;
  detail::StepCounter steps_;
  std::vector<KernelStrategy> components_;
  std::vector<double> log_wealth_;
  std::vector<Portfolio> last_;
};

inline std::unique_ptr<Strategy> order_mixture(KernelParams params) { return std::make_unique<OrderMixture>(params); }

// ---------------------------------------------------------------------------
// JSON construction: {"name": ..., params...}. Unknown names throw
// UnknownName.

inline std::unique_ptr<Strategy> strategy_from_json(const nlohmann::json& j) {
  try {
    const std::string name = j.at("name").get<std::string>();
    auto opt_mode = [&]() -> std::optional<std::size_t> {
      if (j.contains("mode") && !j.at("mode").is_null()) return j.at("mode").get<std::size_t>();
      return std::nullopt;
    };
    auto kernel_params = [&](bool fixed_order) {
      KernelParams p;
      if (fixed_order) p.h = j.value("h", std::size_t{1});
      p.L = j.value("L", std::size_t{10});
      p.H = j.value("H", fixed_order ? std::max<std::size_t>(p.h, 3) : std::size_t{3});
      if (j.contains("c") && !j.at("c").is_null()) p.c = j.at("c").get<double>();
      p.validate(fixed_order);
      return p;
    };
    if (name == "constant") return constant_strategy(Portfolio(j.at("weights").get<std::vector<double>>()));
    if (name == "oracle_log_optimal") return oracle_log_optimal(opt_mode());
    if (name == "oracle_mode_constant") return oracle_mode_constant(opt_mode());
    if (name == "universal_cover") {
      return universal_cover(j.value("mc_samples", UniversalCover::kDefaultSamples), j.value("seed", std::uint64_t{0}));
    }
    if (name == "empirical_log_optimal") return empirical_log_optimal();
    if (name == "kernel") return kernel_strategy(kernel_params(true));
    if (name == "order_mixture") return order_mixture(kernel_params(false));
    throw Error(ErrorCode::UnknownName, "unknown strategy '" + name + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("strategy JSON: ") + e.what());
  }
}

}  // namespace logopt
