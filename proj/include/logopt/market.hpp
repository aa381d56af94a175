#pragma once

// Discrete markets with side information: i.i.d. pairs, stationary order-h
// Markov chains over joint (returns, side-info) atoms, and non-ergodic
// mixtures of those. Each atom carries both the return vector and the side
// vector, so all X/Y dependence lives in the atom set and transition table.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "logopt/digest.hpp"
#include "logopt/error.hpp"
#include "logopt/random.hpp"

namespace logopt {

inline constexpr double kProbabilityTolerance = 1e-12;

// Gross returns of m >= 2 assets over one period; every entry > 0.
class AssetReturns {
 public:
  AssetReturns() = default;
  AssetReturns(std::initializer_list<double> values) : AssetReturns(std::vector<double>(values)) {}
  explicit AssetReturns(std::vector<double> values) : values_(std::move(values)) {
    require(values_.size() >= 2, ErrorCode::DimensionMismatch, "asset returns need m >= 2");
    for (double v : values_) {
      require(std::isfinite(v) && v > 0.0, ErrorCode::NonPositiveInput,
              "asset returns must be strictly positive and finite");
    }
  }

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }

  friend bool operator==(const AssetReturns&, const AssetReturns&) = default;

 private:
  std::vector<double> values_;
};

// k real features revealed before the period's returns; k = 0 means none.
struct SideInfo {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  friend bool operator==(const SideInfo&, const SideInfo&) = default;
};

struct JointOutcome {
  AssetReturns returns;
  SideInfo side;
  std::size_t atom_id = 0;
};

enum class MarketKind { IID, Markov, Mixture };

inline std::string to_string(MarketKind kind) {
  switch (kind) {
    case MarketKind::IID: return "IID";
    case MarketKind::Markov: return "MARKOV";
    case MarketKind::Mixture: return "MIXTURE";
  }
  return "?";
}

using AtomTuple = std::vector<std::size_t>;
using TransitionTable = std::map<AtomTuple, std::vector<double>>;
using TupleDistribution = std::map<AtomTuple, double>;

class MarketSpec;

namespace detail {

struct MarketData {
  MarketKind kind = MarketKind::IID;
  std::size_t m = 0;
  std::size_t k = 0;
  std::vector<JointOutcome> support;
  std::size_t order = 0;
  TransitionTable transition;
  TupleDistribution initial;
  bool stationary_start = false;
  std::vector<double> marginal;
  std::vector<MarketSpec> components;
  std::vector<std::size_t> offsets;
  std::vector<double> weights;
  std::optional<double> no_trash_bound;
  std::string digest;
};

}  // namespace detail

inline nlohmann::json to_json(const MarketSpec& spec);

// Immutable market description. Copies share one underlying record.
class MarketSpec {
 public:
  MarketKind kind() const { return data_->kind; }
  std::size_t m() const { return data_->m; }
  std::size_t k() const { return data_->k; }
  const std::vector<JointOutcome>& support() const { return data_->support; }
  std::size_t order() const { return data_->order; }
  const TransitionTable& transition() const { return data_->transition; }
  // Distribution of the first h atoms of a MARKOV path.
  const TupleDistribution& initial() const { return data_->initial; }
  bool stationary_start() const { return data_->stationary_start; }
  const std::vector<double>& marginal() const { return data_->marginal; }
  const std::vector<MarketSpec>& components() const { return data_->components; }
  const std::vector<double>& weights() const { return data_->weights; }
  std::optional<double> no_trash_bound() const { return data_->no_trash_bound; }
  // Index of the first atom of component `mode` inside this mixture's support.
  std::size_t component_offset(std::size_t mode) const { return data_->offsets.at(mode); }
  std::size_t mode_count() const { return kind() == MarketKind::Mixture ? components().size() : 1; }
  // SHA-256 of the canonical JSON form.
  const std::string& digest() const { return data_->digest; }

  explicit MarketSpec(std::shared_ptr<const detail::MarketData> data) : data_(std::move(data)) {}

 private:
  std::shared_ptr<const detail::MarketData> data_;
};

namespace detail {

inline void check_probability_vector(std::span<const double> p, const std::string& what) {
  double sum = 0.0;
  for (double v : p) {
    require(std::isfinite(v) && v >= 0.0, ErrorCode::InvalidProbability, what + ": negative entry");
    sum += v;
  }
  require(std::abs(sum - 1.0) <= kProbabilityTolerance, ErrorCode::InvalidProbability,
          what + ": entries must sum to 1");
}

inline void check_support(std::vector<JointOutcome>& support, std::optional<double> no_trash_bound,
                          std::size_t& m, std::size_t& k) {
  require(!support.empty(), ErrorCode::DimensionMismatch, "support must be nonempty");
  m = support.front().returns.size();
  k = support.front().side.size();
  require(m >= 2, ErrorCode::DimensionMismatch, "support atoms need m >= 2 returns");
  if (no_trash_bound) {
    require(*no_trash_bound > 0.0, ErrorCode::InvalidArgument, "no_trash_bound must be positive");
  }
  for (std::size_t i = 0; i < support.size(); ++i) {
    auto& atom = support[i];
    require(atom.returns.size() == m && atom.side.size() == k, ErrorCode::DimensionMismatch,
            "support atoms must share m and k");
    atom.atom_id = i;
    if (no_trash_bound) {
      const auto values = atom.returns.values();
      const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
      require(*lo / *hi >= *no_trash_bound, ErrorCode::InvalidArgument,
              "atom " + std::to_string(i) + " violates the no-trash bound");
    }
  }
}

inline AtomTuple shift_in(const AtomTuple& tuple, std::size_t atom) {
  AtomTuple next(tuple.begin() + 1, tuple.end());
  next.push_back(atom);
  return next;
}

inline std::string tuple_key(const AtomTuple& t) {
  std::string key;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) key += ',';
    key += std::to_string(t[i]);
  }
  return key;
}

inline AtomTuple parse_tuple_key(const std::string& key) {
  AtomTuple t;
  std::size_t pos = 0;
  while (pos <= key.size()) {
    const std::size_t comma = std::min(key.find(',', pos), key.size());
    const std::string part = key.substr(pos, comma - pos);
    require(!part.empty() && part.find_first_not_of("0123456789") == std::string::npos,
            ErrorCode::InvalidArgument, "bad transition key '" + key + "'");
    t.push_back(static_cast<std::size_t>(std::stoull(part)));
    pos = comma + 1;
  }
  return t;
}

inline MarketSpec finalize(detail::MarketData data) {
  auto shared = std::make_shared<detail::MarketData>(std::move(data));
  MarketSpec provisional(shared);
  shared->digest = sha256_hex(to_json(provisional).dump());
  return provisional;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Builders

inline MarketSpec build_iid(std::vector<JointOutcome> support, std::vector<double> probs,
                            std::optional<double> no_trash_bound = std::nullopt) {
  detail::MarketData data;
  data.kind = MarketKind::IID;
  require(probs.size() == support.size(), ErrorCode::DimensionMismatch,
          "probs length must equal support length");
  detail::check_probability_vector(probs, "marginal");
  detail::check_support(support, no_trash_bound, data.m, data.k);
  data.support = std::move(support);
  data.marginal = std::move(probs);
  data.no_trash_bound = no_trash_bound;
  return detail::finalize(std::move(data));
}

// Tuples reachable from the initial support through positive transitions.
// Throws MissingTransitionRow if one of them has no row.
inline std::set<AtomTuple> reachable_tuples(const TransitionTable& transition,
                                            const TupleDistribution& initial) {
  std::set<AtomTuple> seen;
  std::deque<AtomTuple> queue;
  for (const auto& [tuple, p] : initial) {
    if (p > 0.0 && seen.insert(tuple).second) queue.push_back(tuple);
  }
  while (!queue.empty()) {
    const AtomTuple tuple = std::move(queue.front());
    queue.pop_front();
    const auto row = transition.find(tuple);
    require(row != transition.end(), ErrorCode::MissingTransitionRow,
            "reachable tuple (" + detail::tuple_key(tuple) + ") has no transition row");
    for (std::size_t a = 0; a < row->second.size(); ++a) {
      if (row->second[a] <= 0.0) continue;
      AtomTuple next = detail::shift_in(tuple, a);
      if (seen.insert(next).second) queue.push_back(std::move(next));
    }
  }
  return seen;
}

inline TupleDistribution stationary_distribution(const MarketSpec& spec);

namespace detail {

inline TupleDistribution stationary_of(const TransitionTable& transition, std::size_t atoms);

}  // namespace detail

// `initial` may be empty, in which case the chain starts from its stationary
// distribution (and NotConverged propagates if that is not unique).
inline MarketSpec build_markov(std::vector<JointOutcome> support, std::size_t order,
                               TransitionTable transition, TupleDistribution initial = {},
                               std::optional<double> no_trash_bound = std::nullopt) {
  detail::MarketData data;
  data.kind = MarketKind::Markov;
  require(order >= 1, ErrorCode::InvalidArgument, "Markov order must be >= 1");
  detail::check_support(support, no_trash_bound, data.m, data.k);
  require(!transition.empty(), ErrorCode::MissingTransitionRow, "transition table is empty");
  for (const auto& [tuple, row] : transition) {
    require(tuple.size() == order, ErrorCode::DimensionMismatch,
            "transition key (" + detail::tuple_key(tuple) + ") has wrong length");
    for (std::size_t a : tuple) {
      require(a < support.size(), ErrorCode::DimensionMismatch, "transition key atom out of range");
    }
    require(row.size() == support.size(), ErrorCode::DimensionMismatch,
            "transition row length must equal support length");
    detail::check_probability_vector(row, "transition row (" + detail::tuple_key(tuple) + ")");
  }

  if (initial.empty()) {
    initial = detail::stationary_of(transition, support.size());
    data.stationary_start = true;
  } else {
    std::vector<double> probs;
    for (const auto& [tuple, p] : initial) {
      require(tuple.size() == order, ErrorCode::DimensionMismatch, "initial tuple has wrong length");
      for (std::size_t a : tuple) {
        require(a < support.size(), ErrorCode::DimensionMismatch, "initial tuple atom out of range");
      }
      probs.push_back(p);
    }
    detail::check_probability_vector(probs, "initial distribution");
    reachable_tuples(transition, initial);
    try {
      const TupleDistribution pi = detail::stationary_of(transition, support.size());
      double l1 = 0.0;
      std::set<AtomTuple> keys;
      for (const auto& [t, p] : pi) keys.insert(t);
      for (const auto& [t, p] : initial) keys.insert(t);
      for (const auto& t : keys) {
        const double a = pi.contains(t) ? pi.at(t) : 0.0;
        const double b = initial.contains(t) ? initial.at(t) : 0.0;
        l1 += std::abs(a - b);
      }
      data.stationary_start = l1 <= 1e-9;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NotConverged) throw;
      data.stationary_start = false;
    }
  }
  reachable_tuples(transition, initial);

  data.support = std::move(support);
  data.order = order;
  data.transition = std::move(transition);
  data.initial = std::move(initial);
  data.no_trash_bound = no_trash_bound;
  return detail::finalize(std::move(data));
}

inline MarketSpec build_mixture(std::vector<MarketSpec> components, std::vector<double> weights) {
  detail::MarketData data;
  data.kind = MarketKind::Mixture;
  require(components.size() >= 2, ErrorCode::InvalidArgument, "mixture needs >= 2 components");
  require(weights.size() == components.size(), ErrorCode::DimensionMismatch,
          "one weight per component");
  detail::check_probability_vector(weights, "mixture weights");
  data.m = components.front().m();
  data.k = components.front().k();
  std::size_t offset = 0;
  for (const auto& c : components) {
    require(c.kind() != MarketKind::Mixture, ErrorCode::InvalidArgument,
            "mixture components must be IID or MARKOV");
    require(c.m() == data.m && c.k() == data.k, ErrorCode::DimensionMismatch,
            "mixture components must share m and k");
    data.offsets.push_back(offset);
    for (const auto& atom : c.support()) {
      data.support.push_back(atom);
      data.support.back().atom_id = offset + atom.atom_id;
    }
    offset += c.support().size();
  }
  data.components = std::move(components);
  data.weights = std::move(weights);
  return detail::finalize(std::move(data));
}

// ---------------------------------------------------------------------------
// Stationary distribution

namespace detail {

// Power iteration on the lazy chain (I + P) / 2 over the tuples that have
// rows. The lazy chain shares P's stationary vectors and is aperiodic, so
// periodic chains converge; chains with more than one closed class are
// rejected up front because their stationary vector is not unique.
inline TupleDistribution stationary_of(const TransitionTable& transition, std::size_t atoms) {
  std::vector<AtomTuple> states;
  std::map<AtomTuple, std::size_t> index;
  for (const auto& [tuple, row] : transition) {
    index.emplace(tuple, states.size());
    states.push_back(tuple);
  }
  const std::size_t s = states.size();
  std::vector<std::vector<std::pair<std::size_t, double>>> edges(s);
  for (std::size_t i = 0; i < s; ++i) {
    const auto& row = transition.at(states[i]);
    require(row.size() == atoms, ErrorCode::DimensionMismatch, "transition row length");
    for (std::size_t a = 0; a < atoms; ++a) {
      if (row[a] <= 0.0) continue;
      const auto it = index.find(shift_in(states[i], a));
      require(it != index.end(), ErrorCode::MissingTransitionRow,
              "tuple (" + tuple_key(shift_in(states[i], a)) + ") has no transition row");
      edges[i].emplace_back(it->second, row[a]);
    }
  }

  // A unique stationary vector exists iff some state is reachable from all.
  std::vector<std::size_t> reach_count(s, 0);
  for (std::size_t i = 0; i < s; ++i) {
    std::vector<bool> seen(s, false);
    std::vector<std::size_t> stack{i};
    seen[i] = true;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      ++reach_count[u];
      for (const auto& [v, p] : edges[u]) {
        if (!seen[v]) {
          seen[v] = true;
          stack.push_back(v);
        }
      }
    }
  }
  require(std::any_of(reach_count.begin(), reach_count.end(), [s](std::size_t c) { return c == s; }),
          ErrorCode::NotConverged, "chain is reducible: stationary distribution is not unique");

  std::vector<double> pi(s, 1.0 / static_cast<double>(s)), next(s);
  constexpr std::size_t kMaxIterations = 1'000'000;
  bool converged = false;
  for (std::size_t iter = 0; iter < kMaxIterations; ++iter) {
    for (std::size_t i = 0; i < s; ++i) next[i] = 0.5 * pi[i];
    for (std::size_t i = 0; i < s; ++i) {
      for (const auto& [j, p] : edges[i]) next[j] += 0.5 * pi[i] * p;
    }
    double total = std::accumulate(next.begin(), next.end(), 0.0);
    double delta = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
      next[i] /= total;
      delta += std::abs(next[i] - pi[i]);
    }
    pi.swap(next);
    if (delta <= 1e-12) {
      converged = true;
      break;
    }
  }
  // Residual of the original chain: ||pi P - pi||_1.
  std::vector<double> step(s, 0.0);
  for (std::size_t i = 0; i < s; ++i) {
    for (const auto& [j, p] : edges[i]) step[j] += pi[i] * p;
  }
  double residual = 0.0;
  for (std::size_t i = 0; i < s; ++i) residual += std::abs(step[i] - pi[i]);
  require(converged && residual <= 1e-10, ErrorCode::NotConverged,
          "power iteration did not reach ||pi P - pi|| <= 1e-10");

  TupleDistribution out;
  for (std::size_t i = 0; i < s; ++i) {
    if (pi[i] > 0.0) out.emplace(states[i], pi[i]);
  }
  return out;
}

}  // namespace detail

inline TupleDistribution stationary_distribution(const MarketSpec& spec) {
  require(spec.kind() == MarketKind::Markov, ErrorCode::InvalidArgument,
          "stationary_distribution needs a MARKOV spec");
  return detail::stationary_of(spec.transition(), spec.support().size());
}

// Stationary law of a single step's atom for one ergodic component
// (`mode` selects the component of a mixture). Entries index spec.support().
inline std::vector<double> stationary_atom_marginal(const MarketSpec& spec, std::size_t mode = 0) {
  std::vector<double> out(spec.support().size(), 0.0);
  switch (spec.kind()) {
    case MarketKind::IID:
      return spec.marginal();
    case MarketKind::Markov: {
      for (const auto& [tuple, p] : stationary_distribution(spec)) {
        const auto& row = spec.transition().at(tuple);
        for (std::size_t a = 0; a < row.size(); ++a) out[a] += p * row[a];
      }
      return out;
    }
    case MarketKind::Mixture: {
      require(mode < spec.components().size(), ErrorCode::InvalidArgument, "mode_id out of range");
      const auto inner = stationary_atom_marginal(spec.components()[mode]);
      const std::size_t offset = spec.component_offset(mode);
      for (std::size_t a = 0; a < inner.size(); ++a) out[offset + a] = inner[a];
      return out;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Paths

// A realized sequence of joint atoms. `warmup` holds the h atoms that
// precede step 1 of a MARKOV path (the chain's starting tuple); strategies
// never see it, but the oracle conditions on it for the first steps.
class MarketPath {
 public:
  MarketPath(MarketSpec spec, std::vector<std::size_t> atoms, std::size_t mode_id, std::uint64_t seed,
             std::vector<std::size_t> warmup = {})
      : spec_(std::move(spec)),
        atoms_(std::move(atoms)),
        warmup_(std::move(warmup)),
        mode_id_(mode_id),
        seed_(seed) {
    require(!atoms_.empty(), ErrorCode::InvalidArgument, "path must be nonempty");
    for (std::size_t a : atoms_) {
      require(a < spec_.support().size(), ErrorCode::InvalidArgument, "path atom out of range");
    }
    for (std::size_t a : warmup_) {
      require(a < spec_.support().size(), ErrorCode::InvalidArgument, "warmup atom out of range");
    }
    require(mode_id_ < spec_.mode_count(), ErrorCode::InvalidArgument, "mode_id out of range");
  }

  std::size_t size() const { return atoms_.size(); }
  std::size_t m() const { return spec_.m(); }
  std::size_t k() const { return spec_.k(); }
  const JointOutcome& operator[](std::size_t i) const { return spec_.support()[atoms_[i]]; }
  const AssetReturns& returns(std::size_t i) const { return (*this)[i].returns; }
  const SideInfo& side(std::size_t i) const { return (*this)[i].side; }
  std::size_t atom(std::size_t i) const { return atoms_[i]; }
  const std::vector<std::size_t>& atoms() const { return atoms_; }
  const std::vector<std::size_t>& warmup() const { return warmup_; }
  std::size_t mode_id() const { return mode_id_; }
  std::uint64_t seed() const { return seed_; }
  const MarketSpec& spec() const { return spec_; }
  const std::string& spec_digest() const { return spec_.digest(); }
  // Identifies the realized sequence, not just its generator.
  std::string digest() const {
    std::string bytes = spec_.digest() + ":" + std::to_string(mode_id_) + ":";
    for (std::size_t a : warmup_) bytes += std::to_string(a) + ",";
    bytes += ":";
    for (std::size_t a : atoms_) bytes += std::to_string(a) + ",";
    return sha256_hex(bytes);
  }

  MarketPath prefix(std::size_t n) const {
    require(n >= 1 && n <= atoms_.size(), ErrorCode::InvalidArgument, "bad prefix length");
    return MarketPath(spec_, std::vector<std::size_t>(atoms_.begin(), atoms_.begin() + static_cast<std::ptrdiff_t>(n)),
                      mode_id_, seed_, warmup_);
  }

 private:
  MarketSpec spec_;
  std::vector<std::size_t> atoms_;
  std::vector<std::size_t> warmup_;
  std::size_t mode_id_;
  std::uint64_t seed_;
};

namespace detail {

inline void sample_component(const MarketSpec& spec, std::size_t n, Rng& rng, std::size_t offset,
                             std::vector<std::size_t>& out, std::vector<std::size_t>& warmup) {
  if (spec.kind() == MarketKind::IID) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(offset + rng.categorical(spec.marginal()));
    return;
  }
  std::vector<AtomTuple> tuples;
  std::vector<double> probs;
  for (const auto& [t, p] : spec.initial()) {
    tuples.push_back(t);
    probs.push_back(p);
  }
  AtomTuple state = tuples[rng.categorical(probs)];
  for (std::size_t a : state) warmup.push_back(offset + a);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = rng.categorical(spec.transition().at(state));
    out.push_back(offset + a);
    state = shift_in(state, a);
  }
}

}  // namespace detail

// Same (spec, n, seed) always yields the same path. A MARKOV path draws its
// starting h-tuple from spec.initial() and then n transitions; a MIXTURE
// path draws its mode once and then samples that component.
inline MarketPath sample_path(const MarketSpec& spec, std::size_t n, std::uint64_t seed) {
  require(n >= 1, ErrorCode::InvalidArgument, "path length must be >= 1");
  Rng rng(derive_seed(seed, 0));
  std::vector<std::size_t> atoms, warmup;
  atoms.reserve(n);
  std::size_t mode = 0;
  if (spec.kind() == MarketKind::Mixture) {
    mode = rng.categorical(spec.weights());
    detail::sample_component(spec.components()[mode], n, rng, spec.component_offset(mode), atoms, warmup);
  } else {
    detail::sample_component(spec, n, rng, 0, atoms, warmup);
  }
  return MarketPath(spec, std::move(atoms), mode, seed, std::move(warmup));
}

// Exact law of the next joint atom given the visible atom history (oldest
// first). For mixtures, `mode_id` selects the path's ergodic component and
// history atoms are indices into the mixture's concatenated support.
inline std::vector<double> conditional_next(const MarketSpec& spec, std::span<const std::size_t> history,
                                            std::size_t mode_id = 0) {
  switch (spec.kind()) {
    case MarketKind::IID:
      return spec.marginal();
    case MarketKind::Markov: {
      const std::size_t h = spec.order();
      require(history.size() >= h, ErrorCode::HistoryTooShort,
              "history shorter than Markov order " + std::to_string(h));
      const AtomTuple tuple(history.end() - static_cast<std::ptrdiff_t>(h), history.end());
      const auto row = spec.transition().find(tuple);
      require(row != spec.transition().end(), ErrorCode::MissingTransitionRow,
              "no transition row for (" + detail::tuple_key(tuple) + ")");
      return row->second;
    }
    case MarketKind::Mixture: {
      require(mode_id < spec.components().size(), ErrorCode::InvalidArgument, "mode_id out of range");
      const MarketSpec& component = spec.components()[mode_id];
      const std::size_t offset = spec.component_offset(mode_id);
      const std::size_t count = component.support().size();
      std::vector<std::size_t> local;
      local.reserve(history.size());
      for (std::size_t a : history) {
        require(a >= offset && a < offset + count, ErrorCode::InvalidArgument,
                "history atom does not belong to the selected mode");
        local.push_back(a - offset);
      }
      const auto inner = conditional_next(component, local);
      std::vector<double> out(spec.support().size(), 0.0);
      std::copy(inner.begin(), inner.end(), out.begin() + static_cast<std::ptrdiff_t>(offset));
      return out;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// JSON form. Keys are sorted (nlohmann::json objects are ordered maps) and
// doubles print in shortest round-trip form, which makes dump() canonical.

inline nlohmann::json to_json(const MarketSpec& spec) {
  using nlohmann::json;
  json j;
  j["kind"] = to_string(spec.kind());
  j["m"] = spec.m();
  j["k"] = spec.k();
  if (spec.kind() == MarketKind::Mixture) {
    json comps = json::array();
    for (const auto& c : spec.components()) comps.push_back(to_json(c));
    j["components"] = comps;
    j["weights"] = spec.weights();
    return j;
  }
  json support = json::array();
  for (const auto& atom : spec.support()) {
    support.push_back({{"x", std::vector<double>(atom.returns.values().begin(), atom.returns.values().end())},
                       {"y", atom.side.values}});
  }
  j["support"] = support;
  if (spec.no_trash_bound()) j["no_trash_bound"] = *spec.no_trash_bound();
  if (spec.kind() == MarketKind::IID) {
    j["marginal"] = spec.marginal();
  } else {
    j["order"] = spec.order();
    json transition = json::object();
    for (const auto& [tuple, row] : spec.transition()) transition[detail::tuple_key(tuple)] = row;
    j["transition"] = transition;
    if (!spec.stationary_start()) {
      json initial = json::object();
      for (const auto& [tuple, p] : spec.initial()) initial[detail::tuple_key(tuple)] = p;
      j["initial"] = initial;
    }
  }
  return j;
}

inline MarketSpec spec_from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "MIXTURE") {
      std::vector<MarketSpec> comps;
      for (const auto& c : j.at("components")) comps.push_back(spec_from_json(c));
      return build_mixture(std::move(comps), j.at("weights").get<std::vector<double>>());
    }
    std::vector<JointOutcome> support;
    for (const auto& atom : j.at("support")) {
      JointOutcome o;
      o.returns = AssetReturns(atom.at("x").get<std::vector<double>>());
      if (atom.contains("y")) o.side.values = atom.at("y").get<std::vector<double>>();
      support.push_back(std::move(o));
    }
    std::optional<double> bound;
    if (j.contains("no_trash_bound") && !j.at("no_trash_bound").is_null()) {
      bound = j.at("no_trash_bound").get<double>();
    }
    MarketSpec spec = [&] {
      if (kind == "IID") {
        return build_iid(std::move(support), j.at("marginal").get<std::vector<double>>(), bound);
      }
      require(kind == "MARKOV", ErrorCode::InvalidArgument, "unknown market kind '" + kind + "'");
      TransitionTable table;
      for (const auto& [key, row] : j.at("transition").items()) {
        table[detail::parse_tuple_key(key)] = row.get<std::vector<double>>();
      }
      TupleDistribution initial;
      if (j.contains("initial")) {
        for (const auto& [key, p] : j.at("initial").items()) initial[detail::parse_tuple_key(key)] = p.get<double>();
      }
      return build_markov(std::move(support), j.at("order").get<std::size_t>(), std::move(table),
                          std::move(initial), bound);
    }();
    if (j.contains("m")) {
      require(j.at("m").get<std::size_t>() == spec.m(), ErrorCode::DimensionMismatch, "declared m mismatch");
    }
    if (j.contains("k")) {
      require(j.at("k").get<std::size_t>() == spec.k(), ErrorCode::DimensionMismatch, "declared k mismatch");
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("market JSON: ") + e.what());
  }
}

}  // namespace logopt
