#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "dvelab/envkit/env.hpp"

namespace dvelab::analysis {

/// A grid state at a given step of a finite-horizon episode.
struct StateKey {
  env::GridState grid;
  int t = 0;
  auto operator<=>(const StateKey&) const = default;
};

/// Scenes small enough to enumerate every trajectory.
struct ToyPool {
  env::EnvConfig env;
  std::vector<env::SceneDescriptor> scenes;
};

/// Four hand-made 3x3 scenes, window 3, T_max 6. The agent starts in the
/// same corner everywhere and cannot see the far corner from there, so the
/// start observation is shared while the values behind it differ.
ToyPool stock_toy_pool();

/// Softmax policy with one logit row per distinct observation of a pool.
class TabularPolicy {
 public:
  /// Zero logits (uniform) over every observation reachable in the pool.
  explicit TabularPolicy(const ToyPool& pool);

  /// Logits drawn from N(0, scale^2) on the "tabular_policy" stream.
  void randomize(std::uint64_t seed, double scale);

  std::size_t rows() const { return index_.size(); }
  std::size_t param_count() const { return logits_.size(); }
  std::span<double> logits() { return logits_; }
  std::span<const double> logits() const { return logits_; }

  /// Row of an observation; throws INVALID_ARGUMENT for an unseen one.
  std::size_t row(const env::Observation& obs) const;
  std::vector<double> probs(std::size_t row) const;

 private:
  std::map<std::vector<double>, std::size_t> index_;
  std::vector<double> logits_;  // rows x kNumActions
};

/// One (s, a, M) visit of the enumerated trajectory distribution.
/// `weight` is P(M) times the probability of the prefix up to and
/// including a_t.
struct VisitSample {
  int scene = 0;
  StateKey state;
  std::size_t policy_row = 0;
  int action = 0;
  double weight = 1.0;
  double q = 0.0;         // Q(s, a, M)
  double score_sq = 0.0;  // |grad_theta log pi(a|s)|^2
};

/// Per-(s, M) scalar function, s being a step-indexed grid state.
using StateFunction = std::function<double(int scene, const StateKey& s)>;

/// Exact finite-horizon values of a tabular policy on a toy pool.
class ToyEvaluator {
 public:
  ToyEvaluator(const ToyPool& pool, const TabularPolicy& policy, double gamma);

  double value(int scene, const StateKey& s) const;
  double q(int scene, const StateKey& s, int action) const;
  std::size_t policy_row(int scene, const StateKey& s) const;
  double gamma() const { return gamma_; }

 private:
  const ToyPool& pool_;
  const TabularPolicy& policy_;
  double gamma_;
  mutable std::vector<std::map<StateKey, double>> memo_;
};

inline constexpr std::size_t kDefaultEnumerationBudget = 100000;

/// Every visit of every trajectory, scenes weighted uniformly. Throws
/// ENUMERATION_BUDGET_EXCEEDED past `budget` complete trajectories.
std::vector<VisitSample> enumerate_visits(const ToyPool& pool, const TabularPolicy& policy,
                                          double gamma,
                                          std::size_t budget = kDefaultEnumerationBudget);

/// Number of complete trajectories with positive probability.
std::size_t count_trajectories(const ToyPool& pool, const TabularPolicy& policy,
                               std::size_t budget = kDefaultEnumerationBudget);

/// Exact sum over M and trajectories of P(tau, M) sum_t grad log pi(a_t|s_t)
/// (Q(s_t, a_t, M) - baseline(s_t, M)). An empty baseline means zero.
std::vector<double> policy_gradient_enumerate(const ToyPool& pool, const TabularPolicy& policy,
                                              const StateFunction& baseline, double gamma,
                                              std::size_t budget = kDefaultEnumerationBudget);

/// E[(Q - f)^2] over the enumerated visit distribution.
double baseline_sq_error(std::span<const VisitSample> visits, const StateFunction& f);

/// Per-observation weighted mean of Q: the best baseline that cannot tell
/// scenes apart.
std::map<std::size_t, double> scene_generic_baseline(std::span<const VisitSample> visits);

/// Largest spread of V(s, M) over states sharing one observation.
double max_alias_gap(std::span<const VisitSample> visits, const ToyEvaluator& values);

struct ScanPoint {
  int direction = 0;
  double eta = 0.0;
  double sq_error = 0.0;
};

struct VarianceScan {
  double at_value = 0.0;          // f = V(s, M)
  double scene_generic = 0.0;     // f = best observation-only baseline
  std::vector<ScanPoint> points;  // f = V(s, M) + eta * d
  double min_margin = 0.0;        // min over points of (sq_error - at_value)
};

/// Random directions d(s, M) are i.i.d. standard normal per (scene, state),
/// drawn from stream "optimality/direction<k>".
VarianceScan baseline_variance_scan(const ToyPool& pool, const TabularPolicy& policy,
                                    double gamma, int n_directions, std::span<const double> etas,
                                    std::uint64_t seed);

/// Terms of the Q - V_hat split. All expectations are over the visit
/// weights; total = minimal + prediction_error + cross_term.
struct VarianceReport {
  double total_variance = 0.0;    // E[(Q - V_hat)^2]
  double minimal_variance = 0.0;  // E[(Q - V)^2]
  double prediction_error = 0.0;  // E[(V - V_hat)^2]
  double cross_term = 0.0;        // 2 E[(Q - V)(V - V_hat)]
  double score_sq_mean = 0.0;     // kappa = E[|grad log pi|^2]
  /// kappa * total, the approximate gradient sample variance.
  double nu() const { return score_sq_mean * total_variance; }
};

using OracleFunction = std::function<std::optional<double>(int scene, const StateKey& s)>;

/// Throws MISSING_ORACLE when the oracle is empty or lacks a visited state,
/// EMPTY_BATCH for no samples.
VarianceReport variance_decomposition(std::span<const VisitSample> batch,
                                      const StateFunction& predictor,
                                      const OracleFunction& oracle);

/// Deterministic pseudo-random baseline in [-scale, scale] keyed by
/// (seed, scene, state).
StateFunction random_baseline(std::uint64_t seed, double scale);

}  // namespace dvelab::analysis
