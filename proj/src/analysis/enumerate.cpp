#include "dvelab/analysis/enumerate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "dvelab/analysis/values.hpp"
#include "dvelab/common/error.hpp"
#include "dvelab/common/rng.hpp"

namespace dvelab::analysis {

namespace {

constexpr int kActions = env::kNumActions;

env::Observation observe_key(const ToyPool& pool, int scene, const StateKey& s) {
  return env::observe(pool.scenes[static_cast<std::size_t>(scene)], pool.env, s.grid, s.t);
}

void budget_exceeded(std::size_t budget) {
  throw Error(ErrorCode::EnumerationBudgetExceeded,
              "more than " + std::to_string(budget) + " trajectories");
}

/// Depth-first walk over every prefix; `on_visit` sees each (s, a) with the
/// prefix probability including a. Returns the number of trajectories.
template <typename OnVisit>
std::size_t walk(const ToyPool& pool, const TabularPolicy& policy, std::size_t budget,
                 OnVisit&& on_visit) {
  std::size_t leaves = 0;
  for (int m = 0; m < static_cast<int>(pool.scenes.size()); ++m) {
    const auto& scene = pool.scenes[static_cast<std::size_t>(m)];
    auto rec = [&](auto&& self, const StateKey& s, double prefix) -> void {
      const std::size_t row = policy.row(observe_key(pool, m, s));
      const auto probs = policy.probs(row);
      for (int a = 0; a < kActions; ++a) {
        if (probs[a] == 0.0) continue;
        const double p = prefix * probs[a];
        on_visit(m, s, row, a, p, probs);
        const auto tr = env::transition(scene, pool.env, s.grid, env::kAllActions[a]);
        if (tr.cause == env::TerminationCause::Running && s.t + 1 < pool.env.t_max) {
          self(self, StateKey{tr.next, s.t + 1}, p);
        } else if (++leaves > budget) {
          budget_exceeded(budget);
        }
      }
    };
    rec(rec, StateKey{{scene.start, 0}, 0}, 1.0);
  }
  return leaves;
}

}  // namespace

ToyPool stock_toy_pool() {
  ToyPool pool;
  pool.env.n_levels = 4;
  pool.env.width = 3;
  pool.env.height = 3;
  pool.env.obs_window = 3;
  pool.env.t_max = 6;
  pool.env.family_mix = {{env::Family::Maze, 0.5}, {env::Family::Hazard, 0.5}};
  pool.env.validate();
  const char* art[] = {
      "S..\n...\n..G\n",
      "S.s\n...\nx.G\n",
      "S..\n.#.\n..G\n",
      "S..\n...\nG.x\n",
  };
  const env::Family family[] = {env::Family::Maze, env::Family::Hazard, env::Family::Maze,
                                env::Family::Hazard};
  for (int i = 0; i < 4; ++i) {
    pool.scenes.push_back(env::scene_from_ascii(art[i], family[i], i, static_cast<std::uint64_t>(i)));
  }
  return pool;
}

TabularPolicy::TabularPolicy(const ToyPool& pool) {
  std::set<std::vector<double>> seen;
  for (const auto& scene : pool.scenes) {
    for (const auto& g : reachable_states(scene, pool.env)) {
      for (int t = 0; t < pool.env.t_max; ++t) {
        seen.insert(env::observe(scene, pool.env, g, t).data);
      }
    }
  }
  std::size_t r = 0;
  for (const auto& obs : seen) index_.emplace(obs, r++);
  logits_.assign(index_.size() * kActions, 0.0);
}

void TabularPolicy::randomize(std::uint64_t seed, double scale) {
  Rng rng = make_stream(seed, "tabular_policy");
  for (double& x : logits_) x = scale * standard_normal(rng);
}

std::size_t TabularPolicy::row(const env::Observation& obs) const {
  const auto it = index_.find(obs.data);
  if (it == index_.end()) throw Error(ErrorCode::InvalidArgument, "observation not in policy table");
  return it->second;
}

std::vector<double> TabularPolicy::probs(std::size_t row) const {
  const double* z = logits_.data() + row * kActions;
  const double m = *std::max_element(z, z + kActions);
  std::vector<double> p(kActions);
  double sum = 0.0;
  for (int a = 0; a < kActions; ++a) sum += p[a] = std::exp(z[a] - m);
  for (double& x : p) x /= sum;
  return p;
}

ToyEvaluator::ToyEvaluator(const ToyPool& pool, const TabularPolicy& policy, double gamma)
    : pool_(pool), policy_(policy), gamma_(gamma), memo_(pool.scenes.size()) {}

std::size_t ToyEvaluator::policy_row(int scene, const StateKey& s) const {
  return policy_.row(observe_key(pool_, scene, s));
}

double ToyEvaluator::q(int scene, const StateKey& s, int action) const {
  const auto tr = env::transition(pool_.scenes[static_cast<std::size_t>(scene)], pool_.env,
                                  s.grid, env::kAllActions[action]);
  double out = tr.reward;
  if (tr.cause == env::TerminationCause::Running && s.t + 1 < pool_.env.t_max) {
    out += gamma_ * value(scene, StateKey{tr.next, s.t + 1});
  }
  return out;
}

double ToyEvaluator::value(int scene, const StateKey& s) const {
  auto& memo = memo_[static_cast<std::size_t>(scene)];
  if (const auto it = memo.find(s); it != memo.end()) return it->second;
  const auto probs = policy_.probs(policy_row(scene, s));
  double v = 0.0;
  for (int a = 0; a < kActions; ++a) {
    if (probs[a] != 0.0) v += probs[a] * q(scene, s, a);
  }
  memo.emplace(s, v);
  return v;
}

std::vector<VisitSample> enumerate_visits(const ToyPool& pool, const TabularPolicy& policy,
                                          double gamma, std::size_t budget) {
  const ToyEvaluator values(pool, policy, gamma);
  const double p_scene = 1.0 / static_cast<double>(pool.scenes.size());
  std::vector<VisitSample> out;
  walk(pool, policy, budget,
       [&](int m, const StateKey& s, std::size_t row, int a, double p,
           const std::vector<double>& probs) {
         double score = 0.0;
         for (int b = 0; b < kActions; ++b) {
           const double g = (a == b ? 1.0 : 0.0) - probs[b];
           score += g * g;
         }
         out.push_back({m, s, row, a, p_scene * p, values.q(m, s, a), score});
       });
  return out;
}

std::size_t count_trajectories(const ToyPool& pool, const TabularPolicy& policy,
                               std::size_t budget) {
  return walk(pool, policy, budget,
              [](int, const StateKey&, std::size_t, int, double, const std::vector<double>&) {});
}

std::vector<double> policy_gradient_enumerate(const ToyPool& pool, const TabularPolicy& policy,
                                              const StateFunction& baseline, double gamma,
                                              std::size_t budget) {
  const ToyEvaluator values(pool, policy, gamma);
  const double p_scene = 1.0 / static_cast<double>(pool.scenes.size());
  std::vector<double> grad(policy.param_count(), 0.0);
  walk(pool, policy, budget,
       [&](int m, const StateKey& s, std::size_t row, int a, double p,
           const std::vector<double>& probs) {
         const double b = baseline ? baseline(m, s) : 0.0;
         const double psi = p_scene * p * (values.q(m, s, a) - b);
         for (int k = 0; k < kActions; ++k) {
           grad[row * kActions + k] += psi * ((a == k ? 1.0 : 0.0) - probs[k]);
         }
       });
  return grad;
}

double baseline_sq_error(std::span<const VisitSample> visits, const StateFunction& f) {
  double total = 0.0;
  double mass = 0.0;
  for (const auto& v : visits) {
    const double d = v.q - f(v.scene, v.state);
    total += v.weight * d * d;
    mass += v.weight;
  }
  if (!(mass > 0.0)) throw Error(ErrorCode::EmptyBatch, "no visits");
  return total / mass;
}

std::map<std::size_t, double> scene_generic_baseline(std::span<const VisitSample> visits) {
  std::map<std::size_t, std::pair<double, double>> acc;
  for (const auto& v : visits) {
    auto& [wq, w] = acc[v.policy_row];
    wq += v.weight * v.q;
    w += v.weight;
  }
  std::map<std::size_t, double> out;
  for (const auto& [row, sums] : acc) out.emplace(row, sums.first / sums.second);
  return out;
}

double max_alias_gap(std::span<const VisitSample> visits, const ToyEvaluator& values) {
  std::map<std::size_t, std::pair<double, double>> range;
  for (const auto& v : visits) {
    const double x = values.value(v.scene, v.state);
    auto [it, fresh] = range.try_emplace(v.policy_row, x, x);
    it->second.first = std::min(it->second.first, x);
    it->second.second = std::max(it->second.second, x);
  }
  double gap = 0.0;
  for (const auto& [row, r] : range) gap = std::max(gap, r.second - r.first);
  return gap;
}

VarianceScan baseline_variance_scan(const ToyPool& pool, const TabularPolicy& policy,
                                    double gamma, int n_directions, std::span<const double> etas,
                                    std::uint64_t seed) {
  const ToyEvaluator values(pool, policy, gamma);
  const auto visits = enumerate_visits(pool, policy, gamma);
  const StateFunction v_sm = [&](int m, const StateKey& s) { return values.value(m, s); };

  VarianceScan out;
  out.at_value = baseline_sq_error(visits, v_sm);
  const auto generic = scene_generic_baseline(visits);
  out.scene_generic = baseline_sq_error(visits, [&](int m, const StateKey& s) {
    return generic.at(values.policy_row(m, s));
  });

  std::set<std::pair<int, StateKey>> keys;
  for (const auto& v : visits) keys.emplace(v.scene, v.state);
  out.min_margin = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n_directions; ++k) {
    Rng rng = make_stream(seed, "optimality/direction" + std::to_string(k));
    std::map<std::pair<int, StateKey>, double> d;
    for (const auto& key : keys) d.emplace(key, standard_normal(rng));
    for (const double eta : etas) {
      const double err = baseline_sq_error(visits, [&](int m, const StateKey& s) {
        return values.value(m, s) + eta * d.at({m, s});
      });
      out.points.push_back({k, eta, err});
      out.min_margin = std::min(out.min_margin, err - out.at_value);
    }
  }
  return out;
}

VarianceReport variance_decomposition(std::span<const VisitSample> batch,
                                      const StateFunction& predictor,
                                      const OracleFunction& oracle) {
  if (!oracle) throw Error(ErrorCode::MissingOracle, "no oracle values supplied");
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "no samples");
  VarianceReport r;
  double mass = 0.0;
  for (const auto& s : batch) {
    const auto v = oracle(s.scene, s.state);
    if (!v) {
      throw Error(ErrorCode::MissingOracle,
                  "no oracle value for a state of scene " + std::to_string(s.scene));
    }
    const double v_hat = predictor(s.scene, s.state);
    const double adv = s.q - *v;
    const double err = *v - v_hat;
    r.total_variance += s.weight * (s.q - v_hat) * (s.q - v_hat);
    r.minimal_variance += s.weight * adv * adv;
    r.prediction_error += s.weight * err * err;
    r.cross_term += s.weight * 2.0 * adv * err;
    r.score_sq_mean += s.weight * s.score_sq;
    mass += s.weight;
  }
  r.total_variance /= mass;
  r.minimal_variance /= mass;
  r.prediction_error /= mass;
  r.cross_term /= mass;
  r.score_sq_mean /= mass;
  return r;
}

StateFunction random_baseline(std::uint64_t seed, double scale) {
  return [seed, scale](int scene, const StateKey& s) {
    std::uint64_t h = splitmix64(seed ^ 0x6c656d6d61ULL);
    for (const std::uint64_t part :
         {static_cast<std::uint64_t>(scene), static_cast<std::uint64_t>(s.grid.agent.x),
          static_cast<std::uint64_t>(s.grid.agent.y), static_cast<std::uint64_t>(s.grid.claimed),
          static_cast<std::uint64_t>(s.t)}) {
      h = splitmix64(h ^ part);
    }
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    return scale * (2.0 * u - 1.0);
  };
}

}  // namespace dvelab::analysis
