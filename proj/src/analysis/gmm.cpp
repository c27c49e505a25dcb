#include "dvelab/analysis/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "dvelab/common/error.hpp"
#include "dvelab/common/rng.hpp"

namespace dvelab::analysis {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_normal(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (const double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

std::vector<double> kmeans_pp(std::span<const double> x, int c, Rng& rng) {
  std::vector<double> centers{x[uniform_index(rng, x.size())]};
  std::vector<double> d2(x.size());
  while (static_cast<int>(centers.size()) < c) {
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const double m : centers) best = std::min(best, (x[i] - m) * (x[i] - m));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      // Every sample coincides with a center; any choice is as good.
      centers.push_back(x[uniform_index(rng, x.size())]);
      continue;
    }
    double u = uniform01(rng) * total;
    std::size_t pick = x.size() - 1;
    for (std::size_t i = 0; i < x.size(); ++i) {
      u -= d2[i];
      if (u < 0.0) {
        pick = i;
        break;
      }
    }
    centers.push_back(x[pick]);
  }
  return centers;
}

/// Lloyd iterations from the k-means++ centers; EM then starts from the
/// cluster means and proportions with the variance of the whole sample.
GmmModel seed_model(std::span<const double> x, std::vector<double> centers, double sample_var,
                    double floor) {
  const std::size_t c = centers.size();
  std::vector<std::size_t> label(x.size(), c);
  std::vector<double> count(c);
  for (int iter = 0; iter < 100; ++iter) {
    bool moved = false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      std::size_t k = 0;
      for (std::size_t j = 1; j < c; ++j) {
        if (std::abs(x[i] - centers[j]) < std::abs(x[i] - centers[k])) k = j;
      }
      moved |= label[i] != k;
      label[i] = k;
    }
    if (!moved) break;
    std::vector<double> sum(c, 0.0);
    std::fill(count.begin(), count.end(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      sum[label[i]] += x[i];
      count[label[i]] += 1.0;
    }
    for (std::size_t k = 0; k < c; ++k) {
      if (count[k] > 0.0) centers[k] = sum[k] / count[k];
    }
  }
  std::fill(count.begin(), count.end(), 0.0);
  for (const std::size_t k : label) count[k] += 1.0;
  GmmModel m;
  m.means = std::move(centers);
  m.weights.resize(c);
  for (std::size_t k = 0; k < c; ++k) {
    m.weights[k] = (count[k] + 1.0) / (static_cast<double>(x.size()) + static_cast<double>(c));
  }
  m.variances.assign(c, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    m.variances[label[i]] += (x[i] - m.means[label[i]]) * (x[i] - m.means[label[i]]);
  }
  for (std::size_t k = 0; k < c; ++k) {
    m.variances[k] = count[k] > 1.0 ? std::max(m.variances[k] / count[k], floor) : sample_var;
  }
  m.var_floor = floor;
  return m;
}

void run_em(std::span<const double> x, GmmModel& m, const GmmOptions& opt) {
  const std::size_t n = x.size();
  const std::size_t c = m.components();
  std::vector<double> resp(n * c);
  std::vector<double> row(c);

  auto e_step = [&] {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        row[k] = m.weights[k] > 0.0 ? std::log(m.weights[k]) + log_normal(x[i], m.means[k], m.variances[k])
                                    : kNegInf;
      }
      const double lse = log_sum_exp(row);
      ll += lse;
      for (std::size_t k = 0; k < c; ++k) resp[i * c + k] = std::exp(row[k] - lse);
    }
    return ll;
  };

  m.log_likelihood = e_step();
  m.ll_history = {m.log_likelihood};
  for (m.iterations = 0; m.iterations < opt.max_iterations;) {
    for (std::size_t k = 0; k < c; ++k) {
      double nk = 0.0;
      double sx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        nk += resp[i * c + k];
        sx += resp[i * c + k] * x[i];
      }
      if (nk <= 0.0) {
        m.weights[k] = 0.0;
        continue;
      }
      const double mean = sx / nk;
      double sv = 0.0;
      for (std::size_t i = 0; i < n; ++i) sv += resp[i * c + k] * (x[i] - mean) * (x[i] - mean);
      m.weights[k] = nk / static_cast<double>(n);
      m.means[k] = mean;
      m.variances[k] = std::max(sv / nk, m.var_floor);
    }
    const double ll = e_step();
    ++m.iterations;
    const double gain = ll - m.log_likelihood;
    m.log_likelihood = ll;
    m.ll_history.push_back(ll);
    if (gain < opt.tolerance) break;
  }
}

}  // namespace

double mixture_log_likelihood(const GmmModel& model, std::span<const double> samples) {
  std::vector<double> row(model.components());
  double ll = 0.0;
  for (const double x : samples) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      row[k] = model.weights[k] > 0.0
                   ? std::log(model.weights[k]) + log_normal(x, model.means[k], model.variances[k])
                   : kNegInf;
    }
    ll += log_sum_exp(row);
  }
  return ll;
}

GmmModel fit_gmm(std::span<const double> samples, int components, std::uint64_t seed,
                 const GmmOptions& options) {
  if (components < 1) throw Error(ErrorCode::InvalidArgument, "component count must be >= 1");
  if (samples.size() < static_cast<std::size_t>(components)) {
    throw Error(ErrorCode::TooFewSamples, std::to_string(samples.size()) + " samples for " +
                                              std::to_string(components) + " components");
  }
  for (const double x : samples) {
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteInput, "non-finite GMM sample");
  }
  const double n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double var = 0.0;
  for (const double x : samples) var += (x - mean) * (x - mean);
  var /= n;
  const double floor = std::max(1e-6 * var, 1e-12);

  GmmModel best;
  best.log_likelihood = kNegInf;
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    Rng rng = make_stream(seed, "gmm/restart" + std::to_string(r));
    GmmModel m = seed_model(samples, kmeans_pp(samples, components, rng), var, floor);
    run_em(samples, m, options);
    if (best.ll_history.empty() || m.log_likelihood > best.log_likelihood) best = std::move(m);
  }
  return best;
}

double aic(const GmmModel& model, std::size_t /*n_samples*/) {
  const double k = 3.0 * static_cast<double>(model.components()) - 1.0;
  return 2.0 * k - 2.0 * model.log_likelihood;
}

ClusterSelection select_clusters(std::span<const double> samples, int c_min, int c_max,
                                 std::uint64_t seed, const GmmOptions& options) {
  if (c_min < 1 || c_max < c_min) {
    throw Error(ErrorCode::InvalidArgument, "component range must satisfy 1 <= c_min <= c_max");
  }
  ClusterSelection out;
  for (int c = c_min; c <= c_max; ++c) {
    auto model = fit_gmm(samples, c, seed, options);
    const double score = aic(model, samples.size());
    out.curve.push_back({c, score, model.log_likelihood});
    out.models.push_back(std::move(model));
  }
  out.best = best_component_count(out.curve);
  return out;
}

int best_component_count(std::span<const AicPoint> curve) {
  if (curve.empty()) throw Error(ErrorCode::InvalidArgument, "empty AIC curve");
  const AicPoint* best = &curve.front();
  for (const auto& p : curve) {
    if (p.aic < best->aic || (p.aic == best->aic && p.components < best->components)) best = &p;
  }
  return best->components;
}

}  // namespace dvelab::analysis
