#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dvelab::analysis {

/// One-dimensional Gaussian mixture.
struct GmmModel {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;
  double log_likelihood = 0.0;
  double var_floor = 0.0;
  /// Log-likelihood after initialization and after every EM iteration of
  /// the winning restart.
  std::vector<double> ll_history;
  int iterations = 0;

  std::size_t components() const { return weights.size(); }
};

struct GmmOptions {
  int restarts = 5;
  int max_iterations = 500;
  double tolerance = 1e-8;
};

/// Total log-likelihood of `samples` under the mixture. Zero-weight
/// components contribute nothing.
double mixture_log_likelihood(const GmmModel& model, std::span<const double> samples);

/// EM from k-means++ seeds; the best of `restarts` runs by likelihood wins.
/// Variances are floored at max(1e-6 * sample variance, 1e-12). Throws
/// TOO_FEW_SAMPLES when there are fewer samples than components.
GmmModel fit_gmm(std::span<const double> samples, int components, std::uint64_t seed,
                 const GmmOptions& options = {});

/// 2k - 2 ln L with k = 3C - 1.
double aic(const GmmModel& model, std::size_t n_samples);

struct AicPoint {
  int components = 0;
  double aic = 0.0;
  double log_likelihood = 0.0;
};

struct ClusterSelection {
  int best = 0;
  std::vector<AicPoint> curve;
  std::vector<GmmModel> models;  // one per curve point
};

/// Component count with the lowest AIC; ties go to the smaller count.
int best_component_count(std::span<const AicPoint> curve);

/// Fits every C in [c_min, c_max] and returns the AIC minimizer, ties going
/// to the smaller C.
ClusterSelection select_clusters(std::span<const double> samples, int c_min, int c_max,
                                 std::uint64_t seed, const GmmOptions& options = {});

}  // namespace dvelab::analysis
