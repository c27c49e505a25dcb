#include "dvelab/dvehead/dve.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dvelab/common/error.hpp"

namespace dvelab::dve {

const char* to_string(CcMode m) noexcept { return m == CcMode::Class1 ? "class1" : "class2"; }

CcMode cc_mode_from_string(std::string_view s) {
  if (s == "class1" || s == "CLASS1") return CcMode::Class1;
  if (s == "class2" || s == "CLASS2") return CcMode::Class2;
  throw Error(ErrorCode::ConfigError, "unknown cc_mode '" + std::string(s) + "'");
}

void CcConfig::validate() const {
  if (!(k1 >= 0.0) || !(k2 >= 0.0)) throw Error(ErrorCode::ConfigError, "k1 and k2 must be >= 0");
  if (!(epsilon_log > 0.0 && epsilon_log <= 1e-6)) {
    throw Error(ErrorCode::ConfigError, "epsilon_log must lie in (0, 1e-6]");
  }
  if (pretrain_steps < 0) throw Error(ErrorCode::ConfigError, "pretrain_steps must be >= 0");
}

void AttentionTrace::push(std::span<const double> alpha) {
  if (n_b_ == 0) n_b_ = alpha.size();
  if (alpha.size() != n_b_ || n_b_ == 0) {
    throw Error(ErrorCode::DimMismatch, "attention row has the wrong width");
  }
  const double d = confusion(alpha);
  alpha_.insert(alpha_.end(), alpha.begin(), alpha.end());
  delta_.push_back(d);
}

double AttentionTrace::mean_delta() const {
  if (delta_.empty()) throw Error(ErrorCode::EmptyTrace, "trace has no steps");
  double s = 0.0;
  for (double d : delta_) s += d;
  return s / static_cast<double>(delta_.size());
}

DveOutput dve_forward(std::span<const double> mu, std::span<const double> attention_logits) {
  if (mu.empty() || mu.size() != attention_logits.size()) {
    throw Error(ErrorCode::DimMismatch, "mu and attention logits must have equal non-zero length");
  }
  DveOutput out;
  out.mu.assign(mu.begin(), mu.end());
  out.alpha.resize(mu.size());
  const double m = *std::max_element(attention_logits.begin(), attention_logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) z += (out.alpha[i] = std::exp(attention_logits[i] - m));
  for (double& a : out.alpha) a /= z;
  out.v_hat = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) out.v_hat += out.alpha[i] * mu[i];
  out.delta = confusion(out.alpha);
  return out;
}

double confusion(std::span<const double> alpha) {
  if (alpha.empty()) throw Error(ErrorCode::NotSimplex, "empty attention vector");
  double sum = 0.0;
  double sq = 0.0;
  for (double a : alpha) {
    if (!(a >= 0.0)) throw Error(ErrorCode::NotSimplex, "negative or non-finite attention weight");
    sum += a;
    sq += a * a;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw Error(ErrorCode::NotSimplex, "attention sums to " + std::to_string(sum));
  }
  return 1.0 / (static_cast<double>(alpha.size()) * sq);
}

std::vector<double> contribution(const AttentionTrace& trace) {
  if (trace.empty()) throw Error(ErrorCode::EmptyTrace, "contribution of an empty trace");
  std::vector<double> rho(trace.n_b(), 0.0);
  for (std::size_t t = 0; t < trace.length(); ++t) {
    const auto a = trace.alpha(t);
    for (std::size_t i = 0; i < rho.size(); ++i) rho[i] += trace.delta(t) * a[i];
  }
  for (double& r : rho) r /= static_cast<double>(trace.length());
  return rho;
}

CcTerms cc_loss(std::span<const AttentionTrace> traces, const CcConfig& cfg) {
  if (traces.empty()) throw Error(ErrorCode::EmptyBatch, "cc_loss over an empty batch");
  double log_delta_sum = 0.0;
  std::size_t steps = 0;
  double log_rho_sum = 0.0;
  for (const auto& trace : traces) {
    const auto rho = contribution(trace);
    for (std::size_t t = 0; t < trace.length(); ++t) {
      log_delta_sum += std::log(std::max(trace.delta(t), cfg.epsilon_log));
    }
    steps += trace.length();
    double sq = 0.0;
    for (double r : rho) sq += r * r;
    log_rho_sum += std::log(std::max(sq, cfg.epsilon_log));
  }
  CcTerms out;
  out.term1 = log_delta_sum / static_cast<double>(steps);
  out.term2 = log_rho_sum / static_cast<double>(traces.size());
  out.loss = cfg.k1 * out.term1 + cfg.k2 * out.term2;
  return out;
}

double baseline_value(std::span<const double> features, std::span<const double> weight,
                      double bias) {
  if (features.size() != weight.size()) {
    throw Error(ErrorCode::DimMismatch, "feature and weight lengths differ");
  }
  double v = bias;
  for (std::size_t i = 0; i < features.size(); ++i) v += weight[i] * features[i];
  return v;
}

namespace taped {

DveVars dve_forward(net::Tape& tape, net::Var mu, net::Var attention_logits) {
  if (tape.size(mu) == 0 || tape.size(mu) != tape.size(attention_logits)) {
    throw Error(ErrorCode::DimMismatch, "mu and attention logits must have equal non-zero length");
  }
  DveVars out;
  out.alpha = tape.softmax(attention_logits);
  out.v_hat = tape.dot(out.alpha, mu);
  out.delta = confusion(tape, out.alpha);
  return out;
}

net::Var confusion(net::Tape& tape, net::Var alpha) {
  const double n_b = static_cast<double>(tape.size(alpha));
  return tape.recip(tape.scale(tape.sum(tape.square(alpha)), n_b));
}

CcVars cc_terms(net::Tape& tape, const std::vector<std::vector<net::Var>>& alphas,
                double epsilon_log) {
  if (alphas.empty()) throw Error(ErrorCode::EmptyBatch, "cc_loss over an empty batch");
  net::Var log_delta_sum;
  net::Var log_rho_sum;
  std::size_t steps = 0;
  for (const auto& trace : alphas) {
    if (trace.empty()) throw Error(ErrorCode::EmptyTrace, "trajectory without attention steps");
    net::Var rho_sum;
    for (const net::Var alpha : trace) {
      const net::Var delta = confusion(tape, alpha);
      const net::Var log_delta = tape.log_floor(delta, epsilon_log);
      log_delta_sum = log_delta_sum.valid() ? tape.add(log_delta_sum, log_delta) : log_delta;
      const net::Var weighted = tape.scale_by(alpha, delta);
      rho_sum = rho_sum.valid() ? tape.add(rho_sum, weighted) : weighted;
    }
    steps += trace.size();
    const net::Var rho = tape.scale(rho_sum, 1.0 / static_cast<double>(trace.size()));
    const net::Var log_rho = tape.log_floor(tape.sum(tape.square(rho)), epsilon_log);
    log_rho_sum = log_rho_sum.valid() ? tape.add(log_rho_sum, log_rho) : log_rho;
  }
  return {tape.scale(log_delta_sum, 1.0 / static_cast<double>(steps)),
          tape.scale(log_rho_sum, 1.0 / static_cast<double>(alphas.size()))};
}

net::Var baseline_value(net::Tape& tape, net::Var features, net::ParamBlock weight,
                        net::ParamBlock bias) {
  return tape.affine(weight, bias, features);
}

}  // namespace taped

}  // namespace dvelab::dve
