#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dvelab/netcore/params.hpp"
#include "dvelab/netcore/tape.hpp"

namespace dvelab::net {

struct HeadSpec {
  std::string name;
  std::size_t dim = 0;
  bool operator==(const HeadSpec&) const = default;
};

/// tanh MLP trunk -> LSTM cell -> independent linear heads read from the
/// LSTM hidden state.
struct NetSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> trunk{64, 64};
  std::size_t hidden = 64;
  std::vector<HeadSpec> heads;

  void validate() const;
  std::optional<std::size_t> head_index(std::string_view name) const;
  std::size_t head_dim(std::string_view name) const;

  nlohmann::json to_json() const;
  static NetSpec from_json(const nlohmann::json& j);
  /// FNV-1a of the canonical JSON rendering.
  std::uint64_t hash() const;

  bool operator==(const NetSpec&) const = default;
};

inline constexpr std::string_view kPolicyHead = "policy";
inline constexpr std::string_view kValueHead = "value";
inline constexpr std::string_view kMuHead = "mu";
inline constexpr std::string_view kAttentionHead = "attention";

/// Policy head plus either a scalar value head or N_b hypothesis means and
/// N_b attention logits.
NetSpec actor_critic_spec(std::size_t input_dim, std::size_t n_actions, bool dynamic_critic,
                          std::size_t n_hypotheses, std::vector<std::size_t> trunk = {64, 64},
                          std::size_t hidden = 64);

/// Parameter blocks of a NetSpec, in storage order.
struct NetLayout {
  struct Dense {
    ParamBlock weight;
    ParamBlock bias;
  };
  std::vector<Dense> trunk;
  Dense lstm;  // weight: 4H x (in + H), gates ordered input, forget, candidate, output
  std::vector<Dense> heads;
};

/// Zero-valued parameters with the canonical names and order.
ParamVector make_params(const NetSpec& spec);
NetLayout make_layout(const NetSpec& spec, const ParamVector& params);

/// Trunk, LSTM and critic-head weights uniform in +-sqrt(6 / (fan_in +
/// fan_out)), forget bias 1, policy and attention heads and all other biases
/// zero. Zero attention gives uniform initial weights over hypotheses; random
/// hypothesis heads keep the hypotheses from receiving identical gradients
/// forever. Critic heads draw from their own stream, so the trunk is
/// identical across head configurations for one seed.
void initialize(const NetSpec& spec, ParamVector& params, std::uint64_t seed);

struct RecurrentState {
  std::vector<double> hidden;
  std::vector<double> cell;
  static RecurrentState zeros(std::size_t h) { return {std::vector<double>(h, 0.0), std::vector<double>(h, 0.0)}; }
  bool operator==(const RecurrentState&) const = default;
};

struct RecurrentVars {
  Var hidden;
  Var cell;
};

struct StepOutputs {
  std::vector<Var> heads;  // in NetSpec::heads order
  RecurrentVars next;
  Var features;  // LSTM hidden output fed to every head
};

/// Places a recurrent state on the tape as constants.
RecurrentVars input_state(Tape& tape, const RecurrentState& rs);
RecurrentState read_state(const Tape& tape, RecurrentVars vars);

/// One recurrent step. Throws DIM_MISMATCH / NON_FINITE_INPUT.
StepOutputs forward(Tape& tape, const NetSpec& spec, const NetLayout& layout,
                    std::span<const double> obs, RecurrentVars rs);

/// Standard LSTM cell on tape: sigmoid input/forget/output gates, tanh
/// candidate, c' = f*c + i*g, h' = o*tanh(c').
RecurrentVars lstm_cell(Tape& tape, const NetLayout::Dense& lstm, std::size_t hidden, Var x,
                        RecurrentVars rs);

/// A spec together with its parameters.
struct Network {
  NetSpec spec;
  ParamVector params;
  NetLayout layout;

  Network() = default;
  Network(NetSpec s, std::uint64_t seed);
  Network(NetSpec s, ParamVector p);
};

}  // namespace dvelab::net
