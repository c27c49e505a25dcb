#include "dvelab/netcore/net.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "dvelab/common/error.hpp"
#include "dvelab/common/rng.hpp"

namespace dvelab::net {

void NetSpec::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, "NetSpec: " + m); };
  if (input_dim == 0) fail("input_dim must be positive");
  if (hidden == 0) fail("hidden size must be positive");
  for (auto w : trunk) {
    if (w == 0) fail("trunk widths must be positive");
  }
  if (heads.empty()) fail("at least one head required");
  for (std::size_t i = 0; i < heads.size(); ++i) {
    if (heads[i].dim == 0) fail("head '" + heads[i].name + "' has zero width");
    for (std::size_t j = 0; j < i; ++j) {
      if (heads[j].name == heads[i].name) fail("duplicate head '" + heads[i].name + "'");
    }
  }
  const auto mu = head_index(kMuHead);
  const auto att = head_index(kAttentionHead);
  if (mu.has_value() != att.has_value()) fail("mu and attention heads come in pairs");
  if (mu && heads[*mu].dim != heads[*att].dim) fail("mu and attention widths differ");
}

std::optional<std::size_t> NetSpec::head_index(std::string_view name) const {
  for (std::size_t i = 0; i < heads.size(); ++i) {
    if (heads[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t NetSpec::head_dim(std::string_view name) const {
  const auto i = head_index(name);
  return i ? heads[*i].dim : 0;
}

nlohmann::json NetSpec::to_json() const {
  nlohmann::json j;
  j["input_dim"] = input_dim;
  j["trunk"] = trunk;
  j["hidden"] = hidden;
  auto hs = nlohmann::json::array();
  for (const auto& h : heads) hs.push_back({{"name", h.name}, {"dim", h.dim}});
  j["heads"] = hs;
  return j;
}

NetSpec NetSpec::from_json(const nlohmann::json& j) {
  try {
    NetSpec s;
    s.input_dim = j.at("input_dim").get<std::size_t>();
    s.trunk = j.at("trunk").get<std::vector<std::size_t>>();
    s.hidden = j.at("hidden").get<std::size_t>();
    for (const auto& h : j.at("heads")) {
      s.heads.push_back({h.at("name").get<std::string>(), h.at("dim").get<std::size_t>()});
    }
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed NetSpec json: ") + e.what());
  }
}

std::uint64_t NetSpec::hash() const { return fnv1a(to_json().dump()); }

NetSpec actor_critic_spec(std::size_t input_dim, std::size_t n_actions, bool dynamic_critic,
                          std::size_t n_hypotheses, std::vector<std::size_t> trunk,
                          std::size_t hidden) {
  NetSpec s;
  s.input_dim = input_dim;
  s.trunk = std::move(trunk);
  s.hidden = hidden;
  s.heads.push_back({std::string(kPolicyHead), n_actions});
  if (dynamic_critic) {
    s.heads.push_back({std::string(kMuHead), n_hypotheses});
    s.heads.push_back({std::string(kAttentionHead), n_hypotheses});
  } else {
    s.heads.push_back({std::string(kValueHead), 1});
  }
  s.validate();
  return s;
}

ParamVector make_params(const NetSpec& spec) {
  spec.validate();
  ParamVector p;
  std::size_t in = spec.input_dim;
  for (std::size_t i = 0; i < spec.trunk.size(); ++i) {
    p.add("trunk" + std::to_string(i) + ".W", {spec.trunk[i], in});
    p.add("trunk" + std::to_string(i) + ".b", {spec.trunk[i]});
    in = spec.trunk[i];
  }
  p.add("lstm.W", {4 * spec.hidden, in + spec.hidden});
  p.add("lstm.b", {4 * spec.hidden});
  for (const auto& h : spec.heads) {
    p.add(h.name + ".W", {h.dim, spec.hidden});
    p.add(h.name + ".b", {h.dim});
  }
  return p;
}

NetLayout make_layout(const NetSpec& spec, const ParamVector& params) {
  NetLayout l;
  for (std::size_t i = 0; i < spec.trunk.size(); ++i) {
    l.trunk.push_back({params.block("trunk" + std::to_string(i) + ".W"),
                       params.block("trunk" + std::to_string(i) + ".b")});
  }
  l.lstm = {params.block("lstm.W"), params.block("lstm.b")};
  for (const auto& h : spec.heads) {
    l.heads.push_back({params.block(h.name + ".W"), params.block(h.name + ".b")});
  }
  return l;
}

void initialize(const NetSpec& spec, ParamVector& params, std::uint64_t seed) {
  std::fill(params.values().begin(), params.values().end(), 0.0);
  Rng rng = make_stream(seed, "init/netcore");
  auto fill_uniform = [&](std::span<double> w, double fan_in, double fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : w) v = (2.0 * uniform01(rng) - 1.0) * bound;
  };
  std::size_t in = spec.input_dim;
  for (std::size_t i = 0; i < spec.trunk.size(); ++i) {
    fill_uniform(params.values("trunk" + std::to_string(i) + ".W"), static_cast<double>(in),
                 static_cast<double>(spec.trunk[i]));
    in = spec.trunk[i];
  }
  const std::size_t h = spec.hidden;
  fill_uniform(params.values("lstm.W"), static_cast<double>(in + h), static_cast<double>(h));
  auto bias = params.values("lstm.b");
  for (std::size_t k = h; k < 2 * h; ++k) bias[k] = 1.0;
  // Critic heads restart the same stream, so hypothesis 0 always equals the
  // scalar value head of the same seed.
  for (const auto& head : spec.heads) {
    if (head.name != kValueHead && head.name != kMuHead) continue;
    rng = make_stream(seed, "init/critic");
    // Each hypothesis is its own scalar head, so fan_out is 1.
    fill_uniform(params.values(head.name + ".W"), static_cast<double>(h), 1.0);
  }
}

RecurrentVars input_state(Tape& tape, const RecurrentState& rs) {
  return {tape.input(rs.hidden), tape.input(rs.cell)};
}

RecurrentState read_state(const Tape& tape, RecurrentVars vars) {
  const auto h = tape.value(vars.hidden);
  const auto c = tape.value(vars.cell);
  return {{h.begin(), h.end()}, {c.begin(), c.end()}};
}

RecurrentVars lstm_cell(Tape& tape, const NetLayout::Dense& lstm, std::size_t hidden, Var x,
                        RecurrentVars rs) {
  const Var z = tape.affine(lstm.weight, lstm.bias, tape.concat(x, rs.hidden));
  const Var in_gate = tape.sigmoid(tape.slice(z, 0, hidden));
  const Var forget_gate = tape.sigmoid(tape.slice(z, hidden, hidden));
  const Var candidate = tape.tanh(tape.slice(z, 2 * hidden, hidden));
  const Var out_gate = tape.sigmoid(tape.slice(z, 3 * hidden, hidden));
  const Var cell = tape.add(tape.mul(forget_gate, rs.cell), tape.mul(in_gate, candidate));
  const Var h = tape.mul(out_gate, tape.tanh(cell));
  return {h, cell};
}

StepOutputs forward(Tape& tape, const NetSpec& spec, const NetLayout& layout,
                    std::span<const double> obs, RecurrentVars rs) {
  if (obs.size() != spec.input_dim) {
    throw Error(ErrorCode::DimMismatch, "observation has " + std::to_string(obs.size()) +
                                            " entries, spec expects " +
                                            std::to_string(spec.input_dim));
  }
  for (double v : obs) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "observation is not finite");
  }
  if (tape.size(rs.hidden) != spec.hidden || tape.size(rs.cell) != spec.hidden) {
    throw Error(ErrorCode::DimMismatch, "recurrent state width differs from spec");
  }
  Var x = tape.input(obs);
  for (const auto& layer : layout.trunk) x = tape.tanh(tape.affine(layer.weight, layer.bias, x));
  StepOutputs out;
  out.next = lstm_cell(tape, layout.lstm, spec.hidden, x, rs);
  out.features = out.next.hidden;
  out.heads.reserve(layout.heads.size());
  for (const auto& head : layout.heads) {
    out.heads.push_back(tape.affine(head.weight, head.bias, out.features));
  }
  return out;
}

Network::Network(NetSpec s, std::uint64_t seed) : spec(std::move(s)), params(make_params(spec)) {
  initialize(spec, params, seed);
  layout = make_layout(spec, params);
}

Network::Network(NetSpec s, ParamVector p) : spec(std::move(s)), params(std::move(p)) {
  const ParamVector expected = make_params(spec);
  if (expected.shapes() != params.shapes()) {
    throw Error(ErrorCode::DimMismatch, "parameter count does not match NetSpec");
  }
  layout = make_layout(spec, params);
}

}  // namespace dvelab::net
