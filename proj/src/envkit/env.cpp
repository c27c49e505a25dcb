#include "dvelab/envkit/env.hpp"

#include "dvelab/common/error.hpp"

namespace dvelab::env {

const char* to_string(TerminationCause c) noexcept {
  switch (c) {
    case TerminationCause::Running: return "running";
    case TerminationCause::Goal: return "goal";
    case TerminationCause::Hazard: return "hazard";
    case TerminationCause::Timeout: return "timeout";
  }
  return "unknown";
}

namespace {

Cell offset(Action a) {
  switch (a) {
    case Action::Up: return {0, -1};
    case Action::Down: return {0, 1};
    case Action::Left: return {-1, 0};
    case Action::Right: return {1, 0};
  }
  return {0, 0};
}

CellCode code_at(const SceneDescriptor& s, Cell c, std::uint32_t claimed) {
  if (!s.in_bounds(c)) return CellCode::OutOfBounds;
  if (s.wall(c)) return CellCode::Wall;
  if (s.hazard(c)) return CellCode::Hazard;
  if (c == s.goal) return CellCode::Goal;
  if (const int k = s.subgoal_index(c); k >= 0 && !(claimed & (1u << k))) {
    return CellCode::Subgoal;
  }
  return CellCode::Empty;
}

}  // namespace

Transition transition(const SceneDescriptor& scene, const EnvConfig& config, GridState state,
                      Action action) {
  const Cell d = offset(action);
  const Cell target{state.agent.x + d.x, state.agent.y + d.y};
  Transition out{state, 0.0, TerminationCause::Running};
  if (!scene.in_bounds(target) || scene.wall(target)) return out;
  out.next.agent = target;
  if (scene.hazard(target)) {
    out.cause = TerminationCause::Hazard;
  } else if (target == scene.goal) {
    out.reward = config.r_goal;
    out.cause = TerminationCause::Goal;
  } else if (const int k = scene.subgoal_index(target); k >= 0 && !(state.claimed & (1u << k))) {
    out.next.claimed |= 1u << k;
    out.reward = config.r_sub;
  }
  return out;
}

Observation observe(const SceneDescriptor& scene, const EnvConfig& config, GridState grid, int t) {
  const int w = config.obs_window;
  const int r = w / 2;
  Observation obs;
  obs.data.assign(config.observation_size(), 0.0);
  std::size_t slot = 0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx, ++slot) {
      const Cell c{grid.agent.x + dx, grid.agent.y + dy};
      obs.data[slot * kNumCellCodes + static_cast<std::size_t>(code_at(scene, c, grid.claimed))] =
          1.0;
    }
  }
  obs.data.back() = static_cast<double>(config.t_max - t) / config.t_max;
  return obs;
}

Observation observe(const EnvState& state) {
  return observe(*state.scene, *state.config, state.grid, state.t);
}

std::pair<EnvState, Observation> reset(const SceneDescriptor& scene, const EnvConfig& config) {
  EnvState state;
  state.scene = &scene;
  state.config = &config;
  state.grid = {scene.start, 0};
  return {state, observe(state)};
}

StepResult step(EnvState& state, Action action) {
  if (state.done) throw Error(ErrorCode::StepAfterDone, "episode already terminated");
  const Transition tr = transition(*state.scene, *state.config, state.grid, action);
  state.grid = tr.next;
  ++state.t;
  state.cause = tr.cause;
  if (state.cause == TerminationCause::Running && state.t >= state.config->t_max) {
    state.cause = TerminationCause::Timeout;
  }
  state.done = state.cause != TerminationCause::Running;
  return {observe(state), tr.reward, state.done, state.cause};
}

}  // namespace dvelab::env
