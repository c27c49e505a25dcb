#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "dvelab/envkit/scene.hpp"

namespace dvelab::env {

enum class Action : std::uint8_t { Up, Down, Left, Right };
inline constexpr int kNumActions = 4;
inline constexpr std::array<Action, kNumActions> kAllActions{Action::Up, Action::Down,
                                                             Action::Left, Action::Right};

/// One-hot channel order inside the observation window.
enum class CellCode : std::uint8_t { Empty, Wall, Hazard, Subgoal, Goal, OutOfBounds };
inline constexpr int kNumCellCodes = 6;

enum class TerminationCause : std::uint8_t { Running, Goal, Hazard, Timeout };
const char* to_string(TerminationCause c) noexcept;

/// Egocentric window (one-hot codes, row-major) followed by the fraction of
/// the step budget still remaining.
struct Observation {
  std::vector<double> data;
};

/// Markov state of a scene: position plus the set of claimed subgoals.
struct GridState {
  Cell agent;
  std::uint32_t claimed = 0;
  auto operator<=>(const GridState&) const = default;
};

struct EnvState {
  const SceneDescriptor* scene = nullptr;
  const EnvConfig* config = nullptr;
  GridState grid;
  int t = 0;
  bool done = false;
  TerminationCause cause = TerminationCause::Running;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  TerminationCause termination_cause = TerminationCause::Running;
};

/// Pure transition of the grid dynamics (no step budget). Used by the
/// environment and by the exact-value oracles.
struct Transition {
  GridState next;
  double reward = 0.0;
  TerminationCause cause = TerminationCause::Running;  // Goal/Hazard when terminal
};
Transition transition(const SceneDescriptor& scene, const EnvConfig& config, GridState state,
                      Action action);

std::pair<EnvState, Observation> reset(const SceneDescriptor& scene, const EnvConfig& config);

/// Throws STEP_AFTER_DONE once the episode has terminated.
StepResult step(EnvState& state, Action action);

Observation observe(const EnvState& state);
Observation observe(const SceneDescriptor& scene, const EnvConfig& config, GridState grid, int t);

}  // namespace dvelab::env
