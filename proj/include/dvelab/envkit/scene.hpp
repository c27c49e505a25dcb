#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace dvelab::env {

enum class Family : std::uint8_t { Corridor, Maze, Hazard };

const char* to_string(Family f) noexcept;
Family family_from_string(std::string_view name);

struct Cell {
  int x = 0;
  int y = 0;
  auto operator<=>(const Cell&) const = default;
};

/// Shared environment parameters for one pool of scenes.
struct EnvConfig {
  int n_levels = 100;
  std::vector<std::pair<Family, double>> family_mix{{Family::Maze, 0.5}, {Family::Hazard, 0.5}};
  int width = 8;
  int height = 8;
  int obs_window = 5;
  double r_sub = 3.0;
  double r_goal = 10.0;
  int t_max = 64;
  double gamma = 0.99;

  /// Throws CONFIG_ERROR on a violated invariant.
  void validate() const;
  std::size_t observation_size() const {
    return static_cast<std::size_t>(obs_window) * obs_window * 6 + 1;
  }
};

/// One procedurally generated level: a distinct MDP sharing the action space.
struct SceneDescriptor {
  int scene_id = 0;
  std::uint64_t seed = 0;
  Family family = Family::Corridor;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> walls;    // row-major, y * width + x
  std::vector<std::uint8_t> hazards;  // row-major
  std::vector<Cell> subgoals;
  Cell goal;
  Cell start;

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y) * width + c.x; }
  bool wall(Cell c) const { return walls[index(c)] != 0; }
  bool hazard(Cell c) const { return hazards[index(c)] != 0; }
  /// Index into `subgoals`, or -1.
  int subgoal_index(Cell c) const;

  bool operator==(const SceneDescriptor&) const = default;
};

/// Deterministic in (seed, family, width, height, obs-independent config
/// fields); re-rolls until the goal is reachable. Throws GENERATION_FAILED
/// after 1000 attempts.
SceneDescriptor generate_scene(std::uint64_t seed, Family family, const EnvConfig& config,
                               int scene_id = 0);

/// `config.n_levels` scenes; families allocated by mix ratio in contiguous
/// blocks, per-scene seeds drawn from the "pool" stream of `seed`.
std::vector<SceneDescriptor> generate_pool(const EnvConfig& config, std::uint64_t seed);

/// BFS distance start -> goal avoiding walls and hazards.
std::optional<int> shortest_path_length(const SceneDescriptor& scene);
std::optional<int> shortest_path_length(const SceneDescriptor& scene, Cell from, Cell to);

/// Checks every descriptor invariant; returns an empty string when valid.
std::string validate_scene(const SceneDescriptor& scene);

/// Rows of: '#' wall, 'x' hazard, 's' subgoal, 'G' goal, 'S' start, '.' open.
std::string to_ascii(const SceneDescriptor& scene, std::optional<Cell> agent = std::nullopt);
SceneDescriptor scene_from_ascii(std::string_view art, Family family = Family::Maze,
                                 int scene_id = 0, std::uint64_t seed = 0);

nlohmann::json to_json(const SceneDescriptor& scene);
SceneDescriptor scene_from_json(const nlohmann::json& j);

}  // namespace dvelab::env
