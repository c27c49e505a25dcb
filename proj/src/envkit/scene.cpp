#include "dvelab/envkit/scene.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <nlohmann/json.hpp>

#include "dvelab/common/error.hpp"
#include "dvelab/common/rng.hpp"

namespace dvelab::env {

namespace {

constexpr int kMaxAttempts = 1000;
constexpr Cell kMoves[4] = {{0, -1}, {0, 1}, {-1, 0}, {1, 0}};

struct FamilyStyle {
  double wall_density;
  double hazard_density;
  int subgoals;
};

FamilyStyle style_of(Family f) {
  switch (f) {
    case Family::Corridor: return {0.0, 0.0, 0};
    case Family::Maze: return {0.30, 0.0, 1};
    case Family::Hazard: return {0.0, 0.15, 2};
  }
  return {0.0, 0.0, 0};
}

Cell random_cell(Rng& rng, int w, int h) {
  const auto i = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(w) * h));
  return {i % w, i / w};
}

SceneDescriptor blank(std::uint64_t seed, Family family, int w, int h, int scene_id) {
  if (w < 1 || h < 1) throw Error(ErrorCode::InvalidArgument, "scene dimensions must be positive");
  SceneDescriptor s;
  s.scene_id = scene_id;
  s.seed = seed;
  s.family = family;
  s.width = w;
  s.height = h;
  s.walls.assign(static_cast<std::size_t>(w) * h, 0);
  s.hazards.assign(static_cast<std::size_t>(w) * h, 0);
  return s;
}

std::optional<SceneDescriptor> try_corridor(Rng& rng, std::uint64_t seed, const EnvConfig& cfg,
                                            int scene_id) {
  auto s = blank(seed, Family::Corridor, cfg.width, cfg.height, scene_id);
  const int row = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(cfg.height)));
  std::fill(s.walls.begin(), s.walls.end(), std::uint8_t{1});
  for (int x = 0; x < cfg.width; ++x) s.walls[s.index({x, row})] = 0;
  s.start = {0, row};
  s.goal = {cfg.width - 1, row};
  if (s.start == s.goal) return std::nullopt;
  return s;
}

std::optional<SceneDescriptor> try_scattered(Rng& rng, std::uint64_t seed, Family family,
                                             const EnvConfig& cfg, int scene_id) {
  const FamilyStyle style = style_of(family);
  auto s = blank(seed, family, cfg.width, cfg.height, scene_id);
  const int w = cfg.width;
  const int h = cfg.height;
  // Draws are made for every cell in a fixed order so the stream stays aligned.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = uniform01(rng);
      if (u < style.wall_density) {
        s.walls[s.index({x, y})] = 1;
      } else if (u < style.wall_density + style.hazard_density) {
        s.hazards[s.index({x, y})] = 1;
      }
    }
  }
  auto is_free = [&](Cell c) { return !s.wall(c) && !s.hazard(c); };
  s.start = random_cell(rng, w, h);
  s.goal = random_cell(rng, w, h);
  std::vector<Cell> subgoals;
  for (int k = 0; k < style.subgoals; ++k) subgoals.push_back(random_cell(rng, w, h));

  if (!is_free(s.start) || !is_free(s.goal) || s.start == s.goal) return std::nullopt;
  for (std::size_t k = 0; k < subgoals.size(); ++k) {
    const Cell c = subgoals[k];
    if (!is_free(c) || c == s.start || c == s.goal) return std::nullopt;
    for (std::size_t j = 0; j < k; ++j) {
      if (subgoals[j] == c) return std::nullopt;
    }
  }
  s.subgoals = std::move(subgoals);
  const auto dist = shortest_path_length(s);
  const int min_dist = std::max(1, (w + h) / 4);
  if (!dist || *dist < min_dist || *dist > cfg.t_max / 2) return std::nullopt;
  for (const Cell c : s.subgoals) {
    if (!shortest_path_length(s, s.start, c)) return std::nullopt;
  }
  return s;
}

}  // namespace

const char* to_string(Family f) noexcept {
  switch (f) {
    case Family::Corridor: return "corridor";
    case Family::Maze: return "maze";
    case Family::Hazard: return "hazard";
  }
  return "unknown";
}

Family family_from_string(std::string_view name) {
  if (name == "corridor" || name == "CORRIDOR") return Family::Corridor;
  if (name == "maze" || name == "MAZE") return Family::Maze;
  if (name == "hazard" || name == "HAZARD") return Family::Hazard;
  throw Error(ErrorCode::ConfigError, "unknown scene family '" + std::string(name) + "'");
}

void EnvConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); };
  if (n_levels < 1) fail("n_levels must be >= 1");
  if (width < 1 || height < 1) fail("width and height must be positive");
  if (obs_window < 1 || obs_window % 2 == 0) fail("obs_window must be odd and positive");
  if (t_max < width + height) fail("t_max must be >= width + height");
  if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma must lie in (0, 1)");
  if (family_mix.empty()) fail("family mix is empty");
  double total = 0.0;
  for (const auto& [f, ratio] : family_mix) {
    if (!(ratio >= 0.0)) fail("family ratios must be non-negative");
    total += ratio;
  }
  if (!(total > 0.0)) fail("family ratios sum to zero");
}

int SceneDescriptor::subgoal_index(Cell c) const {
  for (std::size_t i = 0; i < subgoals.size(); ++i) {
    if (subgoals[i] == c) return static_cast<int>(i);
  }
  return -1;
}

SceneDescriptor generate_scene(std::uint64_t seed, Family family, const EnvConfig& config,
                               int scene_id) {
  config.validate();
  Rng rng = make_stream(seed, std::string("scene/") + to_string(family));
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    auto scene = family == Family::Corridor ? try_corridor(rng, seed, config, scene_id)
                                            : try_scattered(rng, seed, family, config, scene_id);
    if (scene) return *scene;
  }
  throw Error(ErrorCode::GenerationFailed,
              std::string("no valid ") + to_string(family) + " scene after " +
                  std::to_string(kMaxAttempts) + " attempts (" + std::to_string(config.width) +
                  "x" + std::to_string(config.height) + ")");
}

std::vector<SceneDescriptor> generate_pool(const EnvConfig& config, std::uint64_t seed) {
  config.validate();
  double total = 0.0;
  for (const auto& fm : config.family_mix) total += fm.second;
  // Largest-remainder allocation of n_levels across families.
  std::vector<int> counts;
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t i = 0; i < config.family_mix.size(); ++i) {
    const double exact = config.n_levels * config.family_mix[i].second / total;
    counts.push_back(static_cast<int>(std::floor(exact)));
    assigned += counts.back();
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < config.n_levels; ++k, ++assigned) {
    ++counts[remainders[k % remainders.size()].second];
  }

  Rng rng = make_stream(seed, "pool");
  std::vector<SceneDescriptor> pool;
  pool.reserve(static_cast<std::size_t>(config.n_levels));
  for (std::size_t f = 0; f < counts.size(); ++f) {
    for (int k = 0; k < counts[f]; ++k) {
      const std::uint64_t scene_seed = rng();
      pool.push_back(generate_scene(scene_seed, config.family_mix[f].first, config,
                                    static_cast<int>(pool.size())));
    }
  }
  return pool;
}

std::optional<int> shortest_path_length(const SceneDescriptor& scene, Cell from, Cell to) {
  std::vector<int> dist(scene.walls.size(), -1);
  std::deque<Cell> queue{from};
  dist[scene.index(from)] = 0;
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    if (c == to) return dist[scene.index(c)];
    for (const Cell m : kMoves) {
      const Cell n{c.x + m.x, c.y + m.y};
      if (!scene.in_bounds(n) || scene.wall(n) || scene.hazard(n)) continue;
      if (dist[scene.index(n)] >= 0) continue;
      dist[scene.index(n)] = dist[scene.index(c)] + 1;
      queue.push_back(n);
    }
  }
  return std::nullopt;
}

std::optional<int> shortest_path_length(const SceneDescriptor& scene) {
  return shortest_path_length(scene, scene.start, scene.goal);
}

std::string validate_scene(const SceneDescriptor& s) {
  const std::size_t n = static_cast<std::size_t>(s.width) * s.height;
  if (s.width < 1 || s.height < 1) return "non-positive dimensions";
  if (s.walls.size() != n || s.hazards.size() != n) return "grid size mismatch";
  std::vector<Cell> marked{s.start, s.goal};
  marked.insert(marked.end(), s.subgoals.begin(), s.subgoals.end());
  for (std::size_t i = 0; i < marked.size(); ++i) {
    const Cell c = marked[i];
    if (!s.in_bounds(c)) return "marked cell out of bounds";
    if (s.wall(c)) return "marked cell inside a wall";
    if (s.hazard(c)) return "marked cell on a hazard";
    for (std::size_t j = 0; j < i; ++j) {
      if (marked[j] == c) return "marked cells overlap";
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (s.walls[i] && s.hazards[i]) return "wall and hazard overlap";
  }
  if (s.subgoals.size() > 32) return "more than 32 subgoals";
  if (!shortest_path_length(s)) return "goal unreachable from start";
  return {};
}

std::string to_ascii(const SceneDescriptor& s, std::optional<Cell> agent) {
  std::string out;
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      const Cell c{x, y};
      char ch = '.';
      if (s.wall(c)) ch = '#';
      else if (s.hazard(c)) ch = 'x';
      if (s.subgoal_index(c) >= 0) ch = 's';
      if (c == s.goal) ch = 'G';
      if (c == s.start) ch = 'S';
      if (agent && *agent == c) ch = 'A';
      out += ch;
    }
    out += '\n';
  }
  return out;
}

SceneDescriptor scene_from_ascii(std::string_view art, Family family, int scene_id,
                                 std::uint64_t seed) {
  std::vector<std::string> rows;
  std::string cur;
  for (char ch : art) {
    if (ch == '\n') {
      if (!cur.empty()) rows.push_back(cur);
      cur.clear();
    } else if (ch != ' ' && ch != '\r') {
      cur += ch;
    }
  }
  if (!cur.empty()) rows.push_back(cur);
  if (rows.empty()) throw Error(ErrorCode::InvalidArgument, "empty scene art");
  const int w = static_cast<int>(rows.front().size());
  const int h = static_cast<int>(rows.size());
  auto s = blank(seed, family, w, h, scene_id);
  bool has_start = false;
  bool has_goal = false;
  for (int y = 0; y < h; ++y) {
    if (static_cast<int>(rows[y].size()) != w) {
      throw Error(ErrorCode::InvalidArgument, "ragged scene art");
    }
    for (int x = 0; x < w; ++x) {
      const Cell c{x, y};
      switch (rows[y][x]) {
        case '#': s.walls[s.index(c)] = 1; break;
        case 'x': s.hazards[s.index(c)] = 1; break;
        case 's': s.subgoals.push_back(c); break;
        case 'G': s.goal = c; has_goal = true; break;
        case 'S': s.start = c; has_start = true; break;
        case '.': break;
        default:
          throw Error(ErrorCode::InvalidArgument,
                      std::string("unknown scene glyph '") + rows[y][x] + "'");
      }
    }
  }
  if (!has_start || !has_goal) throw Error(ErrorCode::InvalidArgument, "art needs S and G");
  if (const auto why = validate_scene(s); !why.empty()) {
    throw Error(ErrorCode::InvalidArgument, "invalid scene art: " + why);
  }
  return s;
}

namespace {

nlohmann::json cell_json(Cell c) { return nlohmann::json::array({c.x, c.y}); }

Cell json_cell(const nlohmann::json& j) { return {j.at(0).get<int>(), j.at(1).get<int>()}; }

Cell json_cell_in(const SceneDescriptor& s, const nlohmann::json& j) {
  const Cell c = json_cell(j);
  if (!s.in_bounds(c)) throw Error(ErrorCode::InvalidArgument, "scene json cell out of bounds");
  return c;
}

nlohmann::json mask_cells(const SceneDescriptor& s, const std::vector<std::uint8_t>& mask) {
  auto arr = nlohmann::json::array();
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      if (mask[s.index({x, y})]) arr.push_back(cell_json({x, y}));
    }
  }
  return arr;
}

}  // namespace

nlohmann::json to_json(const SceneDescriptor& s) {
  nlohmann::json j;
  j["schema"] = "dvelab.scene/1";
  j["scene_id"] = s.scene_id;
  j["seed"] = s.seed;
  j["family"] = to_string(s.family);
  j["width"] = s.width;
  j["height"] = s.height;
  j["walls"] = mask_cells(s, s.walls);
  j["hazards"] = mask_cells(s, s.hazards);
  auto subs = nlohmann::json::array();
  for (const Cell c : s.subgoals) subs.push_back(cell_json(c));
  j["subgoals"] = subs;
  j["goal"] = cell_json(s.goal);
  j["start"] = cell_json(s.start);
  return j;
}

SceneDescriptor scene_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<std::string>() != "dvelab.scene/1") {
      throw Error(ErrorCode::InvalidArgument, "unsupported scene schema");
    }
    auto s = blank(j.at("seed").get<std::uint64_t>(),
                   family_from_string(j.at("family").get<std::string>()),
                   j.at("width").get<int>(), j.at("height").get<int>(),
                   j.at("scene_id").get<int>());
    for (const auto& c : j.at("walls")) s.walls[s.index(json_cell_in(s, c))] = 1;
    for (const auto& c : j.at("hazards")) s.hazards[s.index(json_cell_in(s, c))] = 1;
    for (const auto& c : j.at("subgoals")) s.subgoals.push_back(json_cell(c));
    s.goal = json_cell(j.at("goal"));
    s.start = json_cell(j.at("start"));
    if (const auto why = validate_scene(s); !why.empty()) {
      throw Error(ErrorCode::InvalidArgument, "invalid scene json: " + why);
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed scene json: ") + e.what());
  }
}

}  // namespace dvelab::env
