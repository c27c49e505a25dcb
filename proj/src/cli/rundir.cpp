#include "dvelab/cli/rundir.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dvelab/common/error.hpp"

#ifndef DVELAB_BUILD_ID
#define DVELAB_BUILD_ID "unknown"
#endif

namespace dvelab::cli {

namespace fs = std::filesystem;

std::string build_id() { return DVELAB_BUILD_ID; }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

fs::path output_root() {
  const char* env = std::getenv("DVE_LAB_OUT");
  if (env != nullptr && *env != '\0') return fs::path(env);
  return fs::path("runs");
}

namespace {

bool is_empty_dir(const fs::path& p) {
  return fs::is_directory(p) && fs::directory_iterator(p) == fs::directory_iterator();
}

}  // namespace

fs::path prepare_output_dir(const std::optional<fs::path>& explicit_dir, const std::string& stem) {
  if (explicit_dir) {
    if (fs::exists(*explicit_dir)) {
      if (!is_empty_dir(*explicit_dir)) {
        throw UsageError("output directory '" + explicit_dir->string() +
                         "' exists and is not empty; refusing to reuse it");
      }
      return *explicit_dir;
    }
    fs::create_directories(*explicit_dir);
    return *explicit_dir;
  }
  const fs::path root = output_root();
  fs::create_directories(root);
  fs::path candidate = root / stem;
  for (int k = 2; fs::exists(candidate); ++k) candidate = root / (stem + "-" + std::to_string(k));
  fs::create_directories(candidate);
  return candidate;
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["run_id"] = run_id;
  j["command"] = command;
  j["build_id"] = build_id;
  j["seed"] = seed;
  j["config"] = config.entries();
  j["started_at"] = started_at;
  j["finished_at"] = finished_at.empty() ? nlohmann::json(nullptr) : nlohmann::json(finished_at);
  j["status"] = status;
  if (!error.empty()) j["error"] = error;
  j["artifacts"] = artifacts;
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  m.command = j.at("command").get<std::string>();
  m.build_id = j.at("build_id").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& [k, v] : j.at("config").items()) m.config.set(k, v.get<std::string>());
  m.started_at = j.at("started_at").get<std::string>();
  if (!j.at("finished_at").is_null()) m.finished_at = j.at("finished_at").get<std::string>();
  m.status = j.at("status").get<std::string>();
  if (j.contains("error")) m.error = j.at("error").get<std::string>();
  m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
  return m;
}

void RunManifest::save(const fs::path& dir) const {
  write_file_atomic(dir / kManifestFile, to_json().dump(2) + "\n");
}

RunManifest RunManifest::load(const fs::path& dir) {
  std::ifstream in(dir / kManifestFile);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + (dir / kManifestFile).string());
  return from_json(nlohmann::json::parse(in));
}

void RunManifest::finalize(const fs::path& dir) {
  for (const auto& [name, rel] : artifacts) {
    if (!fs::exists(dir / rel)) {
      throw Error(ErrorCode::IoError, "artifact '" + name + "' missing at " + (dir / rel).string());
    }
  }
  status = "complete";
  finished_at = utc_timestamp();
  save(dir);
}

}  // namespace dvelab::cli
