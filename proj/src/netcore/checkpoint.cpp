#include "dvelab/netcore/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "dvelab/common/error.hpp"

namespace dvelab::net {

namespace {

constexpr char kMagic[8] = {'D', 'V', 'E', 'L', 'A', 'B', 'C', 'K'};

template <typename T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_integral_v<T>);
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw Error(ErrorCode::IoError, "checkpoint truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[i]) << (8 * i);
  return v;
}

std::filesystem::path sidecar(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Network& net) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, net.spec.hash());
  put_le<std::uint64_t>(out, net.params.size());
  for (double v : net.params.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());

  std::ofstream js(sidecar(path), std::ios::trunc);
  if (!js) throw Error(ErrorCode::IoError, "cannot write " + sidecar(path).string());
  js << net.spec.to_json().dump(2) << '\n';
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream js(sidecar(path));
  if (!js) throw Error(ErrorCode::IoError, "missing NetSpec sidecar " + sidecar(path).string());
  nlohmann::json j;
  try {
    js >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, "unreadable sidecar: " + std::string(e.what()));
  }
  NetSpec spec = NetSpec::from_json(j);

  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::IoError, path.string() + " is not a checkpoint");
  }
  if (get_le<std::uint32_t>(in) != kCheckpointVersion) {
    throw Error(ErrorCode::IoError, "unsupported checkpoint version");
  }
  if (get_le<std::uint64_t>(in) != spec.hash()) {
    throw Error(ErrorCode::IoError, "checkpoint spec hash differs from sidecar");
  }
  ParamVector params = make_params(spec);
  if (get_le<std::uint64_t>(in) != params.size()) {
    throw Error(ErrorCode::IoError, "checkpoint parameter count differs from spec");
  }
  for (double& v : params.values()) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
  return Network(std::move(spec), std::move(params));
}

}  // namespace dvelab::net
