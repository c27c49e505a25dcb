#pragma once

#include <filesystem>

#include "dvelab/netcore/net.hpp"

namespace dvelab::net {

/// Binary layout, all integers little-endian:
///   8 bytes  magic "DVELABCK"
///   u32      format version (1)
///   u64      NetSpec::hash()
///   u64      parameter count
///   f64[n]   values in ParamVector storage order
/// The NetSpec is written next to it as `<path>.json`.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Network& net);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace dvelab::net
