#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace dvelab {

using Rng = std::mt19937_64;

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Derives an independent generator for one consumer of the run seed. Streams
/// are keyed by name, so adding a consumer never shifts an existing stream.
Rng make_stream(std::uint64_t seed, std::string_view purpose);

/// Uniform double in [0, 1) from the top 53 bits of one draw.
double uniform01(Rng& rng) noexcept;

/// Standard normal via Box-Muller (two draws per call, no caching).
double standard_normal(Rng& rng) noexcept;

/// Uniform integer in [0, n). n must be positive.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n) noexcept;

/// Samples an index from a probability vector by inverse CDF.
std::size_t sample_categorical(Rng& rng, std::span<const double> probs) noexcept;

}  // namespace dvelab
