#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace ciest {

using RngStream = std::mt19937_64;

/// Independent stream keyed by (seed, label, indices...). Changing one
/// source's label or indices never shifts the values of another source.
RngStream make_stream(std::uint64_t seed, std::string_view label,
                      std::initializer_list<std::uint64_t> indices = {});

/// Uniform on [0, 1) with 53 random bits; never returns 1.
inline double uniform01(RngStream& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform on [-half_width, half_width).
inline double uniform_symmetric(RngStream& rng, double half_width) {
  return (2.0 * uniform01(rng) - 1.0) * half_width;
}

}  // namespace ciest
