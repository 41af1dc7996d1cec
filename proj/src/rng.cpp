#include "ciest/rng.hpp"

#include <vector>

namespace ciest {

namespace {

// FNV-1a, only used to turn a label into seed material.
std::uint64_t label_hash(std::string_view label) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : label) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

RngStream make_stream(std::uint64_t seed, std::string_view label,
                      std::initializer_list<std::uint64_t> indices) {
  std::vector<std::uint32_t> material;
  auto push64 = [&](std::uint64_t v) {
    material.push_back(static_cast<std::uint32_t>(v));
    material.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push64(seed);
  push64(label_hash(label));
  push64(indices.size());
  for (auto v : indices) push64(v);
  std::seed_seq seq(material.begin(), material.end());
  return RngStream(seq);
}
}  // namespace ciest
