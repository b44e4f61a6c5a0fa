#pragma once

#include <cstdint>

namespace ftcnn {

/// splitmix64 finalizer; used to derive independent per-item seeds so that
/// output never depends on processing order.
constexpr std::uint64_t mixSeed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t deriveSeed(std::uint64_t seed, std::uint64_t index) {
  return mixSeed(seed ^ mixSeed(index + 0x632be59bd9b4e019ULL));
}

}  // namespace ftcnn
