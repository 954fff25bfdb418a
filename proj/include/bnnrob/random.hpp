#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace bnnrob {

using Rng = std::mt19937_64;

// FNV-1a, 64 bit. Stable across platforms and runs, unlike std::hash.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Sub-seed for a named role under a master seed. Adding roles never shifts
// the seeds of existing ones.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view role) {
  std::uint64_t h = fnv1a64(role, 0xcbf29ce484222325ULL ^ (master * 0x9e3779b97f4a7c15ULL));
  // splitmix64 finalizer
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

}  // namespace bnnrob
