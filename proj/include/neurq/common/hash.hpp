#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace neurq {

/// 128-bit FNV-1a digest.
struct Hash128 {
  uint64_t hi = 0;
  uint64_t lo = 0;

  auto operator<=>(const Hash128&) const = default;
  std::string hex() const;
  bool is_zero() const { return hi == 0 && lo == 0; }
};

Hash128 fnv1a_128(std::string_view data);

inline uint64_t fnv1a_64(std::string_view data, uint64_t seed = 0xcbf29ce484222325ULL) {
  uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Hash128Hasher {
  size_t operator()(const Hash128& h) const noexcept { return static_cast<size_t>(h.lo ^ mix64(h.hi)); }
};

}  // namespace neurq
