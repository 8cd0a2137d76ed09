#include "neurq/common/hash.hpp"

#include <cstdio>

namespace neurq {

std::string Hash128::hex() const {
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(hi),
                static_cast<unsigned long long>(lo));
  return buf;
}

Hash128 fnv1a_128(std::string_view data) {
  using u128 = unsigned __int128;
  // FNV-128 offset basis and prime (2^88 + 2^8 + 0x3b).
  u128 h = (static_cast<u128>(0x6c62272e07bb0142ULL) << 64) | 0x62b821756295c58dULL;
  const u128 prime = (static_cast<u128>(1) << 88) | 0x13b;
  for (unsigned char c : data) {
    h ^= c;
    h *= prime;
  }
  return Hash128{static_cast<uint64_t>(h >> 64), static_cast<uint64_t>(h)};
}

}  // namespace neurq
