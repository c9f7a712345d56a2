#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace clipcurate {

// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t state = 0xcbf29ce484222325ULL) {
  for (unsigned char ch : bytes) {
    state ^= ch;
    state *= 0x100000001b3ULL;
  }
  return state;
}

// 128-bit FNV-1a, returned as 32 lowercase hex digits.
inline std::string fnv1a128_hex(std::string_view bytes) {
  using u128 = unsigned __int128;
  const u128 prime = (u128{1} << 88) + 0x13BU;
  u128 state = (u128{0x6c62272e07bb0142ULL} << 64) | u128{0x62b821756295c58dULL};
  for (unsigned char ch : bytes) {
    state ^= ch;
    state *= prime;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(32, '0');
  for (int i = 31; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[static_cast<unsigned>(state & 0xF)];
    state >>= 4;
  }
  return out;
}

/// h / 2^64. May round up to exactly 1.0 for the top ~2^10 hash values.
inline double unit_interval(std::uint64_t h) {
  return static_cast<double>(h) * 0x1.0p-64;
}

}  // namespace clipcurate
