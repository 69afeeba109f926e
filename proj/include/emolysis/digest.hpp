#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace emolysis {

// 64-bit FNV-1a. Incremental so callers can fold several buffers into one
// digest without concatenating them.
class Fnv1a64 {
 public:
  static constexpr std::uint64_t kOffsetBasis = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

  Fnv1a64& update(std::span<const std::uint8_t> bytes) noexcept {
    for (auto b : bytes) {
      state_ ^= b;
      state_ *= kPrime;
    }
    return *this;
  }
  Fnv1a64& update(std::string_view s) noexcept {
    return update(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  }
  Fnv1a64& update_u64(std::uint64_t v) noexcept {
    std::uint8_t le[8];
    for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(v >> (8 * i));
    return update(std::span<const std::uint8_t>(le, 8));
  }

  std::uint64_t value() const noexcept { return state_; }

 private:
  std::uint64_t state_ = kOffsetBasis;
};

// splitmix64 step: advances `state` and returns the mixed output.
inline std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Top 53 bits as a double in [0,1).
inline double unit_from_bits(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

std::string to_hex(std::uint64_t v);

/// Lower-case hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

}  // namespace emolysis
