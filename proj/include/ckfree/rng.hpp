// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace ckfree::rng {

// SplitMix64 finalizer. Statistically sound for simulation use and cheap
// enough to evaluate per (seed, iteration, stage) coordinate.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Key derivation for independent streams: key(seed, a) != key(seed, b) for a != b.
constexpr std::uint64_t derive_key(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                                   std::uint64_t c = 0) {
  std::uint64_t h = mix64(seed ^ 0x6a09e667f3bcc909ULL);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  return h;
}

// Upper 53 bits to a double in [0, 1).
constexpr double to_unit(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

// One draw addressed purely by coordinates; order-independent by construction.
constexpr double unit_at(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  return to_unit(derive_key(seed, a, b, c));
}

// Counter-based generator: output i depends only on (key, i), never on call
// history, so identical keys reproduce identical streams in any interleaving.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64() { return mix64(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }
  double next_unit() { return to_unit(next_u64()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace ckfree::rng
