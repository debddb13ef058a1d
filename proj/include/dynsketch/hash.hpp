/*
 * Copyright 2026 The dynsketch Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DYNSKETCH_HASH_HPP_
#define DYNSKETCH_HASH_HPP_

#include <array>
#include <bit>
#include <cstdint>

namespace dynsketch {

inline constexpr uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

// Stafford's Mix13 finalizer. Bijective on 64-bit words.
constexpr uint64_t mix13(uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace detail {

constexpr uint64_t unxorshift(uint64_t x, unsigned shift) noexcept {
  uint64_t y = x;
  for (unsigned s = shift; s < 64; s += shift) y = x ^ (y >> shift);
  return y;
}

// Multiplicative inverse modulo 2^64 by Newton iteration; `a` must be odd.
constexpr uint64_t inverse_odd(uint64_t a) noexcept {
  uint64_t x = a;
  for (int i = 0; i < 6; ++i) x *= 2 - a * x;
  return x;
}

}  // namespace detail

constexpr uint64_t unmix13(uint64_t z) noexcept {
  z = detail::unxorshift(z, 31);
  z *= detail::inverse_odd(0x94d049bb133111ebULL);
  z = detail::unxorshift(z, 27);
  z *= detail::inverse_odd(0xbf58476d1ce4e5b9ULL);
  return detail::unxorshift(z, 30);
}

enum class Addressing : uint8_t { kBitmask = 0, kModulo = 1 };

// Largest leading-zero count a register may record. Keeps 2^(63 - nlz) nonzero.
inline constexpr uint32_t kMaxAbsNlz = 62;

struct SplitHash {
  uint32_t bucket;
  uint32_t abs_nlz;
};

// Bucket selector and rank for a hashed key. In bitmask mode the low `k`
// bits select the bucket and the rank counts leading zeros in the remaining
// 64 - k high bits; in modulo mode the whole word feeds both.
class HashSplitter {
 public:
  HashSplitter(uint32_t bucket_count, Addressing addressing) noexcept
      : buckets_(bucket_count),
        addressing_(addressing),
        selector_bits_(static_cast<uint32_t>(std::countr_zero(bucket_count))),
        mask_(static_cast<uint64_t>(bucket_count) - 1) {}

  SplitHash operator()(uint64_t h) const noexcept {
    if (addressing_ == Addressing::kBitmask) {
      const uint64_t high = h & ~mask_;
      uint32_t nlz = static_cast<uint32_t>(std::countl_zero(high));
      const uint32_t width = 64 - selector_bits_;
      if (nlz > width) nlz = width;
      if (nlz > kMaxAbsNlz) nlz = kMaxAbsNlz;
      return {static_cast<uint32_t>(h & mask_), nlz};
    }
    uint32_t nlz = static_cast<uint32_t>(std::countl_zero(h));
    if (nlz > kMaxAbsNlz) nlz = kMaxAbsNlz;
    return {static_cast<uint32_t>(h % buckets_), nlz};
  }

  // Index into the 64-bit MicroIndex word.
  uint32_t micro_bit(uint64_t h) const noexcept {
    if (addressing_ == Addressing::kBitmask) {
      return static_cast<uint32_t>((h >> selector_bits_) & 63);
    }
    return static_cast<uint32_t>(h >> 58);
  }

  uint32_t selector_bits() const noexcept { return selector_bits_; }

 private:
  uint32_t buckets_;
  Addressing addressing_;
  uint32_t selector_bits_;
  uint64_t mask_;
};

class SplitMix64 {
 public:
  explicit constexpr SplitMix64(uint64_t seed) noexcept : state_(seed) {}
  constexpr uint64_t next() noexcept {
    state_ += kGoldenGamma;
    return mix13(state_);
  }

 private:
  uint64_t state_;
};

// Xoshiro256++ (Blackman and Vigna), seeded through SplitMix64.
class Xoshiro256pp {
 public:
  using result_type = uint64_t;

  explicit constexpr Xoshiro256pp(uint64_t seed) noexcept : s_{} {
    SplitMix64 sm(seed);
    for (auto& word : s_) word = sm.next();
  }
  explicit constexpr Xoshiro256pp(const std::array<uint64_t, 4>& state) noexcept
      : s_(state) {}

  constexpr uint64_t next() noexcept {
    const uint64_t result = std::rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = std::rotl(s_[3], 45);
    return result;
  }
  constexpr uint64_t operator()() noexcept { return next(); }

  static constexpr uint64_t min() noexcept { return 0; }
  static constexpr uint64_t max() noexcept { return ~uint64_t{0}; }

  constexpr const std::array<uint64_t, 4>& state() const noexcept { return s_; }

 private:
  std::array<uint64_t, 4> s_;
};

// Seed of the i-th independent stream derived from a master seed.
constexpr uint64_t stream_seed(uint64_t master, uint64_t index) noexcept {
  return mix13(master + (index + 1) * kGoldenGamma);
}

// FNV-1a over bytes; turns string tokens into 64-bit raw words.
constexpr uint64_t fnv1a64(const char* data, std::size_t size) noexcept {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace dynsketch

#endif  // DYNSKETCH_HASH_HPP_
