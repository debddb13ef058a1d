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

#include "dynsketch/sketch.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "dynsketch/correction.hpp"

namespace dynsketch {

namespace {

constexpr char kSnapshotMagic[4] = {'D', 'S', 'K', '1'};

enum SnapshotFlags : uint32_t {
  kFlagMicroIndex = 1u << 0,
  kFlagEeMask = 1u << 1,
  kFlagLazy = 1u << 2,
  kFlagAllocated = 1u << 3,
};

// A register decoded to absolute terms.
struct Decoded {
  bool present = false;
  int nlz = 0;
  uint32_t history = 0;
};

uint32_t history_mask(uint32_t bits) { return (1u << bits) - 1; }

// Folds the events of `lower` (its maximum and its history) into `upper`,
// whose NLZ is at least as large.
uint32_t fold_history(const Decoded& upper, const Decoded& lower,
                      uint32_t bits) {
  const int gap = upper.nlz - lower.nlz;
  if (gap == 0) return upper.history | lower.history;
  if (gap > static_cast<int>(bits)) return upper.history;
  const uint32_t events = (lower.history << gap) | (1u << (gap - 1));
  return (upper.history | events) & history_mask(bits);
}

class ByteWriter {
 public:
  void u8(uint8_t v) { out_.push_back(v); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void raw(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
  std::vector<uint8_t> take() { return std::move(out_); }

 private:
  std::vector<uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> in) : in_(in) {}
  uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  bool expect(const char* p, std::size_t n) {
    need(n);
    const bool ok = std::memcmp(in_.data() + pos_, p, n) == 0;
    pos_ += n;
    return ok;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw std::invalid_argument("truncated snapshot");
  }
  std::span<const uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

Sketch::Sketch(const SketchConfig& cfg)
    : cfg_((cfg.validate(), cfg)),
      splitter_(cfg.bucket_count, cfg.addressing),
      min_zero_count_(cfg.bucket_count),
      allocated_(!cfg.lazy_allocation) {
  if (allocated_) regs_ = PackedRegisters(cfg_.bucket_count, cfg_.slot_bits());
  refresh_mask();
}

Sketch Sketch::from_registers(const SketchConfig& cfg, uint32_t min_zeros,
                              std::span<const uint32_t> registers,
                              uint64_t micro_index) {
  if (registers.size() != cfg.bucket_count) {
    throw std::invalid_argument("register count does not match bucket count");
  }
  Sketch s(cfg);
  s.allocate();
  if (!cfg.uses_shared_exponent() && min_zeros != 0) {
    throw std::invalid_argument("LL6 has no shared exponent");
  }
  const uint32_t limit = 1u << cfg.bits_per_register;
  for (std::size_t j = 0; j < registers.size(); ++j) {
    if (registers[j] >= limit || (!cfg.uses_shared_exponent() && registers[j] > 63)) {
      throw std::invalid_argument("register value out of range");
    }
    s.regs_.set(j, registers[j]);
  }
  s.min_zeros_ = min_zeros;
  s.micro_index_ = micro_index;
  s.recount();
  s.refresh_mask();
  return s;
}

uint32_t Sketch::floor_nlz() const noexcept {
  if (!cfg_.uses_shared_exponent()) return 0;
  return min_zeros_ > cfg_.history_bits ? min_zeros_ - cfg_.history_bits : 0;
}

void Sketch::refresh_mask() noexcept {
  const uint32_t f = floor_nlz();
  ee_mask_ = f >= 64 ? 0 : ~uint64_t{0} >> f;
}

void Sketch::allocate() noexcept {
  if (regs_.size() == 0) regs_ = PackedRegisters(cfg_.bucket_count, cfg_.slot_bits());
  allocated_ = true;
}

void Sketch::add_hash(uint64_t hash) noexcept {
  ++adds_;
  if (cfg_.ee_mask && hash > ee_mask_) {
    ++early_exits_;
    return;
  }
  const SplitHash split = splitter_(hash);
  // Hashes under the floor cannot change any state. The mask rejects them
  // before this point; without it they still pay for the register compare.
  const bool below_floor = split.abs_nlz < floor_nlz();
  if (cfg_.micro_index && !below_floor) {
    const uint64_t bit = uint64_t{1} << splitter_.micro_bit(hash);
    if ((micro_index_ & bit) == 0) {
      micro_index_ |= bit;
      ++mutations_;
    }
  }
  if (!allocated_) {
    if (below_floor) return;
    if (cfg_.micro_index &&
        std::popcount(micro_index_) < static_cast<int>(kMicroAllocationThreshold)) {
      return;
    }
    allocate();
  }
  if (cfg_.history_bits == 0) {
    store(split.bucket, split.abs_nlz);
  } else if (!below_floor) {
    store_with_history(split.bucket, split.abs_nlz);
  }
}

void Sketch::store(uint32_t bucket, uint32_t abs_nlz) noexcept {
  uint32_t stored;
  if (!cfg_.uses_shared_exponent()) {
    stored = std::min<uint32_t>(abs_nlz + 1, 63);
  } else {
    const int rel = static_cast<int>(abs_nlz) - static_cast<int>(min_zeros_) + 1;
    stored = rel <= 0 ? 0 : std::min(static_cast<uint32_t>(rel), cfg_.max_stored());
  }
  const uint32_t old = regs_.get(bucket);
  if (stored <= old) return;
  regs_.set(bucket, stored);
  ++mutations_;
  if (old == 0 && --min_zero_count_ == 0 && cfg_.uses_shared_exponent()) {
    while (min_zero_count_ == 0) promote_once();
  }
}

void Sketch::store_with_history(uint32_t bucket, uint32_t abs_nlz) noexcept {
  const uint32_t hbits = cfg_.history_bits;
  const uint32_t hmask = history_mask(hbits);
  const uint32_t max_stored = cfg_.max_stored();
  const uint32_t r = regs_.get(bucket);
  const uint32_t s = r >> hbits;
  const uint32_t hist = r & hmask;

  const int x = static_cast<int>(abs_nlz);
  const int ceiling = static_cast<int>(min_zeros_ + max_stored) - 1;
  const int xc = std::min(x, ceiling);

  if (s == 0 && min_zeros_ == 0) {
    regs_.set(bucket, static_cast<uint32_t>(xc + 1) << hbits);
  } else {
    const int current = static_cast<int>(min_zeros_ + s) - 1;
    if (xc > current) {
      const int gap = xc - current;
      uint32_t next_hist = 0;
      if (gap <= static_cast<int>(hbits)) {
        next_hist = ((hist << gap) | (1u << (gap - 1))) & hmask;
      }
      const uint32_t next_s = static_cast<uint32_t>(xc) - min_zeros_ + 1;
      regs_.set(bucket, (next_s << hbits) | next_hist);
    } else {
      if (x < current && current - x <= static_cast<int>(hbits)) {
        const uint32_t next = r | (1u << (current - x - 1));
        if (next != r) {
          regs_.set(bucket, next);
          ++mutations_;
        }
      }
      return;
    }
  }
  ++mutations_;
  if (s == 0 && --min_zero_count_ == 0) {
    while (min_zero_count_ == 0) promote_once();
  }
}

void Sketch::promote_once(bool record_overflow) noexcept {
  const uint32_t hbits = cfg_.history_bits;
  const uint32_t hmask = history_mask(hbits);
  const uint32_t max_stored = cfg_.max_stored();
  const std::size_t buckets = cfg_.bucket_count;

  if (record_overflow && cfg_.nlz_bits() == 3) {
    uint32_t top = 0;
    for (std::size_t j = 0; j < buckets; ++j) {
      if ((regs_.get(j) >> hbits) == max_stored) ++top;
    }
    // Clamped registers belong one tier above the current ceiling.
    const std::size_t tier = min_zeros_ + max_stored;
    if (overflow_.size() <= tier) overflow_.resize(tier + 1, 0);
    overflow_[tier] = top / 2;
  }

  uint32_t zeros = 0;
  for (std::size_t j = 0; j < buckets; ++j) {
    const uint32_t r = regs_.get(j);
    uint32_t s = r >> hbits;
    if (s > 0) {
      --s;
      regs_.set(j, (s << hbits) | (r & hmask));
    }
    if (s == 0) ++zeros;
  }
  ++min_zeros_;
  ++promotions_;
  min_zero_count_ = zeros;
  refresh_mask();
}

uint32_t Sketch::count_and_decrement() {
  if (!cfg_.uses_shared_exponent()) {
    throw std::logic_error("tier promotion requires a shared exponent");
  }
  if (min_zero_count_ != 0) {
    throw std::logic_error("tier promotion requires every register to be filled");
  }
  do {
    promote_once();
  } while (min_zero_count_ == 0);
  return min_zero_count_;
}

void Sketch::recount() noexcept {
  uint32_t zeros = 0;
  const uint32_t hbits = cfg_.history_bits;
  for (std::size_t j = 0; j < cfg_.bucket_count; ++j) {
    if ((regs_.get(j) >> hbits) == 0) ++zeros;
  }
  min_zero_count_ = zeros;
}

void Sketch::merge(const Sketch& other) {
  if (!(cfg_ == other.cfg_)) {
    throw std::invalid_argument("cannot merge sketches with different configurations");
  }
  micro_index_ |= other.micro_index_;
  ++mutations_;
  adds_ += other.adds_;
  early_exits_ += other.early_exits_;
  if (overflow_.size() < other.overflow_.size()) overflow_.resize(other.overflow_.size(), 0);
  for (std::size_t t = 0; t < other.overflow_.size(); ++t) {
    overflow_[t] = std::max(overflow_[t], other.overflow_[t]);
  }
  if (!other.allocated_) return;
  allocate();

  const bool shared = cfg_.uses_shared_exponent();
  const uint32_t hbits = cfg_.history_bits;
  const uint32_t hmask = history_mask(hbits);
  const uint32_t target = std::max(min_zeros_, other.min_zeros_);

  auto decode = [&](uint32_t r, uint32_t mz) {
    Decoded d;
    const uint32_t s = r >> hbits;
    if (!shared) {
      d.present = s != 0;
      d.nlz = static_cast<int>(s) - 1;
      return d;
    }
    if (s == 0 && mz == 0) return d;
    d.present = true;
    d.nlz = static_cast<int>(mz + s) - 1;
    d.history = r & hmask;
    return d;
  };

  for (std::size_t j = 0; j < cfg_.bucket_count; ++j) {
    const Decoded a = decode(regs_.get(j), min_zeros_);
    const Decoded b = decode(other.regs_.get(j), other.min_zeros_);
    Decoded m;
    if (!a.present) {
      m = b;
    } else if (!b.present) {
      m = a;
    } else {
      const bool a_wins = a.nlz >= b.nlz;
      m = a_wins ? a : b;
      m.history = a_wins ? fold_history(a, b, hbits) : fold_history(b, a, hbits);
    }
    uint32_t value = 0;
    if (m.present) {
      const uint32_t s = shared ? static_cast<uint32_t>(m.nlz + 1 - static_cast<int>(target))
                                : static_cast<uint32_t>(m.nlz + 1);
      value = (s << hbits) | m.history;
    }
    regs_.set(j, value);
  }
  min_zeros_ = target;
  recount();
  if (shared) {
    // Overflow counts taken here would depend on merge order; the logs are
    // combined by maximum above and nothing new is recorded.
    while (min_zero_count_ == 0) promote_once(false);
  }
  refresh_mask();
}

Sketch merged(const Sketch& a, const Sketch& b) {
  Sketch out = a;
  out.merge(b);
  return out;
}

double Sketch::micro_estimate() const noexcept {
  const double free_bits =
      std::max(64.0 - static_cast<double>(std::popcount(micro_index_)), 0.5);
  return 64.0 * std::log(64.0 / free_bits);
}

NlzProfile Sketch::raw_profile() const {
  NlzProfile p;
  p.buckets = cfg_.bucket_count;
  p.history_bits = cfg_.history_bits;
  p.micro_popcount = static_cast<uint32_t>(std::popcount(micro_index_));
  if (cfg_.history_bits > 0) {
    p.history.assign(static_cast<std::size_t>(kNlzSlots) << cfg_.history_bits, 0.0);
  }
  if (!allocated_) {
    p.empty = cfg_.bucket_count;
    return p;
  }

  const bool shared = cfg_.uses_shared_exponent();
  const uint32_t hbits = cfg_.history_bits;
  const uint32_t hmask = history_mask(hbits);
  const uint32_t width = regs_.width();
  const uint32_t per_word = 32 / width;
  const uint32_t field_mask = (1u << width) - 1;
  std::array<uint32_t, 64> counts{};
  uint32_t empty = 0;

  std::size_t j = 0;
  for (const uint32_t word : regs_.words()) {
    for (uint32_t f = 0; f < per_word && j < cfg_.bucket_count; ++f, ++j) {
      const uint32_t r = (word >> (f * width)) & field_mask;
      const uint32_t s = r >> hbits;
      int nlz;
      if (!shared) {
        if (s == 0) {
          ++empty;
          continue;
        }
        nlz = static_cast<int>(s) - 1;
      } else {
        if (s == 0 && min_zeros_ == 0) {
          ++empty;
          continue;
        }
        nlz = static_cast<int>(min_zeros_ + s) - 1;
      }
      ++counts[nlz];
      if (hbits > 0) p.history[(static_cast<std::size_t>(nlz) << hbits) | (r & hmask)] += 1.0;
    }
  }
  for (uint32_t i = 0; i < kNlzSlots; ++i) p.n[i] = counts[i];
  p.empty = empty;
  p.filled = cfg_.bucket_count - empty;
  if (shared) {
    p.min_zeros = min_zeros_;
  } else if (empty == 0) {
    uint32_t lowest = 0;
    while (lowest < kNlzSlots && counts[lowest] == 0) ++lowest;
    p.min_zeros = lowest + 1;
  }
  return p;
}

NlzProfile Sketch::profile() const {
  NlzProfile p = raw_profile();
  if (cfg_.nlz_bits() == 3 && !overflow_.empty()) return correct_overflow(p, overflow_);
  return p;
}

std::vector<int> Sketch::absolute_nlz() const {
  std::vector<int> out(cfg_.bucket_count, -1);
  if (!allocated_) return out;
  const bool shared = cfg_.uses_shared_exponent();
  for (std::size_t j = 0; j < cfg_.bucket_count; ++j) {
    const uint32_t s = regs_.get(j) >> cfg_.history_bits;
    if (!shared) {
      out[j] = static_cast<int>(s) - 1;
    } else if (s != 0 || min_zeros_ != 0) {
      out[j] = static_cast<int>(min_zeros_ + s) - 1;
    }
  }
  return out;
}

std::vector<uint8_t> Sketch::snapshot() const {
  ByteWriter w;
  w.raw(kSnapshotMagic, sizeof(kSnapshotMagic));
  w.u32(cfg_.bucket_count);
  w.u32(cfg_.bits_per_register);
  w.u32(cfg_.history_bits);
  w.u32(static_cast<uint32_t>(cfg_.addressing));
  uint32_t flags = static_cast<uint32_t>(cfg_.promotion) << 8;
  if (cfg_.micro_index) flags |= kFlagMicroIndex;
  if (cfg_.ee_mask) flags |= kFlagEeMask;
  if (cfg_.lazy_allocation) flags |= kFlagLazy;
  if (allocated_) flags |= kFlagAllocated;
  w.u32(flags);
  w.u8(static_cast<uint8_t>(min_zeros_));
  w.u64(micro_index_);
  w.u32(static_cast<uint32_t>(overflow_.size()));
  for (const uint32_t x : overflow_) w.u32(x);
  if (allocated_) {
    for (const uint32_t word : regs_.words()) w.u32(word);
  } else {
    const std::size_t words = cfg_.register_bytes() / sizeof(uint32_t);
    for (std::size_t i = 0; i < words; ++i) w.u32(0);
  }
  return w.take();
}

Sketch Sketch::from_snapshot(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  if (!r.expect(kSnapshotMagic, sizeof(kSnapshotMagic))) {
    throw std::invalid_argument("not a DSK1 snapshot");
  }
  SketchConfig cfg;
  cfg.bucket_count = r.u32();
  cfg.bits_per_register = r.u32();
  cfg.history_bits = r.u32();
  const uint32_t addressing = r.u32();
  if (addressing > 1) throw std::invalid_argument("bad addressing mode");
  cfg.addressing = static_cast<Addressing>(addressing);
  const uint32_t flags = r.u32();
  if ((flags >> 8) != 0) throw std::invalid_argument("unknown promotion mode");
  cfg.micro_index = flags & kFlagMicroIndex;
  cfg.ee_mask = flags & kFlagEeMask;
  cfg.lazy_allocation = flags & kFlagLazy;
  Sketch s(cfg);
  s.min_zeros_ = r.u8();
  if (!cfg.uses_shared_exponent() && s.min_zeros_ != 0) {
    throw std::invalid_argument("LL6 snapshot with nonzero shared exponent");
  }
  s.micro_index_ = r.u64();
  const uint32_t overflow_len = r.u32();
  if (overflow_len > 256) throw std::invalid_argument("overflow log too long");
  s.overflow_.resize(overflow_len);
  for (auto& x : s.overflow_) x = r.u32();
  const std::size_t words = cfg.register_bytes() / sizeof(uint32_t);
  if (flags & kFlagAllocated) {
    s.allocate();
    auto dst = s.regs_.words();
    for (std::size_t i = 0; i < words; ++i) dst[i] = r.u32();
  } else {
    for (std::size_t i = 0; i < words; ++i) {
      if (r.u32() != 0) throw std::invalid_argument("unallocated snapshot has registers");
    }
  }
  if (!r.done()) throw std::invalid_argument("trailing bytes in snapshot");
  if (s.allocated_) s.recount();
  s.refresh_mask();
  return s;
}

bool Sketch::same_state(const Sketch& other) const noexcept {
  return cfg_ == other.cfg_ && min_zeros_ == other.min_zeros_ &&
         micro_index_ == other.micro_index_ && allocated_ == other.allocated_ &&
         overflow_ == other.overflow_ && regs_ == other.regs_;
}

}  // namespace dynsketch
