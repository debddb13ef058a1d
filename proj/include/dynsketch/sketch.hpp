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

#ifndef DYNSKETCH_SKETCH_HPP_
#define DYNSKETCH_SKETCH_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dynsketch/config.hpp"
#include "dynsketch/hash.hpp"
#include "dynsketch/packed_registers.hpp"
#include "dynsketch/profile.hpp"

namespace dynsketch {

// Per-tier overflow estimates recorded by DLL3 at each promotion. Entry t is
// the estimated number of registers whose true NLZ reached tier t but were
// clamped one tier lower.
using OverflowLog = std::vector<uint32_t>;

inline constexpr uint32_t kMicroAllocationThreshold = 60;

// A LogLog-family register array with an optional shared exponent.
//
// Each register holds an NLZ portion `stored` in its high bits and, for the
// UDLL layouts, `history_bits` of sub-NLZ history below it. With a shared
// exponent the register represents absNlz = min_zeros + stored - 1; a
// register with stored == 0 is either never written (min_zeros == 0) or sits
// exactly one tier below the floor. LL6 stores absNlz + 1 directly.
//
// Not thread-safe for writers; see README for the concurrency contract.
class Sketch {
 public:
  explicit Sketch(const SketchConfig& cfg);

  // Rebuilds a sketch from raw register values (NLZ portion and history
  // packed as stored). Counters are recomputed; no promotion runs, so the
  // result may have min_zero_count() == 0.
  static Sketch from_registers(const SketchConfig& cfg, uint32_t min_zeros,
                               std::span<const uint32_t> registers,
                               uint64_t micro_index = 0);

  void add(uint64_t raw) noexcept { add_hash(mix13(raw)); }
  void add_hash(uint64_t hash) noexcept;

  // One tier promotion step repeated until some register is empty in the
  // new frame. Requires min_zero_count() == 0; throws std::logic_error
  // otherwise. Returns the new min_zero_count().
  uint32_t count_and_decrement();

  // Folds `other` into this sketch. Throws std::invalid_argument when the
  // configurations differ.
  void merge(const Sketch& other);

  double micro_estimate() const noexcept;

  // Profile with DLL3 overflow correction applied when applicable.
  NlzProfile profile() const;
  NlzProfile raw_profile() const;

  // Absolute NLZ per register, -1 for never-written registers.
  std::vector<int> absolute_nlz() const;

  const SketchConfig& config() const noexcept { return cfg_; }
  uint32_t min_zeros() const noexcept { return min_zeros_; }
  uint64_t ee_mask() const noexcept { return ee_mask_; }
  uint64_t micro_index() const noexcept { return micro_index_; }
  uint32_t min_zero_count() const noexcept { return min_zero_count_; }
  uint64_t adds() const noexcept { return adds_; }
  uint64_t early_exits() const noexcept { return early_exits_; }
  uint64_t promotions() const noexcept { return promotions_; }
  // Bumped whenever estimator-visible state changes.
  uint64_t mutations() const noexcept { return mutations_; }
  bool allocated() const noexcept { return allocated_; }
  const OverflowLog& overflow_log() const noexcept { return overflow_; }
  const PackedRegisters& registers() const noexcept { return regs_; }
  uint32_t register_value(std::size_t j) const noexcept { return regs_.get(j); }
  std::size_t register_bytes() const noexcept { return regs_.bytes(); }

  // Binary snapshot ("DSK1" frame). Round-trips bit-exactly.
  std::vector<uint8_t> snapshot() const;
  static Sketch from_snapshot(std::span<const uint8_t> bytes);

  // Compares persistent state only (what snapshot() captures).
  bool same_state(const Sketch& other) const noexcept;

 private:
  uint32_t floor_nlz() const noexcept;
  void refresh_mask() noexcept;
  void store(uint32_t bucket, uint32_t abs_nlz) noexcept;
  void store_with_history(uint32_t bucket, uint32_t abs_nlz) noexcept;
  void promote_once(bool record_overflow = true) noexcept;
  void recount() noexcept;
  void allocate() noexcept;

  SketchConfig cfg_;
  HashSplitter splitter_;
  PackedRegisters regs_;
  uint32_t min_zeros_ = 0;
  uint64_t ee_mask_ = ~uint64_t{0};
  uint32_t min_zero_count_ = 0;
  uint64_t micro_index_ = 0;
  bool allocated_ = true;
  uint64_t adds_ = 0;
  uint64_t early_exits_ = 0;
  uint64_t promotions_ = 0;
  uint64_t mutations_ = 0;
  OverflowLog overflow_;
};

Sketch merged(const Sketch& a, const Sketch& b);

}  // namespace dynsketch

#endif  // DYNSKETCH_SKETCH_HPP_
