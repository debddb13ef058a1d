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

#ifndef DYNSKETCH_PROFILE_HPP_
#define DYNSKETCH_PROFILE_HPP_

#include <array>
#include <cstdint>
#include <vector>

namespace dynsketch {

inline constexpr uint32_t kNlzSlots = 64;

// Register statistics every estimator works from. Counts are real-valued so
// that expectation-valued corrections (DLL3 overflow) can be carried through.
struct NlzProfile {
  uint32_t buckets = 0;
  // Shared exponent of the producing sketch, or the equivalent floor for
  // structures without one (1 + lowest NLZ once every register is written).
  uint32_t min_zeros = 0;
  uint32_t history_bits = 0;
  // n[i]: registers whose absolute NLZ equals i.
  std::array<double, kNlzSlots> n{};
  // V: registers never written.
  double empty = 0.0;
  double filled = 0.0;
  uint32_t micro_popcount = 0;
  // history[nlz << history_bits | state]; empty when history_bits == 0.
  std::vector<double> history;
  bool overflow_corrected = false;

  // V_t: registers that are empty as seen from tier t (NLZ below t).
  double tier_empty(uint32_t t) const noexcept {
    double v = empty;
    for (uint32_t i = 0; i < t && i < kNlzSlots; ++i) v += n[i];
    return v;
  }
  // Empty registers in the current frame, V at tier min_zeros.
  double frame_empty() const noexcept { return tier_empty(min_zeros); }
  // cumRaw[t]: registers with NLZ >= t.
  double cumulative(uint32_t t) const noexcept {
    double c = 0.0;
    for (uint32_t i = t; i < kNlzSlots; ++i) c += n[i];
    return c;
  }
  uint32_t history_states() const noexcept { return 1u << history_bits; }
  double history_count(uint32_t nlz, uint32_t state) const noexcept {
    return history.empty() ? 0.0 : history[(nlz << history_bits) | state];
  }
  // Lowest level a history bit can record: hashes below max(mz - h, 0)
  // never reach the registers.
  uint32_t history_floor() const noexcept {
    return min_zeros > history_bits ? min_zeros - history_bits : 0;
  }
  // History state with bits for unobservable levels forced on, so that a
  // register near the floor is not mistaken for one with missing events.
  uint32_t effective_state(uint32_t nlz, uint32_t state) const noexcept {
    const uint32_t floor = history_floor();
    for (uint32_t k = 0; k < history_bits; ++k) {
      if (nlz < floor + k + 1) state |= 1u << k;
    }
    return state;
  }
  // Highest NLZ with a nonzero count, or -1 when nothing is filled.
  int max_nlz() const noexcept {
    for (int i = kNlzSlots - 1; i >= 0; --i) {
      if (n[i] > 0.0) return i;
    }
    return -1;
  }

  bool operator==(const NlzProfile&) const = default;
};

}  // namespace dynsketch

#endif  // DYNSKETCH_PROFILE_HPP_
