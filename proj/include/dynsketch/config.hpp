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

#ifndef DYNSKETCH_CONFIG_HPP_
#define DYNSKETCH_CONFIG_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "dynsketch/hash.hpp"

namespace dynsketch {

enum class PromotionMode : uint8_t { kEarly = 0 };

// Register layouts with a name. The NLZ portion width is bits - history.
enum class SketchType : uint8_t { kLL6, kDLL4, kDLL3, kUDLL5, kUDLL6, kUDLL7 };

std::string_view to_string(SketchType type);
std::optional<SketchType> parse_sketch_type(std::string_view name);

struct SketchConfig {
  uint32_t bucket_count = 2048;
  uint32_t bits_per_register = 4;
  uint32_t history_bits = 0;
  Addressing addressing = Addressing::kBitmask;
  PromotionMode promotion = PromotionMode::kEarly;
  bool micro_index = true;
  bool ee_mask = true;
  // Defer the register array until the MicroIndex saturates.
  bool lazy_allocation = false;

  static SketchConfig of(SketchType type, uint32_t buckets,
                         Addressing addressing = Addressing::kBitmask);

  uint32_t nlz_bits() const noexcept { return bits_per_register - history_bits; }
  // LL6 stores absolute NLZ and never promotes.
  bool uses_shared_exponent() const noexcept { return nlz_bits() != 6; }
  // Largest value of the NLZ portion of a register.
  uint32_t max_stored() const noexcept { return (1u << nlz_bits()) - 1; }
  // Bits occupied by one register slot in storage (LL6 uses whole bytes).
  uint32_t slot_bits() const noexcept {
    return uses_shared_exponent() ? bits_per_register : 8;
  }
  uint32_t registers_per_word() const noexcept { return 32 / slot_bits(); }
  std::size_t register_bytes() const noexcept {
    const std::size_t per_word = registers_per_word();
    return (bucket_count + per_word - 1) / per_word * sizeof(uint32_t);
  }

  std::optional<SketchType> type() const noexcept;

  // Throws std::invalid_argument on unsupported layouts or addressing.
  void validate() const;

  bool operator==(const SketchConfig&) const = default;
};

}  // namespace dynsketch

#endif  // DYNSKETCH_CONFIG_HPP_
