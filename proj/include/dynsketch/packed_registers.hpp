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

#ifndef DYNSKETCH_PACKED_REGISTERS_HPP_
#define DYNSKETCH_PACKED_REGISTERS_HPP_

#include <algorithm>
#include <bit>
#include <cstdint>
#include <span>
#include <vector>

namespace dynsketch {

// Fixed-width fields packed into 32-bit words, floor(32 / width) per word,
// no field straddling a word boundary. Field j lives in word j / per_word at
// bit offset (j % per_word) * width.
class PackedRegisters {
 public:
  PackedRegisters() = default;
  PackedRegisters(std::size_t count, uint32_t width)
      : count_(count),
        width_(width),
        per_word_(32 / width),
        per_word_shift_(std::has_single_bit(per_word_)
                            ? static_cast<uint32_t>(std::countr_zero(per_word_))
                            : kNoShift),
        field_mask_((1u << width) - 1),
        words_((count + per_word_ - 1) / per_word_, 0u) {}

  uint32_t get(std::size_t j) const noexcept {
    const auto [word, shift] = locate(j);
    return (words_[word] >> shift) & field_mask_;
  }

  void set(std::size_t j, uint32_t value) noexcept {
    const auto [word, shift] = locate(j);
    words_[word] = (words_[word] & ~(field_mask_ << shift)) |
                   ((value & field_mask_) << shift);
  }

  std::size_t size() const noexcept { return count_; }
  uint32_t width() const noexcept { return width_; }
  std::size_t bytes() const noexcept { return words_.size() * sizeof(uint32_t); }
  std::span<const uint32_t> words() const noexcept { return words_; }
  std::span<uint32_t> words() noexcept { return words_; }
  void clear() noexcept { std::fill(words_.begin(), words_.end(), 0u); }

  bool operator==(const PackedRegisters& other) const noexcept {
    return count_ == other.count_ && width_ == other.width_ &&
           words_ == other.words_;
  }

 private:
  static constexpr uint32_t kNoShift = ~0u;

  struct Slot {
    std::size_t word;
    uint32_t shift;
  };

  Slot locate(std::size_t j) const noexcept {
    if (per_word_shift_ != kNoShift) {
      return {j >> per_word_shift_,
              static_cast<uint32_t>(j & (per_word_ - 1)) * width_};
    }
    return {j / per_word_, static_cast<uint32_t>(j % per_word_) * width_};
  }

  std::size_t count_ = 0;
  uint32_t width_ = 1;
  uint32_t per_word_ = 32;
  uint32_t per_word_shift_ = 5;
  uint32_t field_mask_ = 1;
  std::vector<uint32_t> words_;
};

}  // namespace dynsketch

#endif  // DYNSKETCH_PACKED_REGISTERS_HPP_
