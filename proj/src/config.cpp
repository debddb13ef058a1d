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

#include "dynsketch/config.hpp"

#include <array>
#include <bit>
#include <stdexcept>
#include <utility>

namespace dynsketch {

namespace {

struct Layout {
  SketchType type;
  std::string_view name;
  uint32_t bits;
  uint32_t history;
};

constexpr std::array<Layout, 6> kLayouts{{
    {SketchType::kLL6, "ll6", 6, 0},
    {SketchType::kDLL4, "dll4", 4, 0},
    {SketchType::kDLL3, "dll3", 3, 0},
    {SketchType::kUDLL5, "udll5", 5, 1},
    {SketchType::kUDLL6, "udll6", 6, 2},
    {SketchType::kUDLL7, "udll7", 7, 3},
}};

}  // namespace

std::string_view to_string(SketchType type) {
  for (const auto& layout : kLayouts) {
    if (layout.type == type) return layout.name;
  }
  return "unknown";
}

std::optional<SketchType> parse_sketch_type(std::string_view name) {
  for (const auto& layout : kLayouts) {
    if (layout.name == name) return layout.type;
  }
  return std::nullopt;
}

SketchConfig SketchConfig::of(SketchType type, uint32_t buckets,
                              Addressing addressing) {
  SketchConfig cfg;
  for (const auto& layout : kLayouts) {
    if (layout.type == type) {
      cfg.bits_per_register = layout.bits;
      cfg.history_bits = layout.history;
    }
  }
  cfg.bucket_count = buckets;
  cfg.addressing = addressing;
  // LL6 has no shared exponent, so there is nothing for the mask to reject.
  cfg.ee_mask = type != SketchType::kLL6;
  cfg.validate();
  return cfg;
}

std::optional<SketchType> SketchConfig::type() const noexcept {
  for (const auto& layout : kLayouts) {
    if (layout.bits == bits_per_register && layout.history == history_bits) {
      return layout.type;
    }
  }
  return std::nullopt;
}

void SketchConfig::validate() const {
  if (bucket_count < 64) {
    throw std::invalid_argument("bucket count must be at least 64");
  }
  if (addressing == Addressing::kBitmask && !std::has_single_bit(bucket_count)) {
    throw std::invalid_argument(
        "bitmask addressing requires a power-of-two bucket count");
  }
  if (!type().has_value()) {
    throw std::invalid_argument("unsupported register layout: " +
                                std::to_string(bits_per_register) + " bits, " +
                                std::to_string(history_bits) + " history");
  }
}

}  // namespace dynsketch
