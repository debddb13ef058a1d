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

#ifndef DYNSKETCH_CORRECTION_HPP_
#define DYNSKETCH_CORRECTION_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <vector>

#include "dynsketch/config.hpp"
#include "dynsketch/method.hpp"
#include "dynsketch/profile.hpp"

namespace dynsketch {

// Cardinality-keyed multiplicative correction factors for one method.
// Keys ascend with ~1% spacing; factor = true / mean raw estimate.
struct CfTable {
  Method method = Method::kMean;
  uint32_t buckets = 0;
  uint32_t bits = 0;
  uint32_t history = 0;
  std::vector<double> keys;
  std::vector<double> factors;

  bool empty() const noexcept { return keys.empty(); }
  double table_max() const noexcept { return keys.empty() ? 0.0 : keys.back(); }

  // Halves the estimate until it fits the table, then interpolates the
  // factor linearly in log-cardinality. Empty tables yield 1.
  double lookup(double estimate) const noexcept;
};

struct CfApplication {
  double value;
  int iterations;
};

inline constexpr int kMaxCfIterations = 4;
inline constexpr double kCfTolerance = 1e-4;

// Iterates est <- raw * CF(est) from `seed` (defaults to raw) until the
// relative change drops below kCfTolerance or kMaxCfIterations is reached.
CfApplication apply_cf(const CfTable& table, double raw,
                       std::optional<double> seed = std::nullopt) noexcept;

class CfSet {
 public:
  void put(CfTable table) { tables_[table.method] = std::move(table); }
  const CfTable* find(Method m) const noexcept {
    const auto it = tables_.find(m);
    return it == tables_.end() ? nullptr : &it->second;
  }
  bool contains(Method m) const noexcept { return find(m) != nullptr; }
  const std::map<Method, CfTable>& tables() const noexcept { return tables_; }

 private:
  std::map<Method, CfTable> tables_;
};

// Additive NLZ-space correction per history state (2^h entries).
struct HistoryCorrection {
  uint32_t history_bits = 0;
  std::vector<double> per_state;

  bool operator==(const HistoryCorrection&) const = default;
};

// corrCum = cumRaw + (B - cumRaw) * (1 - exp(-X / B)).
double corrected_cumulative(double cum_raw, double overflow, double buckets) noexcept;

// DLL3 overflow correction in reverse-cumulative space. log[t] is the
// overflow estimate for tier t. Corrected counts may be fractional.
NlzProfile correct_overflow(const NlzProfile& p, const std::vector<uint32_t>& log);

// Text formats. Readers throw std::runtime_error on malformed input.
void write_cf_table(std::ostream& out, const CfTable& table);
std::vector<CfTable> read_cf_tables(std::istream& in);
void write_history_correction(std::ostream& out, const HistoryCorrection& hc,
                              const SketchConfig& cfg);
HistoryCorrection read_history_correction(std::istream& in);

}  // namespace dynsketch

#endif  // DYNSKETCH_CORRECTION_HPP_
