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

#ifndef DYNSKETCH_ESTIMATORS_HPP_
#define DYNSKETCH_ESTIMATORS_HPP_

#include <cstdint>
#include <optional>

#include "dynsketch/correction.hpp"
#include "dynsketch/method.hpp"
#include "dynsketch/profile.hpp"

namespace dynsketch {

// Occupancy thresholds are fractions of the bucket count.
struct BlendParams {
  double alpha = 9.0;
  double v_target = 0.25;
  double lcmin_zone_low = 0.3;
  double lcmin_zone_high = 0.5;
  double hybrid_low = 0.2;
  double hybrid_high = 5.0;
  double ldlc_hc_weight = 0.4;

  // Throws std::invalid_argument when a field is non-positive or a zone is
  // inverted.
  void validate() const;
};

namespace est {

// 0.7213 / (1 + 1.079 / B).
double alpha_m(double buckets) noexcept;

// 64 * ln(64 / max(64 - popcount, 0.5)).
double micro_estimate(uint32_t popcount) noexcept;

double lc(const NlzProfile& p) noexcept;
double lcmin(const NlzProfile& p) noexcept;

// 2^t * B * ln(B / V_t); nullopt when V_t == 0.
std::optional<double> dlc_tier(const NlzProfile& p, uint32_t t) noexcept;
double dlc_best(const NlzProfile& p) noexcept;
// Occupancy-weighted geometric blend over informative tiers, without the
// LCmin hand-off. nullopt when no tier is informative.
std::optional<double> dlc_tier_blend(const NlzProfile& p, const BlendParams& bp) noexcept;
double dlc(const NlzProfile& p, const BlendParams& bp = {}) noexcept;

// Harmonic-mean family over filled registers; 0 when nothing is filled.
// With a history correction, each register contributes 2^-(nlz + c[state]).
double mean(const NlzProfile& p, const HistoryCorrection* hc = nullptr) noexcept;
double hmean(const NlzProfile& p) noexcept;
double gmean(const NlzProfile& p) noexcept;
// Baseline HLL: alpha * B^2 / (V + sum 2^-NLZ), or LC while LC < 2.5 B.
double hll(const NlzProfile& p) noexcept;

// Log-weighted interpolation between LCmin and the corrected Mean.
double hybrid_blend(double lcmin_value, double mean_cf, double buckets,
                    const BlendParams& bp) noexcept;

// Linear counting over history bit j, using registers whose history window
// covers level j (absolute NLZ in [j + 1, j + h]).
std::optional<double> history_lc_level(const NlzProfile& p, uint32_t level) noexcept;
std::optional<double> history_lc(const NlzProfile& p, const BlendParams& bp = {}) noexcept;
double ldlc(const NlzProfile& p, const BlendParams& bp = {}) noexcept;

}  // namespace est

// Evaluates any method with its configured corrections.
class Estimator {
 public:
  explicit Estimator(BlendParams params = {}) : params_(params) { params_.validate(); }

  void set_tables(CfSet tables) { tables_ = std::move(tables); }
  void set_table(CfTable table) { tables_.put(std::move(table)); }
  void set_history_correction(HistoryCorrection hc) { history_ = std::move(hc); }
  // Seeds CF iteration with the raw DLC estimate (used for DLL3).
  void set_dlc_seed(bool on) noexcept { dlc_seed_ = on; }
  // Caps estimates at the number of adds seen, when supplied.
  void set_clamp(bool on) noexcept { clamp_ = on; }

  const BlendParams& params() const noexcept { return params_; }
  const CfSet& tables() const noexcept { return tables_; }
  const std::optional<HistoryCorrection>& history_correction() const noexcept {
    return history_;
  }

  // Estimate before the method's own table is applied. Dependencies (the
  // Mean inside Hybrid) are still corrected when their tables are present.
  double raw(Method m, const NlzProfile& p) const;
  double estimate(Method m, const NlzProfile& p,
                  std::optional<uint64_t> adds = std::nullopt) const;

 private:
  double corrected(Method m, double raw_value, const NlzProfile& p) const;

  BlendParams params_;
  CfSet tables_;
  std::optional<HistoryCorrection> history_;
  bool dlc_seed_ = false;
  bool clamp_ = false;
};

}  // namespace dynsketch

#endif  // DYNSKETCH_ESTIMATORS_HPP_
