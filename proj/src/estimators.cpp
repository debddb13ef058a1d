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

#include "dynsketch/estimators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dynsketch {

void BlendParams::validate() const {
  if (!(alpha > 0 && v_target > 0 && lcmin_zone_low > 0 && lcmin_zone_high > 0 &&
        hybrid_low > 0 && hybrid_high > 0)) {
    throw std::invalid_argument("blend parameters must be positive");
  }
  if (!(lcmin_zone_low < lcmin_zone_high)) {
    throw std::invalid_argument("LCmin zone is inverted");
  }
  if (!(hybrid_low < hybrid_high)) {
    throw std::invalid_argument("hybrid zone is inverted");
  }
  if (!(ldlc_hc_weight >= 0 && ldlc_hc_weight <= 1)) {
    throw std::invalid_argument("LDLC weight must lie in [0, 1]");
  }
}

namespace est {

namespace {

constexpr double kMinFree = 0.5;

// V_t for every tier, computed in one pass.
std::array<double, kNlzSlots + 1> tier_empties(const NlzProfile& p) noexcept {
  std::array<double, kNlzSlots + 1> v{};
  v[0] = p.empty;
  for (uint32_t t = 0; t < kNlzSlots; ++t) v[t + 1] = v[t] + p.n[t];
  return v;
}

double linear_count(double buckets, double free) noexcept {
  return buckets * std::log(buckets / std::max(free, kMinFree));
}

// Registers whose history window covers `level`, and how many of them have
// the bit for that level unset.
struct LevelCounts {
  double population = 0;
  double unset = 0;
};

LevelCounts level_counts(const NlzProfile& p, uint32_t level) noexcept {
  LevelCounts out;
  if (p.history.empty()) return out;
  const uint32_t states = p.history_states();
  for (uint32_t k = 0; k < p.history_bits && level + 1 + k < kNlzSlots; ++k) {
    const uint32_t nlz = level + 1 + k;
    if (p.n[nlz] == 0) continue;
    for (uint32_t s = 0; s < states; ++s) {
      const double c = p.history_count(nlz, s);
      out.population += c;
      if (((s >> k) & 1u) == 0) out.unset += c;
    }
  }
  return out;
}

}  // namespace

double alpha_m(double buckets) noexcept { return 0.7213 / (1.0 + 1.079 / buckets); }

double micro_estimate(uint32_t popcount) noexcept {
  return linear_count(64.0, 64.0 - static_cast<double>(popcount));
}

double lc(const NlzProfile& p) noexcept {
  const double b = p.buckets;
  const double occupied = std::max(p.filled, static_cast<double>(p.micro_popcount));
  if (occupied <= 0) return 0.0;
  // The MicroIndex floor is only a fallback for an unwritten register array;
  // next to a populated array its 64-slot noise would bias LC upward.
  if (p.filled <= 0) return micro_estimate(p.micro_popcount);
  return linear_count(b, b - occupied);
}

double lcmin(const NlzProfile& p) noexcept {
  const double b = p.buckets;
  if (p.min_zeros == 0) return lc(p);
  return std::ldexp(linear_count(b, p.frame_empty()), static_cast<int>(p.min_zeros));
}

std::optional<double> dlc_tier(const NlzProfile& p, uint32_t t) noexcept {
  const double v = p.tier_empty(t);
  if (v <= 0) return std::nullopt;
  const double b = p.buckets;
  return std::ldexp(b * std::log(b / v), static_cast<int>(t));
}

double dlc_best(const NlzProfile& p) noexcept {
  const auto v = tier_empties(p);
  const double b = p.buckets;
  const double target = b / 4;
  double best = -1;
  double sum = 0;
  int hits = 0;
  for (uint32_t t = p.min_zeros; t < kNlzSlots; ++t) {
    if (v[t] <= 0 || v[t] >= b) continue;
    const double d = std::abs(v[t] - target);
    const double e = std::ldexp(b * std::log(b / v[t]), static_cast<int>(t));
    if (best < 0 || d < best) {
      best = d;
      sum = e;
      hits = 1;
    } else if (d == best) {
      sum += e;
      ++hits;
    }
  }
  return hits == 0 ? lcmin(p) : sum / hits;
}

std::optional<double> dlc_tier_blend(const NlzProfile& p, const BlendParams& bp) noexcept {
  const auto v = tier_empties(p);
  const double b = p.buckets;
  const double target = bp.v_target * b;
  double wsum = 0;
  double acc = 0;
  for (uint32_t t = p.min_zeros; t < kNlzSlots; ++t) {
    if (v[t] <= 0 || v[t] >= b) continue;
    const double w = std::exp(-bp.alpha * std::abs(v[t] - target) / b);
    acc += w * (std::log(b * std::log(b / v[t])) + t * std::numbers::ln2);
    wsum += w;
  }
  if (wsum <= 0) return std::nullopt;
  return std::exp(acc / wsum);
}

double dlc(const NlzProfile& p, const BlendParams& bp) noexcept {
  const double b = p.buckets;
  const double v = p.frame_empty();
  const double low = bp.lcmin_zone_low * b;
  const double high = bp.lcmin_zone_high * b;
  const double base = lcmin(p);
  if (v > high) return base;
  const auto blend = dlc_tier_blend(p, bp);
  if (!blend) return base;
  if (v <= low || base <= 0) return *blend;
  const double f = (v - low) / (high - low);
  return std::exp((1 - f) * std::log(*blend) + f * std::log(base));
}

double mean(const NlzProfile& p, const HistoryCorrection* hc) noexcept {
  const double count = p.filled;
  if (count <= 0) return 0.0;
  const double b = p.buckets;
  double sum = 0;
  const bool corrected = hc != nullptr && !p.history.empty() &&
                         hc->per_state.size() == p.history_states();
  if (corrected) {
    const uint32_t states = p.history_states();
    for (uint32_t i = 0; i < kNlzSlots; ++i) {
      if (p.n[i] == 0) continue;
      for (uint32_t s = 0; s < states; ++s) {
        const double c = p.history_count(i, s);
        if (c != 0) sum += c * std::exp2(-(i + hc->per_state[p.effective_state(i, s)]));
      }
    }
  } else {
    for (uint32_t i = 0; i < kNlzSlots; ++i) {
      if (p.n[i] != 0) sum += std::ldexp(p.n[i], -static_cast<int>(i));
    }
  }
  return (count + b) / (2 * b) * 2 * count * count / sum;
}

double hmean(const NlzProfile& p) noexcept {
  const double count = p.filled;
  if (count <= 0) return 0.0;
  double sum = 0;
  for (uint32_t i = 0; i < kNlzSlots; ++i) {
    if (p.n[i] != 0) sum += std::ldexp(p.n[i], -static_cast<int>(i));
  }
  return alpha_m(p.buckets) * 2 * count * count / sum;
}

double gmean(const NlzProfile& p) noexcept {
  const double count = p.filled;
  if (count <= 0) return 0.0;
  const double b = p.buckets;
  double nlz_sum = 0;
  for (uint32_t i = 0; i < kNlzSlots; ++i) nlz_sum += p.n[i] * i;
  // 2^63 / GM(2^(63 - nlz)) = 2^mean(nlz).
  return (count + b) / (2 * b) * 2 * count * std::exp2(nlz_sum / count);
}

double hll(const NlzProfile& p) noexcept {
  const double b = p.buckets;
  if (p.empty > 0) {
    const double linear = b * std::log(b / p.empty);
    if (linear < 2.5 * b) return linear;
  }
  // Weights are 2^-NLZ, so an empty register weighs the same as NLZ 0. The
  // raw value runs about half the truth; a CF table absorbs that, and the
  // mismatch with the linear branch is what makes the transition bulge.
  double sum = p.empty;
  for (uint32_t i = 0; i < kNlzSlots; ++i) {
    if (p.n[i] != 0) sum += std::ldexp(p.n[i], -static_cast<int>(i));
  }
  return alpha_m(b) * b * b / sum;
}

double hybrid_blend(double lcmin_value, double mean_cf, double buckets,
                    const BlendParams& bp) noexcept {
  const double low = bp.hybrid_low * buckets;
  const double high = bp.hybrid_high * buckets;
  if (lcmin_value <= low) return lcmin_value;
  if (lcmin_value >= high) return mean_cf;
  const double t = std::log(lcmin_value / low) / std::log(high / low);
  return (1 - t) * lcmin_value + t * mean_cf;
}

std::optional<double> history_lc_level(const NlzProfile& p, uint32_t level) noexcept {
  const LevelCounts c = level_counts(p, level);
  if (c.population <= 0) return std::nullopt;
  const double b = p.buckets;
  return std::ldexp(b * std::log(c.population / std::max(c.unset, kMinFree)),
                    static_cast<int>(level) + 1);
}

std::optional<double> history_lc(const NlzProfile& p, const BlendParams& bp) noexcept {
  const uint32_t h = p.history_bits;
  if (h == 0 || p.history.empty() || p.filled <= 0) return std::nullopt;
  // Levels below the eeMask floor may have been filtered out.
  const uint32_t first = p.history_floor();
  const double b = p.buckets;
  double wsum = 0;
  double acc = 0;
  for (uint32_t j = first; j + 1 < kNlzSlots; ++j) {
    const auto [population, unset] = level_counts(p, j);
    if (population <= 0 || unset <= 0 || unset >= population) continue;
    const double u = unset / population;
    const double w = population / b * std::exp(-bp.alpha * std::abs(u - bp.v_target));
    const double e = std::ldexp(b * std::log(population / unset), static_cast<int>(j) + 1);
    acc += w * std::log(e);
    wsum += w;
  }
  if (wsum <= 0) return std::nullopt;
  return std::exp(acc / wsum);
}

double ldlc(const NlzProfile& p, const BlendParams& bp) noexcept {
  const double d = dlc(p, bp);
  // In the LCmin regime the history population is too thin to help.
  if (p.frame_empty() > bp.lcmin_zone_low * p.buckets) return d;
  const auto hc = history_lc(p, bp);
  if (!hc) return d;
  return (1 - bp.ldlc_hc_weight) * d + bp.ldlc_hc_weight * *hc;
}

}  // namespace est

double Estimator::raw(Method m, const NlzProfile& p) const {
  const HistoryCorrection* hc = history_ ? &*history_ : nullptr;
  switch (m) {
    case Method::kLc:
      return est::lc(p);
    case Method::kLcMin:
      return est::lcmin(p);
    case Method::kDlc:
      return est::dlc(p, params_);
    case Method::kDlcBest:
      return est::dlc_best(p);
    case Method::kMean:
      return est::mean(p);
    case Method::kHMean:
      return est::hmean(p);
    case Method::kGMean:
      return est::gmean(p);
    case Method::kHll:
      return est::hll(p);
    case Method::kHybrid:
    case Method::kHybridN: {
      const Method dep = m == Method::kHybrid ? Method::kMean : Method::kMeanN;
      const double lm = est::lcmin(p);
      if (lm <= params_.hybrid_low * p.buckets) return lm;
      const double mc = corrected(dep, est::mean(p, dep == Method::kMeanN ? hc : nullptr), p);
      return est::hybrid_blend(lm, mc, p.buckets, params_);
    }
    case Method::kMeanN:
      return est::mean(p, hc);
    case Method::kHc:
      return est::history_lc(p, params_).value_or(0.0);
    case Method::kLdlc:
      return est::ldlc(p, params_);
  }
  return 0.0;
}

double Estimator::corrected(Method m, double raw_value, const NlzProfile& p) const {
  const CfTable* table = tables_.find(m);
  if (table == nullptr || table->empty()) return raw_value;
  std::optional<double> seed;
  if (dlc_seed_) seed = est::dlc(p, params_);
  return apply_cf(*table, raw_value, seed).value;
}

double Estimator::estimate(Method m, const NlzProfile& p, std::optional<uint64_t> adds) const {
  double v = corrected(m, raw(m, p), p);
  if (clamp_ && adds) v = std::min(v, static_cast<double>(*adds));
  return v;
}

}  // namespace dynsketch
