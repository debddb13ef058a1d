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

#ifndef DYNSKETCH_CALIBRATION_HPP_
#define DYNSKETCH_CALIBRATION_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dynsketch/config.hpp"
#include "dynsketch/correction.hpp"
#include "dynsketch/estimators.hpp"
#include "dynsketch/profile.hpp"

namespace dynsketch {

// 1, then max(prev + 1, ceil(prev * 1.01)) through max_cardinality.
std::vector<uint64_t> build_schedule(uint64_t max_cardinality);

struct CheckpointStats {
  uint64_t cardinality = 0;
  double mean_signed = 0;
  double mean_abs = 0;
  double stddev = 0;
  uint64_t n = 0;
};

struct ErrorReport {
  std::string method;
  std::vector<CheckpointStats> rows;

  // Unweighted mean of mean_abs over checkpoints.
  double log_weighted() const noexcept;
  // sum(c * mean_abs) / sum(c).
  double card_weighted() const noexcept;
  double peak_abs() const noexcept;
  // Row whose cardinality is closest to c, or nullptr when empty.
  const CheckpointStats* nearest(double c) const noexcept;
};

struct NamedEstimator {
  std::string name;
  std::function<double(const NlzProfile&)> fn;
};

// One estimator per method, evaluated through `e` (tables included).
std::vector<NamedEstimator> named_estimators(const Estimator& e,
                                             const std::vector<Method>& methods);

struct HighComplexityOptions {
  SketchConfig cfg;
  uint64_t instances = 1;
  uint64_t max_cardinality = 1;
  uint64_t seed = 0;
  unsigned workers = 1;
};

// Feeds each instance a duplicate-free stream and records relative errors
// at every checkpoint. Output is independent of `workers`.
std::vector<ErrorReport> run_high_complexity(const HighComplexityOptions& opts,
                                             const std::vector<NamedEstimator>& estimators);

struct LowComplexityOptions {
  SketchConfig cfg;
  uint64_t instances = 1;
  uint64_t pool = 1;
  uint64_t iterations = 1;
  uint64_t seed = 0;
  unsigned workers = 1;
};

// Draws from a fixed pool with min(u1, u2) skew; every add while the true
// count sits on a checkpoint contributes one sample.
std::vector<ErrorReport> run_low_complexity(const LowComplexityOptions& opts,
                                            const std::vector<NamedEstimator>& estimators);

// Pool index for one skewed draw: floor(min(u1, u2) / 2^64 * pool).
uint64_t skewed_index(uint64_t u1, uint64_t u2, uint64_t pool) noexcept;

struct BenchOptions {
  SketchConfig cfg;
  uint64_t instances = 1;
  uint64_t adds_per_instance = 0;
  // Untimed adds per instance used to reach steady state first.
  uint64_t warmup_per_instance = 0;
  uint64_t seed = 0;
};

struct BenchResult {
  uint64_t adds = 0;
  double seconds = 0;
  double adds_per_second = 0;
  uint64_t early_exits = 0;
  bool pregenerated = false;
};

inline constexpr uint64_t kBenchBufferLimit = uint64_t{1} << 26;

// Single-threaded round-robin add loop with no estimation.
BenchResult benchmark_add_path(const BenchOptions& opts);

struct MergeTestOptions {
  SketchConfig cfg;
  std::vector<uint32_t> ways{1, 8, 64};
  uint64_t cardinality = 1;
  uint64_t trials = 1;
  uint64_t seed = 0;
  Method method = Method::kDlc;
};

struct MergeRow {
  uint32_t ways = 0;
  double merged_signed = 0;
  double merged_abs = 0;
  double single_signed = 0;
  double single_abs = 0;
  uint64_t trials = 0;
};

// Splits one stream into `ways` contiguous blocks, merges the block
// sketches, and compares with a single sketch fed the whole stream.
std::vector<MergeRow> run_merge_test(const MergeTestOptions& opts, const Estimator& e);

// CSV with header `cardinality,method,meanSigned,meanAbs,stddev,n` and one
// `#agg,<method>,<logWeighted>,<cardWeighted>,<peak>` line per report.
void write_report_csv(std::ostream& out, const std::vector<ErrorReport>& reports);
std::vector<ErrorReport> read_report_csv(std::istream& in);

// --- table generation ---

// factor = 1 / (1 + meanSigned) per checkpoint.
CfTable cf_table_from_report(const ErrorReport& report, Method method, const SketchConfig& cfg);

CfTable generate_cf_table(const SketchConfig& cfg, Method method, uint64_t instances,
                          uint64_t max_cardinality, uint64_t seed, unsigned workers = 1);

// Additive per-state corrections: minus the mean offset of registers in
// each state from the mean NLZ of their sketch, over steady-state profiles.
HistoryCorrection generate_history_correction(const SketchConfig& cfg, uint64_t instances,
                                              uint64_t seed, unsigned workers = 1);

struct CalibrationRequest {
  SketchConfig cfg;
  std::vector<Method> methods;
  uint64_t instances = 100;
  uint64_t max_cardinality = 1;
  uint64_t seed = 0;
  unsigned workers = 1;
  BlendParams params;
  // Seeds CF iteration with DLC; defaults on for 3-bit registers.
  std::optional<bool> dlc_seed;
};

struct CalibrationResult {
  CfSet tables;
  std::optional<HistoryCorrection> history;

  // An Estimator configured with everything generated here.
  Estimator estimator(const BlendParams& params = {}) const;
  bool dlc_seed = false;
};

// Generates tables for the requested methods and their dependencies.
// Methods whose own input is corrected (Hybrid) are calibrated in a second
// pass once the dependency tables exist.
CalibrationResult calibrate(const CalibrationRequest& req);

}  // namespace dynsketch

#endif  // DYNSKETCH_CALIBRATION_HPP_
