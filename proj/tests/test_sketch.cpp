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

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "dynsketch/calibration.hpp"
#include "dynsketch/sketch.hpp"

using namespace dynsketch;

namespace {

// Uncompressed model: the largest rank seen per bucket, -1 when unseen.
struct ReferenceRegisters {
  uint32_t buckets;
  std::vector<int> max_rank;

  explicit ReferenceRegisters(uint32_t b) : buckets(b), max_rank(b, -1) {}

  void add(uint64_t raw) {
    const uint64_t h = mix13(raw);
    const uint32_t k = static_cast<uint32_t>(std::countr_zero(buckets));
    const uint64_t high = h >> k;
    int rank = high == 0 ? static_cast<int>(64 - k) : std::countl_zero(high) - static_cast<int>(k);
    rank = std::min(rank, 62);
    int& slot = max_rank[h & (buckets - 1)];
    slot = std::max(slot, rank);
  }
};

// A hash landing in `bucket` with exactly `nlz` leading zeros above the
// selector bits (bitmask addressing, power-of-two buckets).
uint64_t crafted_hash(uint32_t bucket, uint32_t nlz, uint32_t buckets) {
  const uint32_t k = static_cast<uint32_t>(std::countr_zero(buckets));
  return (uint64_t{1} << (63 - nlz)) | (uint64_t{1} << k) | bucket;
}

Sketch random_sketch(const SketchConfig& cfg, uint64_t seed, uint64_t n) {
  Sketch s(cfg);
  Xoshiro256pp rng(seed);
  for (uint64_t i = 0; i < n; ++i) s.add(rng());
  return s;
}

}  // namespace

TEST_SUITE("sketch") {

TEST_CASE("register array sizes per layout") {
  CHECK(Sketch(SketchConfig::of(SketchType::kDLL4, 2048)).register_bytes() == 1024);
  CHECK(Sketch(SketchConfig::of(SketchType::kLL6, 2048)).register_bytes() == 2048);
  CHECK(Sketch(SketchConfig::of(SketchType::kUDLL6, 2048)).register_bytes() == 1640);
  // 8 DLL4 fields per word with no spare bits.
  const auto cfg = SketchConfig::of(SketchType::kDLL4, 2048);
  CHECK(cfg.registers_per_word() * cfg.slot_bits() == 32);
}

TEST_CASE("fresh sketch state") {
  Sketch s(SketchConfig::of(SketchType::kDLL4, 2048));
  CHECK(s.min_zeros() == 0);
  CHECK(s.ee_mask() == ~uint64_t{0});
  CHECK(s.micro_index() == 0);
  for (std::size_t j = 0; j < 2048; ++j) REQUIRE(s.register_value(j) == 0);
}

TEST_CASE("invalid configurations are rejected") {
  auto bad_buckets = SketchConfig::of(SketchType::kDLL4, 2048);
  bad_buckets.bucket_count = 3000;
  CHECK_THROWS_AS(Sketch{bad_buckets}, std::invalid_argument);
  auto tiny = SketchConfig::of(SketchType::kDLL4, 2048);
  tiny.bucket_count = 32;
  CHECK_THROWS_AS(Sketch{tiny}, std::invalid_argument);
  auto odd_layout = SketchConfig::of(SketchType::kDLL4, 2048);
  odd_layout.bits_per_register = 5;
  CHECK_THROWS_AS(Sketch{odd_layout}, std::invalid_argument);
  auto modulo = SketchConfig::of(SketchType::kDLL4, 3000, Addressing::kModulo);
  CHECK_NOTHROW(Sketch{modulo});
}

TEST_CASE("packed registers round trip every field value") {
  for (uint32_t width : {3u, 4u, 5u, 6u, 7u, 8u}) {
    PackedRegisters regs(1000, width);
    Xoshiro256pp rng(width);
    std::vector<uint32_t> model(1000, 0);
    for (int step = 0; step < 20000; ++step) {
      const std::size_t j = rng() % 1000;
      const uint32_t v = static_cast<uint32_t>(rng() % (1u << width));
      regs.set(j, v);
      model[j] = v;
    }
    for (std::size_t j = 0; j < 1000; ++j) REQUIRE(regs.get(j) == model[j]);
  }
}

TEST_CASE("a single add fills one register") {
  Sketch s(SketchConfig::of(SketchType::kDLL4, 2048));
  s.add(12345);
  int filled = 0;
  for (std::size_t j = 0; j < 2048; ++j) filled += s.register_value(j) != 0;
  CHECK(filled == 1);
  CHECK(s.min_zeros() == 0);
  CHECK(std::popcount(s.micro_index()) == 1);
}

TEST_CASE("adding a value twice is idempotent") {
  for (auto type : {SketchType::kDLL4, SketchType::kDLL3, SketchType::kUDLL6, SketchType::kLL6}) {
    Sketch once = random_sketch(SketchConfig::of(type, 256), 4, 5000);
    Sketch twice = once;
    once.add(777);
    twice.add(777);
    twice.add(777);
    CHECK(once.same_state(twice));
  }
}

TEST_CASE("eeMask rejects high hashes without touching registers") {
  const auto cfg = SketchConfig::of(SketchType::kDLL4, 2048);
  std::vector<uint32_t> regs(2048, 3);
  Sketch s = Sketch::from_registers(cfg, 20, regs);
  CHECK(s.ee_mask() == (~uint64_t{0} >> 20));
  const Sketch before = s;
  s.add_hash(uint64_t{1} << 63);
  CHECK(s.early_exits() == 1);
  CHECK(s.same_state(before));
}

TEST_CASE("promotion from a uniform floor") {
  const auto cfg = SketchConfig::of(SketchType::kDLL4, 256);
  std::vector<uint32_t> ones(256, 1);
  Sketch s = Sketch::from_registers(cfg, 0, ones);
  CHECK(s.min_zero_count() == 0);
  CHECK(s.count_and_decrement() == 256);
  CHECK(s.min_zeros() == 1);
  for (std::size_t j = 0; j < 256; ++j) REQUIRE(s.register_value(j) == 0);
  CHECK_THROWS_AS(s.count_and_decrement(), std::logic_error);
}

TEST_CASE("promotions chain while the floor stays empty") {
  const auto cfg = SketchConfig::of(SketchType::kDLL4, 256);
  std::vector<uint32_t> twos(256, 2);
  Sketch s = Sketch::from_registers(cfg, 0, twos);
  CHECK(s.count_and_decrement() == 256);
  CHECK(s.min_zeros() == 2);
  CHECK(s.ee_mask() == (~uint64_t{0} >> 2));
}

TEST_CASE("DLL3 logs half the ceiling population on promotion") {
  const auto cfg = SketchConfig::of(SketchType::kDLL3, 256);
  std::vector<uint32_t> regs(256, 1);
  for (int j = 0; j < 10; ++j) regs[j] = 7;
  Sketch s = Sketch::from_registers(cfg, 0, regs);
  s.count_and_decrement();
  const auto& log = s.overflow_log();
  // Clamped registers belong to the tier just above the old ceiling.
  REQUIRE(log.size() == 8);
  CHECK(log[7] == 5);
  CHECK(std::count(log.begin(), log.end(), 0u) == 7);
}

TEST_CASE("floor and ranks never move backwards") {
  const auto cfg = SketchConfig::of(SketchType::kDLL4, 512);
  Sketch s(cfg);
  Xoshiro256pp rng(21);
  std::vector<int> prev = s.absolute_nlz();
  uint32_t prev_mz = 0;
  for (int round = 0; round < 200; ++round) {
    for (int i = 0; i < 1000; ++i) s.add(rng());
    const auto now = s.absolute_nlz();
    REQUIRE(s.min_zeros() >= prev_mz);
    for (std::size_t j = 0; j < now.size(); ++j) REQUIRE(now[j] >= prev[j]);
    prev = now;
    prev_mz = s.min_zeros();
  }
  // Amortization bound on promotions.
  CHECK(s.promotions() <= std::log2(200000.0) + 2);
}

TEST_CASE("adversarial uniform raise drives promotions in lockstep") {
  const uint32_t b = 256;
  Sketch s(SketchConfig::of(SketchType::kDLL4, b));
  uint32_t last = 0;
  for (uint32_t level = 0; level < 30; ++level) {
    for (uint32_t j = 0; j < b; ++j) s.add_hash(crafted_hash(j, level, b));
    // Every register now sits at `level`, so the floor is level + 1.
    REQUIRE(s.min_zeros() == level + 1);
    REQUIRE(s.min_zeros() >= last);
    last = s.min_zeros();
    for (const int v : s.absolute_nlz()) REQUIRE(v == static_cast<int>(level));
  }
}

TEST_CASE("DLL4 decodes to the uncompressed ranks below overflow") {
  const uint32_t b = 2048;
  // The ceiling is never below 14, so ranks up to 14 must decode exactly;
  // larger ranks may have been clamped but never past the truth.
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    ReferenceRegisters ref(b);
    Sketch dll(SketchConfig::of(SketchType::kDLL4, b));
    Sketch ll(SketchConfig::of(SketchType::kLL6, b));
    Xoshiro256pp rng(seed);
    for (int i = 0; i < 100000; ++i) {
      const uint64_t x = rng();
      ref.add(x);
      dll.add(x);
      ll.add(x);
    }
    CHECK(ll.absolute_nlz() == ref.max_rank);
    const auto decoded = dll.absolute_nlz();
    for (uint32_t j = 0; j < b; ++j) {
      if (ref.max_rank[j] <= 14) {
        REQUIRE(decoded[j] == ref.max_rank[j]);
      } else {
        REQUIRE(decoded[j] >= 14);
        REQUIRE(decoded[j] <= ref.max_rank[j]);
      }
    }
  }
}

TEST_CASE("DLL4 and LL6 profiles agree when nothing overflowed") {
  int compared = 0;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Sketch dll(SketchConfig::of(SketchType::kDLL4, 2048));
    Sketch ll(SketchConfig::of(SketchType::kLL6, 2048));
    Xoshiro256pp rng(seed);
    for (int i = 0; i < 10000; ++i) {
      const uint64_t x = rng();
      dll.add(x);
      ll.add(x);
    }
    if (ll.profile().max_nlz() > 14) continue;
    ++compared;
    CHECK(dll.profile() == ll.profile());
  }
  CHECK(compared >= 5);
}

TEST_CASE("profile of tiny sketches") {
  Sketch s(SketchConfig::of(SketchType::kDLL4, 2048));
  NlzProfile p = s.profile();
  CHECK(p.empty == 2048);
  CHECK(p.filled == 0);
  for (const double c : p.n) REQUIRE(c == 0);

  s.add_hash(crafted_hash(17, 3, 2048));
  p = s.profile();
  CHECK(p.n[3] == 1);
  CHECK(p.empty == 2047);
  CHECK(p.filled + p.empty == 2048);
}

TEST_CASE("micro estimate values") {
  const auto cfg = SketchConfig::of(SketchType::kDLL4, 2048);
  std::vector<uint32_t> regs(2048, 0);
  CHECK(Sketch::from_registers(cfg, 0, regs, 0).micro_estimate() == 0);
  CHECK(Sketch::from_registers(cfg, 0, regs, 0xffffffffULL).micro_estimate() ==
        doctest::Approx(64 * std::log(2.0)));
  CHECK(Sketch::from_registers(cfg, 0, regs, ~uint64_t{0}).micro_estimate() ==
        doctest::Approx(64 * std::log(128.0)));
}

TEST_CASE("lazy allocation waits for the MicroIndex") {
  auto cfg = SketchConfig::of(SketchType::kDLL4, 2048);
  cfg.lazy_allocation = true;
  Sketch s(cfg);
  CHECK_FALSE(s.allocated());
  Xoshiro256pp rng(8);
  while (std::popcount(s.micro_index()) < static_cast<int>(kMicroAllocationThreshold) - 1) {
    s.add(rng());
    REQUIRE_FALSE(s.allocated());
  }
  while (!s.allocated()) s.add(rng());
  CHECK(std::popcount(s.micro_index()) >= static_cast<int>(kMicroAllocationThreshold));
}

TEST_CASE("eeMask never changes the resulting state") {
  for (auto type : {SketchType::kDLL4, SketchType::kDLL3, SketchType::kUDLL5,
                    SketchType::kUDLL6, SketchType::kUDLL7}) {
    auto on = SketchConfig::of(type, 512);
    auto off = on;
    off.ee_mask = false;
    Sketch a(on), b(off);
    Xoshiro256pp rng(static_cast<uint64_t>(type) + 100);
    for (int i = 0; i < 200000; ++i) {
      const uint64_t x = rng();
      a.add(x);
      b.add(x);
    }
    CHECK(a.min_zeros() > 0);
    CHECK(a.registers() == b.registers());
    CHECK(a.min_zeros() == b.min_zeros());
    CHECK(a.micro_index() == b.micro_index());
    CHECK(a.overflow_log() == b.overflow_log());
    CHECK(a.early_exits() > 0);
    CHECK(b.early_exits() == 0);
  }
}

TEST_CASE("history bits record sub-rank events") {
  const uint32_t b = 256;
  Sketch s(SketchConfig::of(SketchType::kUDLL6, b));
  auto reg = [&] { return s.register_value(5); };
  s.add_hash(crafted_hash(5, 5, b));
  CHECK(reg() == (6u << 2));
  s.add_hash(crafted_hash(5, 4, b));  // rank - 1
  CHECK(reg() == ((6u << 2) | 1u));
  s.add_hash(crafted_hash(5, 7, b));  // rise by two: old rank 5 is rank - 2
  CHECK(reg() == ((8u << 2) | 2u));
  s.add_hash(crafted_hash(5, 2, b));  // outside the window
  CHECK(reg() == ((8u << 2) | 2u));
  s.add_hash(crafted_hash(5, 12, b));  // rise beyond the window clears history
  CHECK(reg() == (13u << 2));
}

TEST_CASE("merge algebra holds bit-exactly") {
  for (auto type : {SketchType::kDLL4, SketchType::kDLL3, SketchType::kUDLL6, SketchType::kLL6}) {
    const auto cfg = SketchConfig::of(type, 256);
    for (uint64_t t = 0; t < 20; ++t) {
      const Sketch a = random_sketch(cfg, 3 * t + 1, 100 + 997 * t);
      const Sketch b = random_sketch(cfg, 3 * t + 2, 50 + 3001 * t);
      const Sketch c = random_sketch(cfg, 3 * t + 3, 7 + 421 * t);
      const Sketch empty(cfg);
      REQUIRE(merged(a, b).same_state(merged(b, a)));
      REQUIRE(merged(merged(a, b), c).same_state(merged(a, merged(b, c))));
      REQUIRE(merged(a, empty).same_state(a));
      REQUIRE(merged(empty, a).same_state(a));
      REQUIRE(merged(a, a).same_state(a));
      const Sketch m = merged(a, b);
      // Promotion may continue past the larger input floor.
      REQUIRE(m.min_zeros() >= std::max(a.min_zeros(), b.min_zeros()));
      REQUIRE(m.micro_index() == (a.micro_index() | b.micro_index()));
    }
  }
}

TEST_CASE("DLL3 merge is associative when merging forces promotion") {
  // Small inputs whose union fills every register at floor 0, so the merge
  // itself promotes; overflow counts must not depend on grouping.
  const auto cfg = SketchConfig::of(SketchType::kDLL3, 256);
  int promoted = 0;
  for (uint64_t t = 0; t < 200; ++t) {
    const Sketch a = random_sketch(cfg, 5 * t + 1, 300 + 7 * t);
    const Sketch b = random_sketch(cfg, 5 * t + 2, 900 + 5 * t);
    const Sketch c = random_sketch(cfg, 5 * t + 3, 200 + 11 * t);
    const Sketch ab = merged(a, b);
    promoted += ab.min_zeros() > std::max(a.min_zeros(), b.min_zeros());
    REQUIRE(merged(ab, c).snapshot() == merged(a, merged(b, c)).snapshot());
    REQUIRE(merged(ab, c).snapshot() == merged(merged(c, b), a).snapshot());
  }
  CHECK(promoted > 0);
}

TEST_CASE("merge of disjoint parts stays close to one sketch") {
  MergeTestOptions o;
  o.cfg = SketchConfig::of(SketchType::kDLL4, 2048);
  o.ways = {8};
  o.cardinality = 10000000;
  o.trials = 4;
  o.seed = 3;
  const auto rows = run_merge_test(o, Estimator{});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].merged_signed - rows[0].single_signed > -0.003);
  CHECK(rows[0].merged_signed - rows[0].single_signed <= 0);
}

TEST_CASE("merge rejects mismatched configurations") {
  Sketch a(SketchConfig::of(SketchType::kDLL4, 256));
  Sketch b(SketchConfig::of(SketchType::kDLL4, 512));
  CHECK_THROWS_AS(a.merge(b), std::invalid_argument);
}

TEST_CASE("snapshots round trip bit-exactly") {
  for (auto type : {SketchType::kLL6, SketchType::kDLL4, SketchType::kDLL3, SketchType::kUDLL5,
                    SketchType::kUDLL6, SketchType::kUDLL7}) {
    const Sketch s = random_sketch(SketchConfig::of(type, 1024), 77, 300000);
    const auto bytes = s.snapshot();
    CHECK(bytes[0] == 'D');
    CHECK(bytes[3] == '1');
    const Sketch back = Sketch::from_snapshot(bytes);
    CHECK(back.same_state(s));
    CHECK(back.snapshot() == bytes);
  }
  std::vector<uint8_t> junk{'X', 'S', 'K', '1', 0, 0};
  CHECK_THROWS(Sketch::from_snapshot(junk));
  auto truncated = Sketch(SketchConfig::of(SketchType::kDLL4, 256)).snapshot();
  truncated.pop_back();
  CHECK_THROWS(Sketch::from_snapshot(truncated));
}

}  // TEST_SUITE
