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

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "dynsketch/calibration.hpp"
#include "dynsketch/correction.hpp"

using namespace dynsketch;
using doctest::Approx;

namespace {

CfTable table_of(std::vector<double> keys, std::vector<double> factors) {
  CfTable t;
  t.method = Method::kMean;
  t.buckets = 256;
  t.bits = 4;
  t.keys = std::move(keys);
  t.factors = std::move(factors);
  return t;
}

}  // namespace

TEST_SUITE("correction") {

TEST_CASE("lookup interpolates in log cardinality") {
  const auto t = table_of({10, 100, 1000}, {1.2, 1.0, 0.9});
  CHECK(t.lookup(100) == 1.0);
  // sqrt(10 * 100) sits halfway between the first two keys in log space.
  CHECK(t.lookup(std::sqrt(1000.0)) == Approx(1.1));
  CHECK(t.lookup(0) == 1.2);
  CHECK(t.lookup(3) == 1.2);
  CHECK(CfTable{}.lookup(12345) == 1.0);
}

TEST_CASE("lookup beyond the table halves the estimate") {
  const auto t = table_of({1, 10, 100, 1000}, {1.3, 1.1, 0.95, 1.05});
  CHECK(t.lookup(2000) == Approx(t.lookup(1000)));
  CHECK(t.lookup(1500) == Approx(t.lookup(750)));
  CHECK(t.lookup(6000) == Approx(t.lookup(750)));
  CHECK(t.table_max() == 1000);
}

TEST_CASE("iterative correction") {
  const auto flat = table_of({1, 1e6}, {1, 1});
  const auto one = apply_cf(flat, 4321);
  CHECK(one.value == 4321);
  CHECK(one.iterations == 1);
  // A factor that depends on the estimate needs more passes.
  const auto slope = table_of({100, 10000}, {1.2, 0.8});
  const auto res = apply_cf(slope, 400);
  CHECK(res.iterations >= 2);
  CHECK(res.iterations <= kMaxCfIterations);
  // Fixed point: value = raw * factor(value) to the tolerance.
  CHECK(res.value == Approx(400 * slope.lookup(res.value)).epsilon(1e-3));
  // Seeding changes only the starting point.
  const auto seeded = apply_cf(slope, 400, 400 * slope.lookup(400));
  CHECK(seeded.value == Approx(res.value).epsilon(1e-3));
}

TEST_CASE("overflow correction hand value and saturation") {
  CHECK(std::abs(corrected_cumulative(200, 16, 256) - (200 + 56 * (1 - std::exp(-1.0 / 16)))) <
        1e-9);
  CHECK(std::abs(corrected_cumulative(200, 16, 256) - 203.39) < 5e-3);
  CHECK(corrected_cumulative(256, 40, 256) == 256);
  CHECK(corrected_cumulative(100, 0, 256) == 100);
}

TEST_CASE("overflow correction bounds on random inputs") {
  Xoshiro256pp rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    NlzProfile p;
    p.buckets = 256;
    double filled = 0;
    for (uint32_t t = 0; t < 20 && filled < 256; ++t) {
      const double c = std::min<double>(256 - filled, static_cast<double>(rng() % 60));
      p.n[t] = c;
      filled += c;
    }
    p.filled = filled;
    p.empty = 256 - filled;
    std::vector<uint32_t> zero(20, 0);
    REQUIRE(correct_overflow(p, zero) == p);
    std::vector<uint32_t> log(20, 0);
    for (auto& x : log) x = rng() % 3 == 0 ? static_cast<uint32_t>(rng() % 40) : 0;
    const NlzProfile q = correct_overflow(p, log);
    for (uint32_t t = 0; t < kNlzSlots; ++t) {
      const double raw = p.cumulative(t);
      const double corr = q.cumulative(t);
      REQUIRE(corr >= raw - 1e-9);
      REQUIRE(corr <= 256 + 1e-9);
      REQUIRE(q.n[t] >= -1e-9);
    }
    REQUIRE(q.filled + q.empty == Approx(256));
  }
}

TEST_CASE("CF table files round trip") {
  auto a = table_of({1, 2, 3.5, 1e6}, {1.000123456, 0.99, 1.5, 0.123456789});
  auto b = a;
  b.method = Method::kHybrid;
  std::stringstream buf;
  write_cf_table(buf, a);
  write_cf_table(buf, b);
  const std::string text = buf.str();
  CHECK(text.rfind("# dynsketch-cf v1 method=mean buckets=256 bits=4 history=0\n", 0) == 0);
  const auto back = read_cf_tables(buf);
  REQUIRE(back.size() == 2);
  CHECK(back[0].keys == a.keys);
  REQUIRE(back[0].factors.size() == a.factors.size());
  for (std::size_t i = 0; i < a.factors.size(); ++i) {
    CHECK(back[0].factors[i] == Approx(a.factors[i]).epsilon(1e-8));
  }
  CHECK(back[1].method == Method::kHybrid);
  std::stringstream again;
  write_cf_table(again, back[0]);
  write_cf_table(again, back[1]);
  CHECK(again.str() == text);
}

TEST_CASE("CF readers reject malformed files") {
  auto parse = [](const std::string& s) {
    std::istringstream in(s);
    return read_cf_tables(in);
  };
  CHECK_THROWS(parse("1\t1.0\n"));
  CHECK_THROWS(parse("# dynsketch-cf v1 method=nope buckets=1 bits=4 history=0\n"));
  CHECK_THROWS(parse("# dynsketch-cf v1 method=mean buckets=1 bits=4 history=0\n2\t1\n2\t1\n"));
  CHECK_THROWS(parse("# dynsketch-cf v1 method=mean buckets=1 bits=4 history=0\n1\tx\n"));
  CHECK_THROWS(parse("# dynsketch-cf v2 method=mean\n"));
}

TEST_CASE("history tables round trip and need 2^h rows") {
  HistoryCorrection hc{2, {-2.5, -0.75, -0.25, 0.5}};
  std::stringstream buf;
  write_history_correction(buf, hc, SketchConfig::of(SketchType::kUDLL6, 2048));
  CHECK(read_history_correction(buf) == hc);
  std::istringstream short_in("# dynsketch-history v1 buckets=2048 bits=6 history=2\n0\t1\n1\t2\n");
  CHECK_THROWS(read_history_correction(short_in));
  std::istringstream unordered(
      "# dynsketch-history v1 buckets=2048 bits=5 history=1\n1\t1\n0\t2\n");
  CHECK_THROWS(read_history_correction(unordered));
}

TEST_CASE("generated tables span the schedule and remove bias") {
  const auto cfg = SketchConfig::of(SketchType::kDLL4, 256);
  const uint64_t max_card = uint64_t{1} << 16;
  const CfTable t = generate_cf_table(cfg, Method::kMean, 2000, max_card, 7, 8);
  CHECK(t.keys == [&] {
    std::vector<double> k;
    for (const uint64_t c : build_schedule(max_card)) k.push_back(static_cast<double>(c));
    return k;
  }());
  CHECK(t.buckets == 256);
  CHECK(t.bits == 4);
  for (std::size_t i = 1; i + 1 < t.keys.size(); ++i) REQUIRE(t.keys[i] >= t.keys[i - 1] * 1.01);

  // Fresh seed: corrected Mean has little residual bias inside the table.
  Estimator e;
  e.set_table(t);
  HighComplexityOptions o;
  o.cfg = cfg;
  o.instances = 2000;
  o.max_cardinality = max_card;
  o.seed = 8;
  o.workers = 8;
  const auto rep = run_high_complexity(o, named_estimators(e, {Method::kMean}))[0];
  double bias = 0;
  int rows = 0;
  for (const auto& r : rep.rows) {
    if (r.cardinality < 2 * 256 || r.cardinality > max_card / 4) continue;
    bias += r.mean_signed;
    ++rows;
  }
  CHECK(std::abs(bias / rows) < 0.005);

  // Every corrected estimate converges inside the iteration cap.
  for (double c = 300; c < 60000; c *= 1.37) {
    const double raw = c / t.lookup(c);
    const auto res = apply_cf(t, raw);
    CHECK(res.iterations <= kMaxCfIterations);
  }
}

TEST_CASE("calibrated factors repeat per doubling") {
  const auto cfg = SketchConfig::of(SketchType::kDLL4, 256);
  const CfTable t = generate_cf_table(cfg, Method::kMean, 400, uint64_t{1} << 18, 9);
  const double top = t.table_max();
  for (double c = top / 4; c <= top / 2; c *= 1.05) {
    REQUIRE(t.lookup(c) == Approx(t.lookup(2 * c)).epsilon(0.01));
  }
}

TEST_CASE("history corrections have one entry per state") {
  for (auto [type, h] : {std::pair{SketchType::kUDLL5, 1u}, std::pair{SketchType::kUDLL6, 2u},
                         std::pair{SketchType::kUDLL7, 3u}}) {
    const auto hc = generate_history_correction(SketchConfig::of(type, 256), 40, 3);
    CHECK(hc.history_bits == h);
    CHECK(hc.per_state.size() == (std::size_t{1} << h));
  }
  CHECK_THROWS_AS(generate_history_correction(SketchConfig::of(SketchType::kDLL4, 256), 10, 1),
                  std::invalid_argument);
}

TEST_CASE("two-bit history corrections order by evidence") {
  const auto hc = generate_history_correction(SketchConfig::of(SketchType::kUDLL6, 2048), 60, 5);
  // A register with no sub-rank events overstates its rank the most.
  CHECK(hc.per_state[0] < hc.per_state[1]);
  CHECK(hc.per_state[1] < hc.per_state[2]);
  CHECK(hc.per_state[2] < hc.per_state[3]);
  // Anchor for the empty-history state (reference value -2.51).
  CHECK(hc.per_state[0] == Approx(-2.51).epsilon(0.1));
}

}  // TEST_SUITE
