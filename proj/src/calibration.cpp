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

#include "dynsketch/calibration.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dynsketch/hash.hpp"
#include "dynsketch/sketch.hpp"

namespace dynsketch {

namespace {

constexpr uint64_t kGamma = kGoldenGamma;
// Instances per work unit. Fixed so that summation order never depends on
// the worker count.
constexpr uint64_t kChunk = 32;

std::string format_g9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Runs work(acc, begin, end) over fixed chunks of [0, items) and folds the
// per-chunk accumulators in chunk order.
template <class Acc, class Make, class Work>
Acc run_chunked(uint64_t items, unsigned workers, Make make, Work work) {
  const uint64_t chunks = (items + kChunk - 1) / kChunk;
  std::vector<std::optional<Acc>> partial(chunks);
  std::atomic<uint64_t> next{0};
  auto loop = [&] {
    for (uint64_t c = next++; c < chunks; c = next++) {
      Acc acc = make();
      work(acc, c * kChunk, std::min(items, (c + 1) * kChunk));
      partial[c].emplace(std::move(acc));
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(chunks)));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < n; ++w) pool.emplace_back(loop);
  loop();
  for (auto& t : pool) t.join();
  Acc total = make();
  for (auto& p : partial) total.merge(*p);
  return total;
}

// Sums for the means; running mean and squared deviations (Welford within a
// chunk, pairwise across chunks) for the variance. The textbook sum-of-squares
// form cancels when every instance reports nearly the same error.
struct ErrorAccumulator {
  std::size_t methods = 0;
  std::vector<double> sum, sum_abs, mean, m2;
  std::vector<uint64_t> n;

  ErrorAccumulator(std::size_t checkpoints, std::size_t m)
      : methods(m),
        sum(checkpoints * m),
        sum_abs(checkpoints * m),
        mean(checkpoints * m),
        m2(checkpoints * m),
        n(checkpoints) {}

  void add(std::size_t c, const std::vector<double>& errs) {
    const std::size_t base = c * methods;
    const double cnt = static_cast<double>(++n[c]);
    for (std::size_t m = 0; m < methods; ++m) {
      const double e = errs[m];
      const std::size_t i = base + m;
      sum[i] += e;
      sum_abs[i] += std::abs(e);
      const double d = e - mean[i];
      mean[i] += d / cnt;
      m2[i] += d * (e - mean[i]);
    }
  }

  void merge(const ErrorAccumulator& o) {
    for (std::size_t c = 0; c < n.size(); ++c) {
      if (o.n[c] == 0) continue;
      const double na = static_cast<double>(n[c]);
      const double nb = static_cast<double>(o.n[c]);
      const double nt = na + nb;
      for (std::size_t m = 0; m < methods; ++m) {
        const std::size_t i = c * methods + m;
        sum[i] += o.sum[i];
        sum_abs[i] += o.sum_abs[i];
        const double d = o.mean[i] - mean[i];
        m2[i] += o.m2[i] + d * d * na * nb / nt;
        mean[i] += d * nb / nt;
      }
      n[c] += o.n[c];
    }
  }

  std::vector<ErrorReport> reports(const std::vector<uint64_t>& schedule,
                                   const std::vector<NamedEstimator>& est) const {
    std::vector<ErrorReport> out(methods);
    for (std::size_t m = 0; m < methods; ++m) out[m].method = est[m].name;
    for (std::size_t c = 0; c < n.size(); ++c) {
      if (n[c] == 0) continue;
      const double cnt = static_cast<double>(n[c]);
      for (std::size_t m = 0; m < methods; ++m) {
        const std::size_t i = c * methods + m;
        CheckpointStats row;
        row.cardinality = schedule[c];
        row.n = n[c];
        row.mean_signed = sum[i] / cnt;
        row.mean_abs = sum_abs[i] / cnt;
        if (n[c] > 1) {
          row.stddev = std::sqrt(std::max(m2[i], 0.0) / (cnt - 1));
        }
        out[m].rows.push_back(row);
      }
    }
    return out;
  }
};

void evaluate(const std::vector<NamedEstimator>& est, const NlzProfile& p,
              std::vector<double>& values) {
  for (std::size_t m = 0; m < est.size(); ++m) values[m] = est[m].fn(p);
}

}  // namespace

std::vector<uint64_t> build_schedule(uint64_t max_cardinality) {
  std::vector<uint64_t> out;
  if (max_cardinality == 0) return out;
  uint64_t c = 1;
  while (true) {
    out.push_back(c);
    if (c >= max_cardinality) break;
    const auto scaled = static_cast<uint64_t>(std::ceil(static_cast<double>(c) * 1.01));
    c = std::min(max_cardinality, std::max(c + 1, scaled));
  }
  return out;
}

double ErrorReport::log_weighted() const noexcept {
  if (rows.empty()) return 0;
  double s = 0;
  for (const auto& r : rows) s += r.mean_abs;
  return s / static_cast<double>(rows.size());
}

double ErrorReport::card_weighted() const noexcept {
  double num = 0, den = 0;
  for (const auto& r : rows) {
    num += static_cast<double>(r.cardinality) * r.mean_abs;
    den += static_cast<double>(r.cardinality);
  }
  return den > 0 ? num / den : 0;
}

double ErrorReport::peak_abs() const noexcept {
  double peak = 0;
  for (const auto& r : rows) peak = std::max(peak, r.mean_abs);
  return peak;
}

const CheckpointStats* ErrorReport::nearest(double c) const noexcept {
  const CheckpointStats* best = nullptr;
  for (const auto& r : rows) {
    if (best == nullptr || std::abs(static_cast<double>(r.cardinality) - c) <
                               std::abs(static_cast<double>(best->cardinality) - c)) {
      best = &r;
    }
  }
  return best;
}

std::vector<NamedEstimator> named_estimators(const Estimator& e,
                                             const std::vector<Method>& methods) {
  auto shared = std::make_shared<const Estimator>(e);
  std::vector<NamedEstimator> out;
  for (const Method m : methods) {
    out.push_back({std::string(to_string(m)),
                   [shared, m](const NlzProfile& p) { return shared->estimate(m, p); }});
  }
  return out;
}

std::vector<ErrorReport> run_high_complexity(const HighComplexityOptions& opts,
                                             const std::vector<NamedEstimator>& estimators) {
  opts.cfg.validate();
  const auto schedule = build_schedule(opts.max_cardinality);
  const std::size_t methods = estimators.size();
  auto make = [&] { return ErrorAccumulator(schedule.size(), methods); };
  auto work = [&](ErrorAccumulator& acc, uint64_t begin, uint64_t end) {
    std::vector<double> values(methods);
    for (uint64_t i = begin; i < end; ++i) {
      Sketch sketch(opts.cfg);
      Xoshiro256pp rng(stream_seed(opts.seed, i));
      // Counter mode keeps every value in the stream distinct.
      const uint64_t base = rng();
      std::size_t next = 0;
      for (uint64_t k = 1; k <= opts.max_cardinality; ++k) {
        sketch.add(base + k * kGamma);
        if (k != schedule[next]) continue;
        evaluate(estimators, sketch.profile(), values);
        const double truth = static_cast<double>(k);
        for (auto& v : values) v = v / truth - 1;
        acc.add(next, values);
        ++next;
      }
    }
  };
  return run_chunked<ErrorAccumulator>(opts.instances, opts.workers, make, work)
      .reports(schedule, estimators);
}

uint64_t skewed_index(uint64_t u1, uint64_t u2, uint64_t pool) noexcept {
  const unsigned __int128 wide = static_cast<unsigned __int128>(std::min(u1, u2)) * pool;
  return static_cast<uint64_t>(wide >> 64);
}

std::vector<ErrorReport> run_low_complexity(const LowComplexityOptions& opts,
                                            const std::vector<NamedEstimator>& estimators) {
  opts.cfg.validate();
  if (opts.pool == 0 || opts.iterations == 0) {
    throw std::invalid_argument("pool and iterations must be positive");
  }
  // Pool entry k is mix13(base + k * gamma): a bijection of k, so the pool
  // is duplicate-free by construction and needs no table.
  const uint64_t pool_base = mix13(opts.seed ^ 0x706f6f6cULL);
  const auto pool_value = [pool_base](uint64_t k) { return mix13(pool_base + k * kGoldenGamma); };
  const auto schedule = build_schedule(opts.pool);
  const std::size_t methods = estimators.size();
  const uint64_t adds = opts.pool * opts.iterations;

  auto make = [&] { return ErrorAccumulator(schedule.size(), methods); };
  auto work = [&](ErrorAccumulator& acc, uint64_t begin, uint64_t end) {
    std::vector<double> estimates(methods), errs(methods);
    std::vector<uint64_t> seen((opts.pool + 63) / 64);
    for (uint64_t i = begin; i < end; ++i) {
      std::fill(seen.begin(), seen.end(), 0);
      Sketch sketch(opts.cfg);
      Xoshiro256pp rng(stream_seed(opts.seed, i));
      uint64_t truth = 0;
      std::size_t next = 0;
      uint64_t evaluated_at = ~uint64_t{0};
      for (uint64_t a = 0; a < adds; ++a) {
        const uint64_t u1 = rng();
        const uint64_t u2 = rng();
        const uint64_t idx = skewed_index(u1, u2, opts.pool);
        sketch.add(pool_value(idx));
        uint64_t& word = seen[idx >> 6];
        const uint64_t bit = uint64_t{1} << (idx & 63);
        if ((word & bit) == 0) {
          word |= bit;
          ++truth;
          while (next < schedule.size() && schedule[next] < truth) ++next;
        }
        if (next >= schedule.size() || schedule[next] != truth) continue;
        // Estimates only move when the sketch does.
        if (sketch.mutations() != evaluated_at) {
          evaluate(estimators, sketch.profile(), estimates);
          evaluated_at = sketch.mutations();
        }
        const double t = static_cast<double>(truth);
        for (std::size_t m = 0; m < methods; ++m) errs[m] = estimates[m] / t - 1;
        acc.add(next, errs);
      }
    }
  };
  return run_chunked<ErrorAccumulator>(opts.instances, opts.workers, make, work)
      .reports(schedule, estimators);
}

BenchResult benchmark_add_path(const BenchOptions& opts) {
  opts.cfg.validate();
  BenchResult result;
  const uint64_t total = opts.instances * opts.adds_per_instance;
  if (opts.instances == 0) return result;
  std::vector<Sketch> sketches(opts.instances, Sketch(opts.cfg));
  Xoshiro256pp rng(opts.seed);
  for (uint64_t r = 0; r < opts.warmup_per_instance; ++r) {
    for (auto& s : sketches) s.add(rng());
  }
  uint64_t exits_before = 0;
  for (const auto& s : sketches) exits_before += s.early_exits();
  if (total == 0) return result;

  std::vector<uint64_t> buffer;
  result.pregenerated = total <= kBenchBufferLimit;
  if (result.pregenerated) {
    buffer.resize(total);
    for (auto& v : buffer) v = rng();
  }
  const auto start = std::chrono::steady_clock::now();
  if (result.pregenerated) {
    const uint64_t* in = buffer.data();
    for (uint64_t r = 0; r < opts.adds_per_instance; ++r) {
      for (auto& s : sketches) s.add(*in++);
    }
  } else {
    for (uint64_t r = 0; r < opts.adds_per_instance; ++r) {
      for (auto& s : sketches) s.add(rng());
    }
  }
  const auto stop = std::chrono::steady_clock::now();
  result.adds = total;
  result.seconds = std::chrono::duration<double>(stop - start).count();
  result.adds_per_second = result.seconds > 0 ? static_cast<double>(total) / result.seconds : 0;
  for (const auto& s : sketches) result.early_exits += s.early_exits();
  result.early_exits -= exits_before;
  return result;
}

std::vector<MergeRow> run_merge_test(const MergeTestOptions& opts, const Estimator& e) {
  opts.cfg.validate();
  std::vector<MergeRow> rows(opts.ways.size());
  for (std::size_t w = 0; w < rows.size(); ++w) {
    if (opts.ways[w] == 0) throw std::invalid_argument("ways must be positive");
    rows[w].ways = opts.ways[w];
  }
  const uint64_t n = opts.cardinality;
  const double truth = static_cast<double>(n);
  for (uint64_t t = 0; t < opts.trials; ++t) {
    Xoshiro256pp rng(stream_seed(opts.seed, t));
    const uint64_t base = rng();
    Sketch single(opts.cfg);
    for (uint64_t k = 0; k < n; ++k) single.add(base + k * kGamma);
    const double single_err = e.estimate(opts.method, single.profile()) / truth - 1;

    for (auto& row : rows) {
      std::vector<Sketch> parts(row.ways, Sketch(opts.cfg));
      for (uint64_t k = 0; k < n; ++k) {
        const auto part = static_cast<std::size_t>(
            (static_cast<unsigned __int128>(k) * row.ways) / n);
        parts[part].add(base + k * kGamma);
      }
      for (std::size_t j = 1; j < parts.size(); ++j) parts[0].merge(parts[j]);
      const double err = e.estimate(opts.method, parts[0].profile()) / truth - 1;
      row.merged_signed += err;
      row.merged_abs += std::abs(err);
      row.single_signed += single_err;
      row.single_abs += std::abs(single_err);
      ++row.trials;
    }
  }
  for (auto& row : rows) {
    if (row.trials == 0) continue;
    const double k = static_cast<double>(row.trials);
    row.merged_signed /= k;
    row.merged_abs /= k;
    row.single_signed /= k;
    row.single_abs /= k;
  }
  return rows;
}

void write_report_csv(std::ostream& out, const std::vector<ErrorReport>& reports) {
  out << "cardinality,method,meanSigned,meanAbs,stddev,n\n";
  // Rows are grouped by cardinality so the file reads as a sweep.
  std::size_t rows = 0;
  for (const auto& r : reports) rows = std::max(rows, r.rows.size());
  for (std::size_t i = 0; i < rows; ++i) {
    for (const auto& r : reports) {
      if (i >= r.rows.size()) continue;
      const auto& row = r.rows[i];
      out << row.cardinality << ',' << r.method << ',' << format_g9(row.mean_signed) << ','
          << format_g9(row.mean_abs) << ',' << format_g9(row.stddev) << ',' << row.n << '\n';
    }
  }
  for (const auto& r : reports) {
    out << "#agg," << r.method << ',' << format_g9(r.log_weighted()) << ','
        << format_g9(r.card_weighted()) << ',' << format_g9(r.peak_abs()) << '\n';
  }
}

std::vector<ErrorReport> read_report_csv(std::istream& in) {
  std::vector<ErrorReport> reports;
  std::string line;
  if (!std::getline(in, line) || line != "cardinality,method,meanSigned,meanAbs,stddev,n") {
    throw std::runtime_error("missing report header");
  }
  auto find = [&](const std::string& name) -> ErrorReport& {
    for (auto& r : reports) {
      if (r.method == name) return r;
    }
    reports.push_back({name, {}});
    return reports.back();
  };
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("#agg", 0) == 0) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw std::runtime_error("malformed report row: " + line);
    CheckpointStats row;
    try {
      row.cardinality = std::stoull(f[0]);
      row.mean_signed = std::stod(f[2]);
      row.mean_abs = std::stod(f[3]);
      row.stddev = std::stod(f[4]);
      row.n = std::stoull(f[5]);
    } catch (const std::logic_error&) {
      throw std::runtime_error("malformed report row: " + line);
    }
    find(f[1]).rows.push_back(row);
  }
  return reports;
}

CfTable cf_table_from_report(const ErrorReport& report, Method method, const SketchConfig& cfg) {
  CfTable t;
  t.method = method;
  t.buckets = cfg.bucket_count;
  t.bits = cfg.bits_per_register;
  t.history = cfg.history_bits;
  for (const auto& row : report.rows) {
    const double ratio = 1 + row.mean_signed;
    t.keys.push_back(static_cast<double>(row.cardinality));
    t.factors.push_back(ratio > 0 ? 1 / ratio : 1.0);
  }
  return t;
}

CfTable generate_cf_table(const SketchConfig& cfg, Method method, uint64_t instances,
                          uint64_t max_cardinality, uint64_t seed, unsigned workers) {
  CalibrationRequest req;
  req.cfg = cfg;
  req.methods = {method};
  req.instances = instances;
  req.max_cardinality = max_cardinality;
  req.seed = seed;
  req.workers = workers;
  const CalibrationResult result = calibrate(req);
  return *result.tables.find(method);
}

HistoryCorrection generate_history_correction(const SketchConfig& cfg, uint64_t instances,
                                              uint64_t seed, unsigned workers) {
  cfg.validate();
  if (cfg.history_bits == 0) throw std::invalid_argument("configuration has no history bits");
  const uint32_t states = 1u << cfg.history_bits;
  const uint64_t b = cfg.bucket_count;
  std::vector<uint64_t> checkpoints;
  for (const uint64_t c : build_schedule(32 * b)) {
    if (c >= 4 * b) checkpoints.push_back(c);
  }

  struct Acc {
    std::vector<double> dev, count;
    void merge(const Acc& o) {
      for (std::size_t s = 0; s < dev.size(); ++s) {
        dev[s] += o.dev[s];
        count[s] += o.count[s];
      }
    }
  };
  auto make = [&] { return Acc{std::vector<double>(states), std::vector<double>(states)}; };
  auto work = [&](Acc& acc, uint64_t begin, uint64_t end) {
    for (uint64_t i = begin; i < end; ++i) {
      Sketch sketch(cfg);
      Xoshiro256pp rng(stream_seed(seed, i));
      const uint64_t base = rng();
      std::size_t next = 0;
      for (uint64_t k = 1; next < checkpoints.size(); ++k) {
        sketch.add(base + k * kGamma);
        if (k != checkpoints[next]) continue;
        ++next;
        const NlzProfile p = sketch.raw_profile();
        double nlz_sum = 0;
        for (uint32_t t = 0; t < kNlzSlots; ++t) nlz_sum += p.n[t] * t;
        const double avg = nlz_sum / p.filled;
        for (uint32_t t = 0; t < kNlzSlots; ++t) {
          if (p.n[t] == 0) continue;
          for (uint32_t s = 0; s < states; ++s) {
            const double c = p.history_count(t, s);
            const uint32_t e = p.effective_state(t, s);
            acc.dev[e] += c * (t - avg);
            acc.count[e] += c;
          }
        }
      }
    }
  };
  const Acc total = run_chunked<Acc>(instances, workers, make, work);
  HistoryCorrection hc;
  hc.history_bits = cfg.history_bits;
  hc.per_state.resize(states);
  for (uint32_t s = 0; s < states; ++s) {
    hc.per_state[s] = total.count[s] > 0 ? -total.dev[s] / total.count[s] : 0.0;
  }
  return hc;
}

Estimator CalibrationResult::estimator(const BlendParams& params) const {
  Estimator e(params);
  e.set_tables(tables);
  if (history) e.set_history_correction(*history);
  e.set_dlc_seed(dlc_seed);
  return e;
}

CalibrationResult calibrate(const CalibrationRequest& req) {
  req.cfg.validate();
  if (req.methods.empty()) throw std::invalid_argument("no methods to calibrate");
  CalibrationResult result;
  result.dlc_seed = req.dlc_seed.value_or(req.cfg.nlz_bits() == 3);

  std::vector<Method> first, second;
  auto push_unique = [](std::vector<Method>& v, Method m) {
    if (std::find(v.begin(), v.end(), m) == v.end()) v.push_back(m);
  };
  for (const Method m : req.methods) {
    if (const auto dep = cf_dependency(m)) {
      push_unique(first, *dep);
      push_unique(second, m);
    } else {
      push_unique(first, m);
    }
  }
  const bool needs_history = std::any_of(first.begin(), first.end(), [](Method m) {
    return m == Method::kMeanN;
  });
  if (needs_history && req.cfg.history_bits > 0) {
    result.history = generate_history_correction(req.cfg, req.instances,
                                                 stream_seed(req.seed, uint64_t{1} << 40),
                                                 req.workers);
  }

  HighComplexityOptions opts;
  opts.cfg = req.cfg;
  opts.instances = req.instances;
  opts.max_cardinality = req.max_cardinality;
  opts.seed = req.seed;
  opts.workers = req.workers;

  auto run_pass = [&](const std::vector<Method>& methods) {
    if (methods.empty()) return;
    // Tables for these methods do not exist yet, so estimate() is raw here.
    const auto reports = run_high_complexity(opts, named_estimators(result.estimator(req.params),
                                                                    methods));
    for (std::size_t i = 0; i < methods.size(); ++i) {
      result.tables.put(cf_table_from_report(reports[i], methods[i], req.cfg));
    }
  };
  run_pass(first);
  opts.seed = stream_seed(req.seed, uint64_t{1} << 41);
  run_pass(second);
  return result;
}

}  // namespace dynsketch
