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

#include "dynsketch/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "dynsketch/calibration.hpp"
#include "dynsketch/sketch.hpp"

namespace dynsketch {

namespace {

constexpr const char* kUsage = R"(usage: dynsketch <command> [key=value ...]

commands:
  calibrate      type= method= buckets= instances= maxcard= seed= workers= out= [dlcseed=t|f]
  simulate-high  type= methods= buckets= instances= maxcard= seed= workers= [cf=] [history=] [raw=t] [out=]
  simulate-low   type= methods= buckets= instances= pool= iterations= seed= workers= [cf=] [history=] [raw=t] [out=]
  bench          type= buckets= instances= adds= [warmup=] [eemask=t|f|both] seed=
  estimate       type= buckets= methods= [input=-|path] [format=auto|int|string] [exact=t] [clamp=t] [cf=] [history=] [raw=t]
  merge-test     type= buckets= cardinality= trials= ways=1,8,64 method= seed= [cf=] [history=] [raw=t]
  help

types: ll6 dll4 dll3 udll5 udll6 udll7
methods: lc lcmin dlc dlcbest mean hmean gmean hll hybrid meann hybridn hc ldlc
cf= takes a comma-separated list of table files. mean hmean gmean hll
hybrid meann hybridn need their tables unless raw=t; meann and hybridn
also need history=.
)";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Flags {
 public:
  Flags(const std::vector<std::string>& args, const std::set<std::string>& allowed) {
    for (std::size_t i = 1; i < args.size(); ++i) {
      const std::string& a = args[i];
      const auto eq = a.find('=');
      if (eq == std::string::npos || eq == 0) throw UsageError("expected key=value, got '" + a + "'");
      std::string key = a.substr(0, eq);
      if (!allowed.count(key)) throw UsageError("unknown flag '" + key + "'");
      if (!values_.emplace(key, a.substr(eq + 1)).second) {
        throw UsageError("flag '" + key + "' given twice");
      }
    }
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string str(const std::string& key, std::optional<std::string> fallback = {}) const {
    const auto it = values_.find(key);
    if (it != values_.end()) return it->second;
    if (!fallback) throw UsageError("missing required flag '" + key + "='");
    return *fallback;
  }

  uint64_t u64(const std::string& key, std::optional<uint64_t> fallback = {}) const {
    if (!has(key)) {
      if (!fallback) throw UsageError("missing required flag '" + key + "='");
      return *fallback;
    }
    const std::string v = str(key);
    uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
      throw UsageError("flag '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    return out;
  }

  uint32_t u32(const std::string& key, std::optional<uint32_t> fallback = {}) const {
    const uint64_t v = u64(key, fallback);
    if (v > UINT32_MAX) throw UsageError("flag '" + key + "' is out of range");
    return static_cast<uint32_t>(v);
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = str(key);
    if (v == "t" || v == "true" || v == "1") return true;
    if (v == "f" || v == "false" || v == "0") return false;
    throw UsageError("flag '" + key + "' expects t or f, got '" + v + "'");
  }

 private:
  std::map<std::string, std::string> values_;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const std::string item = s.substr(start, comma == std::string::npos ? std::string::npos
                                                                        : comma - start);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

SketchConfig config_from(const Flags& f) {
  const std::string name = f.str("type", "dll4");
  const auto type = parse_sketch_type(name);
  if (!type) throw UsageError("unknown type '" + name + "'");
  try {
    return SketchConfig::of(*type, f.u32("buckets", 2048));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::vector<Method> methods_from(const Flags& f, const std::string& key, const SketchConfig& cfg,
                                 const std::string& fallback) {
  std::vector<Method> methods;
  try {
    methods = parse_method_list(f.str(key, fallback));
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (methods.empty()) throw UsageError("flag '" + key + "' lists no methods");
  for (const Method m : methods) {
    if (uses_history(m) && cfg.history_bits == 0) {
      throw UsageError("method '" + std::string(to_string(m)) +
                       "' needs a type with history bits (udll5/6/7)");
    }
  }
  return methods;
}

// Methods whose raw output is meaningless without a bias table.
bool needs_cf(Method m) {
  switch (m) {
    case Method::kMean:
    case Method::kHMean:
    case Method::kGMean:
    case Method::kHll:
    case Method::kHybrid:
    case Method::kMeanN:
    case Method::kHybridN:
      return true;
    default:
      return false;
  }
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return in;
}

// Loads cf= and history= into an estimator and enforces table presence.
Estimator estimator_from(const Flags& f, const SketchConfig& cfg,
                         const std::vector<Method>& methods) {
  Estimator e;
  e.set_dlc_seed(cfg.nlz_bits() == 3);
  for (const auto& path : split_list(f.str("cf", ""))) {
    auto in = open_in(path);
    for (auto& t : read_cf_tables(in)) {
      if (t.buckets != cfg.bucket_count || t.bits != cfg.bits_per_register ||
          t.history != cfg.history_bits) {
        throw std::runtime_error("table in '" + path + "' was built for a different layout");
      }
      e.set_table(std::move(t));
    }
  }
  if (f.has("history")) {
    auto in = open_in(f.str("history"));
    auto hc = read_history_correction(in);
    if (hc.history_bits != cfg.history_bits) {
      throw std::runtime_error("history table does not match the type's history bits");
    }
    e.set_history_correction(std::move(hc));
  }
  if (f.flag("raw", false)) return e;
  for (const Method m : methods) {
    if (!needs_cf(m)) continue;
    std::vector<Method> required{m};
    if (const auto dep = cf_dependency(m)) required.push_back(*dep);
    for (const Method r : required) {
      if (!e.tables().contains(r)) {
        throw UsageError("method '" + std::string(to_string(m)) + "' needs a CF table for '" +
                         std::string(to_string(r)) + "' (cf=...), or raw=t");
      }
    }
    if ((m == Method::kMeanN || m == Method::kHybridN) && !e.history_correction()) {
      throw UsageError("method '" + std::string(to_string(m)) +
                       "' needs a history table (history=...), or raw=t");
    }
  }
  return e;
}

std::string format_g9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Runs `body` against the out= file when given, else against stdout.
void with_output(const Flags& f, std::ostream& out,
                 const std::function<void(std::ostream&)>& body) {
  if (!f.has("out")) {
    body(out);
    return;
  }
  const std::string path = f.str("out");
  std::ofstream file(path);
  if (!file) throw std::runtime_error("cannot write '" + path + "'");
  body(file);
  if (!file) throw std::runtime_error("write to '" + path + "' failed");
}

void write_file(const std::filesystem::path& path,
                const std::function<void(std::ostream&)>& body) {
  std::ofstream file(path);
  if (!file) throw std::runtime_error("cannot write '" + path.string() + "'");
  body(file);
  if (!file) throw std::runtime_error("write to '" + path.string() + "' failed");
}

int cmd_calibrate(const std::vector<std::string>& args, std::ostream& out) {
  const Flags f(args, {"type", "method", "buckets", "instances", "maxcard", "seed", "workers",
                       "out", "dlcseed"});
  const std::string out_path = f.str("out");
  const SketchConfig cfg = config_from(f);
  CalibrationRequest req;
  req.cfg = cfg;
  req.methods = methods_from(f, "method", cfg, "hybrid");
  req.instances = f.u64("instances", 1000);
  req.max_cardinality = f.u64("maxcard", uint64_t{1} << 20);
  req.seed = f.u64("seed", 1);
  req.workers = f.u32("workers", 1);
  if (f.has("dlcseed")) req.dlc_seed = f.flag("dlcseed", false);
  if (req.instances == 0 || req.max_cardinality == 0 || req.workers == 0) {
    throw UsageError("instances, maxcard and workers must be positive");
  }

  const CalibrationResult result = calibrate(req);

  const std::filesystem::path path(out_path);
  const std::filesystem::path stem = path.parent_path() / path.stem();
  auto sibling = [&](const std::string& suffix) {
    return std::filesystem::path(stem.string() + "." + suffix + ".tsv");
  };
  std::size_t rows = 0;
  write_file(path, [&](std::ostream& o) {
    for (const Method m : req.methods) {
      const CfTable* t = result.tables.find(m);
      write_cf_table(o, *t);
      rows += t->keys.size();
    }
  });
  out << "wrote " << path.string() << " (" << rows << " rows)\n";
  for (const auto& [m, table] : result.tables.tables()) {
    if (std::find(req.methods.begin(), req.methods.end(), m) != req.methods.end()) continue;
    const auto dep = sibling(std::string(to_string(m)));
    write_file(dep, [&](std::ostream& o) { write_cf_table(o, table); });
    out << "wrote " << dep.string() << " (" << table.keys.size() << " rows)\n";
  }
  if (result.history) {
    const auto hist = sibling("history");
    write_file(hist, [&](std::ostream& o) { write_history_correction(o, *result.history, cfg); });
    out << "wrote " << hist.string() << " (" << result.history->per_state.size()
        << " states)\n";
  }
  return kExitOk;
}

int cmd_simulate(const std::vector<std::string>& args, std::ostream& out, bool high) {
  std::set<std::string> allowed{"type", "methods", "buckets", "instances", "seed",
                                "workers", "cf", "history", "raw", "out"};
  if (high) {
    allowed.insert("maxcard");
  } else {
    allowed.insert({"pool", "iterations"});
  }
  const Flags f(args, allowed);
  const SketchConfig cfg = config_from(f);
  const auto methods = methods_from(f, "methods", cfg, "dlc");
  const Estimator e = estimator_from(f, cfg, methods);
  const uint64_t instances = f.u64("instances", 100);
  const unsigned workers = f.u32("workers", 1);
  if (instances == 0 || workers == 0) throw UsageError("instances and workers must be positive");

  std::vector<ErrorReport> reports;
  if (high) {
    HighComplexityOptions o;
    o.cfg = cfg;
    o.instances = instances;
    o.max_cardinality = f.u64("maxcard", uint64_t{1} << 20);
    o.seed = f.u64("seed", 1);
    o.workers = workers;
    if (o.max_cardinality == 0) throw UsageError("maxcard must be positive");
    reports = run_high_complexity(o, named_estimators(e, methods));
  } else {
    LowComplexityOptions o;
    o.cfg = cfg;
    o.instances = instances;
    o.pool = f.u64("pool", 1000000);
    o.iterations = f.u64("iterations", 8);
    o.seed = f.u64("seed", 1);
    o.workers = workers;
    if (o.pool == 0 || o.iterations == 0) throw UsageError("pool and iterations must be positive");
    reports = run_low_complexity(o, named_estimators(e, methods));
  }
  with_output(f, out, [&](std::ostream& o) { write_report_csv(o, reports); });
  return kExitOk;
}

int cmd_bench(const std::vector<std::string>& args, std::ostream& out) {
  const Flags f(args, {"type", "buckets", "instances", "adds", "warmup", "eemask", "seed"});
  const SketchConfig base = config_from(f);
  const uint64_t instances = f.u64("instances", 512);
  if (instances == 0) throw UsageError("instances must be positive");
  const uint64_t adds = f.u64("adds", 100000000);
  const std::string mode = f.str("eemask", "both");
  std::vector<bool> variants;
  if (mode == "both") {
    variants = {false, true};
  } else {
    variants = {f.flag("eemask", true)};
  }

  out << "type,buckets,instances,eemask,adds,seconds,addsPerSecond,earlyExits,pregenerated\n";
  std::vector<double> rates;
  for (const bool ee : variants) {
    BenchOptions o;
    o.cfg = base;
    o.cfg.ee_mask = ee;
    o.instances = instances;
    o.adds_per_instance = (adds + instances - 1) / instances;
    o.warmup_per_instance = f.u64("warmup", 0);
    o.seed = f.u64("seed", 1);
    const BenchResult r = benchmark_add_path(o);
    rates.push_back(r.adds_per_second);
    out << to_string(*base.type()) << ',' << base.bucket_count << ',' << instances << ','
        << (ee ? 't' : 'f') << ',' << r.adds << ',' << format_g9(r.seconds) << ','
        << format_g9(r.adds_per_second) << ',' << r.early_exits << ','
        << (r.pregenerated ? 't' : 'f') << '\n';
  }
  if (rates.size() == 2 && rates[0] > 0) {
    out << "#speedup,eemask," << format_g9(rates[1] / rates[0]) << '\n';
  }
  return kExitOk;
}

int cmd_estimate(const std::vector<std::string>& args, std::ostream& out, std::istream& in) {
  const Flags f(args, {"type", "buckets", "methods", "input", "format", "exact", "cf",
                       "history", "raw", "clamp"});
  const SketchConfig cfg = config_from(f);
  const auto methods = methods_from(f, "methods", cfg, "dlc");
  const std::string format = f.str("format", "auto");
  if (format != "auto" && format != "int" && format != "string") {
    throw UsageError("format must be auto, int or string");
  }
  Estimator e = estimator_from(f, cfg, methods);
  e.set_clamp(f.flag("clamp", false));
  const bool exact = f.flag("exact", false);

  std::ifstream file;
  const std::string input = f.str("input", "-");
  if (input != "-") file = open_in(input);
  std::istream& src = input == "-" ? in : file;

  Sketch sketch(cfg);
  std::unordered_set<uint64_t> distinct;
  uint64_t adds = 0;
  std::string line;
  uint64_t line_no = 0;
  while (std::getline(src, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    const std::string_view token(line.data() + first, last - first + 1);
    uint64_t key = 0;
    bool numeric = false;
    if (format != "string") {
      const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), key);
      numeric = ec == std::errc() && ptr == token.data() + token.size();
      if (!numeric && format == "int") {
        throw std::runtime_error("malformed token on line " + std::to_string(line_no) + ": '" +
                                 std::string(token) + "'");
      }
    }
    if (!numeric) key = fnv1a64(token.data(), token.size());
    sketch.add(key);
    ++adds;
    if (exact) distinct.insert(key);
  }

  const NlzProfile p = sketch.profile();
  out << "method,estimate\n";
  for (const Method m : methods) {
    out << to_string(m) << ',' << format_g9(e.estimate(m, p, adds)) << '\n';
  }
  if (exact) out << "exact," << distinct.size() << '\n';
  return kExitOk;
}

int cmd_merge_test(const std::vector<std::string>& args, std::ostream& out) {
  const Flags f(args, {"type", "buckets", "cardinality", "trials", "ways", "method", "seed",
                       "cf", "history", "raw"});
  const SketchConfig cfg = config_from(f);
  const auto methods = methods_from(f, "method", cfg, "dlc");
  if (methods.size() != 1) throw UsageError("merge-test takes exactly one method");
  MergeTestOptions o;
  o.cfg = cfg;
  o.method = methods.front();
  o.cardinality = f.u64("cardinality", 1000000);
  o.trials = f.u64("trials", 10);
  o.seed = f.u64("seed", 1);
  o.ways.clear();
  for (const auto& w : split_list(f.str("ways", "1,8,64"))) {
    uint32_t v = 0;
    const auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || ptr != w.data() + w.size() || v == 0) {
      throw UsageError("ways must list positive integers");
    }
    o.ways.push_back(v);
  }
  if (o.ways.empty() || o.cardinality == 0 || o.trials == 0) {
    throw UsageError("ways, cardinality and trials must be non-empty and positive");
  }
  const Estimator e = estimator_from(f, cfg, methods);
  const auto rows = run_merge_test(o, e);
  out << "ways,mergedSigned,mergedAbs,singleSigned,singleAbs,trials\n";
  for (const auto& r : rows) {
    out << r.ways << ',' << format_g9(r.merged_signed) << ',' << format_g9(r.merged_abs) << ','
        << format_g9(r.single_signed) << ',' << format_g9(r.single_abs) << ',' << r.trials
        << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            std::istream& in) {
  if (args.empty()) {
    err << kUsage;
    return kExitUsage;
  }
  const std::string& cmd = args.front();
  try {
    if (cmd == "help" || cmd == "--help" || cmd == "-h") {
      out << kUsage;
      return kExitOk;
    }
    if (cmd == "calibrate") return cmd_calibrate(args, out);
    if (cmd == "simulate-high") return cmd_simulate(args, out, true);
    if (cmd == "simulate-low") return cmd_simulate(args, out, false);
    if (cmd == "bench") return cmd_bench(args, out);
    if (cmd == "estimate") return cmd_estimate(args, out, in);
    if (cmd == "merge-test") return cmd_merge_test(args, out);
    throw UsageError("unknown command '" + cmd + "'");
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << kUsage;
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace dynsketch
