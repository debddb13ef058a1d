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

#include "dynsketch/correction.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace dynsketch {

namespace {

std::string format_g9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Parses "key=value" tokens after a "# dynsketch-<kind> v1" prefix.
struct Header {
  std::string kind;
  std::string method;
  uint32_t buckets = 0;
  uint32_t bits = 0;
  uint32_t history = 0;
};

std::optional<Header> parse_header(const std::string& line) {
  std::istringstream in(line);
  std::string hash, kind, version;
  if (!(in >> hash >> kind >> version) || hash != "#" || version != "v1") return std::nullopt;
  if (kind.rfind("dynsketch-", 0) != 0) return std::nullopt;
  Header h;
  h.kind = kind.substr(10);
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw std::runtime_error("malformed header token: " + tok);
    const std::string key = tok.substr(0, eq);
    const std::string value = tok.substr(eq + 1);
    try {
      if (key == "method") {
        h.method = value;
      } else if (key == "buckets") {
        h.buckets = static_cast<uint32_t>(std::stoul(value));
      } else if (key == "bits") {
        h.bits = static_cast<uint32_t>(std::stoul(value));
      } else if (key == "history") {
        h.history = static_cast<uint32_t>(std::stoul(value));
      } else {
        throw std::runtime_error("unknown header key: " + key);
      }
    } catch (const std::logic_error&) {
      throw std::runtime_error("malformed header value: " + tok);
    }
  }
  return h;
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

std::pair<double, double> parse_row(const std::string& line) {
  std::istringstream in(line);
  double a = 0, b = 0;
  std::string rest;
  if (!(in >> a >> b) || (in >> rest)) throw std::runtime_error("malformed row: " + line);
  return {a, b};
}

}  // namespace

double CfTable::lookup(double estimate) const noexcept {
  if (keys.empty()) return 1.0;
  const double top = keys.back();
  double e = std::max(estimate, 0.0);
  while (e > top) e /= 2;
  if (e <= keys.front()) return factors.front();
  const auto it = std::lower_bound(keys.begin(), keys.end(), e);
  const std::size_t hi = static_cast<std::size_t>(it - keys.begin());
  if (keys[hi] == e) return factors[hi];
  const std::size_t lo = hi - 1;
  const double f = std::log(e / keys[lo]) / std::log(keys[hi] / keys[lo]);
  return factors[lo] + f * (factors[hi] - factors[lo]);
}

CfApplication apply_cf(const CfTable& table, double raw, std::optional<double> seed) noexcept {
  double est = seed.value_or(raw);
  int it = 0;
  while (it < kMaxCfIterations) {
    const double next = raw * table.lookup(est);
    ++it;
    const double change = est == 0 ? std::abs(next) : std::abs(next - est) / std::abs(est);
    est = next;
    if (change < kCfTolerance) break;
  }
  return {est, it};
}

double corrected_cumulative(double cum_raw, double overflow, double buckets) noexcept {
  return cum_raw + (buckets - cum_raw) * (1.0 - std::exp(-overflow / buckets));
}

NlzProfile correct_overflow(const NlzProfile& p, const std::vector<uint32_t>& log) {
  const double b = p.buckets;
  std::array<double, kNlzSlots + 1> cum{};
  for (int t = kNlzSlots - 1; t >= 0; --t) cum[t] = cum[t + 1] + p.n[t];
  bool any = false;
  for (std::size_t t = 0; t < log.size() && t < kNlzSlots; ++t) {
    if (log[t] == 0) continue;
    cum[t] = corrected_cumulative(cum[t], log[t], b);
    any = true;
  }
  if (!any) return p;
  // Each tier is corrected on its own; restore monotonicity afterwards.
  for (int t = kNlzSlots - 1; t >= 0; --t) cum[t] = std::max(cum[t], cum[t + 1]);

  NlzProfile out = p;
  for (uint32_t t = 0; t < kNlzSlots; ++t) out.n[t] = cum[t] - cum[t + 1];
  out.filled = cum[0];
  out.empty = b - cum[0];
  out.overflow_corrected = true;
  return out;
}

void write_cf_table(std::ostream& out, const CfTable& table) {
  out << "# dynsketch-cf v1 method=" << to_string(table.method) << " buckets=" << table.buckets
      << " bits=" << table.bits << " history=" << table.history << '\n';
  for (std::size_t i = 0; i < table.keys.size(); ++i) {
    out << format_g9(table.keys[i]) << '\t' << format_g9(table.factors[i]) << '\n';
  }
}

std::vector<CfTable> read_cf_tables(std::istream& in) {
  std::vector<CfTable> tables;
  std::string line;
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    if (line[0] == '#') {
      const auto h = parse_header(line);
      if (!h || h->kind != "cf") throw std::runtime_error("expected a dynsketch-cf header");
      const auto m = parse_method(h->method);
      if (!m) throw std::runtime_error("unknown method in CF header: " + h->method);
      CfTable t;
      t.method = *m;
      t.buckets = h->buckets;
      t.bits = h->bits;
      t.history = h->history;
      tables.push_back(std::move(t));
      continue;
    }
    if (tables.empty()) throw std::runtime_error("CF row before header");
    const auto [key, factor] = parse_row(line);
    CfTable& t = tables.back();
    if (!t.keys.empty() && key <= t.keys.back()) {
      throw std::runtime_error("CF keys must be strictly increasing");
    }
    t.keys.push_back(key);
    t.factors.push_back(factor);
  }
  return tables;
}

void write_history_correction(std::ostream& out, const HistoryCorrection& hc,
                              const SketchConfig& cfg) {
  out << "# dynsketch-history v1 buckets=" << cfg.bucket_count
      << " bits=" << cfg.bits_per_register << " history=" << hc.history_bits << '\n';
  for (std::size_t s = 0; s < hc.per_state.size(); ++s) {
    out << s << '\t' << format_g9(hc.per_state[s]) << '\n';
  }
}

HistoryCorrection read_history_correction(std::istream& in) {
  HistoryCorrection hc;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    if (line[0] == '#') {
      const auto h = parse_header(line);
      if (!h || h->kind != "history" || header) {
        throw std::runtime_error("expected a single dynsketch-history header");
      }
      hc.history_bits = h->history;
      header = true;
      continue;
    }
    if (!header) throw std::runtime_error("history row before header");
    const auto [state, value] = parse_row(line);
    if (state != static_cast<double>(hc.per_state.size())) {
      throw std::runtime_error("history states must be listed in order");
    }
    hc.per_state.push_back(value);
  }
  if (!header) throw std::runtime_error("missing dynsketch-history header");
  if (hc.per_state.size() != (std::size_t{1} << hc.history_bits)) {
    throw std::runtime_error("history table must have 2^h entries");
  }
  return hc;
}

}  // namespace dynsketch
