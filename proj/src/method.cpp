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

#include "dynsketch/method.hpp"

#include <array>
#include <stdexcept>
#include <utility>

namespace dynsketch {

namespace {

constexpr std::array<std::pair<Method, std::string_view>, 13> kNames{{
    {Method::kLc, "lc"},
    {Method::kLcMin, "lcmin"},
    {Method::kDlc, "dlc"},
    {Method::kDlcBest, "dlcbest"},
    {Method::kMean, "mean"},
    {Method::kHMean, "hmean"},
    {Method::kGMean, "gmean"},
    {Method::kHll, "hll"},
    {Method::kHybrid, "hybrid"},
    {Method::kMeanN, "meann"},
    {Method::kHybridN, "hybridn"},
    {Method::kHc, "hc"},
    {Method::kLdlc, "ldlc"},
}};

}  // namespace

std::string_view to_string(Method m) {
  for (const auto& [method, name] : kNames) {
    if (method == m) return name;
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view name) {
  for (const auto& [method, n] : kNames) {
    if (n == name) return method;
  }
  return std::nullopt;
}

std::vector<Method> parse_method_list(std::string_view list) {
  std::vector<Method> out;
  while (!list.empty()) {
    const std::size_t comma = list.find(',');
    const std::string_view item = list.substr(0, comma);
    const auto m = parse_method(item);
    if (!m) throw std::invalid_argument("unknown method: " + std::string(item));
    out.push_back(*m);
    if (comma == std::string_view::npos) break;
    list.remove_prefix(comma + 1);
  }
  return out;
}

std::optional<Method> cf_dependency(Method m) {
  switch (m) {
    case Method::kHybrid:
      return Method::kMean;
    case Method::kHybridN:
      return Method::kMeanN;
    default:
      return std::nullopt;
  }
}

bool uses_history(Method m) {
  return m == Method::kMeanN || m == Method::kHybridN || m == Method::kHc ||
         m == Method::kLdlc;
}

}  // namespace dynsketch
