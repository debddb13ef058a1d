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

#ifndef DYNSKETCH_METHOD_HPP_
#define DYNSKETCH_METHOD_HPP_

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dynsketch {

enum class Method {
  kLc,
  kLcMin,
  kDlc,
  kDlcBest,
  kMean,
  kHMean,
  kGMean,
  kHll,
  kHybrid,
  kMeanN,
  kHybridN,
  kHc,
  kLdlc,
};

std::string_view to_string(Method m);
std::optional<Method> parse_method(std::string_view name);
// Parses a comma-separated list; throws std::invalid_argument on unknown names.
std::vector<Method> parse_method_list(std::string_view list);

// The table a method consumes internally before its own correction
// (Hybrid blends the corrected Mean).
std::optional<Method> cf_dependency(Method m);
bool uses_history(Method m);

}  // namespace dynsketch

#endif  // DYNSKETCH_METHOD_HPP_
