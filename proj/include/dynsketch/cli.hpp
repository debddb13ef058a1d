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

#ifndef DYNSKETCH_CLI_HPP_
#define DYNSKETCH_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace dynsketch {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Entry point behind the `dynsketch` binary. `args` excludes the program
// name; `in` backs `input=-` for the estimate subcommand.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            std::istream& in);

}  // namespace dynsketch

#endif  // DYNSKETCH_CLI_HPP_
