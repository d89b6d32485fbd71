/*
 * Copyright 2026 The OpenTTA Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// EngineConfig from flat "key = value" files, OPENTTA_* environment variables
// and command-line flags. Precedence: defaults < file < environment < flags.

#ifndef OPENTTA_CONFIG_H_
#define OPENTTA_CONFIG_H_

#include <functional>
#include <string>
#include <vector>

#include "opentta/core.h"

namespace opentta {

inline constexpr char kEnvPrefix[] = "OPENTTA_";

struct ConfigKey {
  std::string name;  // snake_case, as used in files
  std::string help;
  std::function<void(EngineConfig&, const std::string&)> set;
  std::function<std::string(const EngineConfig&)> get;
};

const std::vector<ConfigKey>& ConfigKeys();

// "theta_a_pct" -> "theta-a-pct".
std::string KebabCase(const std::string& snake);

// Throws Error on an unknown key or an unparsable value.
void SetConfigValue(EngineConfig& config, const std::string& key,
                    const std::string& value);

// Applies "key = value" lines onto `config`. '#' starts a comment.
void ApplyConfigText(EngineConfig& config, const std::string& text,
                     const std::string& source = "<config>");
void ApplyConfigFile(EngineConfig& config, const std::string& path);
// OPENTTA_THETA_A_PCT=0.25 and so on.
void ApplyEnvironment(EngineConfig& config);

// File values over defaults, validated.
EngineConfig LoadConfig(const std::string& path);

// One "key = value" line per key; parses back to the same config.
std::string FormatConfig(const EngineConfig& config);

}  // namespace opentta

#endif  // OPENTTA_CONFIG_H_
