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

#include "opentta/config.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace opentta {

namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double ParseDouble(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size()) {
    throw Error("config key " + key + ": cannot parse '" + value + "' as a number");
  }
  return v;
}

long long ParseInt(const std::string& key, const std::string& value) {
  long long v = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || p != value.data() + value.size()) {
    throw Error("config key " + key + ": cannot parse '" + value + "' as an integer");
  }
  return v;
}

std::string FormatDouble(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

ConfigKey Real(const char* name, const char* help, double EngineConfig::*field) {
  return {name, help,
          [field, name](EngineConfig& c, const std::string& v) {
            c.*field = ParseDouble(name, v);
          },
          [field](const EngineConfig& c) { return FormatDouble(c.*field); }};
}

ConfigKey Bool(const char* name, const char* help, bool EngineConfig::*field) {
  return {name, help,
          [field, name](EngineConfig& c, const std::string& v) {
            if (v == "true" || v == "1") {
              c.*field = true;
            } else if (v == "false" || v == "0") {
              c.*field = false;
            } else {
              throw Error(std::string("config key ") + name +
                          ": expected true or false, got '" + v + "'");
            }
          },
          [field](const EngineConfig& c) {
            return std::string(c.*field ? "true" : "false");
          }};
}

ConfigKey Int(const char* name, const char* help, int EngineConfig::*field) {
  return {name, help,
          [field, name](EngineConfig& c, const std::string& v) {
            const long long x = ParseInt(name, v);
            if (x < -2147483648LL || x > 2147483647LL) {
              throw Error(std::string("config key ") + name + ": out of range");
            }
            c.*field = static_cast<int>(x);
          },
          [field](const EngineConfig& c) { return std::to_string(c.*field); }};
}

std::vector<ConfigKey> BuildKeys() {
  std::vector<ConfigKey> keys = {
      Real("tau_clip", "softmax temperature of the cosine classifier",
           &EngineConfig::tau_clip),
      Real("theta_a_pct", "cache-admission percentile of the score window",
           &EngineConfig::theta_a_pct),
      Real("theta_b_pct", "trust percentile of the score window",
           &EngineConfig::theta_b_pct),
      Int("window_c", "first-check score window size", &EngineConfig::window_c),
      Int("window_g", "verifier score window size", &EngineConfig::window_g),
      Int("gmm_activation", "processed samples before the mixture is used",
          &EngineConfig::gmm_activation),
      Real("theta_p", "posterior threshold for csOOD", &EngineConfig::theta_p),
      Real("theta_c_init", "initial hard fallback threshold",
           &EngineConfig::theta_c_init),
      Real("theta_q_init", "initial quality gate", &EngineConfig::theta_q_init),
      Real("gamma", "quality gate EMA momentum", &EngineConfig::gamma),
      Int("cache_size", "visual cache capacity per class",
          &EngineConfig::cache_size),
      Real("tau_sim", "cache redundancy cosine threshold", &EngineConfig::tau_sim),
      Real("lr_text", "text residual learning rate", &EngineConfig::lr_text),
      Real("lr_vis", "visual residual learning rate", &EngineConfig::lr_vis),
      Real("lambda_align", "alignment loss weight", &EngineConfig::lambda_align),
      Real("lambda_au", "aleatoric loss weight", &EngineConfig::lambda_au),
      Real("aff_scale", "visual affinity scale", &EngineConfig::aff_scale),
      Real("aff_decay", "visual affinity decay", &EngineConfig::aff_decay),
      Real("tau_nce", "alignment temperature", &EngineConfig::tau_nce),
      {"evidence_scale", "logit scale for Dirichlet evidence ('auto' = 1/tau_clip)",
       [](EngineConfig& c, const std::string& v) {
         if (v == "auto") {
           c.evidence_scale.reset();
         } else {
           c.evidence_scale = ParseDouble("evidence_scale", v);
         }
       },
       [](const EngineConfig& c) {
         return c.evidence_scale ? FormatDouble(*c.evidence_scale)
                                 : std::string("auto");
       }},
      Int("gmm_refit_interval", "samples between mixture refits",
          &EngineConfig::gmm_refit_interval),
      Int("flush_interval", "samples between evolution-buffer flushes",
          &EngineConfig::flush_interval),
      {"seed", "random seed",
       [](EngineConfig& c, const std::string& v) { c.seed = ParseInt("seed", v); },
       [](const EngineConfig& c) { return std::to_string(c.seed); }},
      {"optimizer", "residual optimizer: sgd | adam",
       [](EngineConfig& c, const std::string& v) {
         if (v == "sgd") {
           c.optimizer = Optimizer::kGradientDescent;
         } else if (v == "adam") {
           c.optimizer = Optimizer::kAdamFirstStep;
         } else {
           throw Error("config key optimizer: expected sgd or adam, got '" + v + "'");
         }
       },
       [](const EngineConfig& c) {
         return std::string(c.optimizer == Optimizer::kGradientDescent ? "sgd"
                                                                       : "adam");
       }},
      {"verifier", "final verification: gmm | threshold",
       [](EngineConfig& c, const std::string& v) {
         if (v == "gmm") {
           c.verifier = VerifierMode::kGmm;
         } else if (v == "threshold") {
           c.verifier = VerifierMode::kThresholdOnly;
         } else {
           throw Error("config key verifier: expected gmm or threshold, got '" + v + "'");
         }
       },
       [](const EngineConfig& c) {
         return std::string(c.verifier == VerifierMode::kGmm ? "gmm" : "threshold");
       }},
      Real("gmm_tol", "EM log-likelihood tolerance", &EngineConfig::gmm_tol),
      Int("gmm_max_iter", "EM iteration cap", &EngineConfig::gmm_max_iter),
      Bool("gmm_warm_start", "start EM from the previous fit instead of 2-means",
           &EngineConfig::gmm_warm_start),
      Bool("revert_flagged_admission",
           "undo the cache admission of a sample the verifier flags",
           &EngineConfig::revert_flagged_admission),
  };
  return keys;
}

}  // namespace

const std::vector<ConfigKey>& ConfigKeys() {
  static const std::vector<ConfigKey> keys = BuildKeys();
  return keys;
}

std::string KebabCase(const std::string& snake) {
  std::string out = snake;
  std::replace(out.begin(), out.end(), '_', '-');
  return out;
}

void SetConfigValue(EngineConfig& config, const std::string& key,
                    const std::string& value) {
  for (const ConfigKey& k : ConfigKeys()) {
    if (k.name == key) {
      k.set(config, Trim(value));
      return;
    }
  }
  throw Error("unknown config key '" + key + "'");
}

void ApplyConfigText(EngineConfig& config, const std::string& text,
                     const std::string& source) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(source + ":" + std::to_string(line_no) + ": expected key=value");
    }
    try {
      SetConfigValue(config, Trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void ApplyConfigFile(EngineConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  ApplyConfigText(config, buf.str(), path);
}

void ApplyEnvironment(EngineConfig& config) {
  for (const ConfigKey& k : ConfigKeys()) {
    std::string var = kEnvPrefix + k.name;
    std::transform(var.begin(), var.end(), var.begin(),
                   [](unsigned char ch) { return std::toupper(ch); });
    if (const char* value = std::getenv(var.c_str())) {
      try {
        k.set(config, Trim(value));
      } catch (const Error& e) {
        throw Error(var + ": " + e.what());
      }
    }
  }
}

EngineConfig LoadConfig(const std::string& path) {
  EngineConfig config;
  ApplyConfigFile(config, path);
  Validate(config);
  return config;
}

std::string FormatConfig(const EngineConfig& config) {
  std::string out;
  for (const ConfigKey& k : ConfigKeys()) {
    out += k.name + " = " + k.get(config) + "\n";
  }
  return out;
}

}  // namespace opentta
