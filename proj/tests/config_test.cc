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

#include <cstdlib>
#include <fstream>

#include <gtest/gtest.h>

#include "testing.h"

namespace opentta {
namespace {

using testing::TempDir;

bool SameConfig(const EngineConfig& a, const EngineConfig& b) {
  return FormatConfig(a) == FormatConfig(b);
}

TEST(ConfigTest, EmptyFileGivesDefaults) {
  TempDir dir;
  std::ofstream(dir.File("empty.conf")) << "";
  EXPECT_TRUE(SameConfig(LoadConfig(dir.File("empty.conf")), EngineConfig()));
  std::ofstream(dir.File("comments.conf")) << "# nothing\n\n   # here\n";
  EXPECT_TRUE(SameConfig(LoadConfig(dir.File("comments.conf")), EngineConfig()));
}

TEST(ConfigTest, FileValues) {
  EngineConfig c;
  ApplyConfigText(c, "theta_a_pct = 0.25  # lower\ncache_size=7\noptimizer = adam\n"
                     "verifier = threshold\ngmm_warm_start = true\n");
  EXPECT_EQ(c.theta_a_pct, 0.25);
  EXPECT_EQ(c.cache_size, 7);
  EXPECT_EQ(c.optimizer, Optimizer::kAdamFirstStep);
  EXPECT_EQ(c.verifier, VerifierMode::kThresholdOnly);
  EXPECT_TRUE(c.gmm_warm_start);
}

TEST(ConfigTest, InvariantViolation) {
  TempDir dir;
  std::ofstream(dir.File("bad.conf")) << "theta_a_pct = 0.7\ntheta_b_pct = 0.6\n";
  EXPECT_THROW(LoadConfig(dir.File("bad.conf")), Error);
}

TEST(ConfigTest, UnknownKeysAndBadValues) {
  EngineConfig c;
  EXPECT_THROW(SetConfigValue(c, "no_such_key", "1"), Error);
  EXPECT_THROW(SetConfigValue(c, "cache_size", "five"), Error);
  EXPECT_THROW(SetConfigValue(c, "cache_size", "5.5"), Error);
  EXPECT_THROW(SetConfigValue(c, "theta_p", "0.5x"), Error);
  EXPECT_THROW(SetConfigValue(c, "optimizer", "sgdm"), Error);
  EXPECT_THROW(SetConfigValue(c, "gmm_warm_start", "maybe"), Error);
  EXPECT_THROW(ApplyConfigText(c, "theta_p 0.5\n"), Error);
}

TEST(ConfigTest, PrecedenceFileEnvironmentFlag) {
  EngineConfig c;
  ApplyConfigText(c, "theta_a_pct = 0.2\ntheta_b_pct = 0.55\ngamma = 0.02\n");
  setenv("OPENTTA_THETA_A_PCT", "0.25", 1);
  setenv("OPENTTA_THETA_B_PCT", "0.65", 1);
  ApplyEnvironment(c);
  unsetenv("OPENTTA_THETA_A_PCT");
  unsetenv("OPENTTA_THETA_B_PCT");
  SetConfigValue(c, "theta_b_pct", "0.7");
  EXPECT_EQ(c.theta_a_pct, 0.25);  // environment over file
  EXPECT_EQ(c.theta_b_pct, 0.7);   // flag over environment
  EXPECT_EQ(c.gamma, 0.02);
}

TEST(ConfigTest, FormatRoundTrip) {
  EngineConfig c;
  c.tau_clip = 0.0123456789012345;
  c.evidence_scale = 42.5;
  c.optimizer = Optimizer::kAdamFirstStep;
  c.revert_flagged_admission = false;
  c.seed = 1234567890123LL;
  EngineConfig back;
  ApplyConfigText(back, FormatConfig(c));
  EXPECT_TRUE(SameConfig(back, c));
  EXPECT_EQ(back.tau_clip, c.tau_clip);
  EXPECT_EQ(back.evidence_scale, c.evidence_scale);
  EXPECT_FALSE(back.revert_flagged_admission);
}

TEST(ConfigTest, EveryKeyHasAKebabFlag) {
  for (const ConfigKey& key : ConfigKeys()) {
    const std::string flag = KebabCase(key.name);
    EXPECT_EQ(flag.find('_'), std::string::npos);
    EXPECT_FALSE(key.help.empty());
  }
  EXPECT_EQ(KebabCase("theta_a_pct"), "theta-a-pct");
}

}  // namespace
}  // namespace opentta
