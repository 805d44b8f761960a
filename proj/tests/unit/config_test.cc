// Copyright 2026 The hsdacs Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>

#include "hsdacs/config.h"
#include "hsdacs/errors.h"

using namespace hsdacs;

TEST_CASE("key-value parsing") {
  const KeyValues kv = parse_key_values("# comment\n d_model = 32 \n\nheads=2  # trailing\n", "t");
  REQUIRE(kv.size() == 2);
  CHECK(kv[0] == std::pair<std::string, std::string>{"d_model", "32"});
  CHECK(kv[1] == std::pair<std::string, std::string>{"heads", "2"});
  CHECK_THROWS_AS(parse_key_values("d_model 32\n", "t"), ConfigError);
  CHECK_THROWS_AS(parse_key_values(" = 3\n", "t"), ConfigError);
  try {
    parse_key_values("ok = 1\nbroken\n", "file.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("file.cfg:2") != std::string::npos);
  }
}

TEST_CASE("typed field parsers") {
  CHECK(parse_double("x", "0.25") == 0.25);
  CHECK(parse_uint("x", "42") == 42);
  CHECK(parse_int("x", "-3") == -3);
  CHECK_THROWS_AS(parse_uint("x", "-3"), ConfigError);
  CHECK_THROWS_AS(parse_double("x", "abc"), ConfigError);
  CHECK_THROWS_AS(parse_uint("x", "12abc"), ConfigError);
  CHECK(parse_double_list("t", "4, 3,2.5") == std::vector<double>{4.0, 3.0, 2.5});
  CHECK_THROWS_AS(parse_double_list("t", " , "), ConfigError);
  CHECK(format_double(0.1) == "0.1");
  CHECK(parse_double("x", format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("halting mode names") {
  for (HaltingMode m : {HaltingMode::kOffline, HaltingMode::kDacs, HaltingMode::kHsDacs})
    CHECK(parse_halting_mode(to_string(m)) == m);
  CHECK(to_string(HaltingMode::kHsDacs) == "hsdacs");
  CHECK_THROWS_AS(parse_halting_mode("mocha"), ConfigError);
}

TEST_CASE("model config invariants") {
  ModelConfig c = ModelConfig::desk_scale();
  CHECK_NOTHROW(c.validate());
  CHECK(c.d_k() * c.heads == c.d_model);
  CHECK(c.effective_joint_threshold() == static_cast<double>(c.heads));

  ModelConfig bad = c;
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.max_lookahead = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.dacs_threshold = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.joint_threshold = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.subsample_factor = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.vocab_size = 2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("active threshold follows the mode") {
  ModelConfig c = ModelConfig::desk_scale();
  c.halting_mode = HaltingMode::kDacs;
  c.dacs_threshold = 0.7;
  CHECK(c.active_threshold() == 0.7);
  c.halting_mode = HaltingMode::kHsDacs;
  CHECK(c.active_threshold() == 4.0);
  c.joint_threshold = 2.5;
  CHECK(c.active_threshold() == 2.5);
}

TEST_CASE("model config round-trips through key-value text") {
  ModelConfig c = ModelConfig::desk_scale();
  c.halting_mode = HaltingMode::kDacs;
  c.dacs_threshold = 0.85;
  c.joint_threshold = 3.0;
  c.seed = 123456789012345ULL;
  const std::string text = format_key_values(c.to_key_values());
  CHECK(ModelConfig::from_key_values(parse_key_values(text, "rt")) == c);
  c.joint_threshold.reset();
  CHECK(ModelConfig::from_key_values(parse_key_values(format_key_values(c.to_key_values()), "rt")) == c);
  CHECK_THROWS_AS(ModelConfig::from_key_values({{"nonsense", "1"}}), ConfigError);
  CHECK_THROWS_AS(ModelConfig::from_key_values({{"heads", "3"}}), ConfigError);
}
