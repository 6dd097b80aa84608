#include <cstdlib>

#include "doctest.h"
#include "nv/config.hpp"
#include "nv/errors.hpp"

using namespace nv;

TEST_CASE("config file sections, comments and values") {
  auto s = parse_config(R"(# top comment
seed = 7

[arena]
pool_size = 3   
wall_ms=500
; another comment
worker.python = python3 -m nvworker

[ranking]
w_prompt_pass = 0.4
w_oracle_agree = 0.4
w_speed = 0.1
w_static = 0.1
)");
  CHECK(s.at("seed") == "7");
  CHECK(s.at("arena.pool_size") == "3");
  CHECK(s.at("arena.wall_ms") == "500");
  CHECK(s.at("arena.worker.python") == "python3 -m nvworker");
  auto cfg = resolve_config(s);
  CHECK(cfg.seed == 7);
  CHECK(cfg.arena.pool_size == 3);
  CHECK(cfg.arena.wall_ms == 500);
  CHECK(cfg.arena.worker_command.at("python") == "python3 -m nvworker");
  CHECK(cfg.weights.w_prompt_pass == doctest::Approx(0.4));
  CHECK(cfg.provider == "mock");
}

TEST_CASE("config errors name the line or key") {
  try {
    parse_config("[arena]\npool_size 3\n");
    FAIL("expected a parse error");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("[arena\n"), UsageError);
  try {
    resolve_config({{"arena.pool_sise", "2"}});
    FAIL("expected an unknown-key error");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("arena.pool_sise") != std::string::npos);
  }
  CHECK_THROWS_AS(resolve_config({{"arena.pool_size", "many"}}), UsageError);
  CHECK_THROWS_AS(resolve_config({{"arena.pool_size", "0"}}), UsageError);
  // Weights must still sum to one after overrides.
  CHECK_THROWS_AS(resolve_config({{"ranking.w_prompt_pass", "0.9"}}), UsageError);
}

TEST_CASE("precedence: file < environment < flags") {
  Settings file{{"arena.pool_size", "2"}, {"provider.model", "file-model"}, {"seed", "1"}};
  Settings env{{"arena.pool_size", "3"}, {"provider.model", "env-model"}};
  Settings flags{{"arena.pool_size", "5"}};
  auto cfg = resolve_config(merge_settings(file, env, flags));
  CHECK(cfg.arena.pool_size == 5);
  CHECK(cfg.http.model == "env-model");
  CHECK(cfg.seed == 1);
}

TEST_CASE("environment variables map onto settings") {
  ::setenv("NV_PROVIDER_URL", "http://127.0.0.1:9/v1", 1);
  ::setenv("NV_POOL_SIZE", "6", 1);
  ::setenv("NV_SEED", "99", 1);
  auto env = settings_from_env();
  ::unsetenv("NV_PROVIDER_URL");
  ::unsetenv("NV_POOL_SIZE");
  ::unsetenv("NV_SEED");
  CHECK(env.at("provider.url") == "http://127.0.0.1:9/v1");
  auto cfg = resolve_config(env);
  CHECK(cfg.arena.pool_size == 6);
  CHECK(cfg.seed == 99);
  CHECK(cfg.http.url == "http://127.0.0.1:9/v1");
}

TEST_CASE("prompt templates unescape newlines") {
  auto cfg = resolve_config({{"provider.versions_template", "Write:\\n{prompt}"}});
  CHECK(cfg.http.versions_template == "Write:\n{prompt}");
}
