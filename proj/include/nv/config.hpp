#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "nv/analysis.hpp"
#include "nv/arena.hpp"
#include "nv/providers.hpp"

namespace nv {

// Flat "section.key" -> value settings. Later layers override earlier ones.
using Settings = std::map<std::string, std::string>;

// `[section]` headers and `key = value` lines; `#` and `;` start comments.
// Throws UsageError with the line number on malformed input.
Settings parse_config(std::string_view text);

// Settings taken from the environment: NV_PROVIDER_URL, NV_PROVIDER_TOKEN,
// NV_PROVIDER_MODEL, NV_SEED, NV_POOL_SIZE.
Settings settings_from_env();

struct CliConfig {
  ArenaConfig arena;
  RankingWeights weights;
  std::string provider = "mock";  // mock | http
  HttpProviderConfig http;
  Sampling sampling;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
};

// Builds the typed configuration; unknown keys and malformed values raise
// UsageError naming the key.
CliConfig resolve_config(const Settings& merged);

// Overlays in precedence order: defaults < file < env < flags.
Settings merge_settings(const Settings& file, const Settings& env, const Settings& flags);

}  // namespace nv
