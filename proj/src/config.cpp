#include "nv/config.hpp"

#include <cstdlib>

#include "nv/errors.hpp"

namespace nv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::int64_t to_int(const std::string& key, const std::string& v, std::int64_t min) {
  std::size_t used = 0;
  std::int64_t x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw UsageError(key + ": expected an integer, got '" + v + "'");
  if (x < min) throw UsageError(key + ": must be at least " + std::to_string(min));
  return x;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw UsageError(key + ": expected a number, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError(key + ": expected true or false, got '" + v + "'");
}

// Config values are single lines; templates spell newlines as \n.
std::string unescape_newlines(std::string v) {
  for (auto pos = v.find("\\n"); pos != std::string::npos; pos = v.find("\\n", pos + 1)) v.replace(pos, 2, "\n");
  return v;
}

}  // namespace

Settings parse_config(std::string_view text) {
  Settings out;
  std::string section;
  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    auto line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw UsageError("config line " + std::to_string(lineno) + ": unterminated section");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw UsageError("config line " + std::to_string(lineno) + ": empty section name");
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    auto key = std::string(trim(line.substr(0, eq)));
    if (key.empty()) throw UsageError("config line " + std::to_string(lineno) + ": empty key");
    out[section.empty() ? key : section + "." + key] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

Settings settings_from_env() {
  static const std::pair<const char*, const char*> vars[] = {{"NV_PROVIDER_URL", "provider.url"},
                                                             {"NV_PROVIDER_TOKEN", "provider.token"},
                                                             {"NV_PROVIDER_MODEL", "provider.model"},
                                                             {"NV_SEED", "seed"},
                                                             {"NV_POOL_SIZE", "arena.pool_size"}};
  Settings out;
  for (const auto& [env, key] : vars)
    if (const char* v = std::getenv(env)) out[key] = v;
  return out;
}

Settings merge_settings(const Settings& file, const Settings& env, const Settings& flags) {
  Settings out = file;
  for (const auto& [k, v] : env) out[k] = v;
  for (const auto& [k, v] : flags) out[k] = v;
  return out;
}

CliConfig resolve_config(const Settings& merged) {
  CliConfig c;
  for (const auto& [key, v] : merged) {
    if (key == "seed") c.seed = static_cast<std::uint64_t>(to_int(key, v, 0));
    else if (key == "arena.pool_size") c.arena.pool_size = static_cast<int>(to_int(key, v, 1));
    else if (key == "arena.wall_ms") c.arena.wall_ms = to_int(key, v, 1);
    else if (key == "arena.mem_mb") c.arena.mem_mb = to_int(key, v, 1);
    else if (key == "arena.retry_on_crash") c.arena.retry_on_crash = static_cast<int>(to_int(key, v, 0));
    else if (key == "arena.reuse_processes") c.arena.reuse_processes = to_bool(key, v);
    else if (key.rfind("arena.worker.", 0) == 0 && key.size() > 13) c.arena.worker_command[key.substr(13)] = v;
    else if (key == "ranking.w_prompt_pass") c.weights.w_prompt_pass = to_double(key, v);
    else if (key == "ranking.w_oracle_agree") c.weights.w_oracle_agree = to_double(key, v);
    else if (key == "ranking.w_speed") c.weights.w_speed = to_double(key, v);
    else if (key == "ranking.w_static") c.weights.w_static = to_double(key, v);
    else if (key == "provider.kind") {
      if (v != "mock" && v != "http") throw UsageError(key + ": expected mock or http, got '" + v + "'");
      c.provider = v;
    } else if (key == "provider.url") c.http.url = v;
    else if (key == "provider.token") c.http.token = v;
    else if (key == "provider.model") c.http.model = v;
    else if (key == "provider.concurrency") c.http.concurrency = static_cast<int>(to_int(key, v, 1));
    else if (key == "provider.per_request_n") c.http.per_request_n = static_cast<int>(to_int(key, v, 0));
    else if (key == "provider.timeout_ms") c.http.timeout_ms = static_cast<int>(to_int(key, v, 1));
    else if (key == "provider.transcript") c.http.replay_path = v;
    else if (key == "provider.record") c.http.record_path = v;
    else if (key == "provider.versions_template") c.http.versions_template = unescape_newlines(v);
    else if (key == "provider.tests_template") c.http.tests_template = unescape_newlines(v);
    else if (key == "provider.temperature") c.sampling.temperature = to_double(key, v);
    else if (key == "provider.max_tokens") c.sampling.max_tokens = static_cast<int>(to_int(key, v, 1));
    else if (key == "output.dir") c.out_dir = v;
    else throw UsageError("unknown setting '" + key + "'");
  }
  validate_config(c.arena);
  validate_weights(c.weights);
  return c;
}

}  // namespace nv
