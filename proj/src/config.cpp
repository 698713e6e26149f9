#include "cotforge/config.hpp"

#include <charconv>
#include <cstring>

extern char** environ;

namespace cotforge {

namespace {

enum class ValueType { string, integer, real, boolean };

struct EnvBinding {
  const char* name;
  const char* pointer;
  ValueType type;
};

constexpr EnvBinding kEnvBindings[] = {
    {"COTFORGE_BACKEND", "/backend/mode", ValueType::string},
    {"COTFORGE_REASONER_ENDPOINT", "/backend/reasoner_endpoint", ValueType::string},
    {"COTFORGE_EMBEDDER_ENDPOINT", "/backend/embedder_endpoint", ValueType::string},
    {"COTFORGE_T2I_ENDPOINT", "/backend/t2i_endpoint", ValueType::string},
    {"COTFORGE_TIMEOUT_MS", "/backend/timeout_ms", ValueType::integer},
    {"COTFORGE_MAX_RETRIES", "/backend/max_retries", ValueType::integer},
    {"COTFORGE_BACKOFF_MS", "/backend/backoff_ms", ValueType::integer},
    {"COTFORGE_ATTACH_IMAGES", "/backend/attach_images", ValueType::boolean},
    {"COTFORGE_SEED", "/seed", ValueType::integer},
    {"COTFORGE_PARALLELISM", "/parallelism", ValueType::integer},
    {"COTFORGE_CANDIDATES", "/curation/candidates_per_round", ValueType::integer},
    {"COTFORGE_MAX_ROUNDS", "/curation/max_rounds", ValueType::integer},
    {"COTFORGE_THRESHOLD", "/curation/quality_threshold", ValueType::real},
    {"COTFORGE_SELECTOR", "/curation/selector_kind", ValueType::string},
    {"COTFORGE_TEMPERATURE", "/curation/sampling/temperature", ValueType::real},
    {"COTFORGE_TOP_P", "/curation/sampling/top_p", ValueType::real},
    {"COTFORGE_TEMPLATES", "/paths/templates", ValueType::string},
    {"COTFORGE_RECORD", "/paths/record", ValueType::string},
};

json parse_env_value(const EnvBinding& b, const std::string& raw) {
  auto bad = [&]() -> json { fail(ErrorKind::configuration, std::string(b.name) + " has invalid value '" + raw + "'"); };
  switch (b.type) {
    case ValueType::string: return raw;
    case ValueType::integer: {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      if (ec != std::errc{} || p != raw.data() + raw.size()) return bad();
      return v;
    }
    case ValueType::real: {
      try {
        std::size_t used = 0;
        double v = std::stod(raw, &used);
        if (used != raw.size()) return bad();
        return v;
      } catch (const std::exception&) {
        return bad();
      }
    }
    case ValueType::boolean:
      if (raw == "1" || raw == "true") return true;
      if (raw == "0" || raw == "false") return false;
      return bad();
  }
  return bad();
}

// Rejects keys the defaults do not have; model_names is free-form.
void check_known_keys(const json& known, const json& patch, const std::string& where) {
  if (!patch.is_object()) return;
  for (const auto& [k, v] : patch.items()) {
    const auto path = where + "/" + k;
    require(known.is_object() && known.contains(k), ErrorKind::configuration, "unknown config key " + path);
    if (k != "model_names" && known[k].is_object()) check_known_keys(known[k], v, path);
  }
}

}  // namespace

BackendConfig RunConfig::effective_backend() const {
  auto b = backend;
  b.parallelism = parallelism;
  return b;
}

CurationConfig RunConfig::effective_curation() const {
  auto c = curation;
  c.sampling.seed = seed;
  return c;
}

void RunConfig::validate() const {
  require(parallelism >= 1, ErrorKind::configuration, "parallelism must be at least 1");
  require(n >= 1, ErrorKind::configuration, "n must be at least 1");
  effective_backend().validate();
  effective_curation().validate();
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"backend", c.backend},
           {"curation", c.curation},
           {"scaling",
            {{"strategy", std::string(to_string(c.strategy))},
             {"n", c.n},
             {"chains", c.overrides.chains ? json(*c.overrides.chains) : json(nullptr)},
             {"images_per_chain", c.overrides.images_per_chain ? json(*c.overrides.images_per_chain) : json(nullptr)}}},
           {"seed", c.seed},
           {"parallelism", c.parallelism},
           {"paths",
            {{"tasks", c.paths.tasks},
             {"out", c.paths.out},
             {"templates", c.paths.templates},
             {"record", c.paths.record}}}};
  // Seed lives at the top level only.
  j["curation"]["sampling"].erase("seed");
  j["backend"].erase("parallelism");
}

void from_json(const json& j, RunConfig& c) {
  try {
    if (j.contains("backend")) c.backend = j["backend"].get<BackendConfig>();
    if (j.contains("curation")) c.curation = j["curation"].get<CurationConfig>();
    if (j.contains("scaling")) {
      const auto& s = j["scaling"];
      if (s.contains("strategy")) c.strategy = strategy_from_string(s["strategy"].get<std::string>());
      c.n = s.value("n", c.n);
      auto opt = [&](const char* key, std::optional<int>& out) {
        if (s.contains(key)) out = s[key].is_null() ? std::nullopt : std::optional(s[key].get<int>());
      };
      opt("chains", c.overrides.chains);
      opt("images_per_chain", c.overrides.images_per_chain);
    }
    c.seed = j.value("seed", c.seed);
    c.parallelism = j.value("parallelism", c.parallelism);
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      c.paths.tasks = p.value("tasks", c.paths.tasks);
      c.paths.out = p.value("out", c.paths.out);
      c.paths.templates = p.value("templates", c.paths.templates);
      c.paths.record = p.value("record", c.paths.record);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::configuration, std::string("bad config value: ") + e.what());
  }
}

RunConfig resolve_run_config(const json& file, const std::map<std::string, std::string>& env, const json& flags) {
  const json defaults = RunConfig{};
  json merged = defaults;

  if (!file.is_null()) {
    require(file.is_object(), ErrorKind::configuration, "config file must hold a JSON object");
    check_known_keys(defaults, file, "");
    merged.merge_patch(file);
  }

  json env_patch = json::object();
  for (const auto& [name, raw] : env) {
    if (!name.starts_with("COTFORGE_") || name == "COTFORGE_API_KEY") continue;
    const EnvBinding* hit = nullptr;
    for (const auto& b : kEnvBindings)
      if (name == b.name) hit = &b;
    require(hit != nullptr, ErrorKind::configuration, "unknown environment variable " + name);
    env_patch[json::json_pointer(hit->pointer)] = parse_env_value(*hit, raw);
  }
  merged.merge_patch(env_patch);

  if (!flags.is_null()) {
    check_known_keys(defaults, flags, "");
    merged.merge_patch(flags);
  }

  RunConfig c = merged.get<RunConfig>();
  if (auto it = env.find("COTFORGE_API_KEY"); it != env.end() && !it->second.empty()) c.backend.api_key = it->second;
  c.validate();
  return c;
}

std::map<std::string, std::string> cotforge_environment() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    std::string_view kv(*e);
    if (!kv.starts_with("COTFORGE_")) continue;
    auto eq = kv.find('=');
    if (eq == std::string_view::npos) continue;
    out.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
  }
  return out;
}

}  // namespace cotforge
