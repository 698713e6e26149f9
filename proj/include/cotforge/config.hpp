#pragma once

#include <map>
#include <optional>
#include <string>

#include "cotforge/backends.hpp"
#include "cotforge/curation.hpp"
#include "cotforge/scaling.hpp"

namespace cotforge {

struct RunPaths {
  std::string tasks;
  std::string out;
  std::string templates;
  std::string record;  // JSON-Lines wire log; empty disables it
};

// Everything a subcommand needs, resolved before any backend call.
// Precedence: flags > COTFORGE_* environment > --config file > defaults.
struct RunConfig {
  BackendConfig backend;
  CurationConfig curation;
  Strategy strategy = Strategy::hybrid;
  int n = 16;
  PlanOverrides overrides;
  std::int64_t seed = 0;
  int parallelism = 4;
  RunPaths paths;

  // seed and parallelism copied into the module configs.
  BackendConfig effective_backend() const;
  CurationConfig effective_curation() const;
  void validate() const;
};

// The API key never appears here, so manifests can be shared.
void to_json(json& j, const RunConfig& c);
void from_json(const json& j, RunConfig& c);

// Environment entries are "COTFORGE_<NAME>" -> value; other names are
// ignored, unknown COTFORGE_ names raise a configuration error.
RunConfig resolve_run_config(const json& file, const std::map<std::string, std::string>& env, const json& flags);

// COTFORGE_* variables of the current process.
std::map<std::string, std::string> cotforge_environment();

}  // namespace cotforge
