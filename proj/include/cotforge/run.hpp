#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cotforge/backends.hpp"
#include "cotforge/curation.hpp"
#include "cotforge/dataset.hpp"

namespace cotforge {

enum class TaskStatus { pending, done, failed };

std::string_view to_string(TaskStatus s);

struct TaskEntry {
  TaskSpec spec;
  TaskStatus status = TaskStatus::pending;
  std::string record_digest;  // sha256 hex of records/<task_id>.json
  std::string error;
};

// Contents of run_dir/manifest.json. The stored "digest" covers every other
// field and is checked on load.
struct Manifest {
  json config;
  std::vector<TaskEntry> tasks;

  json to_json() const;  // includes the digest
  static Manifest from_json(const json& j);
  bool complete() const;
};

Manifest load_manifest(const std::filesystem::path& run_dir);
void save_manifest(const std::filesystem::path& run_dir, const Manifest& m);

// Opens run_dir, creating manifest.json when absent. An existing manifest
// must carry the same config and task list.
Manifest open_run(const std::filesystem::path& run_dir, const json& config, const std::vector<TaskSpec>& tasks);

struct ExecuteOptions {
  int parallelism = 1;
  // Stop after attempting this many pending tasks; simulates an interrupt.
  std::optional<std::size_t> task_limit;
};

struct RunSummary {
  std::size_t skipped = 0;
  std::size_t completed_now = 0;
  std::vector<TaskFailure> failures;
  CallCounts calls;  // this invocation only
  bool complete = false;
  std::optional<DatasetPaths> dataset;  // written once every task is done
};

// Curates every pending task, persisting each record and the manifest as
// it finishes. Done tasks are not touched.
RunSummary execute_run(const Backends& backends, const std::filesystem::path& run_dir, Manifest& manifest,
                       const CurationConfig& config, const ExecuteOptions& options = {});

// Reloads run_dir/manifest.json and finishes whatever is pending.
RunSummary resume_run(const Backends& backends, const std::filesystem::path& run_dir, const CurationConfig& config,
                      const ExecuteOptions& options = {});

// Records of the done tasks in manifest order, digests checked.
std::vector<CurationRecord> load_records(const std::filesystem::path& run_dir, const Manifest& manifest);

}  // namespace cotforge
