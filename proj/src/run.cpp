#include "cotforge/run.hpp"

#include <memory>
#include <set>

#include "cotforge/store.hpp"

namespace cotforge {

namespace fs = std::filesystem;

namespace {

TaskStatus task_status_from_string(std::string_view s) {
  if (s == "pending") return TaskStatus::pending;
  if (s == "done") return TaskStatus::done;
  if (s == "failed") return TaskStatus::failed;
  fail(ErrorKind::unrecoverable_run, "unknown task status '" + std::string(s) + "'");
}

json task_json(const TaskSpec& t) {
  json j{{"context", t.context}};
  if (t.verifier_target) j["verifier_target"] = *t.verifier_target;
  return j;
}

json body_json(const Manifest& m) {
  json tasks = json::array();
  for (const auto& t : m.tasks) {
    json e{{"task", task_json(t.spec)}, {"status", std::string(to_string(t.status))}};
    if (!t.record_digest.empty()) e["record_digest"] = t.record_digest;
    if (!t.error.empty()) e["error"] = t.error;
    tasks.push_back(std::move(e));
  }
  return json{{"format", 1}, {"config", m.config}, {"tasks", tasks}};
}

fs::path record_path(const fs::path& run_dir, const std::string& task_id) {
  return run_dir / "records" / (task_id + ".json");
}

// Fields that may change between an interrupted run and its resume.
json replay_view(json config) {
  if (config.is_object()) {
    config.erase("parallelism");
    config.erase("paths");
  }
  return config;
}

std::vector<std::string> task_ids(const std::vector<TaskSpec>& tasks) {
  std::vector<std::string> out;
  for (const auto& t : tasks) out.push_back(t.context.task_id);
  return out;
}

}  // namespace

std::string_view to_string(TaskStatus s) {
  switch (s) {
    case TaskStatus::pending: return "pending";
    case TaskStatus::done: return "done";
    case TaskStatus::failed: return "failed";
  }
  return "pending";
}

json Manifest::to_json() const {
  auto j = body_json(*this);
  j["digest"] = sha256_hex(canonical_dump(j));
  return j;
}

Manifest Manifest::from_json(const json& j) {
  require(j.is_object() && j.contains("digest") && j["digest"].is_string(), ErrorKind::unrecoverable_run,
          "manifest has no digest");
  json body = j;
  body.erase("digest");
  require(sha256_hex(canonical_dump(body)) == j["digest"].get<std::string>(), ErrorKind::unrecoverable_run,
          "manifest digest mismatch");
  try {
    Manifest m;
    m.config = body.at("config");
    for (const auto& e : body.at("tasks")) {
      TaskEntry t;
      t.spec.context = e.at("task").at("context").get<MultimodalContext>();
      if (e["task"].contains("verifier_target")) t.spec.verifier_target = e["task"]["verifier_target"].get<std::string>();
      t.status = task_status_from_string(e.at("status").get<std::string>());
      t.record_digest = e.value("record_digest", "");
      t.error = e.value("error", "");
      m.tasks.push_back(std::move(t));
    }
    return m;
  } catch (const json::exception& e) {
    fail(ErrorKind::unrecoverable_run, std::string("corrupt manifest: ") + e.what());
  }
}

bool Manifest::complete() const {
  for (const auto& t : tasks)
    if (t.status != TaskStatus::done) return false;
  return true;
}

Manifest load_manifest(const fs::path& run_dir) {
  auto bytes = read_file_if_exists(run_dir / "manifest.json");
  require(bytes.has_value(), ErrorKind::unrecoverable_run, "no manifest in " + run_dir.string());
  json j;
  try {
    j = json::parse(*bytes);
  } catch (const json::exception& e) {
    fail(ErrorKind::unrecoverable_run, std::string("manifest is not JSON: ") + e.what());
  }
  return Manifest::from_json(j);
}

void save_manifest(const fs::path& run_dir, const Manifest& m) {
  write_file_atomic(run_dir / "manifest.json", m.to_json().dump(2) + "\n");
}

Manifest open_run(const fs::path& run_dir, const json& config, const std::vector<TaskSpec>& tasks) {
  std::error_code ec;
  fs::create_directories(run_dir / "records", ec);
  if (ec) fail(ErrorKind::storage, "cannot create " + run_dir.string() + ": " + ec.message());

  if (fs::exists(run_dir / "manifest.json")) {
    auto m = load_manifest(run_dir);
    require(canonical_dump(replay_view(m.config)) == canonical_dump(replay_view(config)), ErrorKind::unrecoverable_run,
            "run directory was created with a different config");
    std::vector<TaskSpec> existing;
    for (const auto& t : m.tasks) existing.push_back(t.spec);
    require(task_ids(existing) == task_ids(tasks), ErrorKind::unrecoverable_run,
            "run directory was created with a different task list");
    return m;
  }

  std::set<std::string> seen;
  Manifest m{config, {}};
  for (const auto& t : tasks) {
    require(seen.insert(t.context.task_id).second, ErrorKind::invalid_input,
            "duplicate task_id " + t.context.task_id);
    m.tasks.push_back({t, TaskStatus::pending, "", ""});
  }
  save_manifest(run_dir, m);
  return m;
}

std::vector<CurationRecord> load_records(const fs::path& run_dir, const Manifest& manifest) {
  std::vector<CurationRecord> out;
  for (const auto& t : manifest.tasks) {
    if (t.status != TaskStatus::done) continue;
    const auto& id = t.spec.context.task_id;
    auto bytes = read_file_if_exists(record_path(run_dir, id));
    require(bytes.has_value(), ErrorKind::unrecoverable_run, "record for " + id + " is missing");
    require(sha256_hex(*bytes) == t.record_digest, ErrorKind::unrecoverable_run, "record for " + id + " was altered");
    try {
      out.push_back(json::parse(*bytes).get<CurationRecord>());
    } catch (const json::exception& e) {
      fail(ErrorKind::unrecoverable_run, "record for " + id + " is corrupt: " + e.what());
    }
  }
  return out;
}

RunSummary execute_run(const Backends& backends, const fs::path& run_dir, Manifest& manifest,
                       const CurationConfig& config, const ExecuteOptions& options) {
  RunSummary summary;
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < manifest.tasks.size(); ++i) {
    if (manifest.tasks[i].status == TaskStatus::done)
      ++summary.skipped;
    else
      pending.push_back(i);
  }
  if (options.task_limit && pending.size() > *options.task_limit) pending.resize(*options.task_limit);

  const bool dataset_present =
      fs::exists(run_dir / "dataset" / "split1.jsonl") && fs::exists(run_dir / "dataset" / "split2.jsonl");
  if (pending.empty() && manifest.complete() && dataset_present) {
    summary.complete = true;
    return summary;
  }

  auto sink = std::make_shared<Telemetry>();
  const Backends scoped = backends.scoped(sink);

  std::vector<MultimodalContext> contexts;
  for (auto i : pending) contexts.push_back(manifest.tasks[i].spec.context);

  PoolOptions pool;
  pool.parallelism = options.parallelism;
  // Both callbacks run under the pool's mutex, so the manifest has one writer.
  pool.on_record = [&](std::size_t k, const CurationRecord& r) {
    auto& entry = manifest.tasks[pending[k]];
    const auto bytes = canonical_dump(json(r)) + "\n";
    write_file_atomic(record_path(run_dir, r.task_id), bytes);
    entry.status = TaskStatus::done;
    entry.record_digest = sha256_hex(bytes);
    entry.error.clear();
    save_manifest(run_dir, manifest);
    ++summary.completed_now;
  };
  pool.on_failure = [&](std::size_t k, const TaskFailure& f) {
    auto& entry = manifest.tasks[pending[k]];
    entry.status = TaskStatus::failed;
    entry.error = f.message;
    save_manifest(run_dir, manifest);
  };
  auto result = curate_pool(scoped, contexts, config, pool);
  summary.failures = std::move(result.failures);
  summary.calls = sink->snapshot();

  summary.complete = manifest.complete();
  if (summary.complete) {
    auto samples = build_dataset(load_records(run_dir, manifest), backends.templates());
    summary.dataset = write_dataset(samples, run_dir / "dataset");
  }

  json telemetry{{"calls", summary.calls.to_json()},
                 {"skipped", summary.skipped},
                 {"completed", summary.completed_now},
                 {"failed", summary.failures.size()},
                 {"complete", summary.complete}};
  write_file_atomic(run_dir / "telemetry.json", telemetry.dump(2) + "\n");
  return summary;
}

RunSummary resume_run(const Backends& backends, const fs::path& run_dir, const CurationConfig& config,
                      const ExecuteOptions& options) {
  auto m = load_manifest(run_dir);
  return execute_run(backends, run_dir, m, config, options);
}

}  // namespace cotforge
