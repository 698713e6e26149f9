#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cotforge/consensus.hpp"
#include "cotforge/curation.hpp"
#include "cotforge/dataset.hpp"
#include "cotforge/inference.hpp"
#include "cotforge/metrics.hpp"
#include "cotforge/mock_backend.hpp"
#include "cotforge/run.hpp"
#include "cotforge/scaling.hpp"
#include "cotforge/store.hpp"

namespace cotforge::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string backend;
  std::string config;
  std::string templates;
  std::string record;
  std::int64_t seed = 0;
  int parallelism = 4;
  CLI::Option* backend_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* parallelism_opt = nullptr;
  CLI::Option* templates_opt = nullptr;
  CLI::Option* record_opt = nullptr;
};

void add_common(CLI::App* sub, Common& c) {
  c.backend_opt = sub->add_option("--backend", c.backend, "Model backend")->check(CLI::IsMember({"http", "mock"}));
  c.seed_opt = sub->add_option("--seed", c.seed, "Base sampling seed");
  c.parallelism_opt =
      sub->add_option("--parallelism", c.parallelism, "Concurrent backend requests")->check(CLI::PositiveNumber);
  sub->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  c.templates_opt =
      sub->add_option("--templates", c.templates, "Role template overrides (JSON)")->check(CLI::ExistingFile);
  c.record_opt = sub->add_option("--record", c.record, "Append request/response pairs to this JSON-Lines file");
}

json common_flags(const Common& c) {
  json f = json::object();
  if (c.backend_opt->count()) f["backend"]["mode"] = c.backend;
  if (c.seed_opt->count()) f["seed"] = c.seed;
  if (c.parallelism_opt->count()) f["parallelism"] = c.parallelism;
  if (c.templates_opt->count()) f["paths"]["templates"] = c.templates;
  if (c.record_opt->count()) f["paths"]["record"] = c.record;
  return f;
}

std::string read_text(const fs::path& p) {
  auto bytes = read_file_if_exists(p);
  require(bytes.has_value(), ErrorKind::invalid_input, "cannot read " + p.string());
  return *bytes;
}

json read_json_file(const fs::path& p, ErrorKind kind) {
  try {
    return json::parse(read_text(p));
  } catch (const json::exception& e) {
    fail(kind, p.string() + " is not valid JSON: " + e.what());
  }
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::vector<json> out;
  std::istringstream in(read_text(p));
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      fail(ErrorKind::invalid_input, p.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

json path_flags(const std::string& tasks, const std::string& out) {
  json f = json::object();
  if (!tasks.empty()) f["paths"]["tasks"] = tasks;
  if (!out.empty()) f["paths"]["out"] = out;
  return f;
}

RunConfig resolve(const Common& c, json flags) {
  json file = c.config.empty() ? json(nullptr) : read_json_file(c.config, ErrorKind::configuration);
  flags.merge_patch(common_flags(c));
  return resolve_run_config(file, cotforge_environment(), flags);
}

struct Session {
  std::shared_ptr<RunStore> store;
  std::unique_ptr<Backends> backends;
};

Session open_session(const RunConfig& cfg, const fs::path& store_root, std::vector<fs::path> roots,
                     const Hooks& hooks) {
  std::shared_ptr<Transport> transport;
  if (hooks.transport)
    transport = hooks.transport(cfg);
  else if (cfg.backend.mode == BackendMode::mock)
    transport = std::make_shared<MockBackend>(cfg.backend.mock_embedding_dim);
  else
    transport = std::make_shared<HttpTransport>(cfg.backend.timeout_ms, cfg.backend.api_key);
  if (!cfg.paths.record.empty()) transport = std::make_shared<RecordingTransport>(transport, cfg.paths.record);

  auto templates = std::make_shared<TemplateRegistry>(TemplateRegistry::defaults());
  if (!cfg.paths.templates.empty()) templates->overlay_file(cfg.paths.templates);

  Session s;
  if (!store_root.empty()) {
    s.store = std::make_shared<RunStore>(store_root);
    roots.push_back(store_root);
  }
  roots.push_back(fs::current_path());
  auto resolver = std::make_shared<FileResolver>(std::move(roots));
  s.backends = std::make_unique<Backends>(cfg.effective_backend(), transport, s.store, templates, resolver);
  return s;
}

fs::path parent_dir(const std::string& file) {
  auto p = fs::absolute(file).parent_path();
  return p.empty() ? fs::current_path() : p;
}

TaskSpec pick_task(const std::vector<TaskSpec>& tasks, const std::string& id) {
  require(!tasks.empty(), ErrorKind::invalid_input, "task file holds no tasks");
  if (id.empty()) {
    require(tasks.size() == 1, ErrorKind::invalid_input, "task file holds several tasks; pass --id");
    return tasks.front();
  }
  for (const auto& t : tasks)
    if (t.context.task_id == id) return t;
  fail(ErrorKind::invalid_input, "no task with id " + id);
}

void write_output(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, j.dump(2) + "\n");
}

bool is_backend_kind(const std::string& kind) {
  return kind == to_string(ErrorKind::backend_unavailable) || kind == to_string(ErrorKind::protocol);
}

double read_unit_score(const json& j, const char* key) {
  require(j.contains(key) && j[key].is_number(), ErrorKind::invalid_input, std::string("missing numeric ") + key);
  double v = j[key].get<double>();
  require(std::isfinite(v) && v >= 0.0 && v <= 1.0, ErrorKind::invalid_input,
          std::string(key) + " must lie in [0, 1]");
  return v;
}

// ---- curate ----

struct CurateArgs {
  Common common;
  std::string tasks, out, selector;
  int candidates = 3;
  int max_rounds = 2;
  double threshold = 0.5;
  std::size_t task_limit = 0;
  CLI::Option *candidates_opt, *rounds_opt, *threshold_opt, *selector_opt, *limit_opt;
};

int curate(const CurateArgs& a, std::ostream& out, const Hooks& hooks) {
  json flags = path_flags(a.tasks, a.out);
  if (a.candidates_opt->count()) flags["curation"]["candidates_per_round"] = a.candidates;
  if (a.rounds_opt->count()) flags["curation"]["max_rounds"] = a.max_rounds;
  if (a.threshold_opt->count()) flags["curation"]["quality_threshold"] = a.threshold;
  if (a.selector_opt->count()) flags["curation"]["selector_kind"] = a.selector;
  auto cfg = resolve(a.common, flags);

  auto tasks = load_tasks(cfg.paths.tasks);
  const fs::path run_dir = cfg.paths.out;
  auto session = open_session(cfg, run_dir, {parent_dir(cfg.paths.tasks)}, hooks);
  auto manifest = open_run(run_dir, json(cfg), tasks);

  ExecuteOptions opts;
  opts.parallelism = cfg.parallelism;
  if (a.limit_opt->count()) opts.task_limit = a.task_limit;
  auto summary = execute_run(*session.backends, run_dir, manifest, cfg.effective_curation(), opts);

  json failures = json::array();
  bool backend_failure = false;
  for (const auto& f : summary.failures) {
    failures.push_back(f);
    backend_failure = backend_failure || is_backend_kind(f.kind);
  }
  json report{{"run", run_dir.string()},
              {"skipped", summary.skipped},
              {"completed", summary.completed_now},
              {"complete", summary.complete},
              {"failures", failures},
              {"calls", summary.calls.to_json()}};
  if (summary.dataset)
    report["dataset"] = {{"split1", summary.dataset->split1.string()}, {"split2", summary.dataset->split2.string()}};
  out << report.dump(2) << '\n';
  if (summary.failures.empty()) return 0;
  return backend_failure ? 2 : 1;
}

// ---- infer ----

struct InferArgs {
  Common common;
  std::string task, id, out;
  bool no_cot = false;
};

int infer(const InferArgs& a, std::ostream& out, const Hooks& hooks) {
  auto cfg = resolve(a.common, path_flags(a.task, a.out));
  auto task = pick_task(load_tasks(cfg.paths.tasks), a.id);
  auto session = open_session(cfg, cfg.paths.out, {parent_dir(cfg.paths.tasks)}, hooks);

  auto result = two_stage_infer(*session.backends, task.context, cfg.effective_curation().sampling, cfg.seed, !a.no_cot);
  json manifest{{"command", "infer"},
                {"config", cfg},
                {"task_id", task.context.task_id},
                {"use_cot", !a.no_cot},
                {"result", result},
                {"calls", session.backends->telemetry().to_json()}};
  write_output(fs::path(cfg.paths.out) / "manifest.json", manifest);
  out << json(result).dump(2) << '\n';
  return 0;
}

// ---- select ----

struct SelectArgs {
  Common common;
  std::string cots, task, id, out;
  bool normalize = false;
};

int select(const SelectArgs& a, std::ostream& out, const Hooks& hooks) {
  json flags = path_flags(a.task, a.out);
  if (a.normalize) flags["curation"]["normalize_embeddings"] = true;
  auto cfg = resolve(a.common, flags);
  auto task = pick_task(load_tasks(cfg.paths.tasks), a.id);

  std::vector<ReasoningChain> chains;
  for (const auto& j : read_jsonl(a.cots)) {
    ReasoningChain c;
    if (j.is_string()) {
      c.text = j.get<std::string>();
    } else {
      require(j.is_object() && j.contains("text") && j["text"].is_string(), ErrorKind::invalid_input,
              "each --cots line must be a string or an object with \"text\"");
      c.text = j["text"].get<std::string>();
    }
    c.chain_index = static_cast<int>(chains.size());
    validate(c);
    chains.push_back(std::move(c));
  }
  require(!chains.empty(), ErrorKind::invalid_input, "--cots holds no chains");

  auto session = open_session(cfg, cfg.paths.out, {parent_dir(cfg.paths.tasks)}, hooks);
  auto prompts = derive_prompts(*session.backends, chains, task.context);
  auto embeddings = embed_all(*session.backends, prompts);
  auto r = select_consistent(prompts, embeddings, {cfg.curation.normalize_embeddings});

  json result{{"index", r.index},
              {"average", std::vector<double>(r.average.data(), r.average.data() + r.average.size())},
              {"prompts", prompts}};
  if (!cfg.paths.out.empty())
    write_output(fs::path(cfg.paths.out) / "manifest.json",
                 json{{"command", "select"}, {"config", cfg}, {"task_id", task.context.task_id}, {"result", result}});
  out << result.dump(2) << '\n';
  return 0;
}

// ---- scale ----

struct ScaleArgs {
  Common common;
  std::string task, id, strategy, scores, out;
  int n = 16;
  int chains = 0;
  int images_per_chain = 0;
  double threshold = 0.5;
  CLI::Option *strategy_opt, *n_opt, *chains_opt, *k_opt;
};

std::vector<double> read_job_scores(const fs::path& p) {
  std::vector<double> out;
  for (const auto& j : read_jsonl(p)) {
    if (j.is_number()) {
      double v = j.get<double>();
      require(std::isfinite(v) && v >= 0.0 && v <= 1.0, ErrorKind::invalid_input, "score must lie in [0, 1]");
      out.push_back(v);
    } else {
      out.push_back(read_unit_score(j, "score"));
    }
  }
  return out;
}

int scale(const ScaleArgs& a, std::ostream& out, const Hooks& hooks) {
  json flags = path_flags(a.task, a.out);
  if (a.strategy_opt->count()) flags["scaling"]["strategy"] = a.strategy;
  if (a.n_opt->count()) flags["scaling"]["n"] = a.n;
  if (a.chains_opt->count()) flags["scaling"]["chains"] = a.chains;
  if (a.k_opt->count()) flags["scaling"]["images_per_chain"] = a.images_per_chain;
  auto cfg = resolve(a.common, flags);

  auto plan = expand_plan(cfg.strategy, cfg.n, cfg.overrides, cfg.effective_curation().sampling, cfg.seed);
  json manifest{{"command", "scale"}, {"config", cfg}, {"plan", plan}};

  if (!cfg.paths.tasks.empty()) {
    require(!cfg.paths.out.empty(), ErrorKind::invalid_input, "scale with --task needs --out for generated images");
    auto task = pick_task(load_tasks(cfg.paths.tasks), a.id);
    auto session = open_session(cfg, cfg.paths.out, {parent_dir(cfg.paths.tasks)}, hooks);
    auto outcome = execute_plan(*session.backends, task.context, plan);

    std::optional<std::vector<double>> scores;
    if (!a.scores.empty()) {
      scores = read_job_scores(a.scores);
      require(scores->size() == outcome.jobs.size(), ErrorKind::invalid_input,
              "--scores holds " + std::to_string(scores->size()) + " values for " +
                  std::to_string(outcome.jobs.size()) + " jobs");
      // Failed jobs never pass.
      for (std::size_t i = 0; i < outcome.jobs.size(); ++i)
        if (!outcome.jobs[i].ok()) (*scores)[i] = 0.0;
    } else if (task.verifier_target) {
      scores = verify_outcome(outcome, task, keyword_verifier);
    }
    if (scores) outcome = best_of_n(std::move(outcome), *scores, a.threshold);

    manifest["task_id"] = task.context.task_id;
    manifest["threshold"] = a.threshold;
    manifest["outcome"] = outcome;
    manifest["calls"] = session.backends->telemetry().to_json();
  }
  if (!cfg.paths.out.empty()) write_output(fs::path(cfg.paths.out) / "manifest.json", manifest);
  out << manifest.dump(2) << '\n';
  return 0;
}

// ---- eval ----

struct EvalArgs {
  Common common;
  std::string benchmark, scores, out;
};

std::string method_of(const json& j) {
  if (!j.contains("method")) return "default";
  require(j["method"].is_string(), ErrorKind::invalid_input, "method must be a string");
  return j["method"].get<std::string>();
}

json eval_cobsat(const std::vector<json>& lines) {
  // Per-sample lines are averaged per (method, task).
  std::vector<std::string> order;
  std::map<std::string, std::map<std::string, std::pair<double, int>>> sums;
  for (const auto& j : lines) {
    require(j.is_object() && j.contains("task") && j["task"].is_string(), ErrorKind::invalid_input,
            "each CoBSAT line needs a \"task\"");
    auto m = method_of(j);
    if (!sums.contains(m)) order.push_back(m);
    auto& cell = sums[m][j["task"].get<std::string>()];
    cell.first += read_unit_score(j, "score");
    cell.second += 1;
  }
  require(!order.empty(), ErrorKind::invalid_input, "scores file is empty");
  json rows = json::array();
  for (const auto& m : order) {
    TaskScores ts;
    for (const auto& [task, cell] : sums[m]) ts.per_task[task] = cell.first / cell.second;
    double avg = aggregate_cobsat(ts);
    rows.push_back({{"method", m}, {"per_task", ts.per_task}, {"avg", avg}, {"avg_display", render_truncated(avg)}});
  }
  return json{{"benchmark", "cobsat"}, {"rows", rows}};
}

json eval_dreambench(const std::vector<json>& lines) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<SampleCPPF>> samples;
  json checks = json::array();
  for (const auto& j : lines) {
    require(j.is_object(), ErrorKind::invalid_input, "each DreamBench line must be an object");
    auto m = method_of(j);
    if (j.contains("displayed_cp_pf")) {
      // A summary row: overall CP and PF plus the displayed product.
      auto c = check_cp_pf_row(m, read_unit_score(j, "cp"), read_unit_score(j, "pf"),
                               read_unit_score(j, "displayed_cp_pf"));
      checks.push_back({{"method", c.label},
                        {"cp", c.cp},
                        {"pf", c.pf},
                        {"displayed", c.displayed},
                        {"product_of_means", c.product},
                        {"consistent", c.consistent},
                        {"flagged", !c.consistent}});
      continue;
    }
    if (!samples.contains(m)) order.push_back(m);
    samples[m].push_back({read_unit_score(j, "cp"), read_unit_score(j, "pf"), j.value("category", "")});
  }
  require(!order.empty() || !checks.empty(), ErrorKind::invalid_input, "scores file is empty");
  json rows = json::array();
  for (const auto& m : order) {
    auto a = aggregate_dreambench(samples[m]);
    rows.push_back({{"method", m},
                    {"samples", samples[m].size()},
                    {"cp_mean", a.cp_mean},
                    {"pf_mean", a.pf_mean},
                    {"cp_pf", a.cp_pf},
                    {"product_of_means", a.product_of_means},
                    {"cp_pf_display", render_truncated(a.cp_pf)}});
  }
  return json{{"benchmark", "dreambench"}, {"rows", rows}, {"checks", checks}};
}

int eval(const EvalArgs& a, std::ostream& out) {
  auto cfg = resolve(a.common, json::object());
  (void)cfg;
  auto lines = read_jsonl(a.scores);
  auto report = benchmark_from_string(a.benchmark) == Benchmark::cobsat ? eval_cobsat(lines) : eval_dreambench(lines);
  if (!a.out.empty()) write_output(a.out, report);
  out << report.dump(2) << '\n';
  return 0;
}

// ---- report ----

struct ReportArgs {
  Common common;
  std::string run_dir, format = "md";
};

std::string render_eval(const json& report, const std::string& format) {
  const auto benchmark = report.at("benchmark").get<std::string>();
  if (benchmark == "cobsat") {
    std::vector<std::pair<std::string, TaskScores>> rows;
    for (const auto& r : report.at("rows")) {
      TaskScores ts;
      ts.per_task = r.at("per_task").get<std::map<std::string, double>>();
      rows.emplace_back(r.at("method").get<std::string>(), std::move(ts));
    }
    return render_cobsat_table(rows, format);
  }
  std::vector<std::pair<std::string, DreamBenchAggregate>> rows;
  for (const auto& r : report.at("rows"))
    rows.emplace_back(r.at("method").get<std::string>(),
                      DreamBenchAggregate{r.at("cp_mean").get<double>(), r.at("pf_mean").get<double>(),
                                          r.at("cp_pf").get<double>(), r.at("product_of_means").get<double>()});
  auto text = render_dreambench_table(rows, format);
  for (const auto& c : report.value("checks", json::array()))
    if (c.value("flagged", false))
      text += "flagged: " + c.at("method").get<std::string>() + " CP*PF displayed " +
              render_truncated(c.at("displayed").get<double>()) + ", product of means " +
              render_truncated(c.at("product_of_means").get<double>()) + "\n";
  return text;
}

json curation_summary(const fs::path& run_dir, const Manifest& m) {
  json tasks = json::array();
  std::size_t done = 0, failed = 0, accepted = 0;
  auto records = load_records(run_dir, m);
  std::map<std::string, const CurationRecord*> by_id;
  for (const auto& r : records) by_id[r.task_id] = &r;
  for (const auto& t : m.tasks) {
    json e{{"task_id", t.spec.context.task_id}, {"status", std::string(to_string(t.status))}};
    if (t.status == TaskStatus::done) ++done;
    if (t.status == TaskStatus::failed) {
      ++failed;
      e["error"] = t.error;
    }
    if (auto it = by_id.find(t.spec.context.task_id); it != by_id.end()) {
      e["rounds"] = it->second->rounds.size();
      e["terminal_status"] = std::string(to_string(it->second->terminal_status));
      if (it->second->terminal_status == TerminalStatus::accepted) ++accepted;
    }
    tasks.push_back(std::move(e));
  }
  json s{{"tasks", tasks}, {"done", done}, {"failed", failed}, {"accepted", accepted}, {"total", m.tasks.size()}};
  if (auto t = read_file_if_exists(run_dir / "telemetry.json")) s["telemetry"] = json::parse(*t);
  return s;
}

std::string render_curation(const json& s, const std::string& format) {
  std::ostringstream out;
  const bool md = format == "md";
  const char* sep = md ? " | " : ",";
  if (md) out << "| ";
  out << "task_id" << sep << "status" << sep << "rounds" << sep << "terminal_status";
  if (md) out << " |\n|---|---|---|---|";
  out << '\n';
  for (const auto& t : s.at("tasks")) {
    if (md) out << "| ";
    out << t.at("task_id").get<std::string>() << sep << t.at("status").get<std::string>() << sep
        << (t.contains("rounds") ? std::to_string(t["rounds"].get<int>()) : "") << sep
        << t.value("terminal_status", "");
    if (md) out << " |";
    out << '\n';
  }
  return out.str();
}

int report(const ReportArgs& a, std::ostream& out) {
  auto cfg = resolve(a.common, json::object());
  (void)cfg;
  const fs::path dir = a.run_dir;
  require(fs::is_directory(dir), ErrorKind::invalid_input, a.run_dir + " is not a directory");

  json combined = json::object();
  std::string text;
  if (fs::exists(dir / "report.json")) {
    auto r = read_json_file(dir / "report.json", ErrorKind::invalid_input);
    combined["evaluation"] = r;
    if (a.format != "json") text += render_eval(r, a.format);
  }
  if (fs::exists(dir / "manifest.json")) {
    auto raw = read_json_file(dir / "manifest.json", ErrorKind::unrecoverable_run);
    if (raw.contains("tasks")) {
      auto s = curation_summary(dir, Manifest::from_json(raw));
      combined["curation"] = s;
      if (a.format != "json") text += (text.empty() ? "" : "\n") + render_curation(s, a.format);
    } else {
      combined[raw.value("command", "run")] = raw;
      if (a.format != "json" && raw.contains("plan")) {
        const auto& p = raw["plan"];
        text += (text.empty() ? "" : "\n") + std::string("strategy") + (a.format == "md" ? ": " : ",") +
                p.at("strategy").get<std::string>() + (a.format == "md" ? ", chains: " : ",chains,") +
                std::to_string(p.at("chains").get<int>()) + (a.format == "md" ? ", images per chain: " : ",images_per_chain,") +
                std::to_string(p.at("images_per_chain").get<int>()) + "\n";
      }
    }
  }
  require(!combined.empty(), ErrorKind::invalid_input, "nothing to report in " + a.run_dir);
  if (a.format == "json")
    out << combined.dump(2) << '\n';
  else
    out << text;
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err, const Hooks& hooks) {
  CLI::App app{"Reason-then-generate pipeline: curation, inference, selection, scaling and evaluation"};
  app.name("cotforge");
  app.require_subcommand(1);

  CurateArgs ca;
  auto* cur = app.add_subcommand("curate", "Curate reasoning chains and images into the two-split dataset");
  add_common(cur, ca.common);
  cur->add_option("--tasks", ca.tasks, "Task pool (JSON-Lines)")->required()->check(CLI::ExistingFile);
  cur->add_option("--out", ca.out, "Run directory")->required();
  ca.candidates_opt = cur->add_option("--candidates", ca.candidates, "Candidates per round")->check(CLI::PositiveNumber);
  ca.rounds_opt = cur->add_option("--max-rounds", ca.max_rounds, "Round bound")->check(CLI::PositiveNumber);
  ca.threshold_opt = cur->add_option("--threshold", ca.threshold, "Selector acceptance threshold")->check(CLI::Range(0.0, 1.0));
  ca.selector_opt = cur->add_option("--selector", ca.selector, "Selector")->check(CLI::IsMember({"mllm", "consistency"}));
  ca.limit_opt = cur->add_option("--task-limit", ca.task_limit, "Stop after this many pending tasks");

  InferArgs ia;
  auto* inf = app.add_subcommand("infer", "Two-stage inference for one task");
  add_common(inf, ia.common);
  inf->add_option("--task", ia.task, "Task file (JSON-Lines)")->required()->check(CLI::ExistingFile);
  inf->add_option("--id", ia.id, "Task id");
  inf->add_flag("--no-cot", ia.no_cot, "Skip the reasoning stage");
  inf->add_option("--out", ia.out, "Output directory")->required();

  SelectArgs sa;
  auto* sel = app.add_subcommand("select", "Pick the most self-consistent chain");
  add_common(sel, sa.common);
  sel->add_option("--cots", sa.cots, "Chains (JSON-Lines)")->required()->check(CLI::ExistingFile);
  sel->add_option("--task", sa.task, "Task file (JSON-Lines)")->required()->check(CLI::ExistingFile);
  sel->add_option("--id", sa.id, "Task id");
  sel->add_option("--out", sa.out, "Cache and manifest directory");
  sel->add_flag("--normalize", sa.normalize, "Normalize embeddings before comparing");

  ScaleArgs sc;
  auto* scl = app.add_subcommand("scale", "Test-time scaling with best-of-N verification");
  add_common(scl, sc.common);
  scl->add_option("--task", sc.task, "Task file (JSON-Lines)")->check(CLI::ExistingFile);
  scl->add_option("--id", sc.id, "Task id");
  sc.strategy_opt = scl->add_option("--strategy", sc.strategy, "Scaling strategy")
                        ->check(CLI::IsMember({"single", "multi", "hybrid", "vanilla"}));
  sc.n_opt = scl->add_option("--n", sc.n, "Total image budget")->check(CLI::PositiveNumber);
  sc.chains_opt = scl->add_option("--chains", sc.chains, "Chain count override")->check(CLI::PositiveNumber);
  sc.k_opt = scl->add_option("--images-per-chain", sc.images_per_chain, "Images per chain override")
                 ->check(CLI::PositiveNumber);
  scl->add_option("--threshold", sc.threshold, "Verifier pass threshold")->check(CLI::Range(0.0, 1.0));
  scl->add_option("--scores", sc.scores, "Per-job verifier scores (JSON-Lines, job order)")->check(CLI::ExistingFile);
  scl->add_option("--out", sc.out, "Output directory");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Aggregate benchmark scores");
  add_common(ev, ea.common);
  ev->add_option("--benchmark", ea.benchmark, "Benchmark")->required()->check(CLI::IsMember({"cobsat", "dreambench"}));
  ev->add_option("--scores", ea.scores, "Scores (JSON-Lines)")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", ea.out, "Report path");

  ReportArgs ra;
  auto* rep = app.add_subcommand("report", "Render a run or evaluation as a table");
  add_common(rep, ra.common);
  rep->add_option("--run", ra.run_dir, "Run directory")->required();
  rep->add_option("--format", ra.format, "Output format")->check(CLI::IsMember({"json", "csv", "md"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n";
    const CLI::App* failing = &app;
    for (auto* s : app.get_subcommands()) failing = s;
    err << failing->help();
    return 1;
  }

  try {
    if (cur->parsed()) return curate(ca, out, hooks);
    if (inf->parsed()) return infer(ia, out, hooks);
    if (sel->parsed()) return select(sa, out, hooks);
    if (scl->parsed()) return scale(sc, out, hooks);
    if (ev->parsed()) return eval(ea, out);
    if (rep->parsed()) return report(ra, out);
  } catch (const Error& e) {
    err << "cotforge: " << e.what() << '\n';
    return e.is_backend_failure() ? 2 : 1;
  } catch (const std::exception& e) {
    err << "cotforge: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Hooks& hooks) {
  std::vector<const char*> argv;
  argv.push_back("cotforge");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err, hooks);
}

}  // namespace cotforge::cli
