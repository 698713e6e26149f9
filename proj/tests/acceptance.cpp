// Prints one PASS/FAIL line per acceptance criterion. Arguments select
// criteria by number; none runs all. Exit status is 0 only if every selected
// criterion passed.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "consensus_oracle.hpp"
#include "cotforge/consensus.hpp"
#include "cotforge/curation.hpp"
#include "cotforge/dataset.hpp"
#include "cotforge/inference.hpp"
#include "cotforge/metrics.hpp"
#include "cotforge/run.hpp"
#include "cotforge/scaling.hpp"
#include "support.hpp"

namespace cotforge {
namespace {

using namespace cotforge::testing;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Check {
  std::ostringstream detail;
  bool ok = true;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << "    - " << what << '\n';
    }
  }
  void note(const std::string& what) { detail << "    " << what << '\n'; }
};

// ---- 1: CoBSAT averages ----

struct CobsatRow {
  const char* label;
  std::array<double, 10> scores;
  const char* displayed;
};

const CobsatRow kCobsatRows[] = {
    {"SEED-LLaMA", {.616, .216, .272, .592, .112, .088, .168, .192, .220, .056}, ".254"},
    {"SEED-LLaMA + CoT prompt", {.700, .276, .300, .408, .084, .176, .292, .272, .192, .132}, ".283"},
    {"SEED-LLaMA + FT gt image", {.632, .272, .352, .540, .128, .164, .200, .256, .172, .112}, ".283"},
    {"SEED-LLaMA + FT dataset", {.620, .368, .384, .424, .060, .192, .288, .208, .216, .148}, ".291"},
    {"SEED-X", {.796, .412, .316, .596, .240, .176, .344, .260, .252, .104}, ".349"},
    {"SEED-X + CoT prompt", {.724, .440, .660, .784, .216, .312, .472, .228, .320, .240}, ".439"},
    {"SEED-X + FT gt image", {.936, .712, .896, .860, .468, .280, .324, .388, .636, .424}, ".592"},
    {"SEED-X + FT dataset", {.884, .692, .928, .936, .420, .504, .612, .660, .524, .424}, ".658"},
};

void cobsat_averages(Check& c) {
  const auto t0 = Clock::now();
  for (const auto& row : kCobsatRows) {
    TaskScores s;
    for (std::size_t i = 0; i < kCobsatTasks.size(); ++i) s.per_task[std::string(kCobsatTasks[i])] = row.scores[i];
    const double avg = aggregate_cobsat(s);
    const auto shown = render_truncated(avg);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-26s mean %.4f -> %s (reported %s)%s", row.label, avg, shown.c_str(), row.displayed,
                  shown == row.displayed ? "" : "  MISMATCH");
    c.note(buf);
    c.expect(shown == row.displayed, std::string(row.label) + ": rendered " + shown + ", reported " + row.displayed);
  }
  c.expect(seconds_since(t0) < 1.0, "runtime over 1 s");
}

// ---- 2: CP·PF consistency ----

void cp_pf_rows(Check& c) {
  const auto t0 = Clock::now();
  struct Row {
    const char* label;
    double cp, pf, shown;
  };
  const Row rows[] = {{"SEED-LLaMA", .358, .218, .078},  {"SEED-LLaMA + CoT prompt", .317, .222, .078},
                      {"SEED-LLaMA + FT", .325, .310, .101}, {"SEED-X", .559, .337, .188},
                      {"SEED-X + CoT prompt", .427, .817, .347}, {"SEED-X + FT", .458, .881, .403}};
  std::map<std::string, bool> consistent;
  for (const auto& r : rows) {
    auto chk = check_cp_pf_row(r.label, r.cp, r.pf, r.shown);
    consistent[r.label] = chk.consistent;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-24s %.3f x %.3f = %.4f vs %.3f  %s", r.label, r.cp, r.pf, chk.product, r.shown,
                  chk.consistent ? "ok" : "FLAGGED");
    c.note(buf);
  }
  for (const char* row : {"SEED-LLaMA", "SEED-X", "SEED-X + FT"})
    c.expect(consistent[row], std::string(row) + " should reproduce within 0.001");
  c.expect(!consistent["SEED-LLaMA + CoT prompt"], ".317 x .222 row should be flagged");
  c.expect(seconds_since(t0) < 1.0, "runtime over 1 s");
}

// ---- 3: refinement ablation deltas ----

void ablation_deltas(Check& c) {
  auto cob = ablation_report({{"Object", 0.793}, {"Attribute", 0.733}, {"Overall", 0.763}},
                             {{"Object", 0.782}, {"Attribute", 0.704}, {"Overall", 0.743}},
                             {"Object", "Attribute", "Overall"});
  auto db = ablation_report({{"PF", 0.946}, {"CP", 0.517}, {"PF*CP", 0.489}},
                            {{"PF", 0.937}, {"CP", 0.470}, {"PF*CP", 0.442}}, {"PF", "CP", "PF*CP"});
  c.note("CoBSAT overall delta " + std::to_string(cob.delta.at("Overall")));
  c.note("DreamBench PF*CP delta " + std::to_string(db.delta.at("PF*CP")));
  c.expect(cob.delta.at("Overall") == 0.020, "CoBSAT overall delta is not exactly 0.020");
  c.expect(db.delta.at("PF*CP") == 0.047, "DreamBench PF*CP delta is not exactly 0.047");
  c.expect(cob.render_markdown().find("+0.020") != std::string::npos, "CoBSAT table lacks +0.020");
  c.expect(db.render_markdown().find("+0.047") != std::string::npos, "DreamBench table lacks +0.047");
}

// ---- 4: consensus vs brute force ----

void consensus_oracle(Check& c) {
  const auto t0 = Clock::now();
  std::mt19937 rng(20240);
  int agree = 0;
  constexpr int kTrials = 1000;
  for (int t = 0; t < kTrials; ++t) {
    auto e = oracle::random_instance(rng);
    const auto got = select_consistent(e).index;
    if (got == oracle::select(e)) ++agree;
  }
  c.note(std::to_string(agree) + "/" + std::to_string(kTrials) + " agree");
  c.expect(agree == kTrials, "index disagreement with the oracle");
  c.expect(seconds_since(t0) < 5.0, "runtime over 5 s");
}

// ---- 5: scaling plan shapes ----

void scaling_plans(Check& c) {
  auto shape = [](const ScalingPlan& p) { return std::pair{p.chains, p.images_per_chain}; };
  using Set = std::set<std::pair<int, int>>;
  auto admitted = [](int n) {
    auto v = hybrid_configurations(n);
    return Set(v.begin(), v.end());
  };
  c.expect(shape(expand_plan(Strategy::hybrid, 16)) == std::pair{4, 4}, "hybrid@16 is not (4,4)");
  c.expect(admitted(16) == Set{{4, 4}}, "hybrid@16 admits more than (4,4)");
  c.expect(admitted(8) == Set{{2, 4}, {4, 2}}, "hybrid@8 does not admit exactly {(2,4),(4,2)}");
  c.expect(shape(expand_plan(Strategy::hybrid, 4)) == std::pair{2, 2}, "hybrid@4 is not (2,2)");
  c.expect(admitted(2) == Set{{2, 1}, {1, 2}}, "hybrid@2 does not admit exactly {(2,1),(1,2)}");
  for (auto [ck, k] : admitted(8))
    c.expect(shape(expand_plan(Strategy::hybrid, 8, {ck, k})) == std::pair{ck, k}, "hybrid@8 override rejected");

  std::mt19937 rng(7);
  const Strategy all[] = {Strategy::single_chain, Strategy::multi_chain, Strategy::hybrid, Strategy::vanilla};
  int bad = 0;
  for (int t = 0; t < 10000; ++t) {
    const int n = 1 + static_cast<int>(rng() % 128);
    const auto s = all[rng() % 4];
    PlanOverrides o;
    if (s == Strategy::hybrid && rng() % 2) {
      auto cfgs = hybrid_configurations(n);
      auto pick = cfgs[rng() % cfgs.size()];
      o = {pick.first, pick.second};
    }
    const auto p = expand_plan(s, n, o);
    if (p.chains * p.images_per_chain != n) ++bad;
  }
  c.note("10000 random plans, " + std::to_string(bad) + " with C*K != N");
  c.expect(bad == 0, "C*K != N");
}

// ---- 6: pass@N monotone, T2I budget ----

void pass_monotone(Check& c) {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::vector<double>> lists(10000, std::vector<double>(16));
  for (auto& l : lists)
    for (auto& s : l) s = u(rng);
  const std::vector<int> ns{1, 2, 3, 4, 6, 8, 12, 16};
  auto curve = pass_curve(lists, {0.5, 0.9, 0.99, 0.999}, ns);
  int drops = 0;
  for (const auto& row : curve.rates)
    for (std::size_t i = 1; i < row.size(); ++i)
      if (row[i] < row[i - 1]) ++drops;
  // Per list as well: once passing, always passing.
  for (const auto& l : lists) {
    bool prev = false;
    for (int n = 1; n <= 16; ++n) {
      bool now = passes_at(l, n, 0.95);
      if (prev && !now) ++drops;
      prev = now;
    }
  }
  c.expect(drops == 0, "pass rate decreased with N");

  for (int n : {2, 4, 8, 16}) {
    for (auto s : {Strategy::vanilla, Strategy::hybrid}) {
      TempDir dir;
      Harness h(dir.path());
      execute_plan(*h.backends, make_context(dir.path(), "p"), expand_plan(s, n));
      const auto t2i = h.backends->telemetry().t2i;
      c.note(std::string(to_string(s)) + "@" + std::to_string(n) + ": " + std::to_string(t2i) + " T2I calls");
      c.expect(t2i == n, std::string(to_string(s)) + "@" + std::to_string(n) + " issued " + std::to_string(t2i));
    }
  }
}

// ---- 7: curation bounds ----

void curation_bounds(Check& c) {
  for (double score : {0.0, 1.0}) {
    TempDir dir;
    Harness h(dir.path());
    h.mock->set_text_policy([=](const MockRequest& r) -> std::optional<std::string> {
      if (r.role != "selector") return std::nullopt;
      return "INDEX: 0\nSCORE: " + std::to_string(score);
    });
    CurationConfig cfg;  // N = 3, two rounds
    cfg.selector_kind = SelectorKind::mllm_selector;
    cfg.quality_threshold = 0.5;
    const bool accepting = score >= cfg.quality_threshold;
    constexpr int kTasks = 5;
    for (int t = 0; t < kTasks; ++t) {
      const auto before = h.backends->telemetry().t2i;
      auto r = run_curation(*h.backends, make_context(dir.path(), "c" + std::to_string(t)), cfg);
      const auto t2i = h.backends->telemetry().t2i - before;
      const auto want_rounds = accepting ? 1u : 2u;
      const auto want_t2i = accepting ? 3 : 6;
      const auto want_status = accepting ? TerminalStatus::accepted : TerminalStatus::max_rounds;
      c.expect(r.terminal_status == want_status, "wrong terminal status");
      c.expect(r.rounds.size() == want_rounds, "round count " + std::to_string(r.rounds.size()));
      c.expect(t2i == want_t2i, "T2I calls " + std::to_string(t2i));
    }
    c.note(std::string(accepting ? "accept-on-first" : "never-accept") + ": " + std::to_string(kTasks) +
           " tasks, T2I total " + std::to_string(h.backends->telemetry().t2i));
  }
}

// ---- 8: determinism and resume ----

std::vector<TaskSpec> synthetic_tasks(const fs::path& dir, int n) {
  std::vector<TaskSpec> out;
  const TaskFamily families[] = {TaskFamily::object_inference, TaskFamily::attribute_inference,
                                 TaskFamily::subject_driven};
  for (int i = 0; i < n; ++i)
    out.push_back({make_context(dir, "task" + std::to_string(i), families[i % 3], "query " + std::to_string(i)),
                   std::nullopt});
  return out;
}

void determinism_resume(Check& c) {
  const auto t0 = Clock::now();
  const json config{{"acceptance", 8}};
  constexpr int kTasks = 20;
  TempDir a, b, r;
  auto full_run = [&](const TempDir& d, int parallelism) {
    Harness h(d.path());
    auto m = open_run(d / "run", config, synthetic_tasks(d.path(), kTasks));
    return execute_run(*h.backends, d / "run", m, CurationConfig{}, {parallelism});
  };
  auto sa = full_run(a, 4);
  auto sb = full_run(b, 1);
  c.expect(sa.complete && sb.complete, "fresh runs did not complete");

  std::set<std::string> done;
  {
    Harness h(r.path());
    auto m = open_run(r / "run", config, synthetic_tasks(r.path(), kTasks));
    auto s = execute_run(*h.backends, r / "run", m, CurationConfig{}, {4, 9});
    c.expect(!s.complete && s.completed_now == 9, "interrupt did not stop after 9 tasks");
    for (const auto& t : load_manifest(r / "run").tasks)
      if (t.status == TaskStatus::done) done.insert(t.spec.context.task_id);
  }
  Harness resumed(r.path());
  auto sr = resume_run(*resumed.backends, r / "run", CurationConfig{}, {4});
  c.expect(sr.complete && sr.skipped == done.size(), "resume did not finish the remaining tasks");
  std::size_t repeat_calls = 0;
  for (const auto& ex : resumed.recorder->exchanges())
    if (done.contains(find_header(ex.headers, "X-Cotforge-Task").value_or(""))) ++repeat_calls;
  c.note("resume: " + std::to_string(done.size()) + " tasks already done, " + std::to_string(repeat_calls) +
         " calls for them, " + std::to_string(sr.calls.backend_calls) + " calls total");
  c.expect(repeat_calls == 0, "resume re-issued calls for completed tasks");

  for (const char* f : {"split1.jsonl", "split2.jsonl"}) {
    const auto ba = read_bytes(a / "run" / "dataset" / f);
    c.expect(!ba.empty(), std::string(f) + " is empty");
    c.expect(ba == read_bytes(b / "run" / "dataset" / f), std::string(f) + " differs between fresh runs");
    c.expect(ba == read_bytes(r / "run" / "dataset" / f), std::string(f) + " differs after resume");
  }
  const double secs = seconds_since(t0);
  c.note("runtime " + std::to_string(secs) + " s");
  c.expect(secs < 30.0, "runtime over 30 s");
}

// ---- 9: wire conformance ----

std::size_t count_of(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + needle.size())) ++n;
  return n;
}

void wire_conformance(Check& c) {
  TempDir dir;
  const auto log = dir / "wire.jsonl";
  auto mock = std::make_shared<MockBackend>();
  auto recorder = std::make_shared<RecordingTransport>(mock, log);
  auto templates = std::make_shared<TemplateRegistry>(TemplateRegistry::defaults());
  auto store = std::make_shared<RunStore>(dir / "run");
  auto resolver = std::make_shared<FileResolver>(std::vector<fs::path>{dir.path(), dir / "run"});
  BackendConfig bc;
  bc.backoff_ms = 0;
  Backends backends(bc, recorder, store, templates, resolver);

  mock->set_text_policy([](const MockRequest& r) -> std::optional<std::string> {
    if (r.role == "selector") return "INDEX: 1\nSCORE: 0.1";
    return std::nullopt;
  });
  CurationConfig cfg;
  cfg.selector_kind = SelectorKind::mllm_selector;
  run_curation(backends, make_context(dir.path(), "w0", TaskFamily::subject_driven), cfg);
  for (int i = 0; i < 4; ++i)
    two_stage_infer(backends, make_context(dir.path(), "w" + std::to_string(i + 1)), cfg.sampling, i);

  std::size_t chat = 0, stage2 = 0, bad_sampling = 0, bad_marker = 0;
  std::istringstream lines(read_bytes(log));
  for (std::string line; std::getline(lines, line);) {
    auto ex = json::parse(line);
    const auto url = ex["url"].get<std::string>();
    const auto task = ex["headers"].value("X-Cotforge-Task", "");
    const auto& req = ex["request"];
    if (url.ends_with("/chat/completions")) {
      ++chat;
      if (req.value("temperature", -1.0) != 0.7 || req.value("top_p", -1.0) != 0.8) ++bad_sampling;
    }
    if (url.ends_with("/images/generations") && task != "w0") {
      ++stage2;
      if (count_of(req["prompt"].get<std::string>(), templates->image_marker) != 1) ++bad_marker;
    }
  }
  c.note(std::to_string(chat) + " chat requests, " + std::to_string(stage2) + " stage-2 prompts recorded");
  c.expect(chat > 0 && stage2 == 4, "expected chat and 4 stage-2 requests in the log");
  c.expect(bad_sampling == 0, std::to_string(bad_sampling) + " chat requests without temperature 0.7 / top_p 0.8");
  c.expect(bad_marker == 0, std::to_string(bad_marker) + " stage-2 prompts without exactly one marker");
}

// ---- 10: loss closed forms ----

void loss_closed_forms(Check& c) {
  c.expect(mse_loss(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 2.0, "mse([1,0],[0,1]) != 2");
  c.expect(lm_loss(std::vector<double>{-0.5, -1.0, -1.5}) == 1.0, "lm([-0.5,-1,-1.5]) != 1");
  std::mt19937 rng(10);
  std::uniform_real_distribution<double> lp(-30.0, 0.0), x(-10.0, 10.0);
  int bad = 0;
  double worst = 0;
  for (int t = 0; t < 10000; ++t) {
    const auto n = 1 + rng() % 256;
    std::vector<double> v(n), a(n), b(n);
    long double lsum = 0, msum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = lp(rng);
      a[i] = x(rng);
      b[i] = x(rng);
      lsum += v[i];
      msum += static_cast<long double>(a[i] - b[i]) * (a[i] - b[i]);
    }
    const double l = static_cast<double>(-lsum / n), m = static_cast<double>(msum);
    const double el = std::abs(lm_loss(v) - l) / std::max(1.0, std::abs(l));
    const double em = std::abs(mse_loss(a, b) - m) / std::max(1.0, m);
    worst = std::max({worst, el, em});
    if (el > 1e-12 || em > 1e-12) ++bad;
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "10000 inputs, worst relative error %.3g", worst);
  c.note(buf);
  c.expect(bad == 0, std::to_string(bad) + " inputs beyond 1e-12");
}

struct Criterion {
  int id;
  const char* name;
  void (*run)(Check&);
};

const Criterion kCriteria[] = {
    {1, "CoBSAT averages render as reported", cobsat_averages},
    {2, "DreamBench CP*PF products and inconsistency flag", cp_pf_rows},
    {3, "iterative refinement ablation deltas", ablation_deltas},
    {4, "self-consistency matches brute-force oracle", consensus_oracle},
    {5, "scaling plan configurations and C*K=N", scaling_plans},
    {6, "pass@N monotone, T2I budget equals N", pass_monotone},
    {7, "curation round bounds", curation_bounds},
    {8, "deterministic runs and byte-identical resume", determinism_resume},
    {9, "wire sampling params and single image marker", wire_conformance},
    {10, "loss closed forms", loss_closed_forms},
};

}  // namespace
}  // namespace cotforge

int main(int argc, char** argv) {
  using namespace cotforge;
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& cr : kCriteria) {
    if (!wanted.empty() && !wanted.contains(cr.id)) continue;
    Check c;
    const auto t0 = Clock::now();
    try {
      cr.run(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("threw: ") + e.what());
    }
    std::printf("%s criterion %2d: %s (%.2f s)\n", c.ok ? "PASS" : "FAIL", cr.id, cr.name, seconds_since(t0));
    std::fputs(c.detail.str().c_str(), stdout);
    if (!c.ok) ++failed;
  }
  std::fflush(stdout);
  return failed == 0 ? 0 : 1;
}
