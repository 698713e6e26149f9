#include <gtest/gtest.h>

#include "cotforge/dataset.hpp"
#include "cotforge/run.hpp"
#include "support.hpp"

namespace cotforge {
namespace {

using namespace cotforge::testing;

std::vector<TaskSpec> task_list(const fs::path& dir, int n) {
  std::vector<TaskSpec> out;
  for (int i = 0; i < n; ++i) out.push_back({make_context(dir, "t" + std::to_string(i)), std::nullopt});
  return out;
}

const json kConfig = {{"kind", "test"}, {"seed", 0}};

TEST(BuildDataset, TwoSamplesPerRecord) {
  TempDir dir;
  Harness h(dir.path());
  auto ctx = make_context(dir.path(), "t0");
  auto rec = run_curation(*h.backends, ctx, CurationConfig{});
  auto samples = build_dataset({rec}, *h.templates);
  ASSERT_EQ(samples.size(), 2u);
  const auto& cot = samples[0];
  const auto& img = samples[1];
  EXPECT_EQ(cot.split, Split::cot);
  EXPECT_EQ(img.split, Split::image);
  EXPECT_EQ(cot.source_task_id, "t0");
  EXPECT_EQ(img.source_task_id, "t0");

  // Shared prefix: (text, image) per demonstration, then the query.
  std::vector<Segment> x;
  for (const auto& d : ctx.demonstrations) {
    x.push_back({SegmentKind::text, d.text, {}});
    x.push_back({SegmentKind::image_ref, "", d.image});
  }
  x.push_back({SegmentKind::text, ctx.query_text, {}});

  auto cot_expected = x;
  cot_expected.push_back({SegmentKind::text, h.templates->p_cot, {}});
  EXPECT_EQ(cot.input_segments, cot_expected);
  EXPECT_EQ(std::get<std::string>(cot.target), rec.final_chain.text);

  auto img_expected = x;
  img_expected.push_back({SegmentKind::cot_text, rec.final_chain.text, {}});
  img_expected.push_back({SegmentKind::text, h.templates->p_image, {}});
  img_expected.push_back({SegmentKind::image_token, h.templates->image_marker, {}});
  EXPECT_EQ(img.input_segments, img_expected);
  EXPECT_EQ(std::get<ImageRef>(img.target), rec.final_image);
}

TEST(BuildDataset, RecordWithoutTerminalPairIsRejected) {
  TempDir dir;
  Harness h(dir.path());
  auto rec = run_curation(*h.backends, make_context(dir.path(), "t0"), CurationConfig{});
  auto broken = rec;
  broken.final_chain.text.clear();
  EXPECT_EQ(error_kind_of([&] { build_dataset({broken}, *h.templates); }), ErrorKind::invalid_record);
  broken = rec;
  broken.final_image = ImageRef{};
  EXPECT_EQ(error_kind_of([&] { build_dataset({broken}, *h.templates); }), ErrorKind::invalid_record);
}

TEST(WriteDataset, RoundTripAndPairing) {
  TempDir dir;
  Harness h(dir.path());
  std::vector<CurationRecord> recs;
  for (int i = 0; i < 3; ++i)
    recs.push_back(run_curation(*h.backends, make_context(dir.path(), "t" + std::to_string(i)), CurationConfig{}));
  auto samples = build_dataset(recs, *h.templates);
  auto paths = write_dataset(samples, dir / "ds");
  auto s1 = read_dataset_file(paths.split1);
  auto s2 = read_dataset_file(paths.split2);
  ASSERT_EQ(s1.size(), 3u);
  ASSERT_EQ(s2.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(s1[i].split, Split::cot);
    EXPECT_EQ(s2[i].split, Split::image);
    EXPECT_EQ(s1[i].source_task_id, s2[i].source_task_id);
    EXPECT_EQ(std::get<std::string>(s1[i].target),
              s2[i].input_segments[s2[i].input_segments.size() - 3].text);
  }
  auto first_line = read_bytes(paths.split1).substr(0, read_bytes(paths.split1).find('\n'));
  EXPECT_EQ(first_line, canonical_dump(json(s1[0])));
  EXPECT_EQ(json(s2[0])["split"], "IMAGE_SPLIT");
  EXPECT_EQ(json(s2[0])["input"].back()["kind"], "IMAGE_TOKEN");
}

TEST(Run, FreshRunWritesLayout) {
  TempDir dir;
  Harness h(dir.path());
  auto run_dir = dir / "run";
  auto m = open_run(run_dir, kConfig, task_list(dir.path(), 3));
  auto s = execute_run(*h.backends, run_dir, m, CurationConfig{}, {2});
  EXPECT_TRUE(s.complete);
  EXPECT_EQ(s.completed_now, 3u);
  ASSERT_TRUE(s.dataset);
  EXPECT_TRUE(fs::exists(run_dir / "manifest.json"));
  EXPECT_TRUE(fs::exists(run_dir / "records" / "t1.json"));
  EXPECT_TRUE(fs::exists(run_dir / "dataset" / "split1.jsonl"));
  EXPECT_TRUE(fs::exists(run_dir / "telemetry.json"));
  EXPECT_TRUE(load_manifest(run_dir).complete());
}

TEST(Run, ResumeSkipsCompletedTasksAndMatchesFreshRun) {
  TempDir a, b;
  // Interrupted after five tasks, then resumed.
  Harness ha(a.path());
  auto m = open_run(a / "run", kConfig, task_list(a.path(), 10));
  auto first = execute_run(*ha.backends, a / "run", m, CurationConfig{}, {3, 5});
  EXPECT_EQ(first.completed_now, 5u);
  EXPECT_FALSE(first.complete);
  std::set<std::string> done;
  for (auto& t : load_manifest(a / "run").tasks)
    if (t.status == TaskStatus::done) done.insert(t.spec.context.task_id);
  ASSERT_EQ(done.size(), 5u);

  // A new process: fresh clients, the store on disk is the only memory.
  Harness hb_resume(a.path());
  const auto before = hb_resume.recorder->exchanges().size();
  auto second = resume_run(*hb_resume.backends, a / "run", CurationConfig{}, {3});
  EXPECT_TRUE(second.complete);
  EXPECT_EQ(second.skipped, 5u);
  EXPECT_EQ(second.completed_now, 5u);
  const auto ex = hb_resume.recorder->exchanges();
  for (std::size_t i = before; i < ex.size(); ++i) {
    auto task = find_header(ex[i].headers, "X-Cotforge-Task").value_or("");
    EXPECT_FALSE(done.contains(task)) << "re-issued a call for " << task;
  }

  Harness hf(b.path());
  auto mf = open_run(b / "run", kConfig, task_list(b.path(), 10));
  auto fresh = execute_run(*hf.backends, b / "run", mf, CurationConfig{}, {4});
  EXPECT_TRUE(fresh.complete);
  EXPECT_EQ(read_bytes(a / "run" / "dataset" / "split1.jsonl"), read_bytes(b / "run" / "dataset" / "split1.jsonl"));
  EXPECT_EQ(read_bytes(a / "run" / "dataset" / "split2.jsonl"), read_bytes(b / "run" / "dataset" / "split2.jsonl"));

  // Resuming a complete run does no work at all.
  Harness again(a.path());
  auto third = resume_run(*again.backends, a / "run", CurationConfig{}, {3});
  EXPECT_TRUE(third.complete);
  EXPECT_EQ(third.calls.backend_calls, 0);
  EXPECT_EQ(again.recorder->exchanges().size(), 0u);
}

TEST(Run, FailedTaskIsRetriedOnResume) {
  TempDir dir;
  BackendConfig cfg;
  cfg.max_retries = 0;
  Harness h(dir.path(), cfg);
  h.mock->set_fault_policy([](const MockRequest& r) -> std::optional<int> {
    if (r.header("X-Cotforge-Task") == "t1") return 503;
    return std::nullopt;
  });
  auto m = open_run(dir / "run", kConfig, task_list(dir.path(), 3));
  auto s = execute_run(*h.backends, dir / "run", m, CurationConfig{}, {2});
  EXPECT_FALSE(s.complete);
  ASSERT_EQ(s.failures.size(), 1u);
  auto stored = load_manifest(dir / "run");
  EXPECT_EQ(stored.tasks[1].status, TaskStatus::failed);
  EXPECT_FALSE(stored.tasks[1].error.empty());

  h.mock->set_fault_policy(nullptr);
  auto r = resume_run(*h.backends, dir / "run", CurationConfig{}, {2});
  EXPECT_TRUE(r.complete);
  EXPECT_EQ(r.completed_now, 1u);
  EXPECT_EQ(r.skipped, 2u);
}

TEST(Run, TamperedManifestIsUnrecoverable) {
  TempDir dir;
  Harness h(dir.path());
  open_run(dir / "run", kConfig, task_list(dir.path(), 2));
  auto bytes = read_bytes(dir / "run" / "manifest.json");
  auto pos = bytes.find("\"t1\"");
  ASSERT_NE(pos, std::string::npos);
  bytes.replace(pos, 4, "\"tX\"");
  write_bytes(dir / "run" / "manifest.json", bytes);
  EXPECT_EQ(error_kind_of([&] { load_manifest(dir / "run"); }), ErrorKind::unrecoverable_run);
  write_bytes(dir / "run" / "manifest.json", "{not json");
  EXPECT_EQ(error_kind_of([&] { load_manifest(dir / "run"); }), ErrorKind::unrecoverable_run);
}

TEST(Run, TamperedRecordIsUnrecoverable) {
  TempDir dir;
  Harness h(dir.path());
  auto m = open_run(dir / "run", kConfig, task_list(dir.path(), 2));
  execute_run(*h.backends, dir / "run", m, CurationConfig{}, {1});
  write_bytes(dir / "run" / "records" / "t0.json", "{}\n");
  EXPECT_EQ(error_kind_of([&] { load_records(dir / "run", load_manifest(dir / "run")); }),
            ErrorKind::unrecoverable_run);
}

TEST(Run, MismatchedConfigOrTasksRefused) {
  TempDir dir;
  open_run(dir / "run", kConfig, task_list(dir.path(), 2));
  json other = kConfig;
  other["seed"] = 1;
  EXPECT_EQ(error_kind_of([&] { open_run(dir / "run", other, task_list(dir.path(), 2)); }),
            ErrorKind::unrecoverable_run);
  EXPECT_EQ(error_kind_of([&] { open_run(dir / "run", kConfig, task_list(dir.path(), 3)); }),
            ErrorKind::unrecoverable_run);
  json relaxed = kConfig;
  relaxed["parallelism"] = 9;
  EXPECT_NO_THROW(open_run(dir / "run", relaxed, task_list(dir.path(), 2)));
}

TEST(Run, DuplicateTaskIdsRejected) {
  TempDir dir;
  auto tasks = task_list(dir.path(), 2);
  tasks[1].context.task_id = "t0";
  EXPECT_EQ(error_kind_of([&] { open_run(dir / "run", kConfig, tasks); }), ErrorKind::invalid_input);
}

TEST(Run, DeterministicAcrossParallelism) {
  TempDir a, b;
  Harness ha(a.path()), hb(b.path());
  auto ma = open_run(a / "run", kConfig, task_list(a.path(), 6));
  auto mb = open_run(b / "run", kConfig, task_list(b.path(), 6));
  execute_run(*ha.backends, a / "run", ma, CurationConfig{}, {1});
  execute_run(*hb.backends, b / "run", mb, CurationConfig{}, {6});
  EXPECT_EQ(read_bytes(a / "run" / "dataset" / "split2.jsonl"), read_bytes(b / "run" / "dataset" / "split2.jsonl"));
  for (int i = 0; i < 6; ++i) {
    auto f = "t" + std::to_string(i) + ".json";
    EXPECT_EQ(read_bytes(a / "run" / "records" / f), read_bytes(b / "run" / "records" / f));
  }
}

}  // namespace
}  // namespace cotforge
