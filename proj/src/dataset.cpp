#include "cotforge/dataset.hpp"

#include <sstream>

#include "cotforge/store.hpp"

namespace cotforge {

namespace {

bool has_terminal_pair(const CurationRecord& r) {
  return !r.final_chain.text.empty() && !r.final_image.locator.empty() && r.final_image.content_hash != Digest{};
}

std::vector<Segment> context_segments(const MultimodalContext& ctx) {
  std::vector<Segment> out;
  for (const auto& d : ctx.demonstrations) {
    out.push_back({SegmentKind::text, d.text, {}});
    out.push_back({SegmentKind::image_ref, {}, d.image});
  }
  out.push_back({SegmentKind::text, ctx.query_text, {}});
  return out;
}

}  // namespace

std::string_view to_string(Split s) { return s == Split::cot ? "COT_SPLIT" : "IMAGE_SPLIT"; }

std::string_view to_string(SegmentKind k) {
  switch (k) {
    case SegmentKind::text: return "TEXT";
    case SegmentKind::image_ref: return "IMAGE_REF";
    case SegmentKind::cot_text: return "COT_TEXT";
    case SegmentKind::image_token: return "IMAGE_TOKEN";
  }
  return "TEXT";
}

static SegmentKind segment_kind_from_string(std::string_view s) {
  for (auto k : {SegmentKind::text, SegmentKind::image_ref, SegmentKind::cot_text, SegmentKind::image_token})
    if (to_string(k) == s) return k;
  fail(ErrorKind::invalid_record, "unknown segment kind '" + std::string(s) + "'");
}

void to_json(json& j, const Segment& s) {
  j = json{{"kind", to_string(s.kind)}};
  if (s.kind == SegmentKind::image_ref)
    j["image"] = s.image;
  else
    j["text"] = s.text;
}

void from_json(const json& j, Segment& s) {
  s.kind = segment_kind_from_string(j.at("kind").get<std::string>());
  if (s.kind == SegmentKind::image_ref)
    s.image = j.at("image").get<ImageRef>();
  else
    s.text = j.at("text").get<std::string>();
}

void to_json(json& j, const DatasetSample& s) {
  j = json{{"split", to_string(s.split)}, {"input", s.input_segments}, {"source_task_id", s.source_task_id}};
  if (const auto* text = std::get_if<std::string>(&s.target))
    j["target"] = {{"text", *text}};
  else
    j["target"] = {{"image", std::get<ImageRef>(s.target)}};
}

void from_json(const json& j, DatasetSample& s) {
  const auto split = j.at("split").get<std::string>();
  require(split == "COT_SPLIT" || split == "IMAGE_SPLIT", ErrorKind::invalid_record, "unknown split " + split);
  s.split = split == "COT_SPLIT" ? Split::cot : Split::image;
  s.input_segments = j.at("input").get<std::vector<Segment>>();
  s.source_task_id = j.at("source_task_id").get<std::string>();
  const auto& t = j.at("target");
  if (s.split == Split::cot)
    s.target = t.at("text").get<std::string>();
  else
    s.target = t.at("image").get<ImageRef>();
}

std::vector<DatasetSample> build_dataset(const std::vector<CurationRecord>& records,
                                         const TemplateRegistry& templates) {
  std::vector<DatasetSample> out;
  out.reserve(records.size() * 2);
  for (const auto& r : records) {
    require(has_terminal_pair(r), ErrorKind::invalid_record, "record " + r.task_id + " has no terminal pair");
    auto x = context_segments(r.context);

    DatasetSample cot{Split::cot, x, r.final_chain.text, r.task_id};
    cot.input_segments.push_back({SegmentKind::text, templates.p_cot, {}});

    DatasetSample img{Split::image, std::move(x), r.final_image, r.task_id};
    img.input_segments.push_back({SegmentKind::cot_text, r.final_chain.text, {}});
    img.input_segments.push_back({SegmentKind::text, templates.p_image, {}});
    img.input_segments.push_back({SegmentKind::image_token, templates.image_marker, {}});

    out.push_back(std::move(cot));
    out.push_back(std::move(img));
  }
  return out;
}

DatasetPaths write_dataset(const std::vector<DatasetSample>& samples, const std::filesystem::path& dir) {
  std::string cot, img;
  for (const auto& s : samples) (s.split == Split::cot ? cot : img) += canonical_dump(json(s)) + "\n";
  DatasetPaths p{dir / "split1.jsonl", dir / "split2.jsonl"};
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::storage, "cannot create " + dir.string() + ": " + ec.message());
  write_file_atomic(p.split1, cot);
  write_file_atomic(p.split2, img);
  return p;
}

std::vector<DatasetSample> read_dataset_file(const std::filesystem::path& path) {
  auto bytes = read_file_if_exists(path);
  require(bytes.has_value(), ErrorKind::missing_artifact, "no dataset file at " + path.string());
  std::vector<DatasetSample> out;
  std::istringstream in(*bytes);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line).get<DatasetSample>());
    } catch (const json::exception& e) {
      fail(ErrorKind::invalid_record, "bad dataset line in " + path.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace cotforge
