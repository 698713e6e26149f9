#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "cotforge/curation.hpp"
#include "cotforge/templates.hpp"
#include "cotforge/types.hpp"

namespace cotforge {

enum class Split { cot, image };
enum class SegmentKind { text, image_ref, cot_text, image_token };

std::string_view to_string(Split s);
std::string_view to_string(SegmentKind k);

struct Segment {
  SegmentKind kind = SegmentKind::text;
  std::string text;  // TEXT, COT_TEXT, IMAGE_TOKEN
  ImageRef image;    // IMAGE_REF

  bool operator==(const Segment&) const = default;
};

struct DatasetSample {
  Split split = Split::cot;
  std::vector<Segment> input_segments;
  std::variant<std::string, ImageRef> target;
  std::string source_task_id;

  bool operator==(const DatasetSample&) const = default;
};

void to_json(json& j, const Segment& s);
void from_json(const json& j, Segment& s);
void to_json(json& j, const DatasetSample& s);
void from_json(const json& j, DatasetSample& s);

// Two samples per record, cot split first:
//   [X, p_cot] -> chain text
//   [X, chain, p_image, <image>] -> final image
std::vector<DatasetSample> build_dataset(const std::vector<CurationRecord>& records,
                                         const TemplateRegistry& templates);

struct DatasetPaths {
  std::filesystem::path split1;
  std::filesystem::path split2;
};

// dir/split1.jsonl (cot) and dir/split2.jsonl (image), one canonical JSON
// object per line.
DatasetPaths write_dataset(const std::vector<DatasetSample>& samples, const std::filesystem::path& dir);
std::vector<DatasetSample> read_dataset_file(const std::filesystem::path& path);

}  // namespace cotforge
