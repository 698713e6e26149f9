#pragma once

// Domain vocabulary shared by every module: contexts, chains, prompt
// candidates, image references and sampling parameters. All of these are
// immutable-by-convention value types.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cotforge/digest.hpp"
#include "cotforge/errors.hpp"

namespace cotforge {

using json = nlohmann::json;

enum class TaskFamily { object_inference, attribute_inference, subject_driven };

std::string_view to_string(TaskFamily f);
TaskFamily task_family_from_string(std::string_view s);

struct ImageRef {
  Digest content_hash{};
  std::string locator;
  std::optional<std::int64_t> seed;
  std::optional<std::string> source_prompt_id;

  bool operator==(const ImageRef&) const = default;
};

struct Demonstration {
  std::string text;
  ImageRef image;

  bool operator==(const Demonstration&) const = default;
};

struct MultimodalContext {
  std::vector<Demonstration> demonstrations;
  std::string query_text;
  std::string task_id;
  TaskFamily task_family = TaskFamily::object_inference;

  bool operator==(const MultimodalContext&) const = default;
};

struct SamplingParams {
  double temperature = 0.7;
  double top_p = 0.8;
  std::int64_t seed = 0;

  void validate() const;
  bool operator==(const SamplingParams&) const = default;
};

struct ReasoningChain {
  std::string text;
  SamplingParams sampling;
  std::string backend_id;
  std::optional<std::vector<double>> token_logprobs;
  int chain_index = 0;

  bool operator==(const ReasoningChain&) const = default;
};

struct PromptCandidate {
  ReasoningChain chain;
  std::string image_prompt;
  int candidate_index = 0;

  bool operator==(const PromptCandidate&) const = default;
};

// One line of a task input file.
struct TaskSpec {
  MultimodalContext context;
  std::optional<std::string> verifier_target;
};

// Loads the bytes behind an ImageRef and checks them against content_hash.
class ArtifactResolver {
 public:
  virtual ~ArtifactResolver() = default;
  virtual std::string load(const ImageRef& ref) const = 0;
};

void validate(const MultimodalContext& ctx);
void validate(const ReasoningChain& chain);

// Deterministic, order-preserving encoding (compact JSON, sorted keys).
// Every ImageRef is resolved and re-hashed; failures raise missing-artifact.
std::string canonical_serialize(const MultimodalContext& ctx, const ArtifactResolver& resolver);
MultimodalContext decode_context(std::string_view bytes);

// Task files are JSON-Lines. Relative image paths resolve against the
// directory holding the task file; each image is hashed at load time.
std::vector<TaskSpec> load_tasks(const std::filesystem::path& path);
std::vector<TaskSpec> parse_tasks(std::string_view jsonl, const std::filesystem::path& base_dir);

void to_json(json& j, const ImageRef& r);
void from_json(const json& j, ImageRef& r);
void to_json(json& j, const Demonstration& d);
void from_json(const json& j, Demonstration& d);
void to_json(json& j, const MultimodalContext& c);
void from_json(const json& j, MultimodalContext& c);
void to_json(json& j, const SamplingParams& p);
void from_json(const json& j, SamplingParams& p);
void to_json(json& j, const ReasoningChain& c);
void from_json(const json& j, ReasoningChain& c);
void to_json(json& j, const PromptCandidate& c);
void from_json(const json& j, PromptCandidate& c);

// Compact dump with sorted keys; the single formatting path for any bytes
// that are hashed or compared.
std::string canonical_dump(const json& j);

}  // namespace cotforge
