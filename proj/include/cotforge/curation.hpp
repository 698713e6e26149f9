#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cotforge/backends.hpp"
#include "cotforge/types.hpp"

namespace cotforge {

enum class SelectorKind { mllm_selector, self_consistency };
enum class TerminalStatus { accepted, max_rounds };

// What a round after a refinement renders: N images from the refined prompt,
// or a single one.
enum class RefineMode { n_images, single_image };

std::string_view to_string(SelectorKind k);
SelectorKind selector_kind_from_string(std::string_view s);
std::string_view to_string(TerminalStatus s);
TerminalStatus terminal_status_from_string(std::string_view s);

struct CurationConfig {
  int candidates_per_round = 3;
  int max_rounds = 2;
  // Artifact-chosen default on the [0, 1] selector scale.
  double quality_threshold = 0.5;
  // Unset: self-consistency for object/attribute inference, MLLM selector
  // for subject-driven tasks.
  std::optional<SelectorKind> selector_kind;
  SamplingParams sampling;
  RefineMode refine_mode = RefineMode::n_images;
  bool normalize_embeddings = false;

  void validate() const;
  SelectorKind selector_for(TaskFamily family) const;
};

void to_json(json& j, const CurationConfig& c);
void from_json(const json& j, CurationConfig& c);

struct RoundTrace {
  int round_index = 0;
  std::vector<PromptCandidate> candidates;
  std::vector<ImageRef> images;  // parallel to candidates
  int selected_index = 0;
  std::optional<double> selector_score;
  std::optional<std::string> critique;
  std::optional<std::string> refined_prompt;
};

struct CurationRecord {
  std::string task_id;
  MultimodalContext context;
  std::vector<RoundTrace> rounds;
  TerminalStatus terminal_status = TerminalStatus::max_rounds;
  ReasoningChain final_chain;
  ImageRef final_image;
  std::string final_prompt;
};

void to_json(json& j, const RoundTrace& r);
void from_json(const json& j, RoundTrace& r);
void to_json(json& j, const CurationRecord& r);
void from_json(const json& j, CurationRecord& r);

struct Selection {
  int index = 0;
  std::optional<double> score;
};

struct GeneratorOutput {
  std::string reasoning;
  std::string prompt;
};

// Splits "REASONING: ... PROMPT: ..." output; nullopt when either part is
// missing or empty.
std::optional<GeneratorOutput> parse_generator_output(std::string_view text);

// Reads "INDEX: i" / "SCORE: s" (or a bare "i s") from a selector reply.
std::optional<Selection> parse_selector_reply(std::string_view text, int candidate_count);

std::vector<PromptCandidate> generate_candidates(const Backends& backends, const MultimodalContext& ctx,
                                                 const CurationConfig& config);

Selection select_best(const Backends& backends, const MultimodalContext& ctx,
                      const std::vector<PromptCandidate>& candidates, const std::vector<ImageRef>& images,
                      SelectorKind kind, const CurationConfig& config, int round = 0);

std::string critique(const Backends& backends, const MultimodalContext& ctx, const ImageRef& image,
                     const std::string& prompt, const CurationConfig& config, int round = 0);

PromptCandidate refine(const Backends& backends, const MultimodalContext& ctx, const PromptCandidate& candidate,
                       const std::string& critique_text, const CurationConfig& config, int round = 0);

CurationRecord run_curation(const Backends& backends, const MultimodalContext& ctx, const CurationConfig& config);

struct TaskFailure {
  std::string task_id;
  std::string kind;
  std::string message;
};

void to_json(json& j, const TaskFailure& f);

struct PoolOptions {
  int parallelism = 1;
  // Called as each task finishes; invocations are serialized.
  std::function<void(std::size_t, const CurationRecord&)> on_record;
  std::function<void(std::size_t, const TaskFailure&)> on_failure;
};

struct PoolResult {
  std::vector<CurationRecord> records;  // task order, failures omitted
  std::vector<TaskFailure> failures;
};

PoolResult curate_pool(const Backends& backends, const std::vector<MultimodalContext>& tasks,
                       const CurationConfig& config, const PoolOptions& options = {});

}  // namespace cotforge
