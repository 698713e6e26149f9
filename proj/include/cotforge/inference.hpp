#pragma once

#include <cstdint>
#include <string>

#include "cotforge/backends.hpp"
#include "cotforge/types.hpp"

namespace cotforge {

struct TwoStageResult {
  ReasoningChain chain;
  ImageRef image;
  std::string stage2_prompt;
};

void to_json(json& j, const TwoStageResult& r);

// Stage 1: context ⊕ instruction → reasoning chain.
ReasoningChain generate_reasoning(const Backends& backends, const MultimodalContext& ctx,
                                  const SamplingParams& params, int chain_index = 0);

// context ⊕ chain ⊕ image marker. An empty chain gives the no-reasoning
// baseline prompt. The marker appears exactly once.
std::string build_stage2_prompt(const Backends& backends, const MultimodalContext& ctx,
                                const ReasoningChain& chain);

// Identifier linking a generated image back to the chain it came from.
std::string chain_prompt_id(const ReasoningChain& chain);

// Stage 2. Accepts an empty chain (baseline).
ImageRef generate_image_for_chain(const Backends& backends, const MultimodalContext& ctx,
                                  const ReasoningChain& chain, std::int64_t seed);

// Both stages; a stage-1 failure propagates before any image request.
// With `use_cot == false` stage 1 is skipped and the chain is empty.
TwoStageResult two_stage_infer(const Backends& backends, const MultimodalContext& ctx, const SamplingParams& params,
                               std::int64_t seed, bool use_cot = true);

}  // namespace cotforge
