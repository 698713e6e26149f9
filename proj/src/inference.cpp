#include "cotforge/inference.hpp"

#include "cotforge/errors.hpp"

namespace cotforge {

namespace {

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + needle.size()))
    ++n;
  return n;
}

}  // namespace

void to_json(json& j, const TwoStageResult& r) {
  j = json{{"chain", r.chain}, {"image", r.image}, {"stage2_prompt", r.stage2_prompt}};
}

ReasoningChain generate_reasoning(const Backends& backends, const MultimodalContext& ctx,
                                  const SamplingParams& params, int chain_index) {
  validate(ctx);
  params.validate();
  auto messages = backends.render_role_prompt(
      Role::stage1_instruction, {{"context", canonical_serialize(ctx, backends.resolver())}}, ctx.task_family);
  if (!messages.empty()) {
    for (const auto& d : ctx.demonstrations) messages.back().images.push_back(d.image);
  }
  RequestTag tag{Role::stage1_instruction, -1, 0, ctx.task_id};
  auto completion = backends.reasoner().chat_complete(messages, params, tag, 1).front();
  if (completion.text.empty()) fail(ErrorKind::protocol, "stage-1 reply is empty");

  ReasoningChain chain;
  chain.text = std::move(completion.text);
  chain.sampling = params;
  chain.backend_id = backends.reasoner().backend_id(Role::stage1_instruction);
  chain.token_logprobs = std::move(completion.logprobs);
  chain.chain_index = chain_index;
  return chain;
}

std::string build_stage2_prompt(const Backends& backends, const MultimodalContext& ctx,
                                const ReasoningChain& chain) {
  const auto& marker = backends.templates().image_marker;
  auto context = canonical_serialize(ctx, backends.resolver());
  require(count_occurrences(context, marker) == 0, ErrorKind::invalid_input,
          "context already contains the image marker " + marker);
  require(count_occurrences(chain.text, marker) == 0, ErrorKind::invalid_input,
          "reasoning chain contains the image marker " + marker);
  std::string prompt = std::move(context);
  prompt.push_back('\n');
  if (!chain.text.empty()) {
    prompt += chain.text;
    prompt.push_back('\n');
  }
  prompt += marker;
  return prompt;
}

std::string chain_prompt_id(const ReasoningChain& chain) {
  return "chain-" + std::to_string(chain.chain_index) + "-" + sha256_hex(chain.text).substr(0, 12);
}

ImageRef generate_image_for_chain(const Backends& backends, const MultimodalContext& ctx,
                                  const ReasoningChain& chain, std::int64_t seed) {
  auto prompt = build_stage2_prompt(backends, ctx, chain);
  RequestTag tag{Role::stage1_instruction, -1, 0, ctx.task_id};
  return backends.t2i().t2i_generate(prompt, seed, chain_prompt_id(chain), tag);
}

TwoStageResult two_stage_infer(const Backends& backends, const MultimodalContext& ctx, const SamplingParams& params,
                               std::int64_t seed, bool use_cot) {
  TwoStageResult r;
  if (use_cot) {
    r.chain = generate_reasoning(backends, ctx, params);
  } else {
    r.chain.sampling = params;
    r.chain.backend_id = "none";
  }
  r.stage2_prompt = build_stage2_prompt(backends, ctx, r.chain);
  RequestTag tag{Role::stage1_instruction, -1, 0, ctx.task_id};
  r.image = backends.t2i().t2i_generate(r.stage2_prompt, seed, chain_prompt_id(r.chain), tag);
  return r;
}

}  // namespace cotforge
