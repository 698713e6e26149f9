#include "cotforge/consensus.hpp"

#include "cotforge/parallel.hpp"

namespace cotforge {

Eigen::MatrixXd stack_embeddings(const std::vector<Embedding>& embeddings) {
  require(!embeddings.empty(), ErrorKind::invalid_input, "no embeddings to stack");
  const auto dim = embeddings.front().dim();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(embeddings.size()), dim);
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    require(embeddings[i].dim() == dim, ErrorKind::invalid_input, "embedding dimensions differ");
    m.row(static_cast<Eigen::Index>(i)) = embeddings[i].values.transpose();
  }
  return m;
}

std::vector<std::string> derive_prompts(const Backends& backends, const std::vector<ReasoningChain>& cots,
                                        const MultimodalContext& ctx) {
  require(!cots.empty(), ErrorKind::invalid_input, "derive_prompts needs at least one chain");
  const auto context = canonical_serialize(ctx, backends.resolver());
  return parallel_map<std::string>(cots.size(), backends.config().parallelism, [&](std::size_t i) {
    const auto& cot = cots[i];
    auto messages =
        backends.render_role_prompt(Role::prompt_derivation, {{"context", context}, {"chain", cot.text}},
                                    ctx.task_family);
    RequestTag tag{Role::prompt_derivation, -1, 0, ctx.task_id};
    auto text = backends.reasoner().chat_complete_text(messages, cot.sampling, tag);
    require(!text.empty(), ErrorKind::protocol, "derived prompt is empty");
    return text;
  });
}

std::vector<Embedding> embed_all(const Backends& backends, const std::vector<std::string>& texts) {
  return parallel_map<Embedding>(texts.size(), backends.config().parallelism,
                                 [&](std::size_t i) { return backends.embedder().embed_text(texts[i]); });
}

ConsistencyResult select_consistent(const std::vector<std::string>& prompts, const std::vector<Embedding>& embeddings,
                                    ConsistencyOptions opts) {
  require(!prompts.empty(), ErrorKind::invalid_input, "select_consistent needs at least one prompt");
  require(prompts.size() == embeddings.size(), ErrorKind::invalid_input, "prompts and embeddings differ in length");
  return select_consistent(stack_embeddings(embeddings), opts);
}

}  // namespace cotforge
