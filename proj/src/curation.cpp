#include "cotforge/curation.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <mutex>
#include <regex>

#include "cotforge/consensus.hpp"
#include "cotforge/errors.hpp"
#include "cotforge/parallel.hpp"

namespace cotforge {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

const char* const kGeneratorReask =
    "Your previous answer did not follow the required format. Answer again using exactly:\n"
    "REASONING: <step-by-step reasoning>\n"
    "PROMPT: <one-paragraph image prompt>";

const char* const kSelectorReask =
    "Your previous answer could not be read. Answer again with exactly two lines:\n"
    "INDEX: <candidate number>\n"
    "SCORE: <number between 0 and 1>";

std::int64_t image_seed(const CurationConfig& c, int round, int index) {
  return c.sampling.seed + static_cast<std::int64_t>(round) * c.candidates_per_round + index;
}

std::string render_candidates(const std::vector<PromptCandidate>& candidates, const std::vector<ImageRef>& images) {
  std::string out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out += "[" + std::to_string(i) + "] prompt: " + candidates[i].image_prompt + "\n";
    out += "    image: " + images[i].locator + " (sha256 " + to_hex(images[i].content_hash).substr(0, 12) + ")\n";
  }
  return out;
}

Selection select_by_consistency(const Backends& backends, const std::vector<PromptCandidate>& candidates,
                                const CurationConfig& config) {
  if (candidates.size() == 1) return {0, 1.0};
  std::vector<std::string> prompts;
  prompts.reserve(candidates.size());
  for (const auto& c : candidates) prompts.push_back(c.image_prompt);
  auto embeddings = stack_embeddings(embed_all(backends, prompts));
  auto chosen = select_consistent(embeddings, ConsistencyOptions{config.normalize_embeddings});
  // Score on the cosine scale so the threshold does not depend on the
  // embedder's vector norms.
  auto cosine = average_similarity(similarity_matrix(normalized_rows(embeddings)));
  double score = std::clamp(cosine(chosen.index), 0.0, 1.0);
  return {static_cast<int>(chosen.index), score};
}

}  // namespace

std::string_view to_string(SelectorKind k) { return k == SelectorKind::mllm_selector ? "mllm" : "consistency"; }

SelectorKind selector_kind_from_string(std::string_view s) {
  if (s == "mllm" || s == "MLLM_SELECTOR") return SelectorKind::mllm_selector;
  if (s == "consistency" || s == "SELF_CONSISTENCY") return SelectorKind::self_consistency;
  fail(ErrorKind::configuration, "unknown selector '" + std::string(s) + "'");
}

std::string_view to_string(TerminalStatus s) { return s == TerminalStatus::accepted ? "ACCEPTED" : "MAX_ROUNDS"; }

TerminalStatus terminal_status_from_string(std::string_view s) {
  if (s == "ACCEPTED") return TerminalStatus::accepted;
  if (s == "MAX_ROUNDS") return TerminalStatus::max_rounds;
  fail(ErrorKind::invalid_record, "unknown terminal status '" + std::string(s) + "'");
}

void CurationConfig::validate() const {
  require(candidates_per_round >= 1, ErrorKind::configuration, "candidates per round must be >= 1");
  require(max_rounds >= 1, ErrorKind::configuration, "max_rounds must be >= 1");
  require(quality_threshold >= 0.0 && quality_threshold <= 1.0, ErrorKind::configuration,
          "quality threshold must lie in [0, 1]");
  sampling.validate();
}

SelectorKind CurationConfig::selector_for(TaskFamily family) const {
  if (selector_kind) return *selector_kind;
  return family == TaskFamily::subject_driven ? SelectorKind::mllm_selector : SelectorKind::self_consistency;
}

void to_json(json& j, const CurationConfig& c) {
  j = json{{"candidates_per_round", c.candidates_per_round},
           {"max_rounds", c.max_rounds},
           {"quality_threshold", c.quality_threshold},
           {"selector_kind", c.selector_kind ? json(std::string(to_string(*c.selector_kind))) : json("auto")},
           {"sampling", c.sampling},
           {"refine_mode", c.refine_mode == RefineMode::n_images ? "n_images" : "single_image"},
           {"normalize_embeddings", c.normalize_embeddings}};
}

void from_json(const json& j, CurationConfig& c) {
  c.candidates_per_round = j.value("candidates_per_round", c.candidates_per_round);
  c.max_rounds = j.value("max_rounds", c.max_rounds);
  c.quality_threshold = j.value("quality_threshold", c.quality_threshold);
  if (j.contains("selector_kind")) {
    auto s = j["selector_kind"].get<std::string>();
    c.selector_kind = s == "auto" ? std::nullopt : std::optional(selector_kind_from_string(s));
  }
  if (j.contains("sampling")) {
    const auto& s = j["sampling"];
    c.sampling.temperature = s.value("temperature", c.sampling.temperature);
    c.sampling.top_p = s.value("top_p", c.sampling.top_p);
    c.sampling.seed = s.value("seed", c.sampling.seed);
  }
  if (j.contains("refine_mode")) {
    auto m = j["refine_mode"].get<std::string>();
    require(m == "n_images" || m == "single_image", ErrorKind::configuration, "unknown refine_mode '" + m + "'");
    c.refine_mode = m == "single_image" ? RefineMode::single_image : RefineMode::n_images;
  }
  c.normalize_embeddings = j.value("normalize_embeddings", c.normalize_embeddings);
}

void to_json(json& j, const RoundTrace& r) {
  j = json{{"round_index", r.round_index},
           {"candidates", r.candidates},
           {"images", r.images},
           {"selected_index", r.selected_index}};
  if (r.selector_score) j["selector_score"] = *r.selector_score;
  if (r.critique) j["critique"] = *r.critique;
  if (r.refined_prompt) j["refined_prompt"] = *r.refined_prompt;
}

void from_json(const json& j, RoundTrace& r) {
  r.round_index = j.at("round_index").get<int>();
  r.candidates = j.at("candidates").get<std::vector<PromptCandidate>>();
  r.images = j.at("images").get<std::vector<ImageRef>>();
  r.selected_index = j.at("selected_index").get<int>();
  r.selector_score = j.contains("selector_score") ? std::optional(j["selector_score"].get<double>()) : std::nullopt;
  r.critique = j.contains("critique") ? std::optional(j["critique"].get<std::string>()) : std::nullopt;
  r.refined_prompt =
      j.contains("refined_prompt") ? std::optional(j["refined_prompt"].get<std::string>()) : std::nullopt;
}

void to_json(json& j, const CurationRecord& r) {
  j = json{{"task_id", r.task_id},
           {"context", r.context},
           {"rounds", r.rounds},
           {"terminal_status", std::string(to_string(r.terminal_status))},
           {"final_chain", r.final_chain},
           {"final_image", r.final_image},
           {"final_prompt", r.final_prompt}};
}

void from_json(const json& j, CurationRecord& r) {
  r.task_id = j.at("task_id").get<std::string>();
  r.context = j.at("context").get<MultimodalContext>();
  r.rounds = j.at("rounds").get<std::vector<RoundTrace>>();
  r.terminal_status = terminal_status_from_string(j.at("terminal_status").get<std::string>());
  r.final_chain = j.at("final_chain").get<ReasoningChain>();
  r.final_image = j.at("final_image").get<ImageRef>();
  r.final_prompt = j.at("final_prompt").get<std::string>();
}

void to_json(json& j, const TaskFailure& f) {
  j = json{{"task_id", f.task_id}, {"kind", f.kind}, {"message", f.message}};
}

std::optional<GeneratorOutput> parse_generator_output(std::string_view text) {
  // The last line-initial "PROMPT:" separates reasoning from prompt.
  std::size_t split = std::string_view::npos;
  for (std::size_t pos = text.find("PROMPT:"); pos != std::string_view::npos; pos = text.find("PROMPT:", pos + 1))
    if (pos == 0 || text[pos - 1] == '\n') split = pos;
  if (split == std::string_view::npos) return std::nullopt;
  auto reasoning = trim(text.substr(0, split));
  if (reasoning.starts_with("REASONING:")) reasoning = trim(std::string_view(reasoning).substr(10));
  auto prompt = trim(text.substr(split + 7));
  if (reasoning.empty() || prompt.empty()) return std::nullopt;
  return GeneratorOutput{std::move(reasoning), std::move(prompt)};
}

std::optional<Selection> parse_selector_reply(std::string_view text, int candidate_count) {
  static const std::regex kIndex(R"(INDEX\s*[:=]\s*(\d+))", std::regex::icase);
  static const std::regex kScore(R"(SCORE\s*[:=]\s*([0-9]*\.?[0-9]+))", std::regex::icase);
  static const std::regex kBare(R"(^\s*(\d+)\s*[,; ]\s*([0-9]*\.?[0-9]+)\s*$)");
  std::string s(text);
  std::smatch mi, ms;
  std::optional<long> index;
  std::optional<double> score;
  if (std::regex_search(s, mi, kIndex)) index = std::stol(mi[1].str());
  if (std::regex_search(s, ms, kScore)) score = std::stod(ms[1].str());
  if (!index && !score && std::regex_search(s, mi, kBare)) {
    index = std::stol(mi[1].str());
    score = std::stod(mi[2].str());
  }
  if (!score || *score < 0.0 || *score > 1.0) return std::nullopt;
  if (candidate_count == 1) return Selection{0, score};
  if (!index || *index < 0 || *index >= candidate_count) return std::nullopt;
  return Selection{static_cast<int>(*index), score};
}

std::vector<PromptCandidate> generate_candidates(const Backends& backends, const MultimodalContext& ctx,
                                                 const CurationConfig& config) {
  config.validate();
  const int n = config.candidates_per_round;
  auto messages = backends.render_role_prompt(
      Role::generator, {{"context", canonical_serialize(ctx, backends.resolver())}}, ctx.task_family);
  for (const auto& d : ctx.demonstrations) messages.back().images.push_back(d.image);

  RequestTag tag{Role::generator, 0, n, ctx.task_id};
  auto completions = backends.reasoner().chat_complete(messages, config.sampling, tag, n);

  std::vector<std::optional<GeneratorOutput>> parsed(static_cast<std::size_t>(n));
  std::vector<std::int64_t> seeds(static_cast<std::size_t>(n));
  std::vector<std::size_t> failed;
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    parsed[i] = parse_generator_output(completions[i].text);
    seeds[i] = completions[i].seed;
    if (!parsed[i]) failed.push_back(i);
  }

  if (!failed.empty()) {
    auto reask = messages;
    reask.push_back({"user", kGeneratorReask, {}});
    auto params = config.sampling;
    params.seed += n;
    auto retry = backends.reasoner().chat_complete(reask, params, tag, static_cast<int>(failed.size()));
    for (std::size_t k = 0; k < failed.size(); ++k) {
      parsed[failed[k]] = parse_generator_output(retry[k].text);
      seeds[failed[k]] = retry[k].seed;
      if (!parsed[failed[k]])
        fail(ErrorKind::candidate_parse, "generator output for candidate " + std::to_string(failed[k]) +
                                             " of task " + ctx.task_id + " is unparsable after re-ask");
    }
  }

  std::vector<PromptCandidate> out;
  out.reserve(parsed.size());
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    PromptCandidate c;
    c.chain.text = std::move(parsed[i]->reasoning);
    c.chain.sampling = config.sampling;
    c.chain.sampling.seed = seeds[i];
    c.chain.backend_id = backends.reasoner().backend_id(Role::generator);
    c.chain.chain_index = static_cast<int>(i);
    c.image_prompt = std::move(parsed[i]->prompt);
    c.candidate_index = static_cast<int>(i);
    out.push_back(std::move(c));
  }
  return out;
}

Selection select_best(const Backends& backends, const MultimodalContext& ctx,
                      const std::vector<PromptCandidate>& candidates, const std::vector<ImageRef>& images,
                      SelectorKind kind, const CurationConfig& config, int round) {
  require(!candidates.empty(), ErrorKind::invalid_input, "select_best needs at least one candidate");
  require(candidates.size() == images.size(), ErrorKind::invalid_input, "candidates and images differ in length");
  if (kind == SelectorKind::self_consistency) return select_by_consistency(backends, candidates, config);

  const int count = static_cast<int>(candidates.size());
  auto messages = backends.render_role_prompt(Role::selector,
                                              {{"context", canonical_serialize(ctx, backends.resolver())},
                                               {"candidates", render_candidates(candidates, images)}},
                                              ctx.task_family);
  messages.back().images = images;
  RequestTag tag{Role::selector, round, count, ctx.task_id};
  auto reply = backends.reasoner().chat_complete_text(messages, config.sampling, tag);
  if (auto sel = parse_selector_reply(reply, count)) return *sel;

  messages.push_back({"assistant", reply, {}});
  messages.push_back({"user", kSelectorReask, {}});
  reply = backends.reasoner().chat_complete_text(messages, config.sampling, tag);
  if (auto sel = parse_selector_reply(reply, count)) return *sel;
  fail(ErrorKind::selector, "selector reply for task " + ctx.task_id + " is unparsable after re-ask");
}

std::string critique(const Backends& backends, const MultimodalContext& ctx, const ImageRef& image,
                     const std::string& prompt, const CurationConfig& config, int round) {
  backends.resolver().load(image);
  auto messages = backends.render_role_prompt(
      Role::critic, {{"context", canonical_serialize(ctx, backends.resolver())}, {"prompt", prompt}},
      ctx.task_family);
  messages.back().images.push_back(image);
  RequestTag tag{Role::critic, round, 0, ctx.task_id};
  auto text = trim(backends.reasoner().chat_complete_text(messages, config.sampling, tag));
  if (text.empty()) fail(ErrorKind::critique, "critic returned an empty critique for task " + ctx.task_id);
  return text;
}

PromptCandidate refine(const Backends& backends, const MultimodalContext& ctx, const PromptCandidate& candidate,
                       const std::string& critique_text, const CurationConfig& config, int round) {
  require(!trim(candidate.image_prompt).empty(), ErrorKind::invalid_input, "refine needs a non-empty prompt");
  require(!trim(critique_text).empty(), ErrorKind::invalid_input, "refine needs a non-empty critique");
  auto messages = backends.render_role_prompt(Role::refiner,
                                              {{"context", canonical_serialize(ctx, backends.resolver())},
                                               {"prompt", candidate.image_prompt},
                                               {"critique", critique_text}},
                                              ctx.task_family);
  RequestTag tag{Role::refiner, round, 0, ctx.task_id};
  auto text = trim(backends.reasoner().chat_complete_text(messages, config.sampling, tag));
  if (text.empty()) fail(ErrorKind::protocol, "refiner returned an empty prompt for task " + ctx.task_id);
  PromptCandidate out = candidate;
  out.image_prompt = std::move(text);
  return out;
}

CurationRecord run_curation(const Backends& backends, const MultimodalContext& ctx, const CurationConfig& config) {
  config.validate();
  validate(ctx);
  const auto kind = config.selector_for(ctx.task_family);

  CurationRecord record;
  record.task_id = ctx.task_id;
  record.context = ctx;

  auto candidates = generate_candidates(backends, ctx, config);
  for (int round = 0; round < config.max_rounds; ++round) {
    RoundTrace trace;
    trace.round_index = round;
    trace.images = parallel_map<ImageRef>(candidates.size(), backends.config().parallelism, [&](std::size_t i) {
      const auto& c = candidates[i];
      auto source = "r" + std::to_string(round) + "-c" + std::to_string(i) + "-" +
                    sha256_hex(c.image_prompt).substr(0, 12);
      RequestTag tag{Role::generator, round, 0, ctx.task_id};
      return backends.t2i().t2i_generate(c.image_prompt, image_seed(config, round, static_cast<int>(i)),
                                         std::move(source), tag);
    });

    auto sel = select_best(backends, ctx, candidates, trace.images, kind, config, round);
    trace.selected_index = sel.index;
    trace.selector_score = sel.score;
    const auto& chosen = candidates[static_cast<std::size_t>(sel.index)];

    const bool accepted = sel.score && *sel.score >= config.quality_threshold;
    if (accepted || round + 1 == config.max_rounds) {
      record.terminal_status = accepted ? TerminalStatus::accepted : TerminalStatus::max_rounds;
      record.final_chain = chosen.chain;
      record.final_image = trace.images[static_cast<std::size_t>(sel.index)];
      record.final_prompt = chosen.image_prompt;
      trace.candidates = std::move(candidates);
      record.rounds.push_back(std::move(trace));
      break;
    }

    auto crit = critique(backends, ctx, trace.images[static_cast<std::size_t>(sel.index)], chosen.image_prompt,
                         config, round);
    auto refined = refine(backends, ctx, chosen, crit, config, round);
    trace.critique = std::move(crit);
    trace.refined_prompt = refined.image_prompt;

    const int next_count = config.refine_mode == RefineMode::n_images ? config.candidates_per_round : 1;
    std::vector<PromptCandidate> next;
    for (int i = 0; i < next_count; ++i) {
      next.push_back(refined);
      next.back().candidate_index = i;
    }
    trace.candidates = std::move(candidates);
    record.rounds.push_back(std::move(trace));
    candidates = std::move(next);
  }
  return record;
}

PoolResult curate_pool(const Backends& backends, const std::vector<MultimodalContext>& tasks,
                       const CurationConfig& config, const PoolOptions& options) {
  require(!tasks.empty(), ErrorKind::invalid_input, "curate_pool needs at least one task");
  config.validate();

  struct Outcome {
    std::optional<CurationRecord> record;
    std::optional<TaskFailure> failure;
  };
  std::mutex callback_mu;
  auto outcomes = parallel_map<Outcome>(tasks.size(), options.parallelism, [&](std::size_t i) {
    Outcome o;
    try {
      o.record = run_curation(backends, tasks[i], config);
    } catch (const Error& e) {
      o.failure = TaskFailure{tasks[i].task_id, std::string(to_string(e.kind())), e.what()};
    } catch (const std::exception& e) {
      o.failure = TaskFailure{tasks[i].task_id, "internal", e.what()};
    }
    std::lock_guard lock(callback_mu);
    if (o.record && options.on_record) options.on_record(i, *o.record);
    if (o.failure && options.on_failure) options.on_failure(i, *o.failure);
    return o;
  });

  PoolResult result;
  for (auto& o : outcomes) {
    if (o.record) result.records.push_back(std::move(*o.record));
    if (o.failure) result.failures.push_back(std::move(*o.failure));
  }
  return result;
}

}  // namespace cotforge
