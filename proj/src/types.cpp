#include "cotforge/types.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "cotforge/errors.hpp"

namespace cotforge {

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorKind::missing_artifact, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string_view to_string(TaskFamily f) {
  switch (f) {
    case TaskFamily::object_inference: return "OBJECT_INFERENCE";
    case TaskFamily::attribute_inference: return "ATTRIBUTE_INFERENCE";
    case TaskFamily::subject_driven: return "SUBJECT_DRIVEN";
  }
  return "OBJECT_INFERENCE";
}

TaskFamily task_family_from_string(std::string_view s) {
  if (s == "OBJECT_INFERENCE" || s == "object_inference") return TaskFamily::object_inference;
  if (s == "ATTRIBUTE_INFERENCE" || s == "attribute_inference") return TaskFamily::attribute_inference;
  if (s == "SUBJECT_DRIVEN" || s == "subject_driven") return TaskFamily::subject_driven;
  fail(ErrorKind::invalid_input, "unknown task_family '" + std::string(s) + "'");
}

void SamplingParams::validate() const {
  require(std::isfinite(temperature) && temperature >= 0.0, ErrorKind::invalid_input,
          "temperature must be >= 0");
  require(std::isfinite(top_p) && top_p > 0.0 && top_p <= 1.0, ErrorKind::invalid_input,
          "top_p must lie in (0, 1]");
}

void validate(const MultimodalContext& ctx) {
  require(!ctx.demonstrations.empty(), ErrorKind::invalid_input,
          "task " + ctx.task_id + " has no demonstrations");
  require(!ctx.query_text.empty(), ErrorKind::invalid_input, "task " + ctx.task_id + " has empty query_text");
}

void validate(const ReasoningChain& chain) {
  require(!chain.text.empty(), ErrorKind::invalid_input, "reasoning chain text is empty");
  require(chain.chain_index >= 0, ErrorKind::invalid_input, "chain_index must be >= 0");
  if (chain.token_logprobs)
    for (double lp : *chain.token_logprobs)
      require(lp <= 0.0, ErrorKind::invalid_input, "token logprob above zero");
  chain.sampling.validate();
}

std::string canonical_dump(const json& j) {
  try {
    return j.dump(-1, ' ', false, json::error_handler_t::strict);
  } catch (const json::exception& e) {
    fail(ErrorKind::invalid_input, std::string("not serializable as UTF-8 JSON: ") + e.what());
  }
}

std::string canonical_serialize(const MultimodalContext& ctx, const ArtifactResolver& resolver) {
  for (const auto& demo : ctx.demonstrations) resolver.load(demo.image);
  return canonical_dump(json(ctx));
}

MultimodalContext decode_context(std::string_view bytes) {
  try {
    return json::parse(bytes).get<MultimodalContext>();
  } catch (const json::exception& e) {
    fail(ErrorKind::invalid_input, std::string("cannot decode context: ") + e.what());
  }
}

std::vector<TaskSpec> parse_tasks(std::string_view jsonl, const std::filesystem::path& base_dir) {
  std::vector<TaskSpec> tasks;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= jsonl.size()) {
    auto end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    auto line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::invalid_input, "task line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      TaskSpec t;
      t.context.task_id = j.at("task_id").get<std::string>();
      t.context.task_family = task_family_from_string(j.at("task_family").get<std::string>());
      t.context.query_text = j.at("query_text").get<std::string>();
      for (const auto& d : j.at("demonstrations")) {
        Demonstration demo;
        demo.text = d.at("text").get<std::string>();
        auto image_path = d.at("image_path").get<std::string>();
        std::filesystem::path p(image_path);
        auto bytes = read_file(p.is_absolute() ? p : base_dir / p);
        demo.image.content_hash = sha256(bytes);
        demo.image.locator = image_path;
        t.context.demonstrations.push_back(std::move(demo));
      }
      if (j.contains("verifier_target") && !j["verifier_target"].is_null())
        t.verifier_target = j["verifier_target"].get<std::string>();
      validate(t.context);
      tasks.push_back(std::move(t));
    } catch (const json::exception& e) {
      fail(ErrorKind::invalid_input, "task line " + std::to_string(line_no) + ": " + e.what());
    }
    if (end == jsonl.size()) break;
  }
  return tasks;
}

std::vector<TaskSpec> load_tasks(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::invalid_input, "cannot open task file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_tasks(ss.str(), path.parent_path());
}

void to_json(json& j, const ImageRef& r) {
  j = json{{"sha256", to_hex(r.content_hash)}, {"locator", r.locator}};
  if (r.seed) j["seed"] = *r.seed;
  if (r.source_prompt_id) j["source_prompt_id"] = *r.source_prompt_id;
}

void from_json(const json& j, ImageRef& r) {
  r.content_hash = digest_from_hex(j.at("sha256").get<std::string>());
  r.locator = j.at("locator").get<std::string>();
  r.seed = j.contains("seed") ? std::optional(j["seed"].get<std::int64_t>()) : std::nullopt;
  r.source_prompt_id =
      j.contains("source_prompt_id") ? std::optional(j["source_prompt_id"].get<std::string>()) : std::nullopt;
}

void to_json(json& j, const Demonstration& d) { j = json{{"text", d.text}, {"image", d.image}}; }

void from_json(const json& j, Demonstration& d) {
  d.text = j.at("text").get<std::string>();
  d.image = j.at("image").get<ImageRef>();
}

void to_json(json& j, const MultimodalContext& c) {
  j = json{{"task_id", c.task_id},
           {"task_family", std::string(to_string(c.task_family))},
           {"demonstrations", c.demonstrations},
           {"query_text", c.query_text}};
}

void from_json(const json& j, MultimodalContext& c) {
  c.task_id = j.at("task_id").get<std::string>();
  c.task_family = task_family_from_string(j.at("task_family").get<std::string>());
  c.demonstrations = j.at("demonstrations").get<std::vector<Demonstration>>();
  c.query_text = j.at("query_text").get<std::string>();
}

void to_json(json& j, const SamplingParams& p) {
  j = json{{"temperature", p.temperature}, {"top_p", p.top_p}, {"seed", p.seed}};
}

void from_json(const json& j, SamplingParams& p) {
  p.temperature = j.at("temperature").get<double>();
  p.top_p = j.at("top_p").get<double>();
  p.seed = j.at("seed").get<std::int64_t>();
}

void to_json(json& j, const ReasoningChain& c) {
  j = json{{"text", c.text}, {"sampling", c.sampling}, {"backend_id", c.backend_id}, {"chain_index", c.chain_index}};
  if (c.token_logprobs) j["token_logprobs"] = *c.token_logprobs;
}

void from_json(const json& j, ReasoningChain& c) {
  c.text = j.at("text").get<std::string>();
  c.sampling = j.at("sampling").get<SamplingParams>();
  c.backend_id = j.at("backend_id").get<std::string>();
  c.chain_index = j.at("chain_index").get<int>();
  c.token_logprobs = j.contains("token_logprobs")
                         ? std::optional(j["token_logprobs"].get<std::vector<double>>())
                         : std::nullopt;
}

void to_json(json& j, const PromptCandidate& c) {
  j = json{{"chain", c.chain}, {"image_prompt", c.image_prompt}, {"candidate_index", c.candidate_index}};
}

void from_json(const json& j, PromptCandidate& c) {
  c.chain = j.at("chain").get<ReasoningChain>();
  c.image_prompt = j.at("image_prompt").get<std::string>();
  c.candidate_index = j.at("candidate_index").get<int>();
}

}  // namespace cotforge
