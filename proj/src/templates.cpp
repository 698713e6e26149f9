#include "cotforge/templates.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "cotforge/errors.hpp"

namespace cotforge {

namespace {

const std::set<std::string, std::less<>> kKnownPlaceholders{"context", "prompt", "critique", "candidates",
                                                            "chain"};

constexpr int kAnyFamily = -1;

// Visits each placeholder name in order; literal text goes to `text_fn`.
template <typename TextFn, typename NameFn>
void scan_template(std::string_view text, TextFn&& text_fn, NameFn&& name_fn) {
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c == '{' && i + 1 < text.size() && text[i + 1] == '{') {
      text_fn('{');
      i += 2;
    } else if (c == '}' && i + 1 < text.size() && text[i + 1] == '}') {
      text_fn('}');
      i += 2;
    } else if (c == '{') {
      auto close = text.find('}', i);
      if (close == std::string_view::npos) fail(ErrorKind::template_error, "unterminated placeholder");
      name_fn(text.substr(i + 1, close - i - 1));
      i = close + 1;
    } else {
      text_fn(c);
      ++i;
    }
  }
}

std::set<std::string> placeholders_of(std::string_view text) {
  std::set<std::string> names;
  scan_template(text, [](char) {}, [&](std::string_view n) { names.emplace(n); });
  return names;
}

}  // namespace

std::string_view to_string(Role r) {
  switch (r) {
    case Role::generator: return "generator";
    case Role::selector: return "selector";
    case Role::critic: return "critic";
    case Role::refiner: return "refiner";
    case Role::stage1_instruction: return "stage1_instruction";
    case Role::prompt_derivation: return "prompt_derivation";
  }
  return "generator";
}

Role role_from_string(std::string_view s) {
  for (auto r : {Role::generator, Role::selector, Role::critic, Role::refiner, Role::stage1_instruction,
                 Role::prompt_derivation})
    if (s == to_string(r)) return r;
  fail(ErrorKind::template_error, "unknown role '" + std::string(s) + "'");
}

std::vector<std::string> required_placeholders(Role r) {
  switch (r) {
    case Role::generator: return {"context"};
    case Role::selector: return {"candidates", "context"};
    case Role::critic: return {"context", "prompt"};
    case Role::refiner: return {"context", "critique", "prompt"};
    case Role::stage1_instruction: return {"context"};
    case Role::prompt_derivation: return {"chain", "context"};
  }
  return {};
}

std::string substitute(std::string_view text, const Bindings& bindings) {
  std::string out;
  out.reserve(text.size());
  scan_template(
      text, [&](char c) { out.push_back(c); },
      [&](std::string_view name) {
        if (!kKnownPlaceholders.contains(name))
          fail(ErrorKind::template_error, "unknown placeholder {" + std::string(name) + "}");
        auto it = bindings.find(std::string(name));
        if (it == bindings.end()) fail(ErrorKind::template_error, "missing binding for {" + std::string(name) + "}");
        out += it->second;
      });
  return out;
}

void RoleTemplate::validate() const {
  auto names = placeholders_of(system_text);
  names.merge(placeholders_of(template_text));
  for (const auto& n : names)
    if (!kKnownPlaceholders.contains(n))
      fail(ErrorKind::template_error, std::string(to_string(role)) + " template uses unknown placeholder {" + n + "}");
  for (const auto& req : required_placeholders(role))
    if (!names.contains(req))
      fail(ErrorKind::template_error, std::string(to_string(role)) + " template lacks {" + req + "}");
}

std::vector<Message> RoleTemplate::render(const Bindings& bindings) const {
  std::vector<Message> out;
  if (!system_text.empty()) out.push_back({"system", substitute(system_text, bindings), {}});
  out.push_back({"user", substitute(template_text, bindings), {}});
  return out;
}

TemplateRegistry TemplateRegistry::defaults() {
  TemplateRegistry reg;
  reg.set({Role::stage1_instruction, "",
           "{context}\n\n"
           "The context above holds interleaved text and image demonstrations followed by a query. "
           "Before any image is generated, reason step by step: work out the rule the demonstrations "
           "share, what the query asks for, and what the next image must therefore show. "
           "Write the reasoning as a concise chain of thought."});
  reg.set({Role::generator, "",
           "{context}\n\n"
           "Study the demonstrations and the query above. Think step by step about the implicit rule "
           "connecting them, then write a prompt for a text-to-image model that produces the next image.\n"
           "Answer in exactly this format:\n"
           "REASONING: <step-by-step reasoning>\n"
           "PROMPT: <one-paragraph image prompt>"});
  reg.set({Role::selector, "",
           "{context}\n\n"
           "Candidate images for the query, each generated from the listed prompt:\n"
           "{candidates}\n\n"
           "Choose the candidate that best continues the demonstrated pattern and rate how well it "
           "satisfies the query on a scale from 0 to 1.\n"
           "Answer in exactly this format:\n"
           "INDEX: <candidate number>\n"
           "SCORE: <number between 0 and 1>"});
  reg.set({Role::critic, "",
           "{context}\n\n"
           "The attached image was generated from this prompt:\n"
           "{prompt}\n\n"
           "Critique the image. Point out concretely where it departs from what the query and the "
           "demonstrations require."});
  reg.set({Role::refiner, "",
           "{context}\n\n"
           "Current image prompt:\n"
           "{prompt}\n\n"
           "Critique of the image it produced:\n"
           "{critique}\n\n"
           "Rewrite the prompt so that the next image resolves the critique. Reply with the revised "
           "prompt only."});
  reg.set({Role::prompt_derivation, "",
           "{context}\n\n"
           "Reasoning about the query:\n"
           "{chain}\n\n"
           "Using this reasoning and the context, write one prompt for a text-to-image model that "
           "describes the next image. Reply with the prompt only."});
  reg.p_cot =
      "Reason step by step about the demonstrations and the query, then describe the image that "
      "should come next.";
  reg.p_image = "Generate the next image according to the reasoning above.";
  return reg;
}

void TemplateRegistry::set(RoleTemplate t, std::optional<TaskFamily> family) {
  t.validate();
  int fam = family ? static_cast<int>(*family) : kAnyFamily;
  templates_.insert_or_assign({t.role, fam}, std::move(t));
}

const RoleTemplate& TemplateRegistry::get(Role r, std::optional<TaskFamily> family) const {
  if (family) {
    auto it = templates_.find({r, static_cast<int>(*family)});
    if (it != templates_.end()) return it->second;
  }
  auto it = templates_.find({r, kAnyFamily});
  if (it == templates_.end()) fail(ErrorKind::template_error, "no template for role " + std::string(to_string(r)));
  return it->second;
}

std::vector<Message> TemplateRegistry::render(Role r, const Bindings& bindings,
                                              std::optional<TaskFamily> family) const {
  return get(r, family).render(bindings);
}

void TemplateRegistry::overlay(const json& j) {
  try {
    if (j.contains("templates")) {
      for (const auto& t : j.at("templates")) {
        RoleTemplate rt;
        rt.role = role_from_string(t.at("role").get<std::string>());
        rt.system_text = t.value("system", "");
        rt.template_text = t.at("template").get<std::string>();
        std::optional<TaskFamily> fam;
        if (t.contains("task_family")) fam = task_family_from_string(t["task_family"].get<std::string>());
        set(std::move(rt), fam);
      }
    }
    if (j.contains("p_cot")) p_cot = j["p_cot"].get<std::string>();
    if (j.contains("p_image")) p_image = j["p_image"].get<std::string>();
    if (j.contains("image_marker")) image_marker = j["image_marker"].get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorKind::template_error, std::string("bad template file: ") + e.what());
  }
  require(!image_marker.empty(), ErrorKind::template_error, "image_marker must be non-empty");
}

void TemplateRegistry::overlay_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::template_error, "cannot open template file " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::template_error, "template file is not valid JSON: " + path.string());
  overlay(j);
}

}  // namespace cotforge
