#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cotforge/types.hpp"

namespace cotforge {

enum class Role { generator, selector, critic, refiner, stage1_instruction, prompt_derivation };

std::string_view to_string(Role r);
Role role_from_string(std::string_view s);

// Placeholders a role's template must reference.
std::vector<std::string> required_placeholders(Role r);

struct Message {
  std::string role;  // "system" | "user" | "assistant"
  std::string text;
  std::vector<ImageRef> images;

  bool operator==(const Message&) const = default;
};

using Bindings = std::map<std::string, std::string>;

struct RoleTemplate {
  Role role = Role::generator;
  std::string system_text;  // empty: no system message
  std::string template_text;

  // Throws template-error when a required placeholder is absent or an
  // unknown one is present.
  void validate() const;
  std::vector<Message> render(const Bindings& bindings) const;
};

// Substitutes {name} placeholders; "{{" and "}}" are literal braces.
std::string substitute(std::string_view text, const Bindings& bindings);

// Role templates plus the fixed strings used when writing dataset samples.
class TemplateRegistry {
 public:
  static TemplateRegistry defaults();
  // Overlays a JSON file of the form
  //   {"templates": [{"role": "...", "task_family": "...", "system": "...", "template": "..."}],
  //    "p_cot": "...", "p_image": "...", "image_marker": "..."}
  void overlay_file(const std::filesystem::path& path);
  void overlay(const json& j);

  void set(RoleTemplate t, std::optional<TaskFamily> family = std::nullopt);
  // Family-specific template when one exists, else the generic one.
  const RoleTemplate& get(Role r, std::optional<TaskFamily> family = std::nullopt) const;

  std::vector<Message> render(Role r, const Bindings& bindings,
                              std::optional<TaskFamily> family = std::nullopt) const;

  std::string p_cot;
  std::string p_image;
  std::string image_marker = "<image>";

 private:
  std::map<std::pair<Role, int>, RoleTemplate> templates_;
};

}  // namespace cotforge
