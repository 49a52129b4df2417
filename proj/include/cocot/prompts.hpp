#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace cocot::prompts {

enum class TemplateId {
  single_step,
  multi_step,
  train_stage1,
  train_stage2,
  infer_direct,
  infer_cocot_stage1,
  infer_cocot_stage2,
  infer_viscot_stage1,
  infer_viscot_stage2,
  infer_minus_rar,
  infer_replaced_rar,
  infer_qwen_rar,
  classify_question_type,
};

/// Bumped whenever a template body under assets/prompts changes.
inline constexpr std::string_view kTemplateVersion = "prompts-v1";

using Bindings = std::map<std::string, std::string, std::less<>>;

struct PromptTemplate {
  TemplateId id;
  std::string_view name;
  std::string_view body;
  std::set<std::string, std::less<>> required_placeholders;
};

const std::vector<TemplateId>& all_templates();
std::string_view to_string(TemplateId id);
std::optional<TemplateId> parse_template_id(std::string_view name);

const PromptTemplate& get(TemplateId id);

/// Names appearing as {name} in a body, in first-occurrence order.
std::vector<std::string> placeholders_in(std::string_view body);

/// Literal single-pass substitution of {name} placeholders. The bindings must
/// cover the body's placeholders exactly: a missing or extra name throws
/// TemplateError carrying that name. Substituted values are never re-expanded.
std::string render_text(std::string_view body, const Bindings& bindings);

std::string render(TemplateId id, const Bindings& bindings);

/// FNV-1a digest over every template name and body, in registry order.
std::string registry_checksum();

}  // namespace cocot::prompts
