#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fuess/domain.hpp"
#include "fuess/selection.hpp"
#include "fuess/vector_store.hpp"

namespace fuess {

/// Version tag of the canonical template wording in templates/.
inline constexpr std::string_view kTemplateVersion = "fuess-prompts/1";

/// Role text goes in the system message, everything else in the user message.
struct ChatPrompt {
  std::string system;
  std::string user;

  /// system and user joined by a blank line (or just user without a role).
  std::string full_text() const;
};

struct RetrievedContext {
  std::vector<DocumentChunk> chunks;  // retrieval ranking order
};

struct ContextSet {
  std::vector<Sample> demonstrations;
};

enum class QueryKind { Global, Local };

struct AblationFlags {
  bool no_role = false;
  bool no_cot = false;
  bool no_ec = false;

  bool any() const { return no_role || no_cot || no_ec; }
  bool operator==(const AblationFlags&) const = default;
};

/// Parses "no-role,no-cot,no-ec" (any subset, any order).
AblationFlags parse_ablation_flags(std::string_view text);
std::string to_string(const AblationFlags& flags);

struct AvsPrompt {
  std::string role_block;
  std::string data_block;
  std::string instruction_block;
  std::string context_block;
  std::string main_user_block;
  QueryKind query_kind = QueryKind::Global;
  std::optional<std::string> target_variable;

  ChatPrompt chat() const;
};

struct SsPrompt {
  std::string role_block;  // empty under no_role
  std::string data_block;
  std::string importance_block;
  std::string global_explanation_block;
  std::string instruction_block;
  std::string context_samples_block;
  std::string main_user_block;
  AblationFlags ablation;

  ChatPrompt chat() const;
};

/// "Name1: v1, Name2: N/A, ..." in sample order; with a label appends
/// " -> <primary>: <y>". Numbers use the shortest round-trip decimal.
std::string format_sample_text(const Sample& sample, bool include_label,
                               std::string_view primary_variable = {});

/// Inverse of format_sample_text. Throws InvalidArgument on malformed text.
Sample parse_sample_text(std::string_view line);

/// Renders a named template: `{Name}` placeholders found in `values` are
/// substituted, other brace text stays literal; `{#tag}...{/tag}` sections
/// are dropped when `tag` is in `drop_sections`, otherwise only their
/// markers are removed.
std::string render_template(std::string_view text,
                            const std::vector<std::pair<std::string, std::string>>& values,
                            const std::vector<std::string>& drop_sections = {});

/// Raw template text by file stem (e.g. "ss_instruction"). Throws
/// InvalidArgument for an unknown name.
std::string_view template_text(std::string_view name);
std::vector<std::string> template_names();

AvsPrompt render_avs_pt(const TaskConfig& task, const std::vector<VariableSpec>& catalog,
                        const RetrievedContext& context, QueryKind kind,
                        const std::optional<std::string>& target_variable = std::nullopt);

/// `catalog` supplies descriptions/units for the data block; only the
/// variables of the test sample are listed.
SsPrompt render_ss_pt(const TaskConfig& task, const std::vector<VariableSpec>& catalog,
                      const SelectionResult& selection, const ContextSet& context,
                      const Sample& test_sample, const AblationFlags& ablation = {});

}  // namespace fuess
