#pragma once

#include <stdexcept>
#include <string>

namespace minclip {

struct UnknownVariant : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class PromptVariant { kGroundedDefault, kGroundedShort, kUngrounded };

const char* prompt_variant_name(PromptVariant v);        // grounded_default, ...
PromptVariant prompt_variant_from_name(const std::string& name);

// Template text with {page_title} / {alt_text} slots. Grounded variants carry
// both slots; the ungrounded one carries neither.
struct PromptTemplate {
  PromptVariant variant;
  std::string text;
};

// Compiled-in copies of the template files under prompts/.
PromptTemplate builtin_prompt_template(PromptVariant v);

// Reads <dir>/<variant>.txt.
PromptTemplate load_prompt_template(const std::string& dir, PromptVariant v);

// Exact slot substitution; empty strings are inserted as-is.
std::string instantiate_prompt(const PromptTemplate& tmpl, const std::string& page_title,
                               const std::string& alt_text);

}  // namespace minclip
