#include "minclip/prompts.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "minclip/common.hpp"

namespace minclip {

const char* prompt_variant_name(PromptVariant v) {
  switch (v) {
    case PromptVariant::kGroundedDefault: return "grounded_default";
    case PromptVariant::kGroundedShort: return "grounded_short";
    case PromptVariant::kUngrounded: return "ungrounded";
  }
  return "";
}

PromptVariant prompt_variant_from_name(const std::string& name) {
  if (name == "grounded_default" || name == "default") return PromptVariant::kGroundedDefault;
  if (name == "grounded_short" || name == "short") return PromptVariant::kGroundedShort;
  if (name == "ungrounded") return PromptVariant::kUngrounded;
  throw UnknownVariant("unknown prompt variant: " + name);
}

namespace {

const char* kGroundedDefaultText =
    "The image presented came from a web page called: {page_title} and had the alt-text: "
    "{alt_text}. Please describe what is in the image using the alt-text and the page title as a "
    "guide to ground your response. For example, if the alt-text contains a specific brand name, "
    "use that brand name in your output. Please be descriptive but concise. DO NOT make things "
    "up. If you can't tell something with certainty in the image, simply don't say anything about "
    "it.";

const char* kGroundedShortText =
    "The image presented came from a web page called: {page_title} and had the alt-text: "
    "{alt_text}. Please very briefly describe what is in the image using the alt-text and the "
    "page title as a guide to ground your response. For example, if the alt-text contains a "
    "specific brand name, use that brand name in your output. Please describe what is in the "
    "image but be extremely concise in your response. I want to emphasize how important it is to "
    "be VERY brief. DO NOT make things up. If you can't tell something with certainty in the "
    "image, simply don't say anything about it.";

const char* kUngroundedText =
    "Please describe what is in the image. Please be descriptive but concise. DO NOT make things "
    "up. If you can't tell something with certainty in the image, simply don't say anything about "
    "it.";

void replace_all(std::string& text, const std::string& slot, const std::string& value) {
  size_t pos = 0;
  while ((pos = text.find(slot, pos)) != std::string::npos) {
    text.replace(pos, slot.size(), value);
    pos += value.size();
  }
}

}  // namespace

PromptTemplate builtin_prompt_template(PromptVariant v) {
  switch (v) {
    case PromptVariant::kGroundedDefault: return {v, kGroundedDefaultText};
    case PromptVariant::kGroundedShort: return {v, kGroundedShortText};
    case PromptVariant::kUngrounded: return {v, kUngroundedText};
  }
  throw UnknownVariant("builtin_prompt_template: bad variant");
}

PromptTemplate load_prompt_template(const std::string& dir, PromptVariant v) {
  const std::string path = dir + "/" + prompt_variant_name(v) + ".txt";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_prompt_template: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  if (!text.empty() && text.back() == '\n') text.pop_back();
  const bool grounded = v != PromptVariant::kUngrounded;
  const bool has_title = text.find("{page_title}") != std::string::npos;
  const bool has_alt = text.find("{alt_text}") != std::string::npos;
  if (grounded && (!has_title || !has_alt)) {
    throw IoError("load_prompt_template: grounded template must carry both slots: " + path);
  }
  if (!grounded && (has_title || has_alt)) {
    throw IoError("load_prompt_template: ungrounded template must carry no slots: " + path);
  }
  return {v, text};
}

std::string instantiate_prompt(const PromptTemplate& tmpl, const std::string& page_title,
                               const std::string& alt_text) {
  std::string out = tmpl.text;
  replace_all(out, "{page_title}", page_title);
  replace_all(out, "{alt_text}", alt_text);
  return out;
}

}  // namespace minclip
