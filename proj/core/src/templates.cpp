#include <algorithm>
#include <fstream>
#include <sstream>

#include "regdistill/error.hpp"
#include "regdistill/teacher.hpp"
#include "regdistill/text.hpp"

namespace regdistill::teacher {
namespace {

// Reconstructed English prompt texts. Institutions localize them through the
// override directory.

constexpr std::string_view kP2System =
    "Role: You are an 'LLM Dataset Generator' assistant. You turn regulation text into "
    "supervised training data.\n"
    "Output: JSON Lines only. One object per line with exactly the keys \"instruction\", "
    "\"input\" and \"output\", in that order. No numbering, no commentary.\n"
    "Rules:\n"
    "1. Base only on provided text. Never add facts that the text does not state.\n"
    "2. 'input' field must ALWAYS be empty (\"\").\n"
    "3. Each 'output' answers its 'instruction' in one or two sentences.";

constexpr std::string_view kP2SystemUser =
    "Generate question-answer pairs from the source text below.\n"
    "Format: {\"instruction\":\"...\",\"input\":\"\",\"output\":\"...\"}\n"
    "\n"
    "=== BEGIN SOURCE TEXT ===\n"
    "{{SOURCE_TEXT}}\n"
    "=== END SOURCE TEXT ===";

constexpr std::string_view kRawConverterUser =
    "Generate 5-12 questions that a student or staff member could ask about the regulation "
    "article below. Answer each question using the article only.\n"
    "Format: {\"instruction\":\"...\",\"input\":\"\",\"output\":\"...\"}\n"
    "\n"
    "=== BEGIN ARTICLE ===\n"
    "{{ARTICLE_TEXT}}\n"
    "=== END ARTICLE ===\n"
    "Article heading: {{ARTICLE_HEADING}}";

constexpr std::string_view kIdProcessorUser =
    "Using the information card, generate 6-10 queries that someone could ask about it, each "
    "answered from the card. Do not add info not present in card.\n"
    "Format: {\"instruction\":\"...\",\"input\":\"\",\"output\":\"...\"}\n"
    "\n"
    "CARD:\n"
    "=== BEGIN CARD ===\n"
    "{{CARD_TEXT}}\n"
    "=== END CARD ===";

constexpr std::string_view kAuditQcUser =
    "Check JSONL lines:\n"
    "1. Delete if 'input' is not empty.\n"
    "2. Delete if answer not grounded in the source text.\n"
    "Return the remaining lines unchanged, one per line.\n"
    "\n"
    "=== BEGIN SOURCE TEXT ===\n"
    "{{SOURCE_TEXT}}\n"
    "=== END SOURCE TEXT ===\n"
    "\n"
    "=== BEGIN RECORDS ===\n"
    "{{RECORDS}}\n"
    "=== END RECORDS ===";

constexpr std::string_view kP3System =
    "Role: You are 'LLM Data Generator 3'.\n"
    "Objective: Generate JSONL based on provided reference text.\n"
    "Output: JSON Lines only. One object per line with exactly the keys \"instruction\", "
    "\"input\" and \"output\", in that order.\n"
    "Rules:\n"
    "1. Base ONLY on reference text.\n"
    "2. 'input' field must contain ORIGINAL evidence, copied verbatim from the reference text.\n"
    "3. The 'output' must be answerable from the 'input' alone.";

constexpr std::string_view kP3SystemUser =
    "Generate question-answer pairs from the reference text below. Copy the supporting passage "
    "verbatim into 'input'.\n"
    "Format: {\"instruction\":\"...\",\"input\":\"<original evidence>\",\"output\":\"...\"}\n"
    "\n"
    "=== BEGIN REFERENCE TEXT ===\n"
    "{{REFERENCE_TEXT}}\n"
    "=== END REFERENCE TEXT ===";

constexpr std::string_view kContextInjectionUser =
    "Examine the JSON lines. For each:\n"
    "1. Read the answer.\n"
    "2. Locate the supporting article in the SOURCE TEXT.\n"
    "3. Place the ORIGINAL text into the 'input' field.\n"
    "Keep 'instruction' and 'output' unchanged. Drop a line when the SOURCE TEXT does not "
    "support its answer.\n"
    "\n"
    "SOURCE TEXT:\n"
    "=== BEGIN SOURCE TEXT ===\n"
    "{{SOURCE_TEXT}}\n"
    "=== END SOURCE TEXT ===\n"
    "\n"
    "=== BEGIN RECORDS ===\n"
    "{{RECORDS}}\n"
    "=== END RECORDS ===";

constexpr std::string_view kAdversarialUser =
    "Goal: Create questions based on common misconceptions about the regulation article "
    "below.\n"
    "Rules:\n"
    "1. The response must be a rejection (e.g., 'No', 'Not possible').\n"
    "2. The 'input' field must contain ORIGINAL evidence that refutes the claim.\n"
    "3. Keep the rejection polite and firm, and cite the rule that applies.\n"
    "Format: {\"instruction\":\"...\",\"input\":\"<original evidence>\",\"output\":\"No, ...\"}\n"
    "\n"
    "=== BEGIN ARTICLE ===\n"
    "{{ARTICLE_TEXT}}\n"
    "=== END ARTICLE ===\n"
    "Article heading: {{ARTICLE_HEADING}}";

constexpr std::string_view kDataAuditUser =
    "Check the JSONL lines:\n"
    "1. DELETE if 'input' is empty.\n"
    "2. DELETE if 'input' contradicts 'output'.\n"
    "3. REPAIR if the format is corrupted.\n"
    "Return the surviving lines, repaired where needed, one per line.\n"
    "\n"
    "=== BEGIN RECORDS ===\n"
    "{{RECORDS}}\n"
    "=== END RECORDS ===";

PromptTemplate make(std::string_view id, DatasetPhase phase, std::string_view role,
                    std::string_view system, std::string_view user, bool audit) {
  PromptTemplate t;
  t.template_id = std::string(id);
  t.phase = phase;
  t.role_label = std::string(role);
  t.system_text = std::string(system);
  t.user_template = std::string(user);
  for (auto& p : placeholders_in(user)) t.required_placeholders.insert(std::move(p));
  t.is_audit = audit;
  return t;
}

std::optional<std::string> read_text(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) return std::nullopt;
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  auto s = ss.str();
  if (!text::is_valid_utf8(s)) throw Error(ErrorCode::InvalidEncoding, p.string());
  s = text::normalize_line_endings(s);
  while (!s.empty() && s.back() == '\n') s.pop_back();
  return s;
}

}  // namespace

std::vector<std::string> placeholders_in(std::string_view tmpl) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = tmpl.find("{{", pos)) != std::string_view::npos) {
    const auto end = tmpl.find("}}", pos + 2);
    if (end == std::string_view::npos) break;
    std::string name(tmpl.substr(pos + 2, end - pos - 2));
    const bool valid = !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
      return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
    });
    if (valid && std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    pos = valid ? end + 2 : pos + 2;
  }
  return out;
}

std::vector<PromptTemplate> registry() {
  using P = DatasetPhase;
  return {
      make(ids::kSystem, P::P2Memorization, "System Prompt", kP2System, kP2SystemUser, false),
      make(ids::kRawConverter, P::P2Memorization, "Raw Converter", kP2System, kRawConverterUser,
           false),
      make(ids::kIdProcessor, P::P2Memorization, "ID Processor", kP2System, kIdProcessorUser,
           false),
      make(ids::kAuditQc, P::P2Memorization, "Audit (QC)", kP2System, kAuditQcUser, true),
      make(ids::kGlobalSystem, P::P3ContextAware, "Global System Prompt", kP3System,
           kP3SystemUser, false),
      make(ids::kContextInjection, P::P3ContextAware, "Context Injection", kP3System,
           kContextInjectionUser, false),
      make(ids::kAdversarialSampling, P::P3ContextAware, "Adversarial Sampling", kP3System,
           kAdversarialUser, false),
      make(ids::kDataAudit, P::P3ContextAware, "Data Audit", kP3System, kDataAuditUser, true),
  };
}

std::vector<PromptTemplate> registry(const std::filesystem::path& override_dir) {
  auto templates = registry();
  if (!std::filesystem::is_directory(override_dir)) {
    throw Error(ErrorCode::Io, "template directory not found: " + override_dir.string());
  }
  for (auto& t : templates) {
    if (auto s = read_text(override_dir / (t.template_id + ".system.txt"))) t.system_text = *s;
    if (auto u = read_text(override_dir / (t.template_id + ".user.txt"))) {
      t.user_template = *u;
      t.required_placeholders.clear();
      for (auto& p : placeholders_in(*u)) t.required_placeholders.insert(std::move(p));
    }
  }
  return templates;
}

const PromptTemplate& find_template(const std::vector<PromptTemplate>& templates,
                                    std::string_view template_id) {
  for (const auto& t : templates) {
    if (t.template_id == template_id) return t;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown template '" + std::string(template_id) + "'");
}

std::string template_marker(std::string_view template_id) {
  return "[template:" + std::string(template_id) + "]";
}

std::optional<std::string> marker_of(const ChatExchange& exchange) {
  for (const std::string* s : {&exchange.system, &exchange.user}) {
    const auto pos = s->rfind("[template:");
    if (pos == std::string::npos) continue;
    const auto end = s->find(']', pos);
    if (end == std::string::npos) continue;
    return s->substr(pos + 10, end - pos - 10);
  }
  return std::nullopt;
}

ChatExchange render_prompt(const PromptTemplate& tmpl,
                           const std::map<std::string, std::string>& bindings,
                           const RenderOptions& opts) {
  for (const auto& name : placeholders_in(tmpl.user_template)) {
    if (!bindings.count(name)) throw Error(ErrorCode::MissingBinding, name);
  }
  if (opts.strict) {
    for (const auto& [name, _] : bindings) {
      if (!tmpl.required_placeholders.count(name)) throw Error(ErrorCode::UnknownBinding, name);
    }
  }
  // Single left-to-right pass, so bound values are never re-scanned.
  std::string user;
  const std::string_view src = tmpl.user_template;
  std::size_t pos = 0;
  while (pos < src.size()) {
    const auto open = src.find("{{", pos);
    if (open == std::string_view::npos) {
      user.append(src.substr(pos));
      break;
    }
    const auto close = src.find("}}", open + 2);
    if (close == std::string_view::npos) {
      user.append(src.substr(pos));
      break;
    }
    const std::string name(src.substr(open + 2, close - open - 2));
    auto it = bindings.find(name);
    user.append(src.substr(pos, open - pos));
    if (it != bindings.end()) {
      user.append(it->second);
    } else {
      user.append(src.substr(open, close + 2 - open));
    }
    pos = close + 2;
  }
  if (text::is_blank(user)) {
    throw Error(ErrorCode::InvalidArgument, "template '" + tmpl.template_id + "' renders empty");
  }

  ChatExchange ex;
  ex.system = tmpl.system_text + "\n\n" + template_marker(tmpl.template_id);
  ex.user = std::move(user);
  ex.params.temperature = tmpl.is_audit ? 0.0 : 0.7;
  ex.params.seed = opts.seed;
  return ex;
}

std::string block(std::string_view name, std::string_view body) {
  std::string out = "=== BEGIN ";
  out += name;
  out += " ===\n";
  out += body;
  out += "\n=== END ";
  out += name;
  out += " ===";
  return out;
}

std::optional<std::string_view> extract_block(std::string_view text, std::string_view name) {
  const std::string open = "=== BEGIN " + std::string(name) + " ===\n";
  const std::string close = "\n=== END " + std::string(name) + " ===";
  const auto b = text.find(open);
  if (b == std::string_view::npos) return std::nullopt;
  const auto start = b + open.size();
  const auto e = text.find(close, start);
  if (e == std::string_view::npos) return std::nullopt;
  return text.substr(start, e - start);
}

}  // namespace regdistill::teacher
