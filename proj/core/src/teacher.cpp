#include <regex>

#include <json.hpp>

#include "regdistill/teacher.hpp"
#include "regdistill/text.hpp"

namespace regdistill::teacher {
namespace {

std::string strip_trailing_comma(std::string_view line) {
  static const std::regex before_brace(R"(,\s*\}\s*$)");
  std::string s(text::trim(line));
  // `{...},` and `{..., }` both lose the stray comma
  if (!s.empty() && s.back() == ',') s = std::string(text::trim(s.substr(0, s.size() - 1)));
  return std::regex_replace(s, before_brace, "}");
}

// Re-escapes bare quotes inside a field body while leaving valid escapes alone.
std::optional<std::string> decode_loose_field(std::string_view body) {
  std::string escaped;
  escaped.reserve(body.size() + 8);
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (c == '\\' && i + 1 < body.size()) {
      escaped.push_back(c);
      escaped.push_back(body[++i]);
    } else if (c == '"') {
      escaped += "\\\"";
    } else {
      escaped.push_back(c);
    }
  }
  try {
    return nlohmann::json::parse("\"" + escaped + "\"").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

std::optional<dataset::InstructionRecord> key_anchored(const std::string& line) {
  static const std::regex re(
      R"re(^\{\s*"instruction"\s*:\s*"(.*)"\s*,\s*"input"\s*:\s*"(.*)"\s*,\s*"output"\s*:\s*"(.*)"\s*\}$)re");
  std::smatch m;
  if (!std::regex_match(line, m, re)) return std::nullopt;
  auto ins = decode_loose_field(m[1].str());
  auto inp = decode_loose_field(m[2].str());
  auto out = decode_loose_field(m[3].str());
  if (!ins || !inp || !out) return std::nullopt;
  dataset::InstructionRecord r;
  r.instruction = std::move(*ins);
  r.input = std::move(*inp);
  r.output = std::move(*out);
  return r;
}

}  // namespace

GeneratedParse parse_generated(std::string_view raw) {
  GeneratedParse result;
  const auto normalized = text::normalize_line_endings(raw);
  std::string_view rest = normalized;
  std::size_t line_no = 0;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    const auto line_view = text::trim(rest.substr(0, nl));
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    ++line_no;
    if (line_view.empty() || line_view.starts_with("```")) continue;
    const std::string line(line_view);
    if (line.front() != '{') {
      result.rejected.push_back({line_no, "not a JSON line", line});
      continue;
    }
    dataset::InstructionRecord rec;
    const auto reason = dataset::parse_line(line, rec);
    if (!reason) {
      result.records.push_back(std::move(rec));
      continue;
    }
    const auto trimmed = strip_trailing_comma(line);
    if (trimmed != line && !dataset::parse_line(trimmed, rec)) {
      result.repaired.push_back({line_no, "trailing comma removed", line});
      result.records.push_back(std::move(rec));
      continue;
    }
    if (auto fixed = key_anchored(trimmed)) {
      result.repaired.push_back({line_no, "unescaped quotes repaired", line});
      result.records.push_back(std::move(*fixed));
      continue;
    }
    result.rejected.push_back({line_no, *reason, line});
  }
  return result;
}

}  // namespace regdistill::teacher
