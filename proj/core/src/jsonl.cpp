#include <array>
#include <set>

#include <json.hpp>

#include "regdistill/dataset.hpp"
#include "regdistill/error.hpp"

namespace regdistill::dataset {
namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 3> kKeys = {"instruction", "input", "output"};

// SAX handler enforcing the three-string-key object schema without building
// a DOM, so duplicate keys are detected (a DOM would silently keep the last).
class RecordSax : public nlohmann::json_sax<json> {
 public:
  explicit RecordSax(InstructionRecord& out) : out_(out) {}

  std::optional<std::string> error;

  bool null() override { return scalar("null"); }
  bool boolean(bool) override { return scalar("boolean"); }
  bool number_integer(number_integer_t) override { return scalar("number"); }
  bool number_unsigned(number_unsigned_t) override { return scalar("number"); }
  bool number_float(number_float_t, const string_t&) override { return scalar("number"); }
  bool binary(binary_t&) override { return scalar("binary"); }

  bool string(string_t& val) override {
    if (depth_ == 0) return fail("not a JSON object");
    if (depth_ > 1) return true;
    slot(current_) = std::move(val);
    return true;
  }

  bool start_object(std::size_t) override {
    if (depth_ == 1) return fail("value of '" + current_ + "' is not a string");
    ++depth_;
    return true;
  }

  bool key(string_t& val) override {
    if (depth_ != 1) return true;
    if (std::find(kKeys.begin(), kKeys.end(), val) == kKeys.end()) {
      return fail("unknown key '" + val + "'");
    }
    if (!seen_.insert(val).second) return fail("duplicate key '" + val + "'");
    current_ = val;
    return true;
  }

  bool end_object() override {
    --depth_;
    if (depth_ == 0) {
      for (auto k : kKeys) {
        if (!seen_.count(std::string(k))) return fail("missing key '" + std::string(k) + "'");
      }
    }
    return true;
  }

  bool start_array(std::size_t) override {
    if (depth_ == 0) return fail("not a JSON object");
    return fail("value of '" + current_ + "' is not a string");
  }

  bool end_array() override { return true; }

  bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception& ex) override {
    if (!error) {
      std::string what = ex.what();
      // keep the human part of "[json.exception.parse_error.101] parse error at ...: ..."
      auto pos = what.find("] ");
      error = "invalid JSON: " + (pos == std::string::npos ? what : what.substr(pos + 2));
    }
    return false;
  }

 private:
  bool scalar(const char* what) {
    if (depth_ == 0) return fail("not a JSON object");
    return fail("value of '" + current_ + "' is not a string (got " + what + ")");
  }

  bool fail(std::string reason) {
    if (!error) error = std::move(reason);
    return false;
  }

  std::string& slot(const std::string& k) {
    if (k == "instruction") return out_.instruction;
    if (k == "input") return out_.input;
    return out_.output;
  }

  InstructionRecord& out_;
  int depth_ = 0;
  std::string current_;
  std::set<std::string> seen_;
};

}  // namespace

std::optional<std::string> parse_line(std::string_view line, InstructionRecord& out) {
  InstructionRecord rec;
  RecordSax sax(rec);
  const bool ok = json::sax_parse(line.begin(), line.end(), &sax, json::input_format_t::json, true);
  if (!ok || sax.error) return sax.error ? sax.error : std::optional<std::string>("invalid JSON");
  out.instruction = std::move(rec.instruction);
  out.input = std::move(rec.input);
  out.output = std::move(rec.output);
  return std::nullopt;
}

ParseResult parse_jsonl(std::string_view bytes, ParseMode mode, DatasetPhase phase) {
  ParseResult result;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= bytes.size()) {
    const auto nl = bytes.find('\n', pos);
    const bool last = nl == std::string_view::npos;
    const auto line = bytes.substr(pos, last ? bytes.size() - pos : nl - pos);
    ++line_no;
    pos = last ? bytes.size() + 1 : nl + 1;

    const bool blank = line.find_first_not_of(" \t\r") == std::string_view::npos;
    if (blank) {
      if (last) break;  // trailing blank line
      if (mode == ParseMode::Strict) throw MalformedLineError(line_no, "blank line");
      result.diagnostics.push_back({line_no, "blank line", std::string(line)});
      continue;
    }

    InstructionRecord rec;
    if (auto reason = parse_line(line, rec)) {
      if (mode == ParseMode::Strict) throw MalformedLineError(line_no, *reason);
      result.diagnostics.push_back({line_no, std::move(*reason), std::string(line)});
      continue;
    }
    rec.meta.record_id = std::to_string(line_no);
    rec.meta.phase = phase;
    rec.meta.origin = RecordOrigin::Imported;
    result.records.push_back(std::move(rec));
  }
  return result;
}

std::string escape_json_string(std::string_view s) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(s.size() + 8);
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      default:
        if (c < 0x20) {
          out += "\\u00";
          out.push_back(kHex[c >> 4]);
          out.push_back(kHex[c & 0xF]);
        } else {
          out.push_back(ch);
        }
    }
  }
  return out;
}

std::string to_json_line(const InstructionRecord& r) {
  std::string line;
  line.reserve(r.instruction.size() + r.input.size() + r.output.size() + 48);
  line += "{\"instruction\":\"";
  line += escape_json_string(r.instruction);
  line += "\",\"input\":\"";
  line += escape_json_string(r.input);
  line += "\",\"output\":\"";
  line += escape_json_string(r.output);
  line += "\"}";
  return line;
}

std::string write_jsonl(const std::vector<InstructionRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    auto v = validate_record(r, r.meta.phase);
    if (!v.ok()) {
      throw Error(ErrorCode::InvalidRecord,
                  "record '" + r.meta.record_id + "': " + v.violations.front().message);
    }
    out += to_json_line(r);
    out.push_back('\n');
  }
  return out;
}

std::string write_meta_json(const std::vector<InstructionRecord>& records) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& m = records[i].meta;
    nlohmann::ordered_json e;
    e["line"] = i + 1;
    e["phase"] = to_string(m.phase);
    e["source_doc"] = m.source_doc;
    if (m.source_ordinal) {
      e["source_ordinal"] = *m.source_ordinal;
    } else {
      e["source_ordinal"] = nullptr;
    }
    e["kind"] = to_string(m.kind);
    e["origin"] = to_string(m.origin);
    if (j.contains(m.record_id)) {
      throw Error(ErrorCode::InvalidRecord, "duplicate record_id '" + m.record_id + "'");
    }
    j[m.record_id] = std::move(e);
  }
  return j.dump(2) + "\n";
}

void attach_meta(std::vector<InstructionRecord>& records, std::string_view meta_json) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(meta_json);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("meta sidecar: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "meta sidecar must be an object");
  if (j.size() != records.size()) {
    throw Error(ErrorCode::InvalidArgument, "meta sidecar has " + std::to_string(j.size()) +
                                                " entries for " + std::to_string(records.size()) +
                                                " records");
  }
  std::vector<bool> filled(records.size(), false);
  for (const auto& [id, e] : j.items()) {
    try {
      const auto line = e.at("line").get<std::size_t>();
      if (line < 1 || line > records.size() || filled[line - 1]) {
        throw Error(ErrorCode::InvalidArgument, "meta entry '" + id + "' has no matching line");
      }
      const std::size_t idx = line - 1;
      auto& m = records[idx].meta;
      m.record_id = id;
      m.phase = phase_from_string(e.at("phase").get<std::string>());
      m.source_doc = e.value("source_doc", std::string{});
      if (e.contains("source_ordinal") && !e["source_ordinal"].is_null()) {
        m.source_ordinal = e["source_ordinal"].get<std::size_t>();
      } else {
        m.source_ordinal.reset();
      }
      m.kind = kind_from_string(e.value("kind", std::string("Normal")));
      m.origin = origin_from_string(e.value("origin", std::string("Imported")));
      filled[idx] = true;
    } catch (const Error&) {
      throw;
    } catch (const std::exception& ex) {
      throw Error(ErrorCode::InvalidArgument, "meta entry '" + id + "': " + ex.what());
    }
  }
}

}  // namespace regdistill::dataset
