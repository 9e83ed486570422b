#include "regdistill/audit.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include <fmt/format.h>
#include <json.hpp>

#include "regdistill/error.hpp"
#include "regdistill/teacher.hpp"

namespace regdistill::audit {

double grounding_score_tokens(const std::vector<std::string>& answer_content,
                              std::string_view evidence, const text::Lexicons&) {
  if (answer_content.empty()) return 1.0;
  std::unordered_set<std::string> ev;
  for (auto& t : text::normalize_tokens(evidence)) ev.insert(std::move(t));
  std::size_t hit = 0;
  for (const auto& t : answer_content) hit += ev.count(t);
  return static_cast<double>(hit) / static_cast<double>(answer_content.size());
}

double grounding_score(std::string_view answer, std::string_view evidence,
                       const text::Lexicons& lex) {
  return grounding_score_tokens(text::content_tokens(answer, lex), evidence, lex);
}

std::string_view to_string(Polarity p) noexcept {
  switch (p) {
    case Polarity::Negative: return "negative";
    case Polarity::Neutral: return "neutral";
    case Polarity::Positive: return "positive";
  }
  return "neutral";
}

Polarity polarity(std::string_view clause, const text::Lexicons& lex) {
  const auto toks = text::tokenize(clause);
  if (text::find_any_cue(toks, clause, lex.negation_cues) ||
      text::find_any_cue(toks, clause, lex.refusal_cues)) {
    return Polarity::Negative;
  }
  if (text::find_any_cue(toks, clause, lex.affirmation_cues)) return Polarity::Positive;
  return Polarity::Neutral;
}

std::vector<std::string_view> split_clauses(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    auto c = text::trim(s.substr(start, end - start));
    if (!c.empty()) out.push_back(c);
  };
  auto digit = [&](std::size_t i) { return i < s.size() && s[i] >= '0' && s[i] <= '9'; };
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    bool sep = c == ';' || c == ':' || c == '!' || c == '?' || c == '\n';
    if (c == ',' || c == '.') sep = !(i > 0 && digit(i - 1) && digit(i + 1));
    if (sep) {
      emit(i);
      start = i + 1;
    }
  }
  emit(s.size());
  return out;
}

namespace {

std::string stem_unit(std::string u) {
  if (u.size() > 3 && u.back() == 's' && u[u.size() - 2] != 's') u.pop_back();
  return u;
}

std::set<std::string> content_set(std::string_view s, const text::Lexicons& lex) {
  auto v = text::content_tokens(s, lex);
  return {v.begin(), v.end()};
}

std::string fmt_number(double v) { return fmt::format("{:g}", v); }

}  // namespace

std::vector<NumberMention> number_mentions(std::string_view s, const text::Lexicons& lex) {
  auto toks = text::tokenize(s);
  std::vector<NumberMention> out;
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
    std::string num = toks[i].text;
    if (auto it = lex.numerals.find(num); it != lex.numerals.end()) num = it->second;
    const auto value = text::parse_number(num);
    if (!value) continue;
    const auto& next = toks[i + 1];
    if (text::is_number_token(next.text) || lex.is_stop_word(next.text) ||
        lex.numerals.count(next.text)) {
      continue;
    }
    const auto gap = s.substr(toks[i].end, next.begin - toks[i].end);
    if (!text::is_blank(gap) && !gap.empty()) continue;
    out.push_back({*value, stem_unit(next.text)});
  }
  return out;
}

ContradictionResult contradiction_check(std::string_view input_text, std::string_view output_text,
                                        const text::Lexicons& lex) {
  // (a) polarity of the leading assertion against the best-matching evidence clause
  const auto out_clauses = split_clauses(output_text);
  if (!out_clauses.empty()) {
    auto lead = out_clauses.front();
    Polarity pol = polarity(lead, lex);
    auto subject = lead;
    if (content_set(lead, lex).empty() && out_clauses.size() > 1) {
      subject = out_clauses[1];
      if (pol == Polarity::Neutral) pol = polarity(subject, lex);
    }
    const auto subject_tokens = content_set(subject, lex);
    if (pol != Polarity::Neutral && subject_tokens.size() >= 2) {
      std::optional<std::string_view> best;
      std::size_t best_shared = 0;
      double best_jaccard = 0.0;
      for (auto clause : split_clauses(input_text)) {
        const auto ct = content_set(clause, lex);
        std::size_t shared = 0;
        for (const auto& t : ct) shared += subject_tokens.count(t);
        if (shared < 2) continue;
        const double jac = static_cast<double>(shared) /
                           static_cast<double>(ct.size() + subject_tokens.size() - shared);
        if (!best || shared > best_shared || (shared == best_shared && jac > best_jaccard)) {
          best = clause;
          best_shared = shared;
          best_jaccard = jac;
        }
      }
      if (best) {
        const Polarity ev = polarity(*best, lex);
        if (ev != Polarity::Neutral && ev != pol) {
          return {true, fmt::format("output is {} but evidence \"{}\" is {}", to_string(pol),
                                    *best, to_string(ev))};
        }
      }
    }
  }

  // (b) number attached to the same unit
  const auto in_mentions = number_mentions(input_text, lex);
  for (const auto& om : number_mentions(output_text, lex)) {
    std::vector<double> values;
    for (const auto& im : in_mentions) {
      if (im.unit == om.unit) values.push_back(im.value);
    }
    if (values.empty()) continue;
    if (std::find(values.begin(), values.end(), om.value) == values.end()) {
      return {true, fmt::format("output states {} {} but evidence states {} {}",
                                fmt_number(om.value), om.unit, fmt_number(values.front()),
                                om.unit)};
    }
  }
  return {false, "no polarity or number conflict found"};
}

ContradictionResult contradiction_check(std::string_view input_text, std::string_view output_text,
                                        ContradictionMode mode, teacher::Teacher* teacher,
                                        const text::Lexicons& lex) {
  if (mode == ContradictionMode::Heuristic) return contradiction_check(input_text, output_text, lex);
  if (teacher == nullptr) {
    throw Error(ErrorCode::TeacherUnavailable, "teacher-assisted contradiction check needs a teacher");
  }
  static const auto templates = teacher::registry();
  dataset::InstructionRecord probe;
  probe.instruction = "Check this pair.";
  probe.input = std::string(input_text);
  probe.output = std::string(output_text);
  const auto& tmpl = teacher::find_template(templates, teacher::ids::kDataAudit);
  auto ex = teacher::render_prompt(tmpl, {{"RECORDS", dataset::to_json_line(probe)}});
  std::string raw;
  try {
    raw = teacher->complete(ex);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::EmptyCompletion) return {true, "teacher verdict: Delete"};
    if (is_transport_error(e.code()) || e.code() == ErrorCode::UnknownTemplateMarker) {
      throw Error(ErrorCode::TeacherUnavailable, e.what());
    }
    throw;
  }
  const auto parsed = teacher::parse_generated(raw);
  const bool kept = std::any_of(parsed.records.begin(), parsed.records.end(), [&](const auto& r) {
    return text::trim(r.output) == text::trim(output_text);
  });
  return {!kept, kept ? "teacher verdict: Keep" : "teacher verdict: Delete"};
}

std::string_view to_string(AuditRule r) noexcept {
  switch (r) {
    case AuditRule::InputMustBeEmpty: return "InputMustBeEmpty";
    case AuditRule::InputMustCarryEvidence: return "InputMustCarryEvidence";
    case AuditRule::NotGrounded: return "NotGrounded";
    case AuditRule::Contradiction: return "Contradiction";
    case AuditRule::FormatCorrupted: return "FormatCorrupted";
  }
  return "Unknown";
}

std::string_view to_string(AuditAction a) noexcept {
  switch (a) {
    case AuditAction::Delete: return "Delete";
    case AuditAction::Repair: return "Repair";
    case AuditAction::Keep: return "Keep";
  }
  return "Keep";
}

namespace {

void tally(AuditReport& rep, AuditFinding f) {
  ++rep.counts.examined;
  switch (f.action) {
    case AuditAction::Delete: ++rep.counts.deleted; break;
    case AuditAction::Repair: ++rep.counts.repaired; break;
    case AuditAction::Keep: ++rep.counts.kept; break;
  }
  rep.findings.push_back(std::move(f));
}

std::string clean_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto c = static_cast<unsigned char>(s[i]);
    if ((c < 0x20 && c != '\n' && c != '\t') || c == 0x7F) continue;
    // C1 controls U+0080..U+009F are encoded as C2 80..C2 9F
    if (c == 0xC2 && i + 1 < s.size()) {
      const auto n = static_cast<unsigned char>(s[i + 1]);
      if (n >= 0x80 && n <= 0x9F) {
        ++i;
        continue;
      }
    }
    out.push_back(static_cast<char>(c));
  }
  return std::string(text::trim(out));
}

}  // namespace

std::optional<InstructionRecord> repair_record(const InstructionRecord& record) {
  InstructionRecord r = record;
  r.instruction = clean_field(record.instruction);
  r.input = clean_field(record.input);
  r.output = clean_field(record.output);
  if (r.same_fields(record)) return std::nullopt;
  return r;
}

AuditReport audit_phase2(const std::vector<InstructionRecord>& records,
                         const std::map<std::string, std::string>& source_evidence,
                         double grounding_threshold, const text::Lexicons& lex) {
  if (!(grounding_threshold >= 0.0 && grounding_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "grounding threshold must be in [0, 1]");
  }
  AuditReport rep;
  rep.phase = DatasetPhase::P2Memorization;
  for (const auto& r : records) {
    AuditFinding f;
    f.record_id = r.meta.record_id;
    if (!r.input.empty()) {
      f.rule = AuditRule::InputMustBeEmpty;
      f.action = AuditAction::Delete;
      f.detail = "input is not empty";
      tally(rep, std::move(f));
      continue;
    }
    auto ev = source_evidence.find(r.meta.record_id);
    if (ev == source_evidence.end()) throw Error(ErrorCode::MissingEvidence, r.meta.record_id);
    const double score = grounding_score(r.output, ev->second, lex);
    f.score = score;
    if (score < grounding_threshold) {
      f.rule = AuditRule::NotGrounded;
      f.action = AuditAction::Delete;
      f.detail = fmt::format("grounding {:.3f} below threshold {:.3f}", score, grounding_threshold);
    } else {
      f.action = AuditAction::Keep;
      f.detail = fmt::format("grounding {:.3f}", score);
    }
    tally(rep, std::move(f));
  }
  return rep;
}

AuditReport audit_phase3(const std::vector<InstructionRecord>& records,
                         const Phase3AuditOptions& opts) {
  const auto& lex = *opts.lexicons;
  AuditReport rep;
  rep.phase = DatasetPhase::P3ContextAware;
  for (const auto& r : records) {
    // Rules look at the cleaned view so that a repaired record re-audits identically.
    const auto fixed = repair_record(r);
    const InstructionRecord& view = fixed ? *fixed : r;
    AuditFinding f;
    f.record_id = r.meta.record_id;
    if (view.input.empty()) {
      f.rule = AuditRule::InputMustCarryEvidence;
      f.action = AuditAction::Delete;
      f.detail = "input is empty";
    } else if (auto c = contradiction_check(view.input, view.output, opts.mode, opts.teacher, lex);
               c.contradicts) {
      f.rule = AuditRule::Contradiction;
      f.action = AuditAction::Delete;
      f.detail = c.rationale;
    } else if (fixed) {
      f.rule = AuditRule::FormatCorrupted;
      if (fixed->instruction.empty() || fixed->output.empty()) {
        f.action = AuditAction::Delete;
        f.detail = "record is empty after repair";
      } else {
        f.action = AuditAction::Repair;
        f.detail = "trimmed whitespace / stripped control characters";
      }
    } else {
      f.action = AuditAction::Keep;
    }
    tally(rep, std::move(f));
  }
  return rep;
}

std::vector<InstructionRecord> apply_report(const std::vector<InstructionRecord>& records,
                                            const AuditReport& report) {
  if (report.findings.size() != records.size()) {
    throw Error(ErrorCode::ReportMismatch,
                fmt::format("report has {} findings for {} records", report.findings.size(),
                            records.size()));
  }
  std::vector<InstructionRecord> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& f = report.findings[i];
    if (f.record_id != records[i].meta.record_id) {
      throw Error(ErrorCode::ReportMismatch,
                  fmt::format("finding {} is for '{}' but record is '{}'", i, f.record_id,
                              records[i].meta.record_id));
    }
    switch (f.action) {
      case AuditAction::Delete:
        break;
      case AuditAction::Repair:
        if (auto fixed = repair_record(records[i])) {
          out.push_back(std::move(*fixed));
        } else {
          out.push_back(records[i]);
        }
        break;
      case AuditAction::Keep:
        out.push_back(records[i]);
        break;
    }
  }
  return out;
}

std::string report_json(const AuditReport& report) {
  nlohmann::ordered_json j;
  j["phase"] = dataset::to_string(report.phase);
  j["counts"] = {{"examined", report.counts.examined},
                 {"deleted", report.counts.deleted},
                 {"repaired", report.counts.repaired},
                 {"kept", report.counts.kept}};
  j["findings"] = nlohmann::ordered_json::array();
  for (const auto& f : report.findings) {
    nlohmann::ordered_json e;
    e["record_id"] = f.record_id;
    if (f.rule) {
      e["rule"] = to_string(*f.rule);
    } else {
      e["rule"] = nullptr;
    }
    e["action"] = to_string(f.action);
    e["detail"] = f.detail;
    if (f.score) {
      e["score"] = *f.score;
    } else {
      e["score"] = nullptr;
    }
    j["findings"].push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

}  // namespace regdistill::audit
