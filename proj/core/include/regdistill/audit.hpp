#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "regdistill/dataset.hpp"
#include "regdistill/text.hpp"

namespace regdistill::teacher {
class Teacher;
}

namespace regdistill::audit {

using dataset::DatasetPhase;
using dataset::InstructionRecord;

/// Fraction of the answer's content tokens (stop-words removed, numbers
/// kept, repeats counted) that occur among the evidence's normalized tokens.
/// An answer without content tokens is vacuously grounded (1.0).
double grounding_score(std::string_view answer, std::string_view evidence,
                       const text::Lexicons& lex = text::Lexicons::defaults());

/// Same, with the answer already reduced to content tokens.
double grounding_score_tokens(const std::vector<std::string>& answer_content,
                              std::string_view evidence,
                              const text::Lexicons& lex = text::Lexicons::defaults());

enum class Polarity { Negative, Neutral, Positive };
std::string_view to_string(Polarity p) noexcept;

/// Negative when any negation or refusal cue occurs, else Positive when an
/// affirmation cue occurs, else Neutral.
Polarity polarity(std::string_view clause, const text::Lexicons& lex = text::Lexicons::defaults());

/// Splits on , ; : . ! ? (decimal separators excepted) and newlines.
std::vector<std::string_view> split_clauses(std::string_view s);

struct NumberMention {
  double value = 0.0;
  std::string unit;  // following content word, trailing plural 's' dropped
};

/// Numbers (digits or numeral words) followed directly by a content word.
std::vector<NumberMention> number_mentions(std::string_view s,
                                           const text::Lexicons& lex = text::Lexicons::defaults());

enum class ContradictionMode { Heuristic, TeacherAssisted };

struct ContradictionResult {
  bool contradicts = false;
  std::string rationale;
};

/// Heuristic check. Flags (a) a polarity clash between the output's leading
/// assertion and the evidence clause that shares the most content tokens with
/// it (at least two), or (b) a number attached to a unit word in the output
/// that differs from every number the evidence attaches to that unit.
ContradictionResult contradiction_check(std::string_view input_text,
                                        std::string_view output_text,
                                        const text::Lexicons& lex = text::Lexicons::defaults());

/// Heuristic, or a data_audit round trip through `teacher` (required for
/// TeacherAssisted; the pair is kept iff the teacher echoes it back).
ContradictionResult contradiction_check(std::string_view input_text,
                                        std::string_view output_text, ContradictionMode mode,
                                        teacher::Teacher* teacher,
                                        const text::Lexicons& lex = text::Lexicons::defaults());

enum class AuditRule { InputMustBeEmpty, InputMustCarryEvidence, NotGrounded, Contradiction, FormatCorrupted };
enum class AuditAction { Delete, Repair, Keep };
std::string_view to_string(AuditRule r) noexcept;
std::string_view to_string(AuditAction a) noexcept;

struct AuditFinding {
  std::string record_id;
  std::optional<AuditRule> rule;  // empty for a plain Keep
  AuditAction action = AuditAction::Keep;
  std::string detail;
  std::optional<double> score;
};

struct AuditCounts {
  std::size_t examined = 0;
  std::size_t deleted = 0;
  std::size_t repaired = 0;
  std::size_t kept = 0;
};

/// One finding per examined record, in record order.
struct AuditReport {
  DatasetPhase phase = DatasetPhase::P3ContextAware;
  std::vector<AuditFinding> findings;
  AuditCounts counts;
};

/// Memorization audit: Delete when input is non-empty, Delete when the
/// output's grounding in its source article is below the threshold.
/// `source_evidence` maps record_id to that article's text; a record without
/// an entry raises MissingEvidence.
AuditReport audit_phase2(const std::vector<InstructionRecord>& records,
                         const std::map<std::string, std::string>& source_evidence,
                         double grounding_threshold = 0.6,
                         const text::Lexicons& lex = text::Lexicons::defaults());

struct Phase3AuditOptions {
  ContradictionMode mode = ContradictionMode::Heuristic;
  teacher::Teacher* teacher = nullptr;
  const text::Lexicons* lexicons = &text::Lexicons::defaults();
};

/// Context-aware audit, rules in fixed order: empty input -> Delete;
/// contradiction -> Delete; corrupted format -> Repair.
AuditReport audit_phase3(const std::vector<InstructionRecord>& records,
                         const Phase3AuditOptions& opts = {});

/// Whitespace-trimmed fields with control characters (other than newline and
/// tab) removed. Returns nullopt when the record is already clean.
std::optional<InstructionRecord> repair_record(const InstructionRecord& record);

/// Drops Deleted records and substitutes repaired forms, preserving order.
std::vector<InstructionRecord> apply_report(const std::vector<InstructionRecord>& records,
                                            const AuditReport& report);

std::string report_json(const AuditReport& report);

}  // namespace regdistill::audit
