#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace regdistill::dataset {

enum class DatasetPhase { P1General, P2Memorization, P3ContextAware };
enum class RecordKind { Normal, Adversarial, IdCard };
enum class RecordOrigin { Teacher, Mock, Imported };

std::string_view to_string(DatasetPhase p) noexcept;
std::string_view to_string(RecordKind k) noexcept;
std::string_view to_string(RecordOrigin o) noexcept;
DatasetPhase phase_from_string(std::string_view s);  // also accepts "1", "2", "3"
RecordKind kind_from_string(std::string_view s);
RecordOrigin origin_from_string(std::string_view s);

struct RecordMeta {
  std::string record_id;
  DatasetPhase phase = DatasetPhase::P1General;
  std::string source_doc;
  std::optional<std::size_t> source_ordinal;
  RecordKind kind = RecordKind::Normal;
  RecordOrigin origin = RecordOrigin::Imported;

  bool operator==(const RecordMeta&) const = default;
};

/// One training line. Only instruction/input/output are serialized; meta
/// travels in a sidecar file.
struct InstructionRecord {
  std::string instruction;
  std::string input;
  std::string output;
  RecordMeta meta;

  bool same_fields(const InstructionRecord& o) const noexcept {
    return instruction == o.instruction && input == o.input && output == o.output;
  }
};

enum class ParseMode { Strict, Lenient };

struct LineDiagnostic {
  std::size_t line_no = 0;  // 1-based
  std::string reason;
  std::string raw;
};

struct ParseResult {
  std::vector<InstructionRecord> records;
  std::vector<LineDiagnostic> diagnostics;
};

/// Parses training JSONL. Each line must be an object holding exactly the
/// string keys instruction, input and output. Parsed records get
/// record_id = their line number, origin Imported and the given phase.
/// Strict mode throws MalformedLineError on the first bad line.
ParseResult parse_jsonl(std::string_view bytes, ParseMode mode,
                        DatasetPhase phase = DatasetPhase::P1General);

/// Checks one line; returns the reason it is malformed, if it is.
std::optional<std::string> parse_line(std::string_view line, InstructionRecord& out);

/// JSON string body with minimal escaping: quote, backslash and control
/// characters only. Non-ASCII is emitted as raw UTF-8.
std::string escape_json_string(std::string_view s);

/// {"instruction":"...","input":"...","output":"..."} with no trailing newline.
std::string to_json_line(const InstructionRecord& r);

/// Canonical training JSONL: one object per line, LF-terminated, fixed key
/// order. Throws InvalidRecord when a record violates its phase rules.
std::string write_jsonl(const std::vector<InstructionRecord>& records);

enum class ViolationCode {
  EmptyInstruction,
  EmptyOutput,
  InputMustBeEmpty,
  InputMustCarryEvidence,
  EvidenceTooShort,
  AdversarialOutsidePhase3,
};
std::string_view to_string(ViolationCode c) noexcept;

struct Violation {
  ViolationCode code;
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> violations;
  bool ok() const noexcept { return violations.empty(); }
  bool has(ViolationCode c) const noexcept;
};

struct ValidationOptions {
  std::size_t min_evidence_chars = 20;
};

ValidationResult validate_record(const InstructionRecord& record, DatasetPhase phase,
                                 const ValidationOptions& opts = {});

struct DedupeResult {
  std::vector<InstructionRecord> kept;
  std::vector<std::pair<std::string, std::string>> removed;  // (record_id, duplicate_of)
};

/// Removes records whose normalized instruction equals an earlier kept one,
/// or whose word 3-shingle Jaccard similarity with an earlier kept record is
/// >= threshold. Threshold must be in (0, 1].
DedupeResult dedupe(const std::vector<InstructionRecord>& records, double jaccard_threshold = 0.9);

/// Word 3-shingles of the normalized text; texts shorter than three tokens
/// yield a single shingle of all tokens.
std::vector<std::string> word_shingles(std::string_view s, std::size_t width = 3);
double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b);

struct SplitResult {
  std::vector<InstructionRecord> train;
  std::vector<InstructionRecord> eval;
};

/// Seeded Fisher-Yates shuffle then prefix split; |train| = floor(n * fraction).
SplitResult split_dataset(const std::vector<InstructionRecord>& records, double train_fraction,
                          std::uint64_t seed);

struct LengthStats {
  double mean = 0.0;
  double median = 0.0;
};

struct DatasetStats {
  std::size_t record_count = 0;
  LengthStats instruction;
  LengthStats input;
  LengthStats output;
  double empty_input_fraction = 0.0;
  double adversarial_fraction = 0.0;
  std::map<std::string, std::size_t> per_source;  // "doc#ordinal" -> count
  std::size_t sourceless = 0;
};

/// Lengths are in Unicode code points.
DatasetStats compute_stats(const std::vector<InstructionRecord>& records);
std::string stats_json(const DatasetStats& stats);

/// Sidecar provenance: JSON object record_id -> meta (plus its 1-based line).
std::string write_meta_json(const std::vector<InstructionRecord>& records);

/// Applies a sidecar to records parsed from the matching JSONL. Entries are
/// matched by line number. Throws InvalidArgument on mismatch.
void attach_meta(std::vector<InstructionRecord>& records, std::string_view meta_json);

}  // namespace regdistill::dataset
